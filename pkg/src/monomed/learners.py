"""Regression learners used for every nuisance fit.

Three learner kinds share one ``fit``/``predict`` contract:

* ``intercept_only`` -- the (weighted) target mean on the link scale. This is
  the deliberate misspecification device of the simulation study.
* ``glm`` -- logistic (``link="logit"``) or linear (``link="identity"``)
  regression on main effects, optionally with all pairwise interactions,
  fitted by damped iteratively reweighted least squares.
* ``cv_select`` -- discrete cross-validated selection among candidate specs,
  refit on all rows.

Rows with identical covariates are collapsed into one weighted row before
fitting. For these likelihoods the collapsed problem has exactly the same
solution, and on discrete designs it is much smaller.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy.special import expit, logit

__all__ = [
    "LearnerSpec",
    "FittedModel",
    "LearnerError",
    "fit",
    "predict",
    "default_stack",
    "intercept_only",
    "expand_features",
]

PROB_CLAMP = 1e-6
_PRED_EPS = 1e-15
_KINDS = ("intercept_only", "glm", "cv_select")
_LINKS = ("logit", "identity")


class LearnerError(ValueError):
    """Invalid learner input (shape, domain or column mismatch)."""


@dataclass(frozen=True)
class LearnerSpec:
    kind: str = "glm"
    link: str = "logit"
    interactions: bool = False
    candidates: tuple["LearnerSpec", ...] = ()
    cv_folds: int = 5
    l2_penalty: float = 0.0
    max_iter: int = 100
    tol: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise LearnerError(f"unknown learner kind {self.kind!r}")
        if self.link not in _LINKS:
            raise LearnerError(f"unknown link {self.link!r}")
        if self.kind == "cv_select" and not self.candidates:
            raise LearnerError("cv_select needs at least one candidate")
        if self.cv_folds < 2:
            raise LearnerError("cv_folds must be >= 2")
        if self.l2_penalty < 0 or self.tol <= 0 or self.max_iter < 1:
            raise LearnerError("l2_penalty >= 0, tol > 0 and max_iter >= 1 required")

    def with_link(self, link: str) -> "LearnerSpec":
        """Copy of this spec (and all candidates) using ``link``."""
        cands = tuple(c.with_link(link) for c in self.candidates)
        return replace(self, link=link, candidates=cands)

    @property
    def label(self) -> str:
        if self.kind == "glm":
            return "glm_pairwise" if self.interactions else "glm_main"
        return self.kind

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "link": self.link,
            "interactions": self.interactions,
            "l2_penalty": self.l2_penalty,
        }
        if self.kind == "cv_select":
            out["cv_folds"] = self.cv_folds
            out["candidates"] = [c.to_dict() for c in self.candidates]
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "LearnerSpec":
        d = dict(d)
        d["candidates"] = tuple(cls.from_dict(c) for c in d.get("candidates", ()))
        return cls(**d)


def intercept_only(link: str = "logit") -> LearnerSpec:
    return LearnerSpec(kind="intercept_only", link=link)


def default_stack(link: str = "logit", cv_folds: int = 5, seed: int = 0) -> LearnerSpec:
    """cv_select over intercept-only, main-effects glm and pairwise glm."""
    cands = (
        LearnerSpec(kind="intercept_only", link=link),
        LearnerSpec(kind="glm", link=link),
        LearnerSpec(kind="glm", link=link, interactions=True),
    )
    return LearnerSpec(kind="cv_select", link=link, candidates=cands, cv_folds=cv_folds, seed=seed)


@dataclass(frozen=True)
class FittedModel:
    """A fitted learner.

    ``coefficients`` are on the link scale, intercept first, one per entry of
    ``terms`` after it. ``feature_names`` are the raw input columns that
    ``predict`` expects.
    """

    spec: LearnerSpec
    coefficients: np.ndarray
    feature_names: tuple[str, ...]
    terms: tuple[str, ...] = ()
    converged: bool = True
    n_iter: int = 0
    cv_losses: dict | None = None
    requested: LearnerSpec | None = field(default=None, compare=False)

    def to_dict(self) -> dict:
        out = {
            "spec": self.spec.to_dict(),
            "feature_names": list(self.feature_names),
            "terms": ["(intercept)", *self.terms],
            "coefficients": [float(c) for c in self.coefficients],
            "converged": self.converged,
            "n_iter": self.n_iter,
        }
        if self.cv_losses is not None:
            out["cv_losses"] = dict(self.cv_losses)
        return out


def expand_features(X: np.ndarray, names: Sequence[str], interactions: bool):
    """Main effects plus, optionally, every pairwise product ``x_i * x_j`` (i < j)."""
    if not interactions or X.shape[1] < 2:
        return X, tuple(names)
    pairs = list(combinations(range(X.shape[1]), 2))
    prod = np.stack([X[:, i] * X[:, j] for i, j in pairs], axis=1)
    terms = tuple(names) + tuple(f"{names[i]}:{names[j]}" for i, j in pairs)
    return np.hstack([X, prod]), terms


def _as_2d(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise LearnerError("feature matrix must be 2-dimensional")
    return X


def _check_names(X: np.ndarray, feature_names) -> tuple[str, ...]:
    if feature_names is None:
        return tuple(f"x{j}" for j in range(X.shape[1]))
    names = tuple(feature_names)
    if len(names) != X.shape[1]:
        raise LearnerError(f"{len(names)} feature names for {X.shape[1]} columns")
    return names


class _Grouped:
    """Unique covariate rows with per-row group codes."""

    def __init__(self, X: np.ndarray):
        if X.shape[1] == 0:
            self.X = np.zeros((1, 0))
            self.codes = np.zeros(X.shape[0], dtype=np.intp)
        else:
            self.X, codes = np.unique(X, axis=0, return_inverse=True)
            self.codes = codes.reshape(-1)
        self.k = self.X.shape[0]

    def sums(self, y: np.ndarray, w: np.ndarray):
        wsum = np.bincount(self.codes, weights=w, minlength=self.k)
        ysum = np.bincount(self.codes, weights=w * y, minlength=self.k)
        y2sum = np.bincount(self.codes, weights=w * y * y, minlength=self.k)
        return wsum, ysum, y2sum


def _fit_intercept(spec, y, w):
    mean = float(np.sum(w * y) / np.sum(w))
    if spec.link == "logit":
        return np.array([logit(np.clip(mean, PROB_CLAMP, 1 - PROB_CLAMP))])
    return np.array([mean])


def _penalized_nll(beta, D, y, w, lam):
    eta = D @ beta
    nll = float(np.sum(w * (np.logaddexp(0.0, eta) - y * eta)))
    if lam:
        nll += 0.5 * lam * float(beta[1:] @ beta[1:])
    return nll


def _solve(H, g):
    try:
        return np.linalg.solve(H, g)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(H, g, rcond=None)[0]


def _fit_logit_irls(spec, D, y, w):
    """Damped Newton/IRLS for weighted, L2-penalised logistic regression.

    Returns (beta, converged, n_iter). ``D`` carries the intercept column.
    """
    p = D.shape[1]
    pen = np.full(p, spec.l2_penalty)
    pen[0] = 0.0
    mean = np.clip(np.sum(w * y) / np.sum(w), PROB_CLAMP, 1 - PROB_CLAMP)
    beta = np.zeros(p)
    beta[0] = logit(mean)
    if mean <= PROB_CLAMP or mean >= 1 - PROB_CLAMP:
        return beta, True, 0
    obj = _penalized_nll(beta, D, y, w, spec.l2_penalty)
    for it in range(1, spec.max_iter + 1):
        mu = expit(D @ beta)
        grad = D.T @ (w * (y - mu)) - pen * beta
        H = (D * (w * mu * (1 - mu))[:, None]).T @ D + np.diag(pen)
        step = _solve(H, grad)
        t = 1.0
        while True:
            cand = beta + t * step
            with np.errstate(over="ignore", invalid="ignore"):
                new_obj = _penalized_nll(cand, D, y, w, spec.l2_penalty)
            if np.isfinite(new_obj) and new_obj <= obj + 1e-12 * abs(obj):
                break
            t *= 0.5
            if t < 1e-10:
                # no descent along the Newton direction; keep the current iterate
                return beta, False, it
        delta = np.max(np.abs(cand - beta))
        beta, obj = cand, new_obj
        if not np.all(np.isfinite(beta)):
            raise LearnerError("IRLS diverged to non-finite coefficients")
        if delta < spec.tol:
            return beta, True, it
    return beta, False, spec.max_iter


def _fit_identity(spec, D, y, w):
    p = D.shape[1]
    pen = np.full(p, spec.l2_penalty)
    pen[0] = 0.0
    sw = np.sqrt(w)
    A = np.vstack([D * sw[:, None], np.diag(np.sqrt(pen))[1:]]) if p > 1 else D * sw[:, None]
    b = np.concatenate([y * sw, np.zeros(A.shape[0] - D.shape[0])])
    beta = np.linalg.lstsq(A, b, rcond=None)[0]
    return beta, True, 1


def _fit_simple(spec, Xg, yg, wg, names):
    """Fit intercept_only or glm on already-grouped rows (zero-weight rows dropped)."""
    keep = wg > 0
    Xg, yg, wg = Xg[keep], yg[keep], wg[keep]
    if spec.kind == "intercept_only":
        return FittedModel(spec, _fit_intercept(spec, yg, wg), names, ())
    Dx, terms = expand_features(Xg, names, spec.interactions)
    D = np.hstack([np.ones((Dx.shape[0], 1)), Dx])
    if spec.link == "logit":
        beta, conv, it = _fit_logit_irls(spec, D, yg, wg)
    else:
        beta, conv, it = _fit_identity(spec, D, yg, wg)
    return FittedModel(spec, beta, names, terms, conv, it)


def _heldout_loss(model, Xg, wsum, ysum, y2sum):
    keep = wsum > 0
    p = _predict_matrix(model, Xg[keep])
    if model.spec.link == "logit":
        p = np.clip(p, 1e-12, 1 - 1e-12)
        ll = ysum[keep] * np.log(p) + (wsum[keep] - ysum[keep]) * np.log1p(-p)
        return float(-np.sum(ll))
    return float(np.sum(y2sum[keep] - 2 * p * ysum[keep] + p * p * wsum[keep]))


def _fit_grouped(spec, grp: _Grouped, y, w, names):
    if spec.kind != "cv_select":
        wsum, ysum, _ = grp.sums(y, w)
        with np.errstate(invalid="ignore", divide="ignore"):
            yg = np.where(wsum > 0, ysum / np.where(wsum > 0, wsum, 1), 0.0)
        return _fit_simple(spec, grp.X, yg, wsum, names)

    n = y.shape[0]
    k = min(spec.cv_folds, n)
    rng = np.random.default_rng(spec.seed)
    folds = rng.permutation(n) % k
    losses = np.zeros(len(spec.candidates))
    total_w = 0.0
    for f in range(k):
        held = folds == f
        w_tr = np.where(held, 0.0, w)
        w_ho = np.where(held, w, 0.0)
        if w_tr.sum() <= 0 or w_ho.sum() <= 0:
            continue
        ho_sums = grp.sums(y, w_ho)
        total_w += ho_sums[0].sum()
        for c, cand in enumerate(spec.candidates):
            m = _fit_grouped(cand, grp, y, w_tr, names)
            losses[c] += _heldout_loss(m, grp.X, *ho_sums)
    losses = losses / max(total_w, 1e-300)
    best = int(np.argmin(losses))
    chosen = _fit_grouped(spec.candidates[best], grp, y, w, names)
    table = {f"{i}:{c.label}": float(l) for i, (c, l) in enumerate(zip(spec.candidates, losses))}
    return replace(chosen, cv_losses=table, requested=spec)


def fit(spec: LearnerSpec, X, y, sample_weights=None, feature_names=None) -> FittedModel:
    """Fit ``spec`` to (X, y).

    Parameters
    ----------
    spec : LearnerSpec
    X : array-like, shape (n, p)
        Feature matrix; p may be 0 for intercept-only designs.
    y : array-like, shape (n,)
        Target. For the logit link every value must lie in [0, 1].
    sample_weights : array-like, optional
        Non-negative row weights.
    feature_names : sequence of str, optional
        Column names, checked again at prediction time.

    Returns
    -------
    FittedModel
        ``converged`` is False when IRLS hit ``max_iter`` (for instance under
        separation); the last iterate is returned in that case.
    """
    X = _as_2d(X)
    y = np.asarray(y, dtype=float).reshape(-1)
    n = y.shape[0]
    if n < 1 or X.shape[0] != n:
        raise LearnerError(f"X has {X.shape[0]} rows but y has {n}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise LearnerError("non-finite values in X or y")
    if spec.link == "logit" and (y.min() < 0 or y.max() > 1):
        raise LearnerError("logit link needs targets in [0, 1]")
    w = np.ones(n) if sample_weights is None else np.asarray(sample_weights, dtype=float).reshape(-1)
    if w.shape[0] != n or np.any(w < 0) or w.sum() <= 0:
        raise LearnerError("sample weights must be non-negative, one per row, not all zero")
    names = _check_names(X, feature_names)
    return _fit_grouped(spec, _Grouped(X), y, w, names)


def _predict_matrix(model: FittedModel, X: np.ndarray) -> np.ndarray:
    if model.spec.kind == "intercept_only":
        eta = np.full(X.shape[0], model.coefficients[0])
    else:
        Dx, _ = expand_features(X, model.feature_names, model.spec.interactions)
        eta = model.coefficients[0] + Dx @ model.coefficients[1:]
    if model.spec.link == "logit":
        return np.clip(expit(eta), _PRED_EPS, 1 - _PRED_EPS)
    return eta


def predict(model: FittedModel, X, feature_names=None) -> np.ndarray:
    """Predictions on the response scale (probabilities for the logit link)."""
    X = _as_2d(X)
    if X.shape[1] != len(model.feature_names):
        raise LearnerError(
            f"model expects columns {list(model.feature_names)}, got {X.shape[1]} columns"
        )
    if feature_names is not None:
        for want, got in zip(model.feature_names, feature_names):
            if want != got:
                raise LearnerError(f"column mismatch: expected {want!r}, got {got!r}")
    return _predict_matrix(model, X)
