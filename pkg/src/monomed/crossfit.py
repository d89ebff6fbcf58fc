"""Fold partitioning and out-of-fold prediction.

Fold indices are 0-based: observation ``i`` belongs to validation fold
``plan.assignment[i]`` and its predictions always come from the model trained
on the complement of that fold.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .dataset import Dataset
from .learners import FittedModel, LearnerSpec, fit, intercept_only, predict

__all__ = [
    "FoldError",
    "FoldPlan",
    "CrossFitModel",
    "CrossFitPredictions",
    "make_folds",
    "fit_crossfit",
    "crossfit_regression",
    "as_columns",
]


class FoldError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FoldPlan:
    n: int
    J: int
    assignment: np.ndarray
    seed: int

    def valid_idx(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == j)

    def train_idx(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.assignment != j)

    def sizes(self) -> list[int]:
        return np.bincount(self.assignment, minlength=self.J).tolist()


def make_folds(n: int, J: int = 2, seed: int = 0, strata=None) -> FoldPlan:
    """Random balanced partition of ``range(n)`` into ``J`` folds.

    With ``strata`` (one label per observation) every stratum is spread as
    evenly as possible over the folds; overall sizes still differ by at most 1.
    """
    if J < 2:
        raise FoldError("J must be at least 2")
    if n < 2 * J:
        raise FoldError(f"n={n} is too small for {J} folds (need n >= {2 * J})")
    rng = np.random.default_rng(seed)
    if strata is None:
        order = rng.permutation(n)
    else:
        strata = np.asarray(strata)
        if strata.shape[0] != n:
            raise FoldError("one stratum label per observation required")
        perm = rng.permutation(n)
        order = perm[np.argsort(strata[perm], kind="stable")]
    assignment = np.empty(n, dtype=np.intp)
    assignment[order] = np.arange(n) % J
    assignment.flags.writeable = False
    return FoldPlan(n, J, assignment, seed)


def as_columns(data) -> dict[str, np.ndarray]:
    if isinstance(data, Dataset):
        return data.columns()
    return {k: np.asarray(v, dtype=float) for k, v in data.items()}


def _design(cols: Mapping[str, np.ndarray], features: Sequence[str], rows, at=None) -> np.ndarray:
    n = len(rows) if rows is not None else len(next(iter(cols.values())))
    out = np.empty((n, len(features)))
    for j, f in enumerate(features):
        if at is not None and f in at:
            out[:, j] = at[f]
        else:
            if f not in cols:
                raise FoldError(f"unknown column {f!r}")
            col = cols[f]
            out[:, j] = col if rows is None else col[rows]
    return out


@dataclass(frozen=True)
class CrossFitPredictions:
    """Out-of-fold predictions plus a description of how they were produced."""

    values: np.ndarray
    producer: str
    model: "CrossFitModel | None" = field(default=None, repr=False, compare=False)


@dataclass(frozen=True, eq=False)
class CrossFitModel:
    """The J per-fold models of one regression; ``models[j]`` never saw fold j."""

    models: tuple[FittedModel, ...]
    plan: FoldPlan
    target: str
    features: tuple[str, ...]
    warnings: tuple[str, ...] = ()

    def predict_rows(self, j: int, cols, rows, at: Mapping[str, float] | None = None) -> np.ndarray:
        """Predictions of fold-j's model on ``rows`` (any rows, not only fold j)."""
        X = _design(cols, self.features, rows, at)
        return predict(self.models[j], X, self.features)

    def predict(self, data, at: Mapping[str, float] | None = None) -> CrossFitPredictions:
        cols = as_columns(data)
        out = np.empty(self.plan.n)
        for j in range(self.plan.J):
            v = self.plan.valid_idx(j)
            out[v] = self.predict_rows(j, cols, v, at)
        at_txt = "" if not at else " at " + ",".join(f"{k}={v:g}" for k, v in at.items())
        desc = f"{self.target} ~ {' + '.join(self.features) or '1'}{at_txt}"
        return CrossFitPredictions(out, desc, self)

    @property
    def n_models(self) -> int:
        return len(self.models)


def _fit_fold(spec: LearnerSpec, X, y, names, label: str, notes: list[str]) -> FittedModel:
    if spec.link == "logit" and spec.kind != "intercept_only" and np.all(y == y[0]):
        notes.append(f"{label}: single outcome class in training fold; used clamped intercept-only")
        return fit(intercept_only("logit"), X, y, feature_names=names)
    model = fit(spec, X, y, feature_names=names)
    if not model.converged:
        notes.append(f"{label}: IRLS did not converge in {spec.max_iter} iterations")
    return model


def fit_crossfit(data, plan: FoldPlan, spec: LearnerSpec, target, features: Sequence[str],
                 subset=None, name: str | None = None) -> CrossFitModel:
    """Train one model per fold on that fold's training rows.

    ``target`` is a column name or an array aligned with the data. ``subset``
    is an optional boolean row filter applied to training rows; a fold whose
    filtered training set is empty falls back to intercept-only on the
    unfiltered training rows.
    """
    cols = as_columns(data)
    features = tuple(features)
    if isinstance(target, str):
        y_all, tname = cols[target], target
    else:
        y_all, tname = np.asarray(target, dtype=float), (name or "target")
    if y_all.shape[0] != plan.n:
        raise FoldError(f"data has {y_all.shape[0]} rows, fold plan has {plan.n}")
    keep = None if subset is None else np.asarray(subset, dtype=bool)
    models, notes = [], []
    for j in range(plan.J):
        tr = plan.train_idx(j)
        label = f"{name or tname} fold {j}"
        if keep is not None:
            tr_sub = tr[keep[tr]]
            if tr_sub.size == 0:
                notes.append(f"{label}: empty training subset; intercept-only on full fold")
                models.append(fit(intercept_only(spec.link), np.zeros((tr.size, len(features))),
                                  y_all[tr], feature_names=features))
                continue
            tr = tr_sub
        X = _design(cols, features, tr)
        models.append(_fit_fold(spec, X, y_all[tr], features, label, notes))
    return CrossFitModel(tuple(models), plan, name or tname, features, tuple(notes))


def crossfit_regression(data, plan: FoldPlan, spec: LearnerSpec, target, features: Sequence[str],
                        at: Mapping[str, float] | None = None, subset=None) -> CrossFitPredictions:
    """Cross-fitted regression of ``target`` on ``features``, predicted out of fold.

    ``at`` fixes feature values at prediction time, e.g. ``{"A": 1}``.
    """
    return fit_crossfit(data, plan, spec, target, features, subset).predict(data, at)
