"""Exact enumeration for fully binary data-generating mechanisms.

Every quantity here is an exact finite sum over the ``2**(k+4)`` atoms of
``(W_1..W_k, A, Z, M, Y)``: true effects, true nuisances, influence-function
means, efficiency bounds and the second-order remainder of the one-step
estimator under a perturbed nuisance vector.

The influence-function code is not duplicated: the estimator's
:func:`~monomed.estimator.eif_weights` and
:func:`~monomed.estimator.eif_contribution` are evaluated at exact nuisance
values on the atoms.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from typing import Callable, Iterator, NamedTuple, Sequence

import numpy as np
from scipy.special import expit, logit

from .estimator import VARIANTS, ZZ, EstimandSpec, NuisanceFits, eif_contribution, eif_weights

__all__ = [
    "OracleError",
    "DgmSpec",
    "Atom",
    "Atoms",
    "Eta",
    "reference_dgm",
    "a_depends_on_w_dgm",
    "uniform_dgm",
    "constant_outcome_dgm",
    "get_dgm",
    "enumerate_atoms",
    "true_theta",
    "true_effects",
    "true_nuisances",
    "perturb",
    "fits_on_atoms",
    "interventional_mean",
    "counterfactual_mean",
    "verify_eif_mean_zero",
    "efficiency_bound",
    "remainder_check",
    "adjudicate_variants",
    "oracle_report",
]

MASS_TOL = 1e-12
ESTIMANDS = (EstimandSpec(1, 1), EstimandSpec(1, 0), EstimandSpec(0, 0))
RSTAR_READINGS = ("derived", "printed", "z_fixed")


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class DgmSpec:
    """Binary structural equations, evaluated vectorised.

    ``p_w[k](W)`` is P(W_{k+1}=1 | W_1..W_k) given the first k columns of
    ``W``; ``p_a(W)``, ``p_z(A, W)``, ``p_m(A, Z, W)`` and ``p_y(M, Z, A, W)``
    return P(.=1 | parents) for arrays of parent values.
    """

    name: str
    p_w: tuple[Callable, ...]
    p_a: Callable
    p_z: Callable
    p_m: Callable
    p_y: Callable

    @property
    def n_w(self) -> int:
        return len(self.p_w)


# structural equations of the simulation design

def _pw1(W):
    return np.full(W.shape[0], 0.6)


def _pw2(W):
    return np.full(W.shape[0], 0.3)


def _pw3(W):
    return np.minimum(0.2 + 0.33 * (W[:, 0] + W[:, 1]), 1.0)


def _pa_half(W):
    return np.full(W.shape[0], 0.5)


def _pa_w(W):
    return expit(0.4 * (W[:, 0] - W[:, 1]))


def _pz(A, W):
    return expit(-math.log(1.3) * W.sum(axis=1) / 3 + 2 * A - 1)


def _pm(A, Z, W):
    return expit(-math.log(1.1) * W[:, 2] + 2 * Z - 0.9)


def _py(M, Z, A, W):
    return expit(-math.log(1.3) * W.sum(axis=1) / 3 + Z + M)


def _half(*args):
    return np.full(np.shape(args[-1])[0], 0.5)


def _one(*args):
    return np.ones(np.shape(args[-1])[0])


def reference_dgm() -> DgmSpec:
    """The simulation design: randomised A, exclusion restriction for M and Y."""
    return DgmSpec("reference", (_pw1, _pw2, _pw3), _pa_half, _pz, _pm, _py)


def a_depends_on_w_dgm() -> DgmSpec:
    """As :func:`reference_dgm` but with P(A=1 | W) = expit(0.4 (W1 - W2))."""
    return DgmSpec("a_depends_on_w", (_pw1, _pw2, _pw3), _pa_w, _pz, _pm, _py)


def uniform_dgm() -> DgmSpec:
    return DgmSpec("uniform", (_half, _half, _half), _half, _half, _half, _half)


def constant_outcome_dgm() -> DgmSpec:
    """The simulation design with Y = 1 almost surely."""
    return DgmSpec("constant_outcome", (_pw1, _pw2, _pw3), _pa_half, _pz, _pm, _one)


_REGISTRY = {
    "reference": reference_dgm,
    "a_depends_on_w": a_depends_on_w_dgm,
    "uniform": uniform_dgm,
    "constant_outcome": constant_outcome_dgm,
}


def get_dgm(name: str) -> DgmSpec:
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise OracleError(f"unknown DGM {name!r}; choose from {sorted(_REGISTRY)}") from None


class Atom(NamedTuple):
    w: tuple
    a: int
    z: int
    m: int
    y: int
    mass: float


@dataclass(frozen=True, eq=False)
class Atoms:
    """All support points; ``X`` columns are W_1..W_k, A, Z, M, Y."""

    X: np.ndarray
    mass: np.ndarray
    k: int

    @property
    def W(self):
        return self.X[:, : self.k]

    @property
    def A(self):
        return self.X[:, self.k]

    @property
    def Z(self):
        return self.X[:, self.k + 1]

    @property
    def M(self):
        return self.X[:, self.k + 2]

    @property
    def Y(self):
        return self.X[:, self.k + 3]

    def __len__(self):
        return self.mass.shape[0]

    def __iter__(self) -> Iterator[Atom]:
        k = self.k
        for row, p in zip(self.X.astype(int), self.mass):
            yield Atom(tuple(row[:k]), row[k], row[k + 1], row[k + 2], row[k + 3], float(p))

    def expect(self, values) -> float:
        return float(self.mass @ values)

    def tensor(self) -> np.ndarray:
        return self.mass.reshape((2,) * (self.k + 4))


def _bern(p, x):
    return np.where(x == 1, p, 1 - p)


def _w_grid(k: int) -> np.ndarray:
    return np.array(list(itertools.product((0, 1), repeat=k)), dtype=float).reshape(-1, k)


def _w_mass(dgm: DgmSpec, W: np.ndarray) -> np.ndarray:
    mass = np.ones(W.shape[0])
    for j, f in enumerate(dgm.p_w):
        mass = mass * _bern(f(W[:, :j]), W[:, j])
    return mass


def enumerate_atoms(dgm: DgmSpec) -> Atoms:
    """Joint mass by the chain rule W -> A -> Z -> M -> Y."""
    k = dgm.n_w
    X = np.array(list(itertools.product((0, 1), repeat=k + 4)), dtype=float)
    W, A, Z, M, Y = X[:, :k], X[:, k], X[:, k + 1], X[:, k + 2], X[:, k + 3]
    probs = [dgm.p_a(W), dgm.p_z(A, W), dgm.p_m(A, Z, W), dgm.p_y(M, Z, A, W)]
    for f in probs + [f(W[:, :j]) for j, f in enumerate(dgm.p_w)]:
        if np.any((f < 0) | (f > 1)) or not np.all(np.isfinite(f)):
            raise OracleError(f"{dgm.name}: conditional probability outside [0, 1]")
    mass = _w_mass(dgm, W) * _bern(probs[0], A) * _bern(probs[1], Z) * _bern(probs[2], M) * _bern(probs[3], Y)
    total = mass.sum()
    if abs(total - 1.0) > MASS_TOL:
        raise OracleError(f"{dgm.name}: atom masses sum to {total!r}")
    return Atoms(X, mass, k)


def _kappa(q_a, q_ap, z, zp):
    if (z, zp) == (1, 1):
        return q_ap
    if (z, zp) == (1, 0):
        return q_a - q_ap
    return 1 - q_a


def true_theta(dgm: DgmSpec, est: EstimandSpec) -> dict:
    """theta_{z,z'}(a, a') and their sum straight from the structural equations.

    Returns ``{(1,1): ., (1,0): ., (0,0): ., "total": .}``. The total equals
    E[Y_{a, M_{a'}}] under monotonicity when a >= a'.
    """
    a, ap = est.a, est.a_prime
    W = _w_grid(dgm.n_w)
    pw = _w_mass(dgm, W)
    ones = np.ones(W.shape[0])
    q_a, q_ap = dgm.p_z(a * ones, W), dgm.p_z(ap * ones, W)
    out = {}
    for z, zp in ZZ:
        pm1 = dgm.p_m(ap * ones, zp * ones, W)
        inner = sum(dgm.p_y(m * ones, z * ones, a * ones, W) * _bern(pm1, m) for m in (0, 1))
        out[(z, zp)] = float(pw @ (inner * _kappa(q_a, q_ap, z, zp)))
    out["total"] = out[(1, 1)] + out[(1, 0)] + out[(0, 0)]
    return out


def true_effects(dgm: DgmSpec) -> dict:
    th = {(e.a, e.a_prime): true_theta(dgm, e)["total"] for e in ESTIMANDS}
    return {
        "theta": {f"{a},{ap}": v for (a, ap), v in th.items()},
        "nde": th[(1, 0)] - th[(0, 0)],
        "nie": th[(1, 1)] - th[(1, 0)],
        "ate": th[(1, 1)] - th[(0, 0)],
    }


def interventional_mean(dgm: DgmSpec, a: int) -> float:
    """E[Y_a] by setting A=a in the structural equations."""
    W = _w_grid(dgm.n_w)
    pw = _w_mass(dgm, W)
    ones = np.ones(W.shape[0])
    total = np.zeros(W.shape[0])
    for z in (0, 1):
        pz = _bern(dgm.p_z(a * ones, W), z)
        for m in (0, 1):
            pm = _bern(dgm.p_m(a * ones, z * ones, W), m)
            total += pz * pm * dgm.p_y(m * ones, z * ones, a * ones, W)
    return float(pw @ total)


def counterfactual_mean(dgm: DgmSpec, a: int, ap: int) -> float:
    """E[Y_{a, M_{a'}}] with Z_a and Z_{a'} driven by one shared uniform error.

    Uses Z_x = 1{U_Z < P(Z=1 | x, W)}, which is the monotone coupling. M
    follows Z_{a'} and Y follows Z_a.
    """
    W = _w_grid(dgm.n_w)
    pw = _w_mass(dgm, W)
    total = 0.0
    for i in range(W.shape[0]):
        w = W[i : i + 1]
        qa = float(dgm.p_z(np.array([a]), w)[0])
        qap = float(dgm.p_z(np.array([ap]), w)[0])
        cuts = sorted({0.0, qa, qap, 1.0})
        acc = 0.0
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            u = 0.5 * (lo + hi)
            za, zap = float(u < qa), float(u < qap)
            pm1 = float(dgm.p_m(np.array([ap]), np.array([zap]), w)[0])
            for m in (0, 1):
                py = float(dgm.p_y(np.array([m]), np.array([za]), np.array([a]), w)[0])
                acc += (hi - lo) * (pm1 if m else 1 - pm1) * py
        total += pw[i] * acc
    return float(total)


@dataclass(frozen=True, eq=False)
class Eta:
    """Nuisance tensors indexed by W cells first (axes 0..k-1).

    ``g1[w]`` P(A=1|w); ``q1[w,a]`` P(Z=1|a,w); ``pm1[w,a,z]`` P(M=1|a,z,w);
    ``mu[w,a,z,m]`` E(Y|m,z,a,w); ``e1[w,z,m]`` P(A=1|m,z,w); ``r1[w,a,m]``
    P(Z=1|m,a,w); ``rho[w,a,a',z,z']``. ``undefined`` lists conditionals
    whose conditioning event has zero mass (stored as NaN).
    """

    k: int
    pw: np.ndarray
    g1: np.ndarray
    q1: np.ndarray
    pm1: np.ndarray
    mu: np.ndarray
    e1: np.ndarray
    r1: np.ndarray
    rho: np.ndarray
    undefined: tuple = ()


def _cond(num, den, label, flags):
    with np.errstate(invalid="ignore", divide="ignore"):
        out = num / den
    if np.any(den <= 0):
        flags.append(label)
        out = np.where(den > 0, out, np.nan)
    return out


def _rho_from(mu, pm1):
    # rho[w, a, a', z, z'] = sum_m mu[w, a, z, m] P(m | a', z', w)
    pm = np.stack([1 - pm1, pm1], axis=-1)  # [w, a', z', m]
    return np.einsum("...azm,...bym->...abzy", mu, pm)


def true_nuisances(dgm: DgmSpec, atoms: Atoms | None = None) -> Eta:
    """Exact conditionals obtained by marginalising the enumerated joint."""
    atoms = atoms or enumerate_atoms(dgm)
    k = atoms.k
    P = atoms.tensor()  # axes: w..., a, z, m, y
    flags: list[str] = []
    p_w = P.sum(axis=(-1, -2, -3, -4))
    p_wa = P.sum(axis=(-1, -2, -3))
    p_waz = P.sum(axis=(-1, -2))
    p_wazm = P.sum(axis=-1)
    g1 = _cond(p_wa[..., 1], p_w, "g", flags)
    q1 = _cond(p_waz[..., 1], p_wa, "q", flags)
    pm1 = _cond(p_wazm[..., 1], p_waz, "p(m|a,z,w)", flags)
    mu = _cond(P[..., 1], p_wazm, "mu", flags)
    p_wzm = p_wazm.sum(axis=k)  # [w, z, m]
    e1 = _cond(p_wazm.take(1, axis=k), p_wzm, "e", flags)
    p_wam = p_wazm.sum(axis=k + 1)  # [w, a, m]
    r1 = _cond(p_wazm.take(1, axis=k + 1), p_wam, "r", flags)
    return Eta(k, p_w, g1, q1, pm1, mu, e1, r1, _rho_from(mu, pm1), tuple(sorted(set(flags))))


def _sign_w1(eta: Eta) -> np.ndarray:
    shape = (2,) + (1,) * (eta.k - 1)
    return np.array([1.0, -1.0]).reshape(shape)


def perturb(eta: Eta, eps: float) -> Eta:
    """Deterministic perturbation used by :func:`remainder_check`.

    Probabilities move by ``eps * (-1)**(w1 + z)`` on the logit scale (z is
    the conditioning Z value, 0 when Z is not conditioned on); mu moves by
    ``eps * (-1)**(w1 + m)`` and rho by ``eps * (-1)**w1`` on the identity
    scale, so the perturbed rho is not the perturbed mu integrated against
    the true mediator law. The true mediator law ``pm1`` is kept.
    """
    if eps == 0:
        return eta
    s = _sign_w1(eta)
    pm = np.array([1.0, -1.0])
    sz = np.array([1.0, -1.0])

    def shift(p, sign):
        return expit(logit(p) + eps * sign)

    return replace(
        eta,
        g1=shift(eta.g1, s),
        q1=shift(eta.q1, s[..., None]),
        e1=shift(eta.e1, s[..., None, None] * sz[:, None]),
        r1=shift(eta.r1, s[..., None, None]),
        mu=eta.mu + eps * s[..., None, None, None] * pm,
        rho=eta.rho + eps * s[..., None, None, None, None],
    )


def _widx(atoms: Atoms):
    return tuple(atoms.W.astype(int).T)


def fits_on_atoms(eta: Eta, atoms: Atoms, est: EstimandSpec) -> NuisanceFits:
    """Nuisance values of ``eta`` at every atom, laid out as the estimator expects."""
    w = _widx(atoms)
    A, Z, M = (atoms.A.astype(int), atoms.Z.astype(int), atoms.M.astype(int))
    a, ap = est.a, est.a_prime
    n = len(atoms)
    fa = np.full(n, a)
    fap = np.full(n, ap)

    def arm(p1, x):
        return p1 if x == 1 else 1 - p1

    g1 = eta.g1[w]
    e1 = eta.e1[w + (np.ones(n, int), M)]
    e0 = eta.e1[w + (np.zeros(n, int), M)]
    return NuisanceFits(
        g_a=arm(g1, a),
        g_ap=arm(g1, ap),
        q_a=eta.q1[w + (fa,)],
        q_ap=eta.q1[w + (fap,)],
        q_obs=eta.q1[w + (A,)],
        e_a_z1=arm(e1, a),
        e_ap_z1=arm(e1, ap),
        e_a_z0=arm(e0, a),
        e_ap_z0=arm(e0, ap),
        r_z1_ap=eta.r1[w + (fap, M)],
        mu_obs=eta.mu[w + (A, Z, M)],
        mu_a_z1=eta.mu[w + (fa, np.ones(n, int), M)],
        mu_a_z0=eta.mu[w + (fa, np.zeros(n, int), M)],
        rho_11=eta.rho[w + (fa, fap, np.ones(n, int), np.ones(n, int))],
        rho_10=eta.rho[w + (fa, fap, np.ones(n, int), np.zeros(n, int))],
        rho_00=eta.rho[w + (fa, fap, np.zeros(n, int), np.zeros(n, int))],
    )


def _theta_parts(eta: Eta, est: EstimandSpec) -> dict:
    """Plug-in theta_{z,z'} at nuisance value ``eta`` (true law of W)."""
    a, ap = est.a, est.a_prime
    q_a, q_ap = eta.q1[..., a], eta.q1[..., ap]
    out = {}
    for z, zp in ZZ:
        rho = eta.rho[..., a, ap, z, zp]
        out[(z, zp)] = float(np.sum(eta.pw * rho * _kappa(q_a, q_ap, z, zp)))
    return out


def _eif(eta: Eta, atoms: Atoms, est: EstimandSpec, variant: str):
    fits = fits_on_atoms(eta, atoms, est)
    H = eif_weights(atoms.A, atoms.Z, fits, est, variant)
    return fits, H, eif_contribution(atoms.Y, atoms.Z, fits, H)


def _setup(dgm):
    atoms = enumerate_atoms(dgm)
    return atoms, true_nuisances(dgm, atoms)


def verify_eif_mean_zero(dgm: DgmSpec, est: EstimandSpec, variant: str | None = None) -> dict:
    """``|E[D_{z,z'}] - theta_{z,z'}|`` at the exact nuisances, per ``(z, z')``."""
    atoms, eta = _setup(dgm)
    _, _, D = _eif(eta, atoms, est, variant)
    theta = true_theta(dgm, est)
    return {zz: abs(atoms.expect(D[zz]) - theta[zz]) for zz in ZZ}


def efficiency_bound(dgm: DgmSpec, contrast: str = "nde", variant: str | None = None) -> float:
    """Variance of the contrast's influence function at the truth.

    ``contrast`` is ``"nde"`` (theta(1,0) - theta(0,0)), ``"nie"``
    (theta(1,1) - theta(1,0)) or ``"ate"``.
    """
    pairs = {"nde": ((1, 0), (0, 0)), "nie": ((1, 1), (1, 0)), "ate": ((1, 1), (0, 0))}
    if contrast not in pairs:
        raise OracleError(f"unknown contrast {contrast!r}")
    atoms, eta = _setup(dgm)
    (a1, ap1), (a0, ap0) = pairs[contrast]
    d1 = _eif(eta, atoms, EstimandSpec(a1, ap1), variant)[2]["total"]
    d0 = _eif(eta, atoms, EstimandSpec(a0, ap0), variant)[2]["total"]
    diff = d1 - d0
    mean = atoms.expect(diff)
    return atoms.expect((diff - mean) ** 2)


def _rstar(eta: Eta, tilde: Eta, est: EstimandSpec, z: int, zp: int, reading: str) -> float:
    """R*_{z,z'} as two integrals against an implied perturbed mediator law.

    For binary M the perturbed law is the one whose mu-tilde integral equals
    rho-tilde. ``reading`` picks the Z-factor used for (0,0): ``"derived"``
    [P(Z=0|a,w) - P~(Z=0|a,w)]; ``"printed"`` first line
    [P(Z=1|a',w) - P~(Z=0|a',w)], second [P(Z=0|a',w) - P~(Z=0|a',w)];
    ``"z_fixed"`` [P(Z=0|a',w) - P~(Z=0|a',w)] on both lines.
    """
    a, ap = est.a, est.a_prime
    q_a, q_ap = eta.q1[..., a], eta.q1[..., ap]
    tq_a, tq_ap = tilde.q1[..., a], tilde.q1[..., ap]
    f1 = f2 = _kappa(q_a, q_ap, z, zp) - _kappa(tq_a, tq_ap, z, zp)
    if (z, zp) == (0, 0) and reading == "printed":
        f1 = q_ap - (1 - tq_ap)
        f2 = (1 - q_ap) - (1 - tq_ap)
    elif (z, zp) == (0, 0) and reading == "z_fixed":
        f1 = f2 = (1 - q_ap) - (1 - tq_ap)

    mu0, mu1 = eta.mu[..., a, z, 0], eta.mu[..., a, z, 1]
    tmu0, tmu1 = tilde.mu[..., a, z, 0], tilde.mu[..., a, z, 1]
    p1 = eta.pm1[..., ap, zp]
    trho = tilde.rho[..., a, ap, z, zp]
    den = tmu1 - tmu0
    ok = np.abs(den) > 1e-12
    tp1 = np.where(ok, (trho - tmu0) / np.where(ok, den, 1.0), p1)
    line1 = f1 * ((mu1 - tmu1) * tp1 + (mu0 - tmu0) * (1 - tp1))
    line2 = f2 * ((mu1 - mu0) * (p1 - tp1))
    # degenerate mu~ (no M dependence): only the collapsed form is defined
    rho = eta.rho[..., a, ap, z, zp]
    total = np.where(ok, line1 + line2, f1 * (rho - trho))
    return float(np.sum(eta.pw * total))


def remainder_check(dgm: DgmSpec, est: EstimandSpec, eps: float, variant: str | None = None,
                    rstar: str = "derived") -> list[dict]:
    """Exact second-order remainder of each piece under a perturbation of size ``eps``.

    ``lhs = theta(eta~) - theta(eta) + E[D(O; eta~) - theta(eta~)]`` and
    ``rhs`` is the remainder expression: three weight-difference products
    plus R*. Both are exact sums over atoms.
    """
    if rstar not in RSTAR_READINGS:
        raise OracleError(f"unknown R* reading {rstar!r}")
    atoms, eta = _setup(dgm)
    tilde = perturb(eta, eps)
    fits, H, _ = _eif(eta, atoms, est, variant)
    tfits, tH, tD = _eif(tilde, atoms, est, variant)
    th = _theta_parts(eta, est)
    tth = _theta_parts(tilde, est)
    w = _widx(atoms)
    n = len(atoms)
    rows = []
    for z, zp in ZZ:
        lhs = tth[(z, zp)] - th[(z, zp)] + atoms.expect(tD[(z, zp)] - tth[(z, zp)])
        # E[mu~(a, M, z, W) | A=a', Z=z', W] under the true mediator law
        p1 = eta.pm1[w + (np.full(n, est.a_prime), np.full(n, zp))]
        tmu = tilde.mu[w + (np.full(n, est.a), np.full(n, z))]
        rho_star = tmu[:, 1] * p1 + tmu[:, 0] * (1 - p1)
        h, th_ = H[(z, zp)], tH[(z, zp)]
        term_y = atoms.expect((th_.y - h.y) * (fits.mu_obs - tfits.mu_obs))
        term_m = atoms.expect((th_.m - h.m) * (rho_star - tfits.rho(z, zp)))
        term_z = atoms.expect((th_.z - h.z) * (fits.q_obs - tfits.q_obs))
        rs = _rstar(eta, tilde, est, z, zp, rstar)
        rhs = term_y + term_m + term_z + rs
        rows.append({"z": z, "z_prime": zp, "eps": eps, "lhs": lhs, "rhs": rhs, "abs_diff": abs(lhs - rhs)})
    return rows


def second_order_ratios(dgm: DgmSpec, est: EstimandSpec, eps_list: Sequence[float] = (0.1, 0.05, 0.025),
                        variant: str | None = None) -> dict:
    """``lhs(eps_i) / lhs(eps_{i+1})`` per ``(z, z')``; ``None`` when lhs is identically 0."""
    lhs = {zz: [] for zz in ZZ}
    for eps in eps_list:
        for row in remainder_check(dgm, est, eps, variant):
            lhs[(row["z"], row["z_prime"])].append(row["lhs"])
    out = {}
    for zz, vals in lhs.items():
        if max(abs(v) for v in vals) < 1e-14:
            out[zz] = None
        else:
            out[zz] = [vals[i] / vals[i + 1] for i in range(len(vals) - 1)]
    return out


def adjudicate_variants(dgms: Sequence[DgmSpec] | None = None, eps: float = 0.1,
                        tol_mean: float = 1e-10, tol_rem: float = 1e-8) -> dict:
    """Decide which H_{Y,0,0} variant is a valid influence function.

    A variant passes on a DGM when, for every ``(a, a')`` and ``(z, z')``,
    the influence function is mean-zero at the truth, the remainder identity
    holds, and the remainder shrinks quadratically. The mean-zero check
    alone cannot separate the variants: any weight multiplying
    ``Y - E(Y | A, M, Z, W)`` has mean zero.
    """
    dgms = list(dgms or [reference_dgm(), a_depends_on_w_dgm()])
    result = {"checks": {}, "passing": [], "eps": eps}
    for variant in VARIANTS:
        per = {}
        for dgm in dgms:
            mz = max(max(verify_eif_mean_zero(dgm, e, variant).values()) for e in ESTIMANDS)
            rem = max(r["abs_diff"] for e in ESTIMANDS for r in remainder_check(dgm, e, eps, variant))
            ratios_ok = True
            for e in ESTIMANDS:
                for rs in second_order_ratios(dgm, e, (eps, eps / 2, eps / 4), variant).values():
                    if rs is not None and not all(3.5 <= x <= 4.5 for x in rs):
                        ratios_ok = False
            per[dgm.name] = {
                "max_mean_zero_residual": mz,
                "max_remainder_gap": rem,
                "second_order": ratios_ok,
                "pass": bool(mz < tol_mean and rem < tol_rem and ratios_ok),
            }
        result["checks"][variant] = per
        if all(v["pass"] for v in per.values()):
            result["passing"].append(variant)
    return result


def oracle_report(dgm: DgmSpec, eps_list: Sequence[float] = (0.1, 0.05, 0.025),
                  variant: str | None = None, adjudicate: bool = True) -> dict:
    """Everything the ``oracle-check`` command writes, as plain JSON-able data."""
    eff = true_effects(dgm)
    report = {
        "dgm": dgm.name,
        "truth": eff,
        "efficiency_bound": {c: efficiency_bound(dgm, c, variant) for c in ("nde", "nie")},
        "mean_zero": [],
        "remainder": [],
    }
    for e in ESTIMANDS:
        for (z, zp), res in verify_eif_mean_zero(dgm, e, variant).items():
            report["mean_zero"].append({"a": e.a, "a_prime": e.a_prime, "z": z, "z_prime": zp, "residual": res})
    for e in ESTIMANDS:
        prev = {}
        for eps in eps_list:
            for row in remainder_check(dgm, e, eps, variant):
                zz = (row["z"], row["z_prime"])
                ratio = None
                if zz in prev and abs(row["lhs"]) > 1e-300 and abs(prev[zz]) > 1e-14:
                    ratio = prev[zz] / row["lhs"]
                prev[zz] = row["lhs"]
                report["remainder"].append({"a": e.a, "a_prime": e.a_prime, **row, "ratio": ratio})
    report["rstar_00_readings"] = {
        reading: max(r["abs_diff"] for e in ESTIMANDS for r in remainder_check(dgm, e, eps_list[0], variant, reading)
                     if (r["z"], r["z_prime"]) == (0, 0))
        for reading in RSTAR_READINGS
    }
    if adjudicate:
        report["variant_adjudication"] = adjudicate_variants(eps=eps_list[0])
    return report
