"""Observed-data container, CSV ingestion and identification diagnostics.

A record is ``O = (W, A, Z, M, Y)``: baseline covariates ``W``, binary
treatment ``A``, binary treatment-induced confounder ``Z``, one or more
mediators ``M`` and an outcome ``Y``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import pandas as pd

__all__ = [
    "DataError",
    "ColumnSpec",
    "ObservedRecord",
    "Dataset",
    "DiagnosticsReport",
    "load_csv",
    "write_csv",
    "diagnose",
]


class DataError(ValueError):
    """Raised when a file or array does not satisfy the dataset contract."""


@dataclass(frozen=True)
class ColumnSpec:
    """Which CSV columns hold W, A, Z, M and Y."""

    w: tuple[str, ...]
    a: str = "A"
    z: str = "Z"
    m: tuple[str, ...] = ("M",)
    y: str = "Y"

    def __post_init__(self):
        object.__setattr__(self, "w", tuple(self.w))
        object.__setattr__(self, "m", tuple(self.m))
        if not self.m:
            raise DataError("at least one mediator column is required")
        cols = self.columns
        if len(set(cols)) != len(cols):
            raise DataError(f"duplicate column names in schema: {cols}")

    @property
    def columns(self) -> list[str]:
        return [*self.w, self.a, self.z, *self.m, self.y]

    @classmethod
    def from_dict(cls, d: dict) -> "ColumnSpec":
        return cls(w=tuple(d.get("w", ())), a=d.get("a", "A"), z=d.get("z", "Z"),
                   m=tuple(d.get("m", ("M",))), y=d.get("y", "Y"))


@dataclass(frozen=True)
class ObservedRecord:
    w: np.ndarray
    a: int
    z: int
    m: np.ndarray
    y: float


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable column store for n observed records.

    Arrays are copied and marked read-only on construction.
    """

    W: np.ndarray
    A: np.ndarray
    Z: np.ndarray
    M: np.ndarray
    Y: np.ndarray
    w_names: tuple[str, ...] = ()
    m_names: tuple[str, ...] = ("M",)

    def __post_init__(self):
        W = np.array(self.W, dtype=float)
        W = W[:, None] if W.ndim == 1 else W
        M = np.array(self.M, dtype=float)
        M = M[:, None] if M.ndim == 1 else M
        A = np.array(self.A, dtype=float).reshape(-1)
        Z = np.array(self.Z, dtype=float).reshape(-1)
        Y = np.array(self.Y, dtype=float).reshape(-1)
        n = A.shape[0]
        for name, arr in (("W", W), ("Z", Z), ("M", M), ("Y", Y)):
            if arr.shape[0] != n:
                raise DataError(f"{name} has {arr.shape[0]} rows, A has {n}")
        for name, arr in (("W", W), ("A", A), ("Z", Z), ("M", M), ("Y", Y)):
            bad = ~np.isfinite(arr)
            if bad.any():
                row = int(np.argwhere(bad)[0][0])
                raise DataError(f"non-finite {name} value in row {row + 1}")
        for name, arr in (("A", A), ("Z", Z)):
            bad = (arr != 0) & (arr != 1)
            if bad.any():
                row = int(np.argmax(bad))
                raise DataError(f"{name} must be 0 or 1; row {row + 1} has {arr[row]:g}")
        w_names = tuple(self.w_names) or tuple(f"W{j + 1}" for j in range(W.shape[1]))
        m_names = tuple(self.m_names)
        if len(m_names) != M.shape[1]:
            m_names = tuple(f"M{j + 1}" for j in range(M.shape[1])) if M.shape[1] > 1 else ("M",)
        if len(w_names) != W.shape[1]:
            raise DataError(f"{len(w_names)} covariate names for {W.shape[1]} columns")
        for arr in (W, A, Z, M, Y):
            arr.flags.writeable = False
        for k, v in dict(W=W, A=A, Z=Z, M=M, Y=Y, w_names=w_names, m_names=m_names).items():
            object.__setattr__(self, k, v)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def y_kind(self) -> str:
        return "binary" if np.all((self.Y == 0) | (self.Y == 1)) else "continuous"

    @property
    def records(self) -> list[ObservedRecord]:
        return list(self)

    def __len__(self) -> int:
        return self.n

    def __iter__(self) -> Iterator[ObservedRecord]:
        for i in range(self.n):
            yield ObservedRecord(self.W[i], int(self.A[i]), int(self.Z[i]), self.M[i], float(self.Y[i]))

    def columns(self) -> dict[str, np.ndarray]:
        """Name -> column array, using the names ``A``, ``Z`` and ``Y`` for the scalars."""
        cols = {nm: self.W[:, j] for j, nm in enumerate(self.w_names)}
        cols.update({nm: self.M[:, j] for j, nm in enumerate(self.m_names)})
        cols.update(A=self.A, Z=self.Z, Y=self.Y)
        return cols

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.W[idx], self.A[idx], self.Z[idx], self.M[idx], self.Y[idx],
                       self.w_names, self.m_names)

    def replace(self, **arrays) -> "Dataset":
        kw = dict(W=self.W, A=self.A, Z=self.Z, M=self.M, Y=self.Y,
                  w_names=self.w_names, m_names=self.m_names)
        kw.update(arrays)
        return Dataset(**kw)

    def equals(self, other: "Dataset") -> bool:
        return (
            self.w_names == other.w_names
            and self.m_names == other.m_names
            and all(np.array_equal(getattr(self, k), getattr(other, k)) for k in "WAZMY")
        )

    def to_frame(self, schema: ColumnSpec | None = None) -> pd.DataFrame:
        schema = schema or ColumnSpec(w=self.w_names, m=self.m_names)
        data = {nm: self.W[:, j] for j, nm in enumerate(schema.w)}
        data[schema.a] = self.A.astype(int)
        data[schema.z] = self.Z.astype(int)
        data.update({nm: self.M[:, j] for j, nm in enumerate(schema.m)})
        data[schema.y] = self.Y
        return pd.DataFrame(data, columns=schema.columns)


def load_csv(path, schema: ColumnSpec) -> Dataset:
    """Read a comma-separated file with a header row into a :class:`Dataset`.

    Row numbers in error messages count data rows from 1 (the header is not
    counted). Missing cells are rejected rather than imputed.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"data file not found: {path}")
    raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    missing = [c for c in schema.columns if c not in raw.columns]
    if missing:
        raise DataError(f"missing column(s) {missing} in {path}")
    frame = {}
    for col in schema.columns:
        text = raw[col].str.strip()
        empty = text == ""
        if empty.any():
            row = int(np.argmax(empty.to_numpy()))
            raise DataError(f"missing value in column {col!r}, row {row + 1}")
        # numpy's conversion is correctly rounded; pandas' fast parser is not
        try:
            vals = text.to_numpy().astype(float)
        except ValueError:
            vals = pd.to_numeric(text, errors="coerce").to_numpy(dtype=float, na_value=np.nan)
        bad = ~np.isfinite(vals)
        if bad.any():
            row = int(np.argmax(bad))
            raise DataError(f"non-numeric value {text.iloc[row]!r} in column {col!r}, row {row + 1}")
        frame[col] = vals
    for col in (schema.a, schema.z):
        bad = (frame[col] != 0) & (frame[col] != 1)
        if bad.any():
            row = int(np.argmax(bad))
            raise DataError(f"column {col!r} must be 0 or 1; row {row + 1} has {frame[col][row]:g}")
    n = len(raw)
    W = np.column_stack([frame[c] for c in schema.w]) if schema.w else np.zeros((n, 0))
    M = np.column_stack([frame[c] for c in schema.m])
    return Dataset(W, frame[schema.a], frame[schema.z], M, frame[schema.y],
                   w_names=schema.w, m_names=schema.m)


def write_csv(d: Dataset, path, schema: ColumnSpec | None = None) -> None:
    # repr-precision floats so load_csv(write_csv(d)) reproduces d exactly
    d.to_frame(schema).to_csv(path, index=False, float_format=None)


@dataclass
class DiagnosticsReport:
    """Advisory report; monotonicity can only be falsified in aggregate, never verified."""

    p_z1_a1: float
    p_z1_a0: float
    monotonicity_flag: bool
    strata: list[dict] = field(default_factory=list)
    skipped_strata: list[dict] = field(default_factory=list)
    propensity_range: dict | None = None
    n_negative_q_diff: int | None = None
    positivity_flags: dict = field(default_factory=dict)
    advisory: bool = True

    def to_dict(self) -> dict:
        return {
            "p_z1_a1": self.p_z1_a1,
            "p_z1_a0": self.p_z1_a0,
            "monotonicity_flag": self.monotonicity_flag,
            "strata": self.strata,
            "skipped_strata": self.skipped_strata,
            "propensity_range": self.propensity_range,
            "n_negative_q_diff": self.n_negative_q_diff,
            "positivity_flags": self.positivity_flags,
            "advisory": self.advisory,
        }


def _arm_rates(A, Z):
    n1, n0 = (A == 1).sum(), (A == 0).sum()
    p1 = float(Z[A == 1].mean()) if n1 else float("nan")
    p0 = float(Z[A == 0].mean()) if n0 else float("nan")
    return p1, p0, int(n1), int(n0)


def diagnose(d: Dataset, strata: Sequence[str] | None = None, nuisances=None,
             delta: float | None = None) -> DiagnosticsReport:
    """Empirical monotonicity and positivity checks.

    Parameters
    ----------
    d : Dataset
    strata : covariate names, optional
        Report P(Z=1 | A=a) within every observed combination of these
        covariates. Strata missing an arm are skipped and listed.
    nuisances : NuisanceFits, optional
        When given, adds the fitted propensity range, the number of records
        with a negative estimated q-difference and truncation-based
        positivity flags.
    delta : float, optional
        Truncation level used for ``nuisances``.
    """
    if d.n == 0:
        raise DataError("cannot diagnose an empty dataset")
    A, Z = d.A, d.Z
    p1, p0, n1, n0 = _arm_rates(A, Z)
    flag = bool(n1 and n0 and p1 < p0)

    rows, skipped = [], []
    if strata:
        cols = d.columns()
        unknown = [s for s in strata if s not in d.w_names]
        if unknown:
            raise DataError(f"unknown stratum covariate(s): {unknown}")
        keys = np.column_stack([cols[s] for s in strata])
        levels, codes = np.unique(keys, axis=0, return_inverse=True)
        codes = codes.reshape(-1)
        for k, lev in enumerate(levels):
            sel = codes == k
            label = {s: float(v) for s, v in zip(strata, lev)}
            sp1, sp0, sn1, sn0 = _arm_rates(A[sel], Z[sel])
            if sn1 == 0 or sn0 == 0:
                skipped.append({"stratum": label, "n_a1": sn1, "n_a0": sn0})
                warnings.warn(f"stratum {label} lacks a treatment arm; skipped", stacklevel=2)
                continue
            rows.append({"stratum": label, "n_a1": sn1, "n_a0": sn0,
                         "p_z1_a1": sp1, "p_z1_a0": sp0, "flag": bool(sp1 < sp0)})

    # empirical cell support for the first two positivity bullets
    pos = {
        "treatment_arms_present": bool(n1 > 0 and n0 > 0),
        "confounder_cells_present": bool(all(((A == a) & (Z == z)).any() for a in (0, 1) for z in (0, 1))),
    }
    prange, nneg = None, None
    if nuisances is not None:
        g = np.concatenate([nuisances.g_a, nuisances.g_ap])
        q = np.concatenate([nuisances.q_a, nuisances.q_ap])
        e = np.concatenate([nuisances.e_a_z1, nuisances.e_a_z0, nuisances.e_ap_z1, nuisances.e_ap_z0])
        r = nuisances.r_z1_ap
        prange = {k: [float(v.min()), float(v.max())] for k, v in dict(g=g, q=q, e=e, r=r).items()}
        nneg = int(np.sum(nuisances.q_a - nuisances.q_ap < 0))
        if delta is not None:
            at_bound = lambda v: bool(np.any((v <= delta) | (v >= 1 - delta)))  # noqa: E731
            pos["treatment_truncated"] = at_bound(g)
            pos["confounder_truncated"] = at_bound(q)
            pos["mediator_truncated"] = at_bound(e) or at_bound(r)
    return DiagnosticsReport(p1, p0, flag, rows, skipped, prange, nneg, pos)
