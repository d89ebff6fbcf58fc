"""Sampling from binary DGMs and the four-scenario Monte Carlo study."""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .dataset import Dataset
from .estimator import NUISANCES, EstimationError, EstimatorConfig, estimate
from .learners import LearnerSpec, default_stack, intercept_only
from .oracle import DgmSpec, efficiency_bound, true_effects

__all__ = [
    "SimError",
    "Scenario",
    "EffectMetrics",
    "SimMetrics",
    "SCENARIOS",
    "scenarios",
    "get_scenario",
    "sample_dgm",
    "compute_metrics",
    "run_study",
    "report",
    "metrics_from_json",
    "metrics_chart_svg",
]

METRIC_COLUMNS = ("abs_bias", "sqrt_n_abs_bias", "relse", "relsd", "relrmse", "coverage95")
REPORT_COLUMNS = ("scenario", "n", "effect") + METRIC_COLUMNS
FAILURE_BUDGET = 0.01

# nuisances estimated with the default stack; the rest are intercept-only
SCENARIOS = {
    "all_correct": NUISANCES,
    "g_e_q_r_correct": ("g", "e", "q", "r"),
    "mu_rho_g_correct": ("mu", "rho", "g"),
    "mu_rho_q_correct": ("mu", "rho", "q"),
}


class SimError(RuntimeError):
    pass


@dataclass(frozen=True)
class Scenario:
    name: str
    correct: tuple[str, ...]
    cv_folds: int = 5

    def specs(self, seed: int = 0) -> dict[str, LearnerSpec]:
        good = default_stack(cv_folds=self.cv_folds, seed=seed)
        return {k: good if k in self.correct else intercept_only() for k in NUISANCES}


def scenarios(cv_folds: int = 5) -> list[Scenario]:
    return [Scenario(name, tuple(c), cv_folds) for name, c in SCENARIOS.items()]


def get_scenario(name: str, cv_folds: int = 5) -> Scenario:
    if name not in SCENARIOS:
        raise SimError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}")
    return Scenario(name, tuple(SCENARIOS[name]), cv_folds)


def sample_dgm(dgm: DgmSpec, n: int, seed: int | np.random.SeedSequence = 0) -> Dataset:
    """``n`` i.i.d. draws by ancestral sampling."""
    if n < 1:
        raise SimError("n must be >= 1")
    rng = np.random.default_rng(seed)
    k = dgm.n_w
    W = np.empty((n, k))
    for j, f in enumerate(dgm.p_w):
        W[:, j] = rng.random(n) < f(W[:, :j])
    A = (rng.random(n) < dgm.p_a(W)).astype(float)
    Z = (rng.random(n) < dgm.p_z(A, W)).astype(float)
    M = (rng.random(n) < dgm.p_m(A, Z, W)).astype(float)
    Y = (rng.random(n) < dgm.p_y(M, Z, A, W)).astype(float)
    return Dataset(W, A, Z, M, Y, tuple(f"W{j + 1}" for j in range(k)))


@dataclass(frozen=True)
class EffectMetrics:
    abs_bias: float
    sqrt_n_abs_bias: float
    relse: float
    relsd: float
    relrmse: float
    coverage95: float

    def to_dict(self) -> dict:
        return asdict(self)


def compute_metrics(est, se, ci_low, ci_high, truth: float, bound: float, n: int) -> EffectMetrics:
    """Six summary metrics over replications; needs at least two."""
    est, se = np.asarray(est, float), np.asarray(se, float)
    if est.shape[0] < 2:
        raise SimError("at least 2 replications are needed for a Monte Carlo standard deviation")
    bias = abs(float(est.mean()) - truth)
    sd = float(est.std(ddof=1))
    mse = float(np.mean((est - truth) ** 2))
    covered = (np.asarray(ci_low) <= truth) & (truth <= np.asarray(ci_high))
    return EffectMetrics(
        abs_bias=bias,
        sqrt_n_abs_bias=math.sqrt(n) * bias,
        relse=float(se.mean()) / sd if sd > 0 else float("inf"),
        relsd=math.sqrt(n) * sd / math.sqrt(bound),
        relrmse=n * mse / bound,
        coverage95=float(covered.mean()),
    )


@dataclass
class SimMetrics:
    scenario: str
    dgm: str
    n: int
    reps: int
    J: int
    seed: int
    truth: dict
    bound: dict
    nde: EffectMetrics
    nie: EffectMetrics
    n_failed: int = 0
    replicates: dict = field(default_factory=dict, repr=False)

    def to_dict(self, replicates: bool = False) -> dict:
        out = {
            "scenario": self.scenario,
            "dgm": self.dgm,
            "n": self.n,
            "reps": self.reps,
            "J": self.J,
            "seed": self.seed,
            "n_failed": self.n_failed,
            "truth": dict(self.truth),
            "bound": dict(self.bound),
            "nde": self.nde.to_dict(),
            "nie": self.nie.to_dict(),
        }
        if replicates:
            out["replicates"] = {k: list(map(float, v)) for k, v in self.replicates.items()}
        return out

    @classmethod
    def from_dict(cls, d: Mapping) -> "SimMetrics":
        return cls(
            scenario=d["scenario"], dgm=d["dgm"], n=int(d["n"]), reps=int(d["reps"]), J=int(d["J"]),
            seed=int(d["seed"]), truth=dict(d["truth"]), bound=dict(d["bound"]),
            nde=EffectMetrics(**d["nde"]), nie=EffectMetrics(**d["nie"]),
            n_failed=int(d.get("n_failed", 0)), replicates={k: np.asarray(v) for k, v in d.get("replicates", {}).items()},
        )


def _one_rep(dgm: DgmSpec, specs, n: int, J: int, seq: np.random.SeedSequence):
    data_seq, fold_seq = seq.spawn(2)
    d = sample_dgm(dgm, n, data_seq)
    cfg = EstimatorConfig(folds=J, seed=int(fold_seq.generate_state(1)[0]), specs=specs)
    try:
        res = estimate(d, cfg)
    except (EstimationError, ValueError, np.linalg.LinAlgError):
        return None
    out = []
    for c in (res.nde, res.nie):
        out.extend([c.est, c.se, c.ci_low, c.ci_high])
    return out


def run_study(dgm: DgmSpec, scenario: Scenario, reps: int, n: int, J: int = 2, seed: int = 0,
              n_jobs: int = 1, truth: Mapping[str, float] | None = None,
              bound: Mapping[str, float] | None = None) -> SimMetrics:
    """Monte Carlo study of one scenario; truths and bounds default to the oracle's.

    Each replication gets its own child of ``SeedSequence(seed)``, so results
    do not depend on ``n_jobs`` or scheduling. With ``n_jobs > 1`` the DGM's
    functions must be picklable (module-level).
    """
    if reps < 2:
        raise SimError("reps must be >= 2 (the Monte Carlo standard deviation is undefined otherwise)")
    if truth is None:
        eff = true_effects(dgm)
        truth = {"nde": eff["nde"], "nie": eff["nie"]}
    if bound is None:
        bound = {c: efficiency_bound(dgm, c) for c in ("nde", "nie")}
    specs = scenario.specs(seed)
    children = np.random.SeedSequence(seed).spawn(reps)
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            rows = list(pool.map(_one_rep, [dgm] * reps, [specs] * reps, [n] * reps, [J] * reps, children))
    else:
        rows = [_one_rep(dgm, specs, n, J, c) for c in children]

    ok = np.array([r for r in rows if r is not None], dtype=float).reshape(-1, 8)
    failed = reps - ok.shape[0]
    if failed > FAILURE_BUDGET * reps:
        raise SimError(f"{failed} of {reps} replications failed (budget {FAILURE_BUDGET:.0%})")
    names = ("est", "se", "ci_low", "ci_high")
    replicates = {f"{eff}_{nm}": ok[:, 4 * i + j] for i, eff in enumerate(("nde", "nie")) for j, nm in enumerate(names)}
    metrics = {
        eff: compute_metrics(*(replicates[f"{eff}_{nm}"] for nm in names), truth[eff], bound[eff], n)
        for eff in ("nde", "nie")
    }
    return SimMetrics(scenario.name, dgm.name, n, reps, J, seed, dict(truth), dict(bound),
                      metrics["nde"], metrics["nie"], failed, replicates)


def _rows(metrics: Sequence[SimMetrics]):
    for m in metrics:
        for eff in ("nde", "nie"):
            em = getattr(m, eff)
            yield [m.scenario, m.n, eff.upper()] + [getattr(em, c) for c in METRIC_COLUMNS]


def report(metrics: Sequence[SimMetrics], fmt: str = "text") -> str:
    """Table with one row per (scenario, n, effect) in the metric order
    |bias|, sqrt(n)|bias|, relse, relsd, relrmse, coverage."""
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for row in _rows(metrics):
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
        return buf.getvalue()
    if fmt != "text":
        raise SimError(f"unknown report format {fmt!r}")
    head = [f"{REPORT_COLUMNS[0]:<18}", f"{REPORT_COLUMNS[1]:>7}", f"{REPORT_COLUMNS[2]:>6}"]
    lines = ["  ".join(head + [f"{c:>15}" for c in METRIC_COLUMNS])]
    for row in _rows(metrics):
        cells = [f"{row[0]:<18}", f"{row[1]:>7}", f"{row[2]:>6}"] + [f"{v:>15.4f}" for v in row[3:]]
        lines.append("  ".join(cells))
    return "\n".join(lines) + "\n"


def metrics_from_json(text: str) -> list[SimMetrics]:
    """Parse a metrics store: one object or a list of objects."""
    data = json.loads(text) if text.strip() else []
    if isinstance(data, dict):
        data = [data]
    return [SimMetrics.from_dict(d) for d in data]


def metrics_chart_svg(metrics: Sequence[SimMetrics], metric: str = "coverage95") -> str:
    """Line chart of one metric against n, one line per (scenario, effect)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if metric not in METRIC_COLUMNS:
        raise SimError(f"unknown metric {metric!r}")
    plt.rcParams["svg.hashsalt"] = "monomed"
    fig, ax = plt.subplots(figsize=(6, 4))
    series: dict[tuple[str, str], list[tuple[int, float]]] = {}
    for m in metrics:
        for eff in ("nde", "nie"):
            series.setdefault((m.scenario, eff), []).append((m.n, getattr(getattr(m, eff), metric)))
    for (scen, eff), pts in sorted(series.items()):
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=f"{scen} {eff.upper()}")
    ax.set_xlabel("n")
    ax.set_ylabel(metric)
    if series:
        ax.legend(fontsize=7)
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()
