"""Cost model, metrics and sweeps for hierarchical-inference policies.

Per-sample cost: alpha whenever the on-device model runs (always, except
under full offload, and only on locally accepted samples for pre-gates),
gate_cost whenever a learned gate is evaluated, beta on offload, gamma when
the final inference is wrong (locally wrong prediction, or an offloaded
sample the large model misses).

Confusion convention: positive = simple-and-accepted-locally. FP is a
complex sample accepted locally, FN a simple sample offloaded.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .calibration import apply_temperature
from .policies import Decision, PolicyFamily, PolicySpec, decide_batch
from .trace import Trace, TraceRecord

DEFAULT_GRID_STEP = 0.01

# Families that run the on-device model on every sample.
_ALWAYS_EXEC = (
    PolicyFamily.FT,
    PolicyFamily.CFT,
    PolicyFamily.POST_GATE,
    PolicyFamily.NEVER_OFFLOAD,
)
_GATED = (PolicyFamily.POST_GATE, PolicyFamily.PRE_GATE)


@dataclass(frozen=True)
class CostModel:
    alpha: float  # on-device inference cost
    beta: float   # offload cost
    gamma: float  # misclassification cost
    gate_cost: float = 0.0

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "gate_cost"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta,
                "gamma": self.gamma, "gate_cost": self.gate_cost}


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


def f1_score(confusion: ConfusionCounts) -> float:
    denom = 2 * confusion.tp + confusion.fp + confusion.fn
    if denom == 0:
        return 0.0
    return 2 * confusion.tp / denom


@dataclass(frozen=True)
class EvaluationReport:
    policy: str
    cpi: float
    system_accuracy: float
    offload_fraction: float
    confusion: ConfusionCounts
    f1: float
    cost_model: CostModel
    exec_fraction: float
    gate_fraction: float

    def to_dict(self) -> dict:
        return {
            "policy": self.policy,
            "cpi": self.cpi,
            "system_accuracy": self.system_accuracy,
            "offload_fraction": self.offload_fraction,
            "confusion": self.confusion.to_dict(),
            "f1": self.f1,
            "cost_model": self.cost_model.to_dict(),
            "exec_fraction": self.exec_fraction,
            "gate_fraction": self.gate_fraction,
        }


def _exec_mask(family: PolicyFamily, offload: np.ndarray) -> np.ndarray:
    if family in _ALWAYS_EXEC:
        return np.ones(len(offload), dtype=bool)
    if family is PolicyFamily.PRE_GATE:
        return ~offload
    return np.zeros(len(offload), dtype=bool)  # full offload


def sample_cost(family: PolicyFamily, decision: Decision, record: TraceRecord,
                cm: CostModel, lml_oracle: bool = False) -> float:
    """Cost charged to a single record under the stated decision."""
    offloaded = decision is Decision.OFFLOAD
    cost = 0.0
    runs_sml = family in _ALWAYS_EXEC or (family is PolicyFamily.PRE_GATE and not offloaded)
    if runs_sml:
        cost += cm.alpha
    if family in _GATED:
        cost += cm.gate_cost
    if offloaded:
        cost += cm.beta
        if not (record.lml_correct or lml_oracle):
            cost += cm.gamma
    elif record.sml_pred != record.label:
        cost += cm.gamma
    return cost


def _evaluate_masks(trace: Trace, family: PolicyFamily, offload: np.ndarray,
                    cm: CostModel, label: str, lml_oracle: bool) -> EvaluationReport:
    n = len(trace)
    accept = ~offload
    simple = trace.preds == trace.labels
    lml_ok = np.ones(n, dtype=bool) if lml_oracle else trace.lml_ok
    wrong = (accept & ~simple) | (offload & ~lml_ok)
    exec_mask = _exec_mask(family, offload)
    gate_frac = 1.0 if family in _GATED else 0.0

    costs = (
        cm.alpha * exec_mask
        + cm.gate_cost * gate_frac * np.ones(n)
        + cm.beta * offload
        + cm.gamma * wrong
    )
    cpi = float(np.mean(costs))

    exec_frac = float(np.mean(exec_mask))
    off_frac = float(np.mean(offload))
    err_frac = float(np.mean(wrong))
    decomposed = cm.alpha * exec_frac + cm.gate_cost * gate_frac + cm.beta * off_frac \
        + cm.gamma * err_frac
    if abs(cpi - decomposed) > 1e-12:
        raise AssertionError(
            f"cost decomposition identity violated: {cpi} vs {decomposed}"
        )

    tp = int(np.sum(simple & accept))
    fp = int(np.sum(~simple & accept))
    fn = int(np.sum(simple & offload))
    tn = int(np.sum(~simple & offload))
    confusion = ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)
    return EvaluationReport(
        policy=label,
        cpi=cpi,
        system_accuracy=1.0 - err_frac,
        offload_fraction=off_frac,
        confusion=confusion,
        f1=f1_score(confusion),
        cost_model=cm,
        exec_fraction=exec_frac,
        gate_fraction=gate_frac,
    )


def evaluate(trace: Trace, policy: PolicySpec, cm: CostModel,
             lml_oracle: bool = False) -> EvaluationReport:
    """Mean cost per image plus accuracy/offload/confusion metrics."""
    offload = decide_batch(policy, trace)
    return _evaluate_masks(trace, policy.family, offload, cm, policy.label, lml_oracle)


# ---------------------------------------------------------------------------
# threshold sweep


@dataclass(frozen=True)
class ThresholdPoint:
    theta: float
    cpi: float
    accuracy: float
    offload_fraction: float
    f1: float


@dataclass(frozen=True)
class ThresholdSweep:
    points: list[ThresholdPoint]
    theta_star: float
    best: EvaluationReport
    temperature: float | None = None

    @property
    def thetas(self) -> np.ndarray:
        return np.array([p.theta for p in self.points])

    @property
    def cpis(self) -> np.ndarray:
        return np.array([p.cpi for p in self.points])


def threshold_grid(grid_step: float) -> np.ndarray:
    if not 0.0 < grid_step <= 0.5:
        raise ValueError(f"grid_step must be in (0, 0.5], got {grid_step}")
    count = int(np.floor(1.0 / grid_step + 1e-9))
    grid = np.round(np.arange(count + 1) * grid_step, 12)
    if grid[-1] < 1.0:
        grid = np.append(grid, 1.0)
    return grid


def evaluate_threshold(trace: Trace, theta: float, cm: CostModel,
                       temperature: float | None = None,
                       lml_oracle: bool = False) -> EvaluationReport:
    """Evaluate a fixed/calibrated threshold without re-deriving confidences."""
    conf = _scaled_confidences(trace, temperature)
    family = PolicyFamily.FT if temperature is None else PolicyFamily.CFT
    offload = conf < theta
    label = "ft" if temperature is None else "cft"
    return _evaluate_masks(trace, family, offload, cm, label, lml_oracle)


def _scaled_confidences(trace: Trace, temperature: float | None) -> np.ndarray:
    if temperature is None or temperature == 1.0:
        return trace.confidences
    return apply_temperature(trace.probs, temperature).max(axis=1)


def sweep_threshold(trace: Trace, cm: CostModel, grid_step: float = DEFAULT_GRID_STEP,
                    temperature: float | None = None,
                    lml_oracle: bool = False) -> ThresholdSweep:
    """Evaluate the threshold rule on a grid; theta* = argmin CPI.

    CPI ties break toward the smaller theta, i.e. toward fewer offloads under
    the accept-iff-confidence>=theta rule.
    """
    grid = threshold_grid(grid_step)
    conf = _scaled_confidences(trace, temperature)
    family = PolicyFamily.FT if temperature is None else PolicyFamily.CFT
    label = "ft" if temperature is None else "cft"

    points = []
    reports = []
    for theta in grid:
        offload = conf < theta
        rep = _evaluate_masks(trace, family, offload, cm, label, lml_oracle)
        reports.append(rep)
        points.append(ThresholdPoint(
            theta=float(theta), cpi=rep.cpi, accuracy=rep.system_accuracy,
            offload_fraction=rep.offload_fraction, f1=rep.f1,
        ))
    best_idx = int(np.argmin([p.cpi for p in points]))
    return ThresholdSweep(
        points=points,
        theta_star=float(grid[best_idx]),
        best=reports[best_idx],
        temperature=temperature,
    )


# ---------------------------------------------------------------------------
# cost-parameter sweeps


@dataclass(frozen=True)
class SweepRow:
    policy: str
    beta: float
    alpha: float
    gamma: float
    cpi: float
    accuracy: float
    offload_fraction: float
    confusion: ConfusionCounts
    f1: float
    theta_star: float | None = None

    def csv_values(self) -> list:
        return [
            self.policy, self.beta, self.alpha, self.gamma, self.cpi,
            self.accuracy, self.offload_fraction,
            self.confusion.tp, self.confusion.fp, self.confusion.fn,
            self.confusion.tn, self.f1,
        ]


SWEEP_CSV_HEADER = "policy,beta,alpha,gamma,cpi,accuracy,offload_fraction,tp,fp,fn,tn,f1"


def _row_from_report(rep: EvaluationReport, cm: CostModel, label: str,
                     theta_star: float | None = None) -> SweepRow:
    return SweepRow(
        policy=label,
        beta=cm.beta,
        alpha=cm.alpha,
        gamma=cm.gamma,
        cpi=rep.cpi,
        accuracy=rep.system_accuracy,
        offload_fraction=rep.offload_fraction,
        confusion=rep.confusion,
        f1=rep.f1,
        theta_star=theta_star,
    )


def _point_rows(trace: Trace, policies: list[PolicySpec], cm: CostModel,
                grid_step: float, lml_oracle: bool) -> list[SweepRow]:
    rows = []
    for policy in policies:
        if policy.family in (PolicyFamily.FT, PolicyFamily.CFT):
            if policy.family is PolicyFamily.CFT and policy.temperature is None:
                raise ValueError(f"{policy.label}: temperature not resolved")
            temperature = policy.temperature if policy.family is PolicyFamily.CFT else None
            sweep = sweep_threshold(trace, cm, grid_step, temperature, lml_oracle)
            rep = replace(sweep.best, policy=policy.label)
            rows.append(_row_from_report(rep, cm, policy.label, theta_star=sweep.theta_star))
        else:
            rep = evaluate(trace, policy, cm, lml_oracle)
            rows.append(_row_from_report(rep, cm, policy.label))
    return rows


def _run_points(trace, policies, cost_models, grid_step, lml_oracle, max_workers):
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            futures = [
                pool.submit(_point_rows, trace, policies, cm, grid_step, lml_oracle)
                for cm in cost_models
            ]
            chunks = [f.result() for f in futures]
    else:
        chunks = [
            _point_rows(trace, policies, cm, grid_step, lml_oracle) for cm in cost_models
        ]
    return [row for chunk in chunks for row in chunk]


def sweep_beta(trace: Trace, policies: list[PolicySpec], alpha: float, gamma: float,
               beta_grid, gate_cost: float = 0.0, grid_step: float = DEFAULT_GRID_STEP,
               lml_oracle: bool = False, max_workers: int = 1) -> list[SweepRow]:
    """CPI/accuracy/F1 per policy per beta; ft/cft re-optimize theta at each point."""
    beta_grid = list(beta_grid)
    if not beta_grid or not policies:
        raise ValueError("need a non-empty beta grid and at least one policy")
    cms = [CostModel(alpha=alpha, beta=float(b), gamma=gamma, gate_cost=gate_cost)
           for b in beta_grid]
    return _run_points(trace, policies, cms, grid_step, lml_oracle, max_workers)


def sweep_alpha_ratio(trace: Trace, policies: list[PolicySpec], beta: float, gamma: float,
                      ratio_grid, gate_cost: float = 0.0,
                      grid_step: float = DEFAULT_GRID_STEP,
                      lml_oracle: bool = False, max_workers: int = 1) -> list[SweepRow]:
    """Sweep alpha = ratio * beta over ratio_grid at fixed beta."""
    ratio_grid = list(ratio_grid)
    if not ratio_grid or not policies:
        raise ValueError("need a non-empty ratio grid and at least one policy")
    for r in ratio_grid:
        if not 0.0 <= r <= 1.0:
            raise ValueError(f"alpha/beta ratios must lie in [0, 1], got {r}")
    cms = [CostModel(alpha=float(r) * beta, beta=beta, gamma=gamma, gate_cost=gate_cost)
           for r in ratio_grid]
    return _run_points(trace, policies, cms, grid_step, lml_oracle, max_workers)


def rows_to_csv(rows: list[SweepRow]) -> str:
    lines = [SWEEP_CSV_HEADER]
    for row in rows:
        lines.append(",".join(_format_csv(v) for v in row.csv_values()))
    return "\n".join(lines) + "\n"


def _format_csv(v) -> str:
    if isinstance(v, float):
        return repr(float(v))  # plain repr even for numpy scalars
    return str(v)
