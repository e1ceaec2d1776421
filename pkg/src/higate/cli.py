"""Command-line front end: experiment orchestration and artifact emission.

Subcommands: generate, calibrate, train-gate, evaluate, sweep-threshold,
sweep-beta, sweep-ratio, run. Every command that writes into an output
directory also writes a manifest.json recording seeds, splits and
hyperparameters, and reruns with identical inputs produce byte-identical
CSV/JSON artifacts. Exit codes: 0 success, 1 internal error, 2 bad input.

Policies that need fitting (``gate:<stage>:<kind>``, bare ``cft``) trigger a
seeded train/eval split: gates and the temperature are fitted on the train
half and every sweep or report is computed on the eval half. Fully concrete
policies evaluate on the trace as given.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, figures
from .calibration import CalibrationResult, ReliabilityBins, ece, fit_temperature, reliability
from .evaluation import (
    CostModel,
    evaluate as evaluate_policy,
    rows_to_csv,
    sweep_alpha_ratio,
    sweep_beta,
    sweep_threshold,
)
from .learners import GateHyper, load_gate_model, save_gate_model
from .policies import (
    PolicyFamily,
    PolicyRequest,
    PolicySpec,
    build_post_gate,
    build_pre_gate,
    parse_policy,
)
from .synth import SynthConfig, generate
from .trace import Trace, load_trace, save_trace, split_trace

GATE_KINDS = ("lr", "svm", "rf")


class UsageError(ValueError):
    """Bad input or configuration; maps to exit code 2."""


# ---------------------------------------------------------------------------
# small shared helpers


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def parse_grid(spec) -> list[float]:
    """Parse a ``start:stop:step`` grid spec (inclusive) or pass a list through."""
    if isinstance(spec, (list, tuple)):
        return [float(v) for v in spec]
    parts = str(spec).split(":")
    if len(parts) != 3:
        raise UsageError(f"bad grid {spec!r}: expected start:stop:step")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError as exc:
        raise UsageError(f"bad grid {spec!r}: non-numeric component") from exc
    if step <= 0 or stop < start:
        raise UsageError(f"bad grid {spec!r}: need step > 0 and stop >= start")
    count = int(np.floor((stop - start) / step + 1e-9))
    values = [round(start + i * step, 12) for i in range(count + 1)]
    if values[-1] < stop - 1e-9:
        values.append(stop)
    return values


def _max_workers() -> int:
    raw = os.environ.get("HIGATE_THREADS", "")
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError as exc:
        raise UsageError(f"HIGATE_THREADS must be an integer, got {raw!r}") from exc
    return max(1, n)


def emit_reliability_plotdata(result: CalibrationResult, bins_before: ReliabilityBins,
                              bins_after: ReliabilityBins) -> str:
    """Occupied-bins-only CSV for reliability diagrams, before/after stages."""
    lines = ["bin_low,bin_high,count,mean_conf,mean_acc,stage"]
    for stage, bins in (("before", bins_before), ("after", bins_after)):
        if bins is None:
            continue
        edges = bins.edges
        for m in range(bins.num_bins):
            if bins.counts[m] == 0:
                continue
            lines.append(
                f"{float(edges[m])!r},{float(edges[m + 1])!r},{int(bins.counts[m])},"
                f"{float(bins.mean_confidence[m])!r},{float(bins.mean_accuracy[m])!r},{stage}"
            )
    return "\n".join(lines) + "\n"


def _threshold_curve_csv(curves: dict) -> str:
    lines = ["variant,theta,cpi,accuracy,offload_fraction,f1"]
    for label, sweep in curves.items():
        for p in sweep.points:
            lines.append(f"{label},{p.theta!r},{p.cpi!r},{p.accuracy!r},"
                         f"{p.offload_fraction!r},{p.f1!r}")
    return "\n".join(lines) + "\n"


def _trace_summary(trace: Trace, source: str) -> dict:
    return {
        "source": source,
        "records": len(trace),
        "num_classes": trace.num_classes,
        "feature_dim": trace.feature_dim,
        "sml_accuracy": trace.sml_accuracy,
        "lml_accuracy": trace.lml_accuracy,
    }


# ---------------------------------------------------------------------------
# experiment configuration (the `run` subcommand)


@dataclass
class ExperimentConfig:
    out_dir: str
    trace: str | None = None
    synth: dict | None = None
    seed: int = 0
    train_fraction: float = 0.8
    calibrate: bool = False
    policies: list[str] = field(default_factory=lambda: ["ft", "full-offload", "never-offload"])
    alpha: float = 0.0
    beta: float = 0.5
    gamma: float = 1.0
    gate_cost: float = 0.0
    grid_step: float = 0.01
    beta_grid: object = "0.0:1.0:0.1"
    ratio_grid: object = "0.0:1.0:0.1"
    sweeps: list[str] = field(default_factory=lambda: ["threshold", "beta", "ratio"])
    lml_oracle: bool = False
    figures: bool = True
    num_bins: int = 10
    gate: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path: str | Path, overrides: dict | None = None) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise UsageError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {path} is not valid JSON: {exc.msg}") from exc
        if not isinstance(raw, dict):
            raise UsageError(f"config file {path} must hold a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        merged = dict(raw)
        for key, value in (overrides or {}).items():
            if value is not None:
                merged[key] = value
        if "out_dir" not in merged:
            raise UsageError("config must set out_dir (or pass --out-dir)")
        return cls(**merged)

    def validate(self) -> None:
        if (self.trace is None) == (self.synth is None):
            raise UsageError("config must set exactly one of 'trace' and 'synth'")
        if self.trace is not None and not Path(self.trace).exists():
            raise UsageError(f"trace file not found: {self.trace}")
        if not 0.0 < self.train_fraction < 1.0:
            raise UsageError("train_fraction must be in (0, 1)")
        for name in ("alpha", "beta", "gamma", "gate_cost"):
            if getattr(self, name) < 0:
                raise UsageError(f"{name} must be >= 0")
        unknown = set(self.sweeps) - {"threshold", "beta", "ratio"}
        if unknown:
            raise UsageError(f"unknown sweeps: {sorted(unknown)}")
        for p in self.policies:
            parse_policy(p)
        if self.synth is not None and "seed" not in self.synth:
            raise UsageError("synth config must carry an explicit seed")

    def to_dict(self) -> dict:
        return {
            "out_dir": self.out_dir, "trace": self.trace, "synth": self.synth,
            "seed": self.seed, "train_fraction": self.train_fraction,
            "calibrate": self.calibrate, "policies": list(self.policies),
            "alpha": self.alpha, "beta": self.beta, "gamma": self.gamma,
            "gate_cost": self.gate_cost, "grid_step": self.grid_step,
            "beta_grid": self.beta_grid, "ratio_grid": self.ratio_grid,
            "sweeps": list(self.sweeps), "lml_oracle": self.lml_oracle,
            "figures": self.figures, "num_bins": self.num_bins, "gate": self.gate,
        }


def _gate_hyper(kind: str, overrides: dict) -> GateHyper:
    allowed = {"l2_lambda", "learning_rate", "epochs", "num_trees", "max_depth",
               "min_leaf", "features_per_split", "bootstrap"}
    unknown = set(overrides) - allowed
    if unknown:
        raise UsageError(f"unknown gate hyperparameters: {sorted(unknown)}")
    return GateHyper(kind=kind, **overrides)


@dataclass
class ResolvedPolicies:
    specs: list[PolicySpec]
    gates: dict
    temperature: float | None
    calibration: CalibrationResult | None
    needs_training: bool


def _resolve_policies(requests: list[PolicyRequest], gate_train: Trace | None,
                      gate_overrides: dict, seed: int,
                      explicit_temperature: float | None = None,
                      force_calibration: bool = False) -> ResolvedPolicies:
    """Build PolicySpecs, training gates and fitting the temperature as needed."""
    needs_fit_t = force_calibration or any(
        r.family is PolicyFamily.CFT and r.temperature is None for r in requests
    )
    calibration = None
    temperature = explicit_temperature
    if needs_fit_t and temperature is None:
        if gate_train is None:
            raise UsageError("cft without an explicit temperature needs a train split")
        calibration = fit_temperature(gate_train)
        temperature = calibration.temperature

    specs = []
    gates = {}
    for req in requests:
        if req.family in (PolicyFamily.FULL_OFFLOAD, PolicyFamily.NEVER_OFFLOAD):
            specs.append(PolicySpec(family=req.family, name=req.raw))
        elif req.family is PolicyFamily.FT:
            specs.append(PolicySpec(family=req.family, theta=req.theta, name="ft"))
        elif req.family is PolicyFamily.CFT:
            t = req.temperature if req.temperature is not None else temperature
            if t is None:
                raise UsageError(f"policy {req.raw!r}: no temperature available")
            specs.append(PolicySpec(family=req.family, theta=req.theta,
                                    temperature=t, name="cft"))
        else:
            source = req.gate_source
            if source in GATE_KINDS:
                if gate_train is None:
                    raise UsageError(
                        f"policy {req.raw!r} needs gate training; provide a train split"
                    )
                hyper = _gate_hyper(source, gate_overrides)
                builder = build_post_gate if req.gate_stage == "post" else build_pre_gate
                result = builder(gate_train, hyper, seed)
                gates[result.policy.label] = result
                specs.append(result.policy)
            else:
                gate = load_gate_model(source)
                if gate.stage is not None and gate.stage != req.gate_stage:
                    raise UsageError(
                        f"policy {req.raw!r}: model was trained as a {gate.stage}-gate"
                    )
                name = f"gate:{req.gate_stage}:{gate.kind}"
                specs.append(PolicySpec(family=req.family, gate=gate, name=name))
    needs_training = any(
        r.gate_source in GATE_KINDS for r in requests if r.gate_source is not None
    )
    return ResolvedPolicies(specs=specs, gates=gates, temperature=temperature,
                            calibration=calibration, needs_training=needs_training)


def _requests_need_split(requests: list[PolicyRequest]) -> bool:
    for r in requests:
        if r.gate_source in GATE_KINDS:
            return True
        if r.family is PolicyFamily.CFT and r.temperature is None:
            return True
    return False


# ---------------------------------------------------------------------------
# subcommand implementations


def _cmd_generate(args) -> int:
    cfg = SynthConfig(
        n=args.n, seed=args.seed, num_classes=args.num_classes,
        q_alpha=args.q_alpha, q_beta=args.q_beta, lml_acc=args.lml_acc,
        overconfidence=args.overconfidence, feature_dim=args.feature_dim,
        noise_scale=args.noise_scale, feature_shift=args.feature_shift,
    )
    trace = generate(cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_trace(trace, out)
    print(f"wrote {len(trace)} records to {out} "
          f"(sml_acc={trace.sml_accuracy:.4f}, lml_acc={trace.lml_accuracy:.4f})")
    return 0


def _cmd_calibrate(args) -> int:
    trace = load_trace(args.trace)
    fit_part, eval_part = split_trace(trace, args.split, args.seed)
    result = fit_temperature(fit_part, num_bins=args.bins)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write(out_dir / "calibration.json", _dump_json(result.to_dict()))

    artifacts = ["calibration.json"]
    panels = {}
    for tag, part in (("fit", fit_part), ("eval", eval_part)):
        before = reliability(part, args.bins, temperature=1.0)
        after = reliability(part, args.bins, temperature=result.temperature)
        _write(out_dir / f"reliability_{tag}.csv",
               emit_reliability_plotdata(result, before, after))
        artifacts.append(f"reliability_{tag}.csv")
        panels[tag] = (before, after)
    if args.figures:
        before, after = panels["fit"]
        figures.render_reliability(before, after, result.ece_before, result.ece_after,
                                   result.temperature, out_dir / "reliability.png")
        artifacts.append("reliability.png")

    eval_before, eval_after = panels["eval"]
    manifest = {
        "command": "calibrate",
        "version": __version__,
        "trace": _trace_summary(trace, str(args.trace)),
        "split": {"train_fraction": args.split, "seed": args.seed,
                  "fit_size": len(fit_part), "eval_size": len(eval_part)},
        "calibration": result.to_dict(),
        "eval_split_ece": {"before": ece(eval_before), "after": ece(eval_after)},
        "outputs": artifacts,
    }
    _write(out_dir / "manifest.json", _dump_json(manifest))
    print(f"T*={result.temperature:.4f}  ECE {result.ece_before:.4f} -> {result.ece_after:.4f}"
          f"  NLL {result.nll_before:.4f} -> {result.nll_after:.4f}")
    return 0


def _cmd_train_gate(args) -> int:
    trace = load_trace(args.trace)
    gate_train, _ = split_trace(trace, args.split, args.seed)
    overrides = _hyper_overrides(args)
    hyper = _gate_hyper(args.gate_kind, overrides)
    builder = build_post_gate if args.gate_stage == "post" else build_pre_gate
    result = builder(gate_train, hyper, args.seed)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model_name = f"gate_{args.gate_stage}_{args.gate_kind}.json"
    save_gate_model(result.gate, out_dir / model_name)
    manifest = {
        "command": "train-gate",
        "version": __version__,
        "trace": _trace_summary(trace, str(args.trace)),
        "split": {"train_fraction": args.split, "seed": args.seed,
                  "train_size": len(gate_train)},
        "gate": {
            "kind": args.gate_kind,
            "stage": args.gate_stage,
            "seed": args.seed,
            "holdout_accuracy": result.holdout_accuracy,
            "train_size": result.train_size,
            "holdout_size": result.holdout_size,
            "class_counts": result.class_counts,
        },
        "outputs": [model_name],
    }
    _write(out_dir / "manifest.json", _dump_json(manifest))
    print(f"trained {args.gate_stage}-gate {args.gate_kind}: "
          f"holdout accuracy {result.holdout_accuracy:.4f} -> {out_dir / model_name}")
    return 0


def _cmd_evaluate(args) -> int:
    trace = load_trace(args.trace)
    requests = [parse_policy(p) for p in args.policy]
    for req in requests:
        if req.gate_source in GATE_KINDS:
            raise UsageError(
                f"policy {req.raw!r}: evaluate needs a trained model path; "
                "use train-gate first or run a sweep"
            )
        if req.family in (PolicyFamily.FT, PolicyFamily.CFT) and req.theta is None:
            raise UsageError(
                f"policy {req.raw!r}: evaluate needs an explicit threshold "
                "(use sweep-threshold to pick one)"
            )
        if req.family is PolicyFamily.CFT and req.temperature is None:
            raise UsageError(f"policy {req.raw!r}: evaluate needs an explicit @T=")
    resolved = _resolve_policies(requests, gate_train=None, gate_overrides={},
                                 seed=args.seed)
    cm = CostModel(alpha=args.alpha, beta=args.beta, gamma=args.gamma,
                   gate_cost=args.gate_cost)
    reports = [evaluate_policy(trace, spec, cm, args.lml_oracle) for spec in resolved.specs]

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write(out_dir / "evaluation.json", _dump_json([r.to_dict() for r in reports]))
    manifest = {
        "command": "evaluate",
        "version": __version__,
        "trace": _trace_summary(trace, str(args.trace)),
        "cost_model": cm.to_dict(),
        "lml_oracle": args.lml_oracle,
        "policies": [spec.describe() for spec in resolved.specs],
        "outputs": ["evaluation.json"],
    }
    _write(out_dir / "manifest.json", _dump_json(manifest))
    for rep in reports:
        print(f"{rep.policy:>18}  cpi={rep.cpi:.4f}  acc={rep.system_accuracy:.4f}  "
              f"offload={rep.offload_fraction:.4f}  f1={rep.f1:.4f}")
    return 0


def _cmd_sweep_threshold(args) -> int:
    trace = load_trace(args.trace)
    temperature = args.temperature
    calibration = None
    split_info = None
    eval_trace = trace
    if args.calibrate:
        fit_part, eval_trace = split_trace(trace, args.split, args.seed)
        calibration = fit_temperature(fit_part)
        temperature = calibration.temperature
        split_info = {"train_fraction": args.split, "seed": args.seed,
                      "fit_size": len(fit_part), "eval_size": len(eval_trace)}
    cm = CostModel(alpha=args.alpha, beta=args.beta, gamma=args.gamma,
                   gate_cost=args.gate_cost)

    curves = {"ft": sweep_threshold(eval_trace, cm, args.grid_step, None, args.lml_oracle)}
    if temperature is not None:
        curves["cft"] = sweep_threshold(eval_trace, cm, args.grid_step, temperature,
                                        args.lml_oracle)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write(out_dir / "threshold_curve.csv", _threshold_curve_csv(curves))

    stars = {
        label: {"theta_star": sweep.theta_star, "cpi": sweep.best.cpi,
                "accuracy": sweep.best.system_accuracy,
                "offload_fraction": sweep.best.offload_fraction,
                "temperature": sweep.temperature}
        for label, sweep in curves.items()
    }
    _write(out_dir / "theta_star.json", _dump_json(stars))
    artifacts = ["threshold_curve.csv", "theta_star.json"]
    if args.figures:
        figures.render_threshold_sweep(
            {label: sweep.points for label, sweep in curves.items()},
            {label: sweep.theta_star for label, sweep in curves.items()},
            out_dir / "threshold_curve.png",
        )
        artifacts.append("threshold_curve.png")
    manifest = {
        "command": "sweep-threshold",
        "version": __version__,
        "trace": _trace_summary(trace, str(args.trace)),
        "split": split_info,
        "calibration": calibration.to_dict() if calibration else None,
        "temperature": temperature,
        "cost_model": cm.to_dict(),
        "grid_step": args.grid_step,
        "lml_oracle": args.lml_oracle,
        "outputs": artifacts,
    }
    _write(out_dir / "manifest.json", _dump_json(manifest))
    for label, sweep in curves.items():
        print(f"{label}: theta*={sweep.theta_star}  cpi={sweep.best.cpi:.4f}")
    return 0


def _sweep_command(args, kind: str) -> int:
    trace = load_trace(args.trace)
    requests = [parse_policy(p) for p in args.policy]
    split_info = None
    gate_train = None
    eval_trace = trace
    if args.calibrate or _requests_need_split(requests):
        gate_train, eval_trace = split_trace(trace, args.split, args.seed)
        split_info = {"train_fraction": args.split, "seed": args.seed,
                      "train_size": len(gate_train), "eval_size": len(eval_trace)}
    resolved = _resolve_policies(requests, gate_train, _hyper_overrides(args),
                                 args.seed, force_calibration=args.calibrate)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    workers = _max_workers()
    if kind == "beta":
        grid = parse_grid(args.beta_grid)
        rows = sweep_beta(eval_trace, resolved.specs, args.alpha, args.gamma, grid,
                          args.gate_cost, args.grid_step, args.lml_oracle, workers)
        csv_name, fig_name = "sweep_beta.csv", "sweep_beta.png"
        grid_echo = {"beta_grid": grid, "alpha": args.alpha, "gamma": args.gamma}
    else:
        grid = parse_grid(args.ratio_grid)
        rows = sweep_alpha_ratio(eval_trace, resolved.specs, args.beta, args.gamma, grid,
                                 args.gate_cost, args.grid_step, args.lml_oracle, workers)
        csv_name, fig_name = "sweep_ratio.csv", "sweep_ratio.png"
        grid_echo = {"ratio_grid": grid, "beta": args.beta, "gamma": args.gamma}

    _write(out_dir / csv_name, rows_to_csv(rows))
    artifacts = [csv_name]
    for label, result in resolved.gates.items():
        model_name = label.replace(":", "_") + ".json"
        save_gate_model(result.gate, out_dir / model_name)
        artifacts.append(model_name)
    if args.figures:
        if kind == "beta":
            figures.render_beta_sweep(rows, out_dir / fig_name)
        else:
            figures.render_ratio_sweep(rows, args.beta, out_dir / fig_name)
        artifacts.append(fig_name)

    manifest = {
        "command": f"sweep-{kind}",
        "version": __version__,
        "trace": _trace_summary(trace, str(args.trace)),
        "split": split_info,
        "seed": args.seed,
        "temperature": resolved.temperature,
        "calibration": resolved.calibration.to_dict() if resolved.calibration else None,
        "gates": {label: {"holdout_accuracy": r.holdout_accuracy,
                          "train_size": r.train_size, "holdout_size": r.holdout_size}
                  for label, r in resolved.gates.items()},
        "policies": [spec.describe() for spec in resolved.specs],
        "grid_step": args.grid_step,
        "gate_cost": args.gate_cost,
        "lml_oracle": args.lml_oracle,
        "outputs": artifacts,
        **grid_echo,
    }
    _write(out_dir / "manifest.json", _dump_json(manifest))
    print(f"wrote {len(rows)} sweep rows to {out_dir / csv_name}")
    return 0


def run(config: ExperimentConfig) -> dict:
    """Execute the full pipeline described by an ExperimentConfig.

    Returns the manifest dictionary; artifacts land in config.out_dir.
    """
    config.validate()
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts = []

    if config.synth is not None:
        synth_cfg = SynthConfig(**config.synth)
        trace = generate(synth_cfg)
        save_trace(trace, out_dir / "trace.jsonl")
        artifacts.append("trace.jsonl")
        source = "synth"
    else:
        trace = load_trace(config.trace)
        source = str(config.trace)

    gate_train, eval_trace = split_trace(trace, config.train_fraction, config.seed)
    requests = [parse_policy(p) for p in config.policies]
    resolved = _resolve_policies(requests, gate_train, config.gate, config.seed,
                                 force_calibration=config.calibrate)
    cm = CostModel(alpha=config.alpha, beta=config.beta, gamma=config.gamma,
                   gate_cost=config.gate_cost)
    workers = _max_workers()

    if resolved.calibration is not None:
        result = resolved.calibration
        _write(out_dir / "calibration.json", _dump_json(result.to_dict()))
        artifacts.append("calibration.json")
        for tag, part in (("fit", gate_train), ("eval", eval_trace)):
            before = reliability(part, config.num_bins, temperature=1.0)
            after = reliability(part, config.num_bins, temperature=result.temperature)
            _write(out_dir / f"reliability_{tag}.csv",
                   emit_reliability_plotdata(result, before, after))
            artifacts.append(f"reliability_{tag}.csv")
        if config.figures:
            before = reliability(gate_train, config.num_bins, 1.0)
            after = reliability(gate_train, config.num_bins, result.temperature)
            figures.render_reliability(before, after, result.ece_before,
                                       result.ece_after, result.temperature,
                                       out_dir / "reliability.png")
            artifacts.append("reliability.png")

    for label, gate_result in resolved.gates.items():
        model_name = label.replace(":", "_") + ".json"
        save_gate_model(gate_result.gate, out_dir / model_name)
        artifacts.append(model_name)

    # Per-policy reports at the base cost model; auto thresholds resolve to
    # theta* on the evaluation split at that cost model.
    reports = []
    theta_stars = {}
    for spec in resolved.specs:
        if spec.family in (PolicyFamily.FT, PolicyFamily.CFT) and spec.theta is None:
            temperature = spec.temperature if spec.family is PolicyFamily.CFT else None
            sweep = sweep_threshold(eval_trace, cm, config.grid_step, temperature,
                                    config.lml_oracle)
            theta_stars[spec.label] = sweep.theta_star
            spec = PolicySpec(family=spec.family, theta=sweep.theta_star,
                              temperature=spec.temperature, name=spec.name)
        reports.append(evaluate_policy(eval_trace, spec, cm, config.lml_oracle))
    _write(out_dir / "evaluation.json", _dump_json([r.to_dict() for r in reports]))
    artifacts.append("evaluation.json")

    sweep_outputs = {}
    if "threshold" in config.sweeps:
        curves = {"ft": sweep_threshold(eval_trace, cm, config.grid_step, None,
                                        config.lml_oracle)}
        if resolved.temperature is not None:
            curves["cft"] = sweep_threshold(eval_trace, cm, config.grid_step,
                                            resolved.temperature, config.lml_oracle)
        _write(out_dir / "threshold_curve.csv", _threshold_curve_csv(curves))
        artifacts.append("threshold_curve.csv")
        sweep_outputs["threshold"] = {label: sweep.theta_star
                                      for label, sweep in curves.items()}
        if config.figures:
            figures.render_threshold_sweep(
                {label: sweep.points for label, sweep in curves.items()},
                {label: sweep.theta_star for label, sweep in curves.items()},
                out_dir / "threshold_curve.png")
            artifacts.append("threshold_curve.png")
    if "beta" in config.sweeps:
        rows = sweep_beta(eval_trace, resolved.specs, config.alpha, config.gamma,
                          parse_grid(config.beta_grid), config.gate_cost,
                          config.grid_step, config.lml_oracle, workers)
        _write(out_dir / "sweep_beta.csv", rows_to_csv(rows))
        artifacts.append("sweep_beta.csv")
        if config.figures:
            figures.render_beta_sweep(rows, out_dir / "sweep_beta.png")
            artifacts.append("sweep_beta.png")
    if "ratio" in config.sweeps:
        rows = sweep_alpha_ratio(eval_trace, resolved.specs, config.beta, config.gamma,
                                 parse_grid(config.ratio_grid), config.gate_cost,
                                 config.grid_step, config.lml_oracle, workers)
        _write(out_dir / "sweep_ratio.csv", rows_to_csv(rows))
        artifacts.append("sweep_ratio.csv")
        if config.figures:
            figures.render_ratio_sweep(rows, config.beta, out_dir / "sweep_ratio.png")
            artifacts.append("sweep_ratio.png")

    manifest = {
        "command": "run",
        "version": __version__,
        "config": config.to_dict(),
        "trace": _trace_summary(trace, source),
        "split": {"train_fraction": config.train_fraction, "seed": config.seed,
                  "train_size": len(gate_train), "eval_size": len(eval_trace)},
        "temperature": resolved.temperature,
        "calibration": resolved.calibration.to_dict() if resolved.calibration else None,
        "gates": {label: {"holdout_accuracy": r.holdout_accuracy,
                          "train_size": r.train_size, "holdout_size": r.holdout_size}
                  for label, r in resolved.gates.items()},
        "theta_star": theta_stars,
        "sweeps": sweep_outputs,
        "outputs": artifacts,
    }
    _write(out_dir / "manifest.json", _dump_json(manifest))
    return manifest


def _cmd_run(args) -> int:
    overrides = {"trace": args.trace, "out_dir": args.out_dir, "seed": args.seed}
    config = ExperimentConfig.from_file(args.config, overrides)
    manifest = run(config)
    print(f"run complete: {len(manifest['outputs'])} artifacts in {config.out_dir}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _hyper_overrides(args) -> dict:
    overrides = {}
    for name in ("l2_lambda", "learning_rate", "epochs", "num_trees", "max_depth",
                 "min_leaf"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return overrides


def _add_trace_arg(p):
    p.add_argument("--trace", required=True, help="input trace (JSON Lines)")


def _add_out_dir(p):
    p.add_argument("--out-dir", required=True, help="output directory for artifacts")


def _add_seed(p):
    p.add_argument("--seed", type=int, default=0,
                   help="seed for splits and gate training (default 0)")


def _add_cost_args(p):
    p.add_argument("--alpha", type=float, default=0.0, help="on-device inference cost")
    p.add_argument("--beta", type=float, default=0.5, help="offload cost")
    p.add_argument("--gamma", type=float, default=1.0, help="misclassification cost")
    p.add_argument("--gate-cost", type=float, default=0.0, help="cost per gate evaluation")


def _add_gate_hyper_args(p):
    p.add_argument("--l2-lambda", dest="l2_lambda", type=float, default=None)
    p.add_argument("--learning-rate", dest="learning_rate", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--num-trees", dest="num_trees", type=int, default=None)
    p.add_argument("--max-depth", dest="max_depth", type=int, default=None)
    p.add_argument("--min-leaf", dest="min_leaf", type=int, default=None)


def _add_sweep_common(p):
    _add_trace_arg(p)
    _add_out_dir(p)
    _add_seed(p)
    _add_cost_args(p)
    _add_gate_hyper_args(p)
    p.add_argument("--policy", action="append", required=True,
                   help="policy spec (repeatable): ft, ft:0.55, cft, cft:0.5@T=1.8, "
                        "gate:post:lr, gate:pre:model.json, full-offload, never-offload")
    p.add_argument("--grid-step", type=float, default=0.01,
                   help="theta grid step for ft/cft re-optimization")
    p.add_argument("--split", type=float, default=0.8,
                   help="train fraction used when gates/calibration must be fitted")
    p.add_argument("--calibrate", action="store_true",
                   help="fit the temperature on the train split")
    p.add_argument("--lml-oracle", action="store_true",
                   help="treat every offloaded sample as correctly classified")
    p.add_argument("--no-figures", dest="figures", action="store_false",
                   help="skip PNG rendering")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="higate",
        description="Hierarchical-inference offloading: gates, calibration, cost sweeps.",
    )
    parser.add_argument("--version", action="version", version=f"higate {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic trace")
    p.add_argument("--out", required=True, help="output trace path (.jsonl)")
    p.add_argument("--n", type=int, required=True)
    _add_seed(p)
    p.add_argument("--num-classes", type=int, default=10)
    p.add_argument("--q-alpha", type=float, default=5.0)
    p.add_argument("--q-beta", type=float, default=1.0)
    p.add_argument("--lml-acc", type=float, default=0.995)
    p.add_argument("--overconfidence", type=float, default=2.0)
    p.add_argument("--feature-dim", type=int, default=None)
    p.add_argument("--noise-scale", type=float, default=1.0)
    p.add_argument("--feature-shift", type=float, default=14.0)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("calibrate", help="fit temperature scaling and report ECE")
    _add_trace_arg(p)
    _add_out_dir(p)
    _add_seed(p)
    p.add_argument("--split", type=float, default=0.8, help="fit fraction (default 0.8)")
    p.add_argument("--bins", type=int, default=10, help="reliability bins (default 10)")
    p.add_argument("--no-figures", dest="figures", action="store_false")
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("train-gate", help="train a complex-vs-simple gate classifier")
    _add_trace_arg(p)
    _add_out_dir(p)
    _add_seed(p)
    p.add_argument("--gate-kind", choices=GATE_KINDS, required=True)
    p.add_argument("--gate-stage", choices=("pre", "post"), required=True)
    p.add_argument("--split", type=float, default=0.8)
    _add_gate_hyper_args(p)
    p.set_defaults(func=_cmd_train_gate)

    p = sub.add_parser("evaluate", help="evaluate concrete policies on a trace")
    _add_trace_arg(p)
    _add_out_dir(p)
    _add_seed(p)
    _add_cost_args(p)
    p.add_argument("--policy", action="append", required=True)
    p.add_argument("--lml-oracle", action="store_true")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("sweep-threshold", help="CPI/accuracy across the theta grid")
    _add_trace_arg(p)
    _add_out_dir(p)
    _add_seed(p)
    _add_cost_args(p)
    p.add_argument("--grid-step", type=float, default=0.01)
    p.add_argument("--temperature", type=float, default=None,
                   help="also sweep the calibrated rule at this temperature")
    p.add_argument("--calibrate", action="store_true",
                   help="fit the temperature on a train split, sweep the rest")
    p.add_argument("--split", type=float, default=0.8)
    p.add_argument("--lml-oracle", action="store_true")
    p.add_argument("--no-figures", dest="figures", action="store_false")
    p.set_defaults(func=_cmd_sweep_threshold)

    p = sub.add_parser("sweep-beta", help="sweep offload cost beta per policy")
    _add_sweep_common(p)
    p.add_argument("--beta-grid", default="0.0:1.0:0.1", help="start:stop:step")
    p.set_defaults(func=lambda a: _sweep_command(a, "beta"))

    p = sub.add_parser("sweep-ratio", help="sweep alpha/beta at fixed beta per policy")
    _add_sweep_common(p)
    p.add_argument("--ratio-grid", default="0.0:1.0:0.1", help="start:stop:step")
    p.set_defaults(func=lambda a: _sweep_command(a, "ratio"))

    p = sub.add_parser("run", help="run a full experiment from a JSON config")
    p.add_argument("--config", required=True, help="experiment config (JSON)")
    p.add_argument("--trace", default=None, help="override config trace path")
    p.add_argument("--out-dir", dest="out_dir", default=None, help="override out_dir")
    p.add_argument("--seed", type=int, default=None, help="override seed")
    p.set_defaults(func=_cmd_run)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
