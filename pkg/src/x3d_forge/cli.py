"""x3d-forge command line: instantiate, cost, expand, contract, eval, curve.

Exit codes: 0 success, 1 usage error, 2 infeasible or invalid input.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

from . import persist
from .arch import (
    FACTOR_NAMES,
    PRESETS,
    ArchConfig,
    ArchError,
    ArchSpec,
    ExpansionFactors,
    get_preset,
    instantiate,
    validate,
)
from .cost import InferenceStrategy, flops_cost, inference_cost, report
from .criterion import CriterionError, CriterionSpec, SyntheticDatasetSpec, make_criterion
from .expansion import (
    ExpansionError,
    ExpansionSettings,
    Regime,
    backward_contract,
    default_paramfn,
    forward_expand,
    select_instance,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2

_FACTOR_ALIASES = {
    "gamma_tau": "gamma_tau", "tau": "gamma_tau", "γτ": "gamma_tau",
    "gamma_t": "gamma_t", "t": "gamma_t", "γt": "gamma_t",
    "gamma_s": "gamma_s", "s": "gamma_s", "γs": "gamma_s",
    "gamma_w": "gamma_w", "w": "gamma_w", "γw": "gamma_w",
    "gamma_b": "gamma_b", "b": "gamma_b", "γb": "gamma_b",
    "gamma_d": "gamma_d", "d": "gamma_d", "γd": "gamma_d",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_factors(text: str) -> Dict[str, float]:
    """``"γb=2.25,gamma_d=2.2"`` -> ``{"gamma_b": 2.25, "gamma_d": 2.2}``."""
    out: Dict[str, float] = {}
    for item in filter(None, (p.strip() for p in text.split(","))):
        key, sep, value = item.partition("=")
        name = _FACTOR_ALIASES.get(key.strip())
        if not sep or name is None:
            raise UsageError(f"bad factor {item!r}; use name=value with names {', '.join(FACTOR_NAMES)}")
        if name in out:
            raise UsageError(f"factor {name} given twice")
        try:
            out[name] = float(value)
        except ValueError:
            raise UsageError(f"factor {name} needs a number, got {value!r}") from None
    return out


# ---------------------------------------------------------------- run config


@dataclass
class RunConfig:
    preset: Optional[str] = None
    factors: Dict[str, float] = field(default_factory=dict)
    target_gflops: Optional[float] = None
    regime: Optional[str] = None
    settings: ExpansionSettings = field(default_factory=ExpansionSettings)
    criterion: CriterionSpec = field(default_factory=CriterionSpec)
    arch: ArchConfig = field(default_factory=ArchConfig)
    trajectory_path: str = "trajectory.csv"
    spec_path: str = "chosen_spec.json"
    threads: Optional[int] = None

    def check(self) -> None:
        if (self.target_gflops is None) == (self.regime is None):
            raise UsageError("give exactly one of target_gflops or regime")
        if self.target_gflops is not None and not self.target_gflops > 0:
            raise UsageError("target_gflops must be positive")
        if self.regime is not None:
            Regime.parse(self.regime)
        if self.preset is not None and self.factors:
            raise UsageError("give either a start preset or start factors, not both")
        path = self.criterion.table_path
        if path and not os.path.exists(path):
            raise UsageError(f"replay table {path!r} does not exist")
        self.criterion.check()

    @property
    def target_cost(self) -> int:
        if self.regime is not None:
            return Regime.parse(self.regime).bound
        return int(round(self.target_gflops * 1e9))

    def start(self) -> ExpansionFactors:
        if self.preset is not None:
            return get_preset(self.preset).factors
        return ExpansionFactors(**self.factors)

    @classmethod
    def from_dict(cls, doc: dict, base_dir: str = ".") -> "RunConfig":
        known = {
            "start", "target_gflops", "regime", "settings", "criterion", "arch", "outputs", "threads",
        }
        unknown = set(doc) - known
        if unknown:
            raise UsageError(f"unknown run-config fields: {sorted(unknown)}")
        start = doc.get("start") or {}
        if isinstance(start, str):
            start = {"preset": start}
        crit = dict(doc.get("criterion") or {})
        if "dataset" in crit:
            crit["dataset"] = _dataset_from_dict(crit["dataset"])
        if crit.get("table_path"):
            crit["table_path"] = os.path.join(base_dir, crit["table_path"])
        if "arch_config" in crit:
            crit["arch_config"] = ArchConfig(**crit["arch_config"])
        outputs = doc.get("outputs") or {}
        try:
            cfg = cls(
                preset=start.get("preset"),
                factors={_FACTOR_ALIASES.get(k, k): float(v) for k, v in (start.get("factors") or {}).items()},
                target_gflops=doc.get("target_gflops"),
                regime=doc.get("regime"),
                settings=ExpansionSettings(**(doc.get("settings") or {})),
                criterion=CriterionSpec(**crit),
                arch=ArchConfig(**(doc.get("arch") or {})),
                trajectory_path=outputs.get("trajectory", "trajectory.csv"),
                spec_path=outputs.get("spec", "chosen_spec.json"),
                threads=doc.get("threads"),
            )
        except TypeError as exc:
            raise UsageError(f"bad run config: {exc}") from exc
        if set(cfg.factors) - set(FACTOR_NAMES):
            raise UsageError(f"unknown start factors: {sorted(set(cfg.factors) - set(FACTOR_NAMES))}")
        return cfg

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        if not os.path.exists(path):
            raise UsageError(f"run config {path!r} does not exist")
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise UsageError(f"run config {path!r} is not valid JSON: {exc}") from exc
        return cls.from_dict(doc, os.path.dirname(os.path.abspath(path)))


def _dataset_from_dict(doc: dict) -> SyntheticDatasetSpec:
    doc = dict(doc)
    for key in ("speeds", "period_range"):
        if key in doc:
            doc[key] = tuple(doc[key])
    return SyntheticDatasetSpec(**doc)


# ---------------------------------------------------------------- helpers


def _threads(args) -> Optional[int]:
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get("X3D_FORGE_THREADS")
    return int(env) if env else None


def _arch_config(args) -> ArchConfig:
    return ArchConfig(
        use_channelwise=not args.no_channelwise,
        use_se=not args.no_se,
        use_swish=not args.relu,
    )


def _factors_and_resolution(args):
    if args.preset and args.factors:
        raise UsageError("--preset and --factors are mutually exclusive")
    if args.preset:
        try:
            preset = get_preset(args.preset)
        except KeyError as exc:
            raise UsageError(str(exc.args[0])) from None
        return preset.factors, args.resolution or preset.resolution
    if args.factors is not None:
        return ExpansionFactors(**parse_factors(args.factors)), args.resolution
    raise UsageError("need --preset or --factors")


def _spec_from_args(args) -> ArchSpec:
    if getattr(args, "spec", None):
        if args.preset or args.factors:
            raise UsageError("--spec cannot be combined with --preset or --factors")
        try:
            return persist.read_spec(args.spec)
        except OSError as exc:
            raise UsageError(f"cannot read spec {args.spec!r}: {exc}") from exc
    factors, resolution = _factors_and_resolution(args)
    return instantiate(factors, _arch_config(args), resolution=resolution)


def _write(text: str, path: Optional[str]) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _summary(spec: ArchSpec) -> str:
    g = spec.input
    lines = [
        f"input     {g.frames}x{g.resolution}^2, stride {g.stride}",
        f"conv1     width {spec.conv1.width}",
    ]
    for s in spec.stages:
        lines.append(
            f"{s.name:<9} width {s.out_width:<5} bottleneck {s.bottleneck_width:<5} blocks {s.block_count}"
        )
    h = spec.head
    lines.append(f"conv5     width {h.conv5_width}")
    lines.append(f"fc1       width {h.fc1_width}  classes {h.classes}")
    return "\n".join(lines) + "\n"


def _fmt_count(n: float) -> str:
    for unit, scale in (("G", 1e9), ("M", 1e6), ("K", 1e3)):
        if abs(n) >= scale:
            return f"{n / scale:.2f}{unit}"
    return str(int(n))


# ---------------------------------------------------------------- commands


def cmd_instantiate(args) -> int:
    spec = _spec_from_args(args)
    problems = validate(spec)
    if problems:
        raise ArchError("; ".join(problems))
    sys.stdout.write(_summary(spec))
    if args.output:
        persist.write_spec(spec, args.output)
    return EXIT_OK


def cmd_cost(args) -> int:
    spec = _spec_from_args(args)
    rep = report(spec)
    inf = inference_cost(spec, InferenceStrategy(args.strategy), args.clips)
    if args.format == "csv":
        _write(persist.report_csv(spec), args.output)
    elif args.format == "json":
        doc = persist.report_to_dict(rep)
        doc["inference"] = dict(
            strategy=args.strategy, clips=args.clips, crop=inf.crop,
            views=inf.views, per_view_flops=inf.per_view_flops, total=inf.total,
        )
        _write(json.dumps(doc, indent=2) + "\n", args.output)
    else:
        lines = [f"{'scope':<10}{'flops':>14}{'params':>12}"]
        for scope, acc in rep.per_stage.items():
            lines.append(f"{scope:<10}{_fmt_count(acc['flops']):>14}{_fmt_count(acc['params']):>12}")
        lines.append(f"{'total':<10}{_fmt_count(rep.flops_madds):>14}{_fmt_count(rep.params):>12}")
        lines.append(
            f"inference {args.strategy} x{args.clips}: {inf.views} views of "
            f"{_fmt_count(inf.per_view_flops)} at crop {inf.crop} = {_fmt_count(inf.total)}"
        )
        _write("\n".join(lines) + "\n", args.output)
    return EXIT_OK


def _run_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.preset or args.factors:
        cfg.preset, cfg.factors = None, {}
        if args.preset:
            cfg.preset = args.preset
        else:
            cfg.factors = parse_factors(args.factors)
    if cfg.preset is None and not cfg.factors:
        cfg.preset = "X2D"
    if args.target_gflops is not None or args.regime is not None:
        cfg.target_gflops, cfg.regime = args.target_gflops, args.regime
    changes = {}
    if args.max_steps is not None:
        changes["max_steps"] = args.max_steps
    if args.c_hat is not None:
        changes["c_hat"] = args.c_hat
    if args.axes:
        changes["enabled_axes"] = tuple(a.strip() for a in args.axes.split(","))
    if changes:
        cfg.settings = replace(cfg.settings, **changes)
    crit = {}
    if args.criterion:
        crit["variant"] = args.criterion
    if args.seed is not None:
        crit["seed"] = args.seed
    if args.table:
        crit["table_path"] = args.table
    threads = _threads(args) or cfg.threads
    if threads:
        crit["threads"] = threads
    if crit:
        cfg.criterion = replace(cfg.criterion, **crit)
    if args.trajectory:
        cfg.trajectory_path = args.trajectory
    if args.spec_out:
        cfg.spec_path = args.spec_out
    cfg.check()
    return cfg


def cmd_expand(args) -> int:
    cfg = _run_config(args)
    start = cfg.start()
    costfn = flops_cost(cfg.arch)
    traj = forward_expand(
        start, cfg.target_cost, make_criterion(cfg.criterion), costfn, cfg.settings,
        paramfn=default_paramfn(cfg.arch),
    )
    if cfg.regime is not None:
        chosen = select_instance(traj, cfg.regime, costfn)
    else:
        chosen = traj.steps[-1].factors_after
    persist.write_trajectory(traj, cfg.trajectory_path)
    spec = instantiate(chosen, cfg.arch)
    persist.write_spec(spec, cfg.spec_path)
    cost = costfn(chosen)
    sys.stdout.write(
        f"{len(traj.steps)} steps: {' '.join(s.axis.value for s in traj.steps)}\n"
        f"chosen {_fmt_count(cost)} FLOPs, factors "
        + ", ".join(f"{n}={v:.6g}" for n, v in zip(FACTOR_NAMES, chosen.as_tuple()))
        + "\n"
    )
    return EXIT_OK


def cmd_contract(args) -> int:
    if (args.target_gflops is None) == (args.regime is None):
        raise UsageError("give exactly one of --target-gflops or --regime")
    traj = _read_trajectory(args.trajectory)
    config = _arch_config(args)
    costfn = flops_cost(config)
    if args.regime is not None:
        chosen = select_instance(traj, args.regime, costfn)
    else:
        chosen = backward_contract(traj, int(round(args.target_gflops * 1e9)), costfn)
    spec = instantiate(chosen, config)
    sys.stdout.write(
        f"{_fmt_count(costfn(chosen))} FLOPs, factors "
        + ", ".join(f"{n}={v:.6g}" for n, v in zip(FACTOR_NAMES, chosen.as_tuple()))
        + "\n"
    )
    if args.output:
        persist.write_spec(spec, args.output)
    return EXIT_OK


def cmd_eval(args) -> int:
    factors, _ = _factors_and_resolution(args)
    crit = CriterionSpec(
        variant=args.criterion or "analytic",
        seed=args.seed or 0,
        table_path=args.table,
        threads=_threads(args),
    )
    if crit.table_path and not os.path.exists(crit.table_path):
        raise UsageError(f"replay table {crit.table_path!r} does not exist")
    criterion = make_criterion(crit)
    sys.stdout.write(f"{criterion.criterion_id}\t{criterion(factors)!r}\n")
    return EXIT_OK


def _read_trajectory(path):
    if not os.path.exists(path):
        raise UsageError(f"trajectory {path!r} does not exist")
    return persist.read_trajectory(path)


def cmd_curve(args) -> int:
    traj = _read_trajectory(args.trajectory)
    _write(persist.curve_csv(traj), args.output)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _add_arch_source(p, allow_spec=False):
    p.add_argument("--preset", help=f"one of {', '.join(PRESETS)}")
    p.add_argument("--factors", help="comma-separated name=value, e.g. gamma_b=2.25,gamma_d=2.2")
    p.add_argument("--resolution", type=int, help="override the input resolution")
    if allow_spec:
        p.add_argument("--spec", help="read an ArchSpec document instead")
    _add_arch_flags(p)


def _add_arch_flags(p):
    p.add_argument("--no-channelwise", action="store_true", help="dense 3x3^2 bottleneck conv")
    p.add_argument("--no-se", action="store_true", help="drop squeeze-excitation blocks")
    p.add_argument("--relu", action="store_true", help="ReLU in place of swish")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="x3d-forge", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("instantiate", help="build an ArchSpec from a preset or factors")
    _add_arch_source(p)
    p.add_argument("-o", "--output", help="write the spec document here")
    p.set_defaults(func=cmd_instantiate)

    p = sub.add_parser("cost", help="FLOPs and parameter report")
    _add_arch_source(p, allow_spec=True)
    p.add_argument("--strategy", choices=[s.value for s in InferenceStrategy], default="center")
    p.add_argument("--clips", type=int, default=1)
    p.add_argument("--format", choices=("table", "csv", "json"), default="table")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("expand", help="progressive forward expansion")
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--preset")
    p.add_argument("--factors")
    p.add_argument("--target-gflops", type=float)
    p.add_argument("--regime", choices=[r.name for r in Regime])
    p.add_argument("--max-steps", type=int)
    p.add_argument("--c-hat", type=float)
    p.add_argument("--axes", help="comma-separated enabled axes")
    p.add_argument("--criterion", choices=("analytic", "replay", "random_feature"))
    p.add_argument("--seed", type=int)
    p.add_argument("--table", help="replay table CSV")
    p.add_argument("--threads", type=int)
    p.add_argument("--trajectory", help="trajectory CSV output path")
    p.add_argument("--spec-out", help="chosen ArchSpec output path")
    p.set_defaults(func=cmd_expand)

    p = sub.add_parser("contract", help="contract a saved trajectory onto a budget")
    p.add_argument("trajectory")
    p.add_argument("--target-gflops", type=float)
    p.add_argument("--regime", choices=[r.name for r in Regime])
    _add_arch_flags(p)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_contract)

    p = sub.add_parser("eval", help="score factors with a criterion")
    p.add_argument("--preset")
    p.add_argument("--factors")
    p.add_argument("--resolution", type=int)
    p.add_argument("--criterion", choices=("analytic", "replay", "random_feature"))
    p.add_argument("--seed", type=int)
    p.add_argument("--table")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("curve", help="plot-ready trade-off data from a trajectory")
    p.add_argument("trajectory")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_curve)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"x3d-forge: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ExpansionError, ArchError, CriterionError, persist.FormatError, ValueError) as exc:
        print(f"x3d-forge: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
