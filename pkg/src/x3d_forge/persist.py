"""File formats: JSON documents for specs and reports, CSV for trajectories."""

from __future__ import annotations

import csv
import io
import json
import math
from collections import OrderedDict
from typing import Dict, List, Optional, Sequence

from .arch import (
    FACTOR_NAMES,
    ArchFlags,
    ArchSpec,
    Axis,
    BlockSpec,
    Conv1Spec,
    ExpansionFactors,
    HeadSpec,
    InputGeometry,
    StageSpec,
    resolve_input_geometry,
)
from .cost import ComplexityReport, ShapeEntry, _convention, layer_costs
from .expansion import Candidate, ExpansionSettings, ExpansionStep, Trajectory

SPEC_FORMAT = "x3d-forge/archspec"
REPORT_FORMAT = "x3d-forge/report"
TRAJECTORY_FORMAT = "x3d-forge/trajectory"
FORMAT_VERSION = 1

AXES = tuple(a.value for a in Axis)
TRAJECTORY_COLUMNS = (
    ("step", "axis", "knob")
    + FACTOR_NAMES
    + ("frames", "stride", "resolution", "flops", "params", "score", "candidate")
    + tuple(f"cum_{a}" for a in AXES)
    + ("error",)
)
REPORT_COLUMNS = ("scope", "category", "flops", "params")
CURVE_COLUMNS = ("kind", "step", "axis", "knob", "flops", "params", "score") + FACTOR_NAMES


class FormatError(ValueError):
    pass


def _dumps(doc) -> str:
    return json.dumps(doc, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def _loads(text: str, kind: str):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"not a valid {kind} document: {exc}") from exc
    if not isinstance(doc, dict):
        raise FormatError(f"{kind} document must be an object")
    return doc


def _pick(doc, key, kind):
    try:
        return doc[key]
    except (KeyError, TypeError):
        raise FormatError(f"{kind}: missing field {key!r}") from None


# ---------------------------------------------------------------- factors


def factors_to_dict(f: ExpansionFactors) -> dict:
    doc = {name: value for name, value in zip(FACTOR_NAMES, f.as_tuple())}
    doc["cumulative"] = {a: f.cumulative[a] for a in AXES}
    return doc


def factors_from_dict(doc: dict) -> ExpansionFactors:
    unknown = set(doc) - set(FACTOR_NAMES) - {"cumulative"}
    if unknown:
        raise FormatError(f"unknown factor fields: {sorted(unknown)}")
    values = {k: float(doc[k]) for k in FACTOR_NAMES if k in doc}
    cum = {k: float(v) for k, v in dict(doc.get("cumulative") or {}).items()}
    return ExpansionFactors(**values, cumulative=cum)


# ---------------------------------------------------------------- ArchSpec


def spec_to_dict(spec: ArchSpec) -> dict:
    c1 = spec.conv1
    return OrderedDict(
        format=SPEC_FORMAT,
        version=FORMAT_VERSION,
        input=dict(frames=spec.input.frames, stride=spec.input.stride, resolution=spec.input.resolution),
        conv1=dict(
            width=c1.width,
            in_channels=c1.in_channels,
            spatial_kernel=c1.spatial_kernel,
            spatial_stride=c1.spatial_stride,
            temporal_kernel=c1.temporal_kernel,
        ),
        stages=[
            dict(
                name=s.name,
                blocks=s.block_count,
                out_width=s.out_width,
                bottleneck_width=s.bottleneck_width,
                first_block_spatial_stride=s.first_block_spatial_stride,
                units=[
                    dict(
                        in_width=b.in_width,
                        bottleneck_width=b.bottleneck_width,
                        out_width=b.out_width,
                        spatial_stride=b.spatial_stride,
                        temporal_stride=b.temporal_stride,
                        has_se=b.has_se,
                        se_width=b.se_width,
                        has_projection_shortcut=b.has_projection_shortcut,
                    )
                    for b in s.blocks
                ],
            )
            for s in spec.stages
        ],
        head=dict(conv5_width=spec.head.conv5_width, fc1_width=spec.head.fc1_width, classes=spec.head.classes),
        flags=dict(
            channelwise=spec.flags.channelwise,
            se=spec.flags.se,
            se_every=spec.flags.se_every,
            se_ratio=spec.flags.se_ratio,
            swish=spec.flags.swish,
        ),
        factors=None if spec.factors is None else factors_to_dict(spec.factors),
    )


def spec_from_dict(doc: dict) -> ArchSpec:
    kind = "spec"
    if doc.get("format") != SPEC_FORMAT:
        raise FormatError(f"expected format {SPEC_FORMAT!r}, got {doc.get('format')!r}")
    try:
        stages = []
        for s in _pick(doc, "stages", kind):
            blocks = tuple(BlockSpec(**u) for u in _pick(s, "units", kind))
            stages.append(
                StageSpec(
                    name=s["name"],
                    block_count=s["blocks"],
                    out_width=s["out_width"],
                    bottleneck_width=s["bottleneck_width"],
                    blocks=blocks,
                    first_block_spatial_stride=s.get("first_block_spatial_stride", 2),
                )
            )
        factors = doc.get("factors")
        return ArchSpec(
            input=InputGeometry(**_pick(doc, "input", kind)),
            conv1=Conv1Spec(**_pick(doc, "conv1", kind)),
            stages=tuple(stages),
            head=HeadSpec(**_pick(doc, "head", kind)),
            flags=ArchFlags(**_pick(doc, "flags", kind)),
            factors=None if factors is None else factors_from_dict(factors),
        )
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed spec document: {exc}") from exc


def dumps_spec(spec: ArchSpec) -> str:
    return _dumps(spec_to_dict(spec))


def loads_spec(text: str) -> ArchSpec:
    return spec_from_dict(_loads(text, "spec"))


def write_spec(spec: ArchSpec, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_spec(spec))


def read_spec(path) -> ArchSpec:
    with open(path, encoding="utf-8") as fh:
        return loads_spec(fh.read())


# ---------------------------------------------------------------- reports


def report_to_dict(rep: ComplexityReport) -> dict:
    return OrderedDict(
        format=REPORT_FORMAT,
        version=FORMAT_VERSION,
        flops_madds=rep.flops_madds,
        params=rep.params,
        per_stage=rep.per_stage,
        per_category=rep.per_category,
        shapes=[
            dict(layer_id=s.layer_id, out_T=s.out_T, out_H=s.out_H, out_W=s.out_W, out_C=s.out_C)
            for s in rep.shapes
        ],
    )


def report_from_dict(doc: dict) -> ComplexityReport:
    if doc.get("format") != REPORT_FORMAT:
        raise FormatError(f"expected format {REPORT_FORMAT!r}, got {doc.get('format')!r}")
    try:
        return ComplexityReport(
            flops_madds=int(doc["flops_madds"]),
            params=int(doc["params"]),
            per_stage={k: dict(v) for k, v in doc["per_stage"].items()},
            per_category={k: dict(v) for k, v in doc["per_category"].items()},
            shapes=[ShapeEntry(**s) for s in doc["shapes"]],
        )
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed report document: {exc}") from exc


def dumps_report(rep: ComplexityReport) -> str:
    return _dumps(report_to_dict(rep))


def loads_report(text: str) -> ComplexityReport:
    return report_from_dict(_loads(text, "report"))


def report_rows(spec: ArchSpec, convention=None) -> List[tuple]:
    """(scope, category, flops, params) aggregated per scope and category, then a total row."""
    conv = _convention(spec, convention)
    rows: Dict[tuple, List[int]] = OrderedDict()
    for layer in layer_costs(spec):
        acc = rows.setdefault((layer.scope, layer.category), [0, 0])
        acc[0] += layer.flops if layer.category in conv.flop_categories else 0
        acc[1] += layer.params if layer.category in conv.param_categories else 0
    out = [(scope, cat, f, p) for (scope, cat), (f, p) in rows.items()]
    out.append(("total", "all", sum(r[2] for r in out), sum(r[3] for r in out)))
    return out


def report_csv(spec: ArchSpec, convention=None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    writer.writerows(report_rows(spec, convention))
    return buf.getvalue()


# ---------------------------------------------------------------- trajectories


def _num(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(x)
    return str(x)


def _settings_to_dict(s: ExpansionSettings) -> dict:
    return dict(
        c_hat=s.c_hat,
        epsilon=s.epsilon,
        enabled_axes=[a.value for a in s.enabled_axes],
        tie_break=[a.value for a in s.tie_break],
        max_steps=s.max_steps,
        knob_max=s.knob_max,
        workers=s.workers,
    )


def _factor_cells(f: Optional[ExpansionFactors]) -> list:
    if f is None:
        return [""] * (len(FACTOR_NAMES) + 3)
    geo = resolve_input_geometry(f)
    return [_num(v) for v in f.as_tuple()] + [geo.frames, geo.stride, geo.resolution]


def _cum_cells(f: Optional[ExpansionFactors]) -> list:
    return [""] * len(AXES) if f is None else [_num(f.cumulative[a]) for a in AXES]


def dumps_trajectory(traj: Trajectory) -> str:
    """CSV with ``#`` metadata lines, a step-0 start row, one row per kept
    step (candidate=0) and one row per unchosen candidate (candidate=1)."""
    buf = io.StringIO()
    buf.write(f"# format: {TRAJECTORY_FORMAT} {FORMAT_VERSION}\n")
    buf.write(f"# criterion: {json.dumps(traj.criterion_id)}\n")
    buf.write(f"# settings: {json.dumps(_settings_to_dict(traj.settings), sort_keys=True)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRAJECTORY_COLUMNS)
    s = traj.start
    writer.writerow(
        [0, "", ""] + _factor_cells(s)
        + [traj.start_cost, traj.start_params, _num(traj.start_score), 0] + _cum_cells(s) + [""]
    )
    for i, step in enumerate(traj.steps, 1):
        f = step.factors_after
        writer.writerow(
            [i, step.axis.value, _num(step.knob)] + _factor_cells(f)
            + [step.cost_flops, step.params, _num(step.score), 0] + _cum_cells(f) + [""]
        )
        for axis in traj.settings.tie_break:
            c = step.candidates.get(axis)
            if c is None or axis == step.axis:
                continue
            writer.writerow(
                [i, axis.value, _num(c.knob)] + _factor_cells(c.factors)
                + [_num(c.cost), _num(c.params), _num(c.score), 1] + _cum_cells(c.factors)
                + [c.error or ""]
            )
    return buf.getvalue()


def _parse_rows(text: str):
    meta: Dict[str, str] = {}
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            meta[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)
    if not body:
        raise FormatError("trajectory file has no rows")
    reader = csv.DictReader(body)
    missing = set(TRAJECTORY_COLUMNS) - set(reader.fieldnames or ())
    if missing:
        raise FormatError(f"trajectory file is missing columns {sorted(missing)}")
    rows = list(reader)
    if not rows:
        raise FormatError("trajectory file has a header but no rows")
    return meta, rows


def _opt_float(cell: str) -> Optional[float]:
    return None if cell == "" else float(cell)


def _opt_int(cell: str) -> Optional[int]:
    return None if cell == "" else int(cell)


def _row_factors(row) -> Optional[ExpansionFactors]:
    if row["gamma_tau"] == "":
        return None
    return ExpansionFactors(
        **{k: float(row[k]) for k in FACTOR_NAMES},
        cumulative={a: float(row[f"cum_{a}"]) for a in AXES},
    )


def loads_trajectory(text: str) -> Trajectory:
    meta, rows = _parse_rows(text)
    try:
        settings_doc = json.loads(meta.get("settings", "{}"))
        settings = ExpansionSettings(**settings_doc)
        criterion_id = json.loads(meta.get("criterion", '""'))
        start_row = rows[0]
        if int(start_row["step"]) != 0 or int(start_row["candidate"]) != 0:
            raise FormatError("first trajectory row must be the step-0 start row")
        traj = Trajectory(
            start=_row_factors(start_row),
            start_cost=int(start_row["flops"]),
            start_params=int(start_row["params"]),
            start_score=float(start_row["score"]),
            settings=settings,
            criterion_id=criterion_id,
        )
        chosen: Dict[int, dict] = OrderedDict()
        others: Dict[int, List[dict]] = {}
        for row in rows[1:]:
            step = int(row["step"])
            if int(row["candidate"]):
                others.setdefault(step, []).append(row)
            else:
                if step in chosen or step != len(chosen) + 1:
                    raise FormatError(f"kept-step rows out of order at step {step}")
                chosen[step] = row
        if set(others) - set(chosen):
            raise FormatError("candidate rows refer to a step with no kept row")
        for step, row in chosen.items():
            f = _row_factors(row)
            kept = ExpansionStep(
                axis=Axis(row["axis"]),
                knob=float(row["knob"]),
                factors_after=f,
                cost_flops=int(row["flops"]),
                params=int(row["params"]),
                score=float(row["score"]),
            )
            by_axis = {kept.axis: Candidate(kept.axis, kept.knob, f, kept.cost_flops, kept.params, kept.score)}
            for c in others.get(step, []):
                knob = _opt_float(c["knob"])
                by_axis[Axis(c["axis"])] = Candidate(
                    Axis(c["axis"]),
                    math.nan if knob is None else knob,
                    _row_factors(c),
                    _opt_int(c["flops"]),
                    _opt_int(c["params"]),
                    _opt_float(c["score"]),
                    c["error"] or None,
                )
            kept.candidates.update((a, by_axis[a]) for a in settings.tie_break if a in by_axis)
            traj.steps.append(kept)
    except (KeyError, ValueError, TypeError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"malformed trajectory: {exc}") from exc
    return traj


def write_trajectory(traj: Trajectory, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(dumps_trajectory(traj))


def read_trajectory(path) -> Trajectory:
    with open(path, encoding="utf-8") as fh:
        return loads_trajectory(fh.read())


# ---------------------------------------------------------------- curve


def curve_rows(traj: Trajectory) -> List[tuple]:
    """Plot-ready rows: one "chosen" row per kept step, then every successful
    candidate of every step (the kept one included) as a "candidate" row."""
    if not traj.steps:
        raise FormatError("trajectory has no expansion steps")
    rows = []
    for i, step in enumerate(traj.steps, 1):
        rows.append(
            ("chosen", i, step.axis.value, _num(step.knob), step.cost_flops, step.params, _num(step.score))
            + tuple(_num(v) for v in step.factors_after.as_tuple())
        )
    for i, step in enumerate(traj.steps, 1):
        for axis, c in step.candidates.items():
            if not c.ok:
                continue
            rows.append(
                ("candidate", i, axis.value, _num(c.knob), c.cost, c.params, _num(c.score))
                + tuple(_num(v) for v in c.factors.as_tuple())
            )
    return rows


def curve_csv(traj: Trajectory) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CURVE_COLUMNS)
    writer.writerows(curve_rows(traj))
    return buf.getvalue()


def trajectories_equal(a: Trajectory, b: Trajectory) -> bool:
    """Field-wise equality where a missing knob (NaN) equals another missing knob."""
    return dumps_trajectory(a) == dumps_trajectory(b) and _fields(a) == _fields(b)


def _fields(t: Trajectory):
    def cand(c: Candidate):
        return (c.axis, None if math.isnan(c.knob) else c.knob, c.factors, c.cost, c.params, c.score, c.error)

    return (
        t.start, t.start_cost, t.start_params, t.start_score, t.settings, t.criterion_id,
        [(s.axis, s.knob, s.factors_after, s.cost_flops, s.params, s.score,
          [(k, cand(v)) for k, v in s.candidates.items()]) for s in t.steps],
    )
