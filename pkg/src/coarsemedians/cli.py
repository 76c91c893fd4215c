"""Batch front end over the toolkit: JSON artifacts in, deterministic reports out.

Every subcommand loads its inputs, runs one pipeline stage, and emits a
RunReport (command, input digests, named constants, witnesses, assertions) as
canonical JSON.  Exit status: 0 when every assertion passed, 1 when any
failed (the report is still emitted), 2 on input, format, or budget errors
with a diagnostic naming the offending field.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .budget import DEFAULT_BUDGET, Budget
from .errors import ToolkitError
from .metric import (
    ControlledMap,
    FiniteMetricSpace,
    format_extended,
    is_infinite,
    parse_extended,
    space_from_json,
)
from .median import (
    cmp_defect,
    five_point_defect,
    interval_lemma_check,
    median_certificate,
    median_from_json,
    tripod_defect,
)
from .rips import filtration_distortion, rips_graph, rips_to_base
from .diagram import (
    assemble_median_cone,
    diagram_from_json,
    median_diagram_from_json,
    median_diagram_to_json,
    rips_tuple_apex,
    tuple_space,
    tuple_stabilization,
)
from . import hhs

_COMMANDS = {}


# ---------------------------------------------------------------------------
# report plumbing


@dataclass
class RunReport:
    """Deterministic record of one invocation."""

    command: str
    inputs: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    witnesses: dict = field(default_factory=dict)
    assertions: list = field(default_factory=list)

    def add_file(self, name: str, path: str, data: bytes):
        self.inputs[name] = "sha256:" + hashlib.sha256(data).hexdigest()

    def add_literal(self, name: str, value):
        self.inputs[name] = str(value)

    def constant(self, name: str, value):
        self.constants[name] = format_extended(value)

    def witness(self, name: str, labels):
        self.witnesses[name] = labels

    def assertion(self, name: str, bound, value, passed: bool):
        self.assertions.append({
            "name": name,
            "bound": format_extended(bound),
            "value": format_extended(value),
            "pass": bool(passed),
        })

    def add_check(self, check):
        self.assertion(check.name, check.bound, check.value, check.passed)

    @property
    def exit_code(self) -> int:
        return 0 if all(a["pass"] for a in self.assertions) else 1

    def render(self) -> str:
        payload = {
            "command": self.command,
            "inputs": self.inputs,
            "constants": self.constants,
            "witnesses": self.witnesses,
            "assertions": self.assertions,
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def _load_json(report: RunReport, name: str, path: str):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ToolkitError(f"{name}: cannot read {path} ({exc.strerror})") from exc
    report.add_file(name, path, data)
    try:
        return json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ToolkitError(f"{name}: malformed JSON in {path} ({exc})") from exc


def _rational(report: RunReport, name: str, text: str):
    report.add_literal(name, text)
    try:
        value = parse_extended(text)
    except ToolkitError as exc:
        raise ToolkitError(f"{name}: {exc}") from exc
    if is_infinite(value):
        raise ToolkitError(f"{name}: must be finite")
    return value


def _rational_list(report: RunReport, name: str, text: str):
    report.add_literal(name, text)
    try:
        return [parse_extended(part) for part in text.split(",") if part]
    except ToolkitError as exc:
        raise ToolkitError(f"{name}: {exc}") from exc


def _labels(space: FiniteMetricSpace, indices):
    out = []
    for i in indices:
        label = space.points[int(i)]
        out.append(list(label) if isinstance(label, tuple) else label)
    return out


def _median_spec(report: RunReport, name: str, spec: str,
                 space: FiniteMetricSpace, budget: Budget):
    if spec in ("graph-median", "one-median"):
        report.add_literal(name, spec)
        return median_from_json(space, {"kind": spec}, budget)
    if spec == "delta-centre":
        report.add_literal(name, spec)
        return hhs.delta_centre_median(space, budget)
    return median_from_json(space, _load_json(report, name, spec), budget)


def _command(name):
    def register(fn):
        _COMMANDS[name] = fn
        return fn
    return register


# ---------------------------------------------------------------------------
# subcommands


@_command("check-median")
def _run_check_median(args, report: RunReport, budget: Budget):
    space = space_from_json(_load_json(report, "space", args.space))
    op = _median_spec(report, "median", args.median, space, budget)
    cert = median_certificate(op, budget)
    report.constant("C", cert.constant)
    report.constant("C_sym", cert.symmetry)
    report.constant("C_loc", cert.localisation)
    report.constant("C_4pt", cert.fourpoint)
    report.constant("rho_exact", Fraction(1 if cert.rho_exact else 0))
    perm, x, y, z = cert.symmetry_witness
    report.witness("symmetry", _labels(space, (x, y, z)))
    report.witness("localisation", _labels(space, cert.localisation_witness))
    report.witness("fourpoint", _labels(space, cert.fourpoint_witness))
    ok = cert.verify_witnesses()
    report.assertion("witnesses replay to their defects",
                     Fraction(0), Fraction(0 if ok else 1), ok)
    if args.expect_c is not None:
        bound = _rational(report, "expect-c", args.expect_c)
        report.assertion("certificate constant <= expected", bound,
                         cert.constant, cert.constant <= bound)


@_command("cmp")
def _run_cmp(args, report: RunReport, budget: Budget):
    dom = space_from_json(_load_json(report, "dom", args.dom))
    cod = space_from_json(_load_json(report, "cod", args.cod))
    raw = _load_json(report, "map", args.map)
    table = raw["table"] if isinstance(raw, dict) else raw
    f = ControlledMap(dom, cod, table, name="map")
    op_dom = _median_spec(report, "dom-median", args.dom_median, dom, budget)
    op_cod = _median_spec(report, "cod-median", args.cod_median, cod, budget)
    value, witness = cmp_defect(f, op_dom, op_cod, budget)
    report.constant("cmp_defect", value)
    if witness is not None:
        report.witness("cmp", _labels(dom, witness))
    if args.expect is not None:
        bound = _rational(report, "expect", args.expect)
        report.assertion("cmp defect <= expected", bound, value,
                         not is_infinite(value) and value <= bound)


@_command("rips")
def _run_rips(args, report: RunReport, budget: Budget):
    space = space_from_json(_load_json(report, "space", args.space))
    scale = _rational(report, "scale", args.scale)
    rg = rips_graph(space, scale)
    finite = [v for v in rg.metric.distance_values() if not is_infinite(v)]
    report.constant("diameter", max(finite) if finite else Fraction(0))
    report.constant("components", Fraction(len(rg.metric.components())))
    xi = rips_to_base(rg)
    worst = Fraction(0)
    for t, bound in xi.control.samples:
        if is_infinite(bound):
            worst = bound
            break
        worst = max(worst, bound - scale * t)
    report.assertion("identity control bounded by scale * steps",
                     Fraction(0), worst, not is_infinite(worst) and worst <= 0)
    if args.scales is not None:
        scales = _rational_list(report, "scales", args.scales)
        table = filtration_distortion(space, scales)
        for (s, t), ratio in sorted(table.ratio.items()):
            key = f"A({format_extended(s)},{format_extended(t)})"
            if table.infinite_pairs[(s, t)]:
                report.constants[key] = "inf"
            else:
                report.constant(key, ratio)
        suggested = table.suggested_scale()
        if suggested is not None:
            report.constant("suggested_scale", suggested)


@_command("intervals")
def _run_intervals(args, report: RunReport, budget: Budget):
    space = space_from_json(_load_json(report, "space", args.space))
    op = _median_spec(report, "median", args.median, space, budget)
    cert = median_certificate(op, budget)
    radii = (0, 1, 2)
    if args.radii is not None:
        radii = tuple(_rational_list(report, "radii", args.radii))
    result = interval_lemma_check(op, cert, radii=radii, budget=budget)
    report.constant("C", cert.constant)
    report.constant("chained_level", result.chained_level)
    report.constant("empirical_chained_level", result.empirical_chained_level)
    for check in result.checks:
        report.assertion(check.name, check.bound, check.value, check.passed)
        if not check.passed and check.witness is not None:
            report.witness(check.name, _labels(space, check.witness))


@_command("five-point")
def _run_five_point(args, report: RunReport, budget: Budget):
    space = space_from_json(_load_json(report, "space", args.space))
    op = _median_spec(report, "median", args.median, space, budget)
    result = five_point_defect(op, budget)
    report.constant("five_point", result.value)
    report.constant("exact", Fraction(1 if result.exact else 0))
    if result.witness is not None:
        report.witness("five_point", _labels(space, result.witness))
    if args.expect is not None:
        bound = _rational(report, "expect", args.expect)
        report.assertion("five-point defect <= expected", bound, result.value,
                         result.value <= bound)


@_command("tripod")
def _run_tripod(args, report: RunReport, budget: Budget):
    space = space_from_json(_load_json(report, "space", args.space))
    op = _median_spec(report, "median", args.median, space, budget)
    level = _rational(report, "level", args.level)
    result = tripod_defect(op, level, budget)
    report.constant("tripod", result.value)
    report.constant("vacuous", Fraction(1 if result.vacuous else 0))
    if result.witness is not None:
        report.witness("tripod", _labels(space, result.witness))
    if args.expect is not None:
        bound = _rational(report, "expect", args.expect)
        report.assertion("tripod defect <= expected", bound, result.value,
                         result.value <= bound)


@_command("tuplespace")
def _run_tuplespace(args, report: RunReport, budget: Budget):
    diagram = diagram_from_json(_load_json(report, "diagram", args.diagram),
                                base_dir=Path(args.diagram).parent)
    kappa = _rational(report, "kappa", args.kappa)
    ts = tuple_space(diagram, kappa, budget)
    report.constant("members", Fraction(ts.count))
    if not ts.empty:
        report.constant("projection_defect", ts.projection_defect)
        report.assertion("projection defect <= kappa", kappa,
                         ts.projection_defect, ts.projection_defect <= kappa)
        if ts.count <= 128:
            report.witness("members",
                           [[_label_of(space, idx) for space, idx in
                             zip(diagram.spaces, member)] for member in ts.members])


def _label_of(space: FiniteMetricSpace, idx: int):
    label = space.points[int(idx)]
    return list(label) if isinstance(label, tuple) else label


@_command("stabilize")
def _run_stabilize(args, report: RunReport, budget: Budget):
    diagram = diagram_from_json(_load_json(report, "diagram", args.diagram),
                                base_dir=Path(args.diagram).parent)
    grid = _rational_list(report, "grid", args.grid)
    table = tuple_stabilization(diagram, grid, budget)
    empty = 0
    for kappa, count in zip(table.grid, table.counts):
        report.constant(f"count@{format_extended(kappa)}", Fraction(count))
        if count == 0:
            empty += 1
    for row in table.rows:
        key = (f"excess@{format_extended(row.kappa)}"
               f"->{format_extended(row.kappa_prime)}")
        if row.defined:
            report.constant(key, row.excess)
        else:
            report.constants[key] = "empty"
    report.assertion("every grid level nonempty", Fraction(0), Fraction(empty),
                     empty == 0)


@_command("recipe")
def _run_recipe(args, report: RunReport, budget: Budget):
    diagram = diagram_from_json(_load_json(report, "diagram", args.diagram),
                                base_dir=Path(args.diagram).parent)
    kappa = _rational(report, "kappa", args.kappa)
    sigma = _rational(report, "sigma", args.sigma)
    apex = rips_tuple_apex(diagram, kappa, sigma, budget)
    report.constant("tuples", Fraction(apex.tuple_space.count))
    report.constant("cone_defect", apex.cone.defect)
    report.constant("connected", Fraction(1 if apex.rips.connected else 0))
    report.assertion("cone defect <= kappa", kappa, apex.cone.defect,
                     apex.cone.defect <= kappa)


@_command("hhs-build")
def _run_hhs_build(args, report: RunReport, budget: Budget):
    family = hhs.family_from_json(_load_json(report, "family", args.family),
                                  budget, base_dir=Path(args.family).parent)
    build = hhs.build_hhs_diagram(family, budget)
    report.constant("common_C", family.common_C)
    report.constant("kappa_default", family.kappa_default)
    report.constant("uniform_bound", build.uniform_bound)
    report.constant("cmp_defect", build.median.cmp_defect)
    report.constant("vertices", Fraction(len(build.median.underlying.shape.vertices)))
    for label, defect in zip(build.pair_labels, build.pair_defects):
        report.constant(f"pairwise@{label}", defect.value)
    for check in build.checks:
        report.add_check(check)
    if args.emit is not None:
        payload = median_diagram_to_json(build.median, budget)
        data = json.dumps(payload, sort_keys=True, indent=2) + "\n"
        Path(args.emit).write_text(data, encoding="utf-8")
        report.add_file("emit", args.emit, data.encode("utf-8"))


@_command("hhs-verify")
def _run_hhs_verify(args, report: RunReport, budget: Budget):
    family = hhs.family_from_json(_load_json(report, "family", args.family),
                                  budget, base_dir=Path(args.family).parent)
    radii = (0, 1, 2)
    if args.radii is not None:
        radii = tuple(_rational_list(report, "radii", args.radii))
    for label, space, cert in zip(family.indices, family.spaces,
                                  family.certificates):
        report.constant(f"delta@{label}", hhs.hyperbolicity(space, budget))
        report.constant(f"C@{label}", cert.constant)
    floor = family.common_C + family.rho_probe(family.common_C, budget)
    for data in family.constraints:
        u, v = data.direction
        tag = f"{u}|{v}"
        value, witness = hhs.bcii_defect(
            family.space_for(v), family.median_for(v), family.space_for(u),
            data.theta, data.basepoint, budget)
        report.constant(f"bcii@{tag}", value)
        report.witness(f"bcii@{tag}", _labels(family.space_for(v), witness))
        report.assertion(f"bcii defect <= B ({tag})", data.B, value,
                         value <= data.B)
        report.assertion(f"B >= C + rho(C) ({tag})", data.B, floor,
                         floor <= data.B)
        report.assertion(f"K >= B ({tag})", data.K, data.B, data.B <= data.K)
    build = hhs.build_hhs_diagram(family, budget)
    report.constant("uniform_bound", build.uniform_bound)
    report.constant("cmp_defect", build.median.cmp_defect)
    for check in build.checks:
        report.add_check(check)
    for label, R, defect in zip(build.pair_labels, build.pair_spaces,
                                build.pair_defects):
        if R.kind != "constrained":
            continue
        first, second = R.pair
        enlarged = hhs.enlargement_stability(
            R, family.median_for(first), family.median_for(second),
            radii=radii,
            certificates=(family.certificate_for(first),
                          family.certificate_for(second)),
            budget=budget)
        for row in enlarged.rows:
            report.add_check(row.check)


@_command("toy-gen")
def _run_toy_gen(args, report: RunReport, budget: Budget):
    report.add_literal("kind", args.kind)
    report.add_literal("count", args.count)
    report.add_literal("points", args.points)
    report.add_literal("seed", args.seed)
    family = hhs.toy_family(args.kind, count=args.count, points=args.points,
                            seed=args.seed, budget=budget)
    payload = hhs.family_to_json(family)
    data = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    Path(args.dest).write_text(data, encoding="utf-8")
    report.add_file("dest", args.dest, data.encode("utf-8"))
    report.constant("spaces", Fraction(len(family.indices)))
    report.constant("common_C", family.common_C)
    for item in family.constraints:
        tag = f"{item.direction[0]}|{item.direction[1]}"
        report.constant(f"B@{tag}", item.B)
        report.constant(f"K@{tag}", item.K)


@_command("assemble")
def _run_assemble(args, report: RunReport, budget: Budget):
    M = median_diagram_from_json(_load_json(report, "diagram", args.diagram),
                                 budget, base_dir=Path(args.diagram).parent)
    kappa = _rational(report, "kappa", args.kappa)
    sigma = _rational(report, "sigma", args.sigma)
    cone = assemble_median_cone(M, kappa, sigma, budget)
    report.constant("tuples", Fraction(cone.tuple_space.count))
    report.constant("closure", cone.closure.kappa_prime)
    report.constant("induced_radius", cone.induced_radius)
    report.constant("nu_C", cone.certificate.constant)
    vertices = M.underlying.shape.vertices
    for vertex, (value, witness) in zip(vertices, cone.leg_defects):
        report.constant(f"leg@{vertex}", value)
        if witness is not None:
            report.witness(f"leg@{vertex}",
                           [_label_of(cone.rips.metric, i) for i in witness])
    if cone.induced_witness is not None:
        report.witness("induced_radius",
                       [_label_of(cone.tuple_space.space, i)
                        for i in cone.induced_witness])
    for check in cone.closure.checks:
        report.add_check(check)
    for check in cone.checks:
        report.add_check(check)


# ---------------------------------------------------------------------------
# argument plumbing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coarsemedians",
        description="Exact reports over finite metric spaces, coarse medians, "
                    "tuple spaces and constraint diagrams.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, **flags):
        p = sub.add_parser(name)
        for flag, options in flags.items():
            p.add_argument(f"--{flag}", **options)
        p.add_argument("--budget", type=int, default=None,
                       help="override the enumeration caps")
        p.add_argument("--subsample", type=int, default=None, metavar="SEED",
                       help="seed for labeled lower-bound scans")
        p.add_argument("--out", default=None, help="write the report here")
        return p

    req = {"required": True}
    add("check-median", space=req, median={"default": "graph-median"},
        **{"expect-c": {"default": None, "dest": "expect_c"}})
    add("cmp", dom=req, cod=req, map=req,
        **{"dom-median": {"default": "graph-median", "dest": "dom_median"},
           "cod-median": {"default": "graph-median", "dest": "cod_median"},
           "expect": {"default": None}})
    add("rips", space=req, scale=req, scales={"default": None})
    add("intervals", space=req, median={"default": "graph-median"},
        radii={"default": None})
    add("five-point", space=req, median={"default": "graph-median"},
        expect={"default": None})
    add("tripod", space=req, median={"default": "graph-median"}, level=req,
        expect={"default": None})
    add("tuplespace", diagram=req, kappa=req)
    add("stabilize", diagram=req, grid=req)
    add("recipe", diagram=req, kappa=req, sigma=req)
    add("hhs-build", family=req, emit={"default": None})
    add("hhs-verify", family=req, radii={"default": None})
    add("toy-gen", kind=req, dest=req,
        count={"type": int, "default": 2}, points={"type": int, "default": 5},
        seed={"type": int, "default": 7})
    add("assemble", diagram=req, kappa=req, sigma=req)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    budget = DEFAULT_BUDGET
    if args.budget is not None:
        budget = budget.with_cap(args.budget)
    if args.subsample is not None:
        budget = budget.with_seed(args.subsample)
    report = RunReport(command=args.command)
    if args.budget is not None:
        report.add_literal("budget", args.budget)
    if args.subsample is not None:
        report.add_literal("subsample", args.subsample)
    try:
        _COMMANDS[args.command](args, report, budget)
    except ToolkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    text = report.render()
    if args.out is not None:
        try:
            Path(args.out).write_text(text, encoding="utf-8")
        except OSError as exc:
            print(f"error: out: cannot write {args.out} ({exc.strerror})",
                  file=sys.stderr)
            return 2
    else:
        sys.stdout.write(text)
    return report.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
