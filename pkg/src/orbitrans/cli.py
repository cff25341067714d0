"""Command-line front end: ``orbitrans <command> --scenario file.json``.

Exit codes: 0 success, 1 scenario or usage error, 2 mathematical failure,
3 internal error. Failures also print one JSON record on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np
import scipy.linalg

from . import area as ar
from . import groups as ga
from . import orbifold as ob
from . import transitivity as tr
from ._backend import backend_name
from .errors import MathematicalFailure, OrbitransError, ScenarioError
from .fields import LinearField, TubeBumpField, average_field, check_equivariance, flow
from .scenario import Scenario, load
from .svg import plot_scene

COMMANDS = ("describe", "transport", "verify", "displace", "plot")
DEFAULT_TOL = 1e-7
EQUIVARIANCE_TOL = 1e-10


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error("UsageError", message, 1)
        self.print_usage(sys.stderr)
        sys.exit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="orbitrans", description="Stratify orbifolds, build transport diffeomorphisms, and decide curve displaceability.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, helptext in (
        ("describe", "stratification report"),
        ("transport", "build and verify transport diffeomorphisms"),
        ("verify", "run the invariant suite for the scenario's orbifold"),
        ("displace", "displaceability verdicts for the scenario's curves"),
        ("plot", "SVG of strata, curves and trajectories"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--scenario", required=True, help="scenario JSON file")
        p.add_argument("--out", default=None, help="directory for artifacts (reports, CSV, SVG)")
        p.add_argument("--seed", type=int, default=0, help="base seed for sampling (default 0)")
        p.add_argument("--max-step", type=float, default=1e-3, help="RK4 step bound")
        p.add_argument("--tol", type=float, default=None, help="endpoint / area tolerance override")
        p.add_argument("--threads", type=int, default=1, help="worker threads for batch sampling")
    return parser


def _emit_error(kind: str, message: str, code: int):
    record = {"error": kind, "message": message, "exit_code": code}
    print(json.dumps(record, sort_keys=True), file=sys.stderr)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False, default=_jsonable) + "\n"


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    raise TypeError(f"cannot serialise {type(x).__name__}")


def _finite(x: float) -> float | None:
    return float(x) if math.isfinite(x) else None


def _param(task, key, default):
    return task.params.get(key, default) if task is not None else default


# --------------------------------------------------------------------------
# describe


def describe(sc: Scenario, args) -> tuple[dict, bool]:
    orb = sc.orbifold
    comps = ob.stratify(orb)
    orbits: dict[int, list] = {}
    for c in comps:
        orbits.setdefault(c.orbit, []).append(c)
    quotient_classes = []
    for key in sorted(orbits):
        members = orbits[key]
        quotient_classes.append(
            {
                "class": key,
                "sdim": members[0].sdim,
                "isotropy_order": members[0].isotropy_order,
                "chart_components": [m.label for m in members],
            }
        )
    report = {
        "command": "describe",
        "orbifold": repr(orb),
        "family": orb.family,
        "charts": [
            {"id": ch.id, "dimension": ch.dimension, "group_order": ch.group.order, "radius": ch.radius}
            for ch in orb.charts
        ],
        "singular_components": [
            {
                "label": c.label,
                "chart_id": c.chart_id,
                "sdim": c.sdim,
                "isotropy_order": c.isotropy_order,
                "isotropy": list(c.subgroup),
                "representative": [float(v) for v in c.representative],
                "chamber": list(c.chamber_sign_vector),
                "class": c.orbit,
            }
            for c in comps
        ],
        "counts": _counts(comps),
        "quotient_classes": quotient_classes,
        "seed": args.seed,
    }
    return report, True


def _counts(comps) -> dict:
    by_sdim: dict[str, int] = {}
    for c in comps:
        by_sdim[f"sigma_{c.sdim}"] = by_sdim.get(f"sigma_{c.sdim}", 0) + 1
    return by_sdim


# --------------------------------------------------------------------------
# transport


def _build(sc: Scenario, task, seed: int):
    orb = sc.orbifold
    clearance = float(_param(task, "clearance", 1.0))
    if task.kind == "transport":
        x, y = sc.points[task.params["from"]], sc.points[task.params["to"]]
        return [task.params["from"]], [x], [y], tr.local_transport(orb, x, y, clearance)
    names = list(task.params["from"])
    xs = [sc.points[n] for n in names]
    ys = [sc.points[n] for n in task.params["to"]]
    return names, xs, ys, tr.n_transport(orb, xs, ys, clearance, seed)


def _max_equivariance(orb, diffeo, n_samples: int, seed: int) -> float:
    worst = 0.0
    for k, atom in enumerate(diffeo.atoms):
        rep = check_equivariance(atom.field, orb.charts[atom.chart_id].group, n_samples, seed + k)
        worst = max(worst, rep.residual)
    return worst


def run_transport_task(sc: Scenario, task, args):
    orb = sc.orbifold
    seed = int(_param(task, "seed", args.seed))
    max_step = float(_param(task, "max_step", args.max_step))
    tol = float(_param(task, "tol", args.tol if args.tol is not None else DEFAULT_TOL))
    names, xs, ys, diffeo = _build(sc, task, seed)
    images = tr.evaluate_many(orb, diffeo, xs, 1.0, max_step)
    errors = [tr.endpoint_error(orb, im, y) for im, y in zip(images, ys)]
    equiv = _max_equivariance(orb, diffeo, int(_param(task, "equivariance_samples", 200)), seed)
    sd = tr.verify_sdim_preservation(orb, diffeo, int(_param(task, "sdim_samples", 200)), seed, 1.0, max_step)
    sup = tr.verify_support(orb, diffeo, int(_param(task, "support_samples", 200)), seed, max_step)
    rounds_ok = all(
        tr.supports_disjoint(orb, diffeo.atoms[i], diffeo.atoms[j]) for r in diffeo.rounds for i in r for j in r if i < j
    )
    passed = max(errors, default=0.0) < tol and equiv < EQUIVARIANCE_TOL and sd.passed and sup.passed and rounds_ok
    n_t = int(_param(task, "trajectory_samples", 20))
    times = [k / n_t for k in range(n_t + 1)]
    traj = {n: [] for n in names}
    for t in times:
        for n, p in zip(names, tr.evaluate_many(orb, diffeo, xs, t, max_step)):
            traj[n].append((t, p))
    report = {
        "task": task.name,
        "kind": task.kind,
        "seed": seed,
        "max_step": max_step,
        "tol": tol,
        "atoms": len(diffeo.atoms),
        "rounds": len(diffeo.rounds),
        "rounds_disjoint": rounds_ok,
        "endpoint_errors": {n: e for n, e in zip(names, errors)},
        "max_endpoint_error": max(errors, default=0.0),
        "equivariance_residual": equiv,
        "sdim_checked": sd.n_checked,
        "sdim_violations": len(sd.violations),
        "support_checked": sup.n_checked,
        "support_changed": sup.n_changed,
        "passed": passed,
    }
    return report, diffeo, traj


def _csv_rows(task_name: str, traj: dict, dim: int):
    for name, samples in traj.items():
        for t, p in samples:
            coords = [repr(float(v)) for v in p.lift] + [""] * (dim - len(p.lift))
            yield [task_name, name, repr(float(t)), str(p.chart_id)] + coords


def transport(sc: Scenario, args) -> tuple[dict, bool]:
    tasks = sc.tasks_of("transport", "n_transport")
    if not tasks:
        raise ScenarioError("scenario has no transport or n_transport tasks")
    dim = max(ch.dimension for ch in sc.orbifold.charts)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["task", "point_name", "t", "chart_id"] + [f"coord_{k}" for k in range(dim)])
    reports = []
    out = Path(args.out) if args.out else None
    for task in tasks:
        rep, diffeo, traj = run_transport_task(sc, task, args)
        reports.append(rep)
        writer.writerows(_csv_rows(task.name, traj, dim))
        if out:
            (out / f"{task.name}.diffeo.json").write_text(tr.dumps_diffeo(diffeo) + "\n")
    if out:
        (out / "trajectories.csv").write_text(buf.getvalue())
    ok = all(r["passed"] for r in reports)
    return {"command": "transport", "seed": args.seed, "tasks": reports, "passed": ok}, ok


# --------------------------------------------------------------------------
# verify


def _check(results: list, name: str, ok: bool, **detail):
    results.append({"check": name, "passed": bool(ok), **detail})


def verify(sc: Scenario, args) -> tuple[dict, bool]:
    orb = sc.orbifold
    vt = (sc.tasks_of("verify") or [None])[0]
    seed = int(_param(vt, "seed", args.seed))
    n_fields = int(_param(vt, "n_fields", 5))
    n_samples = int(_param(vt, "n_samples", 200))
    n_pairs = int(_param(vt, "n_pairs", 4))
    max_step = float(_param(vt, "max_step", args.max_step))
    tol = float(_param(vt, "tol", args.tol if args.tol is not None else DEFAULT_TOL))
    rng = np.random.default_rng(seed)
    results: list[dict] = []

    for ch in orb.charts:
        g = ch.group
        defect = max(float(np.abs(m.T @ m - np.eye(g.dimension)).max()) for m in g.matrices)
        table_err = max(
            float(np.abs(g.matrices[i] @ g.matrices[j] - g.matrices[g.mult_table[i, j]]).max())
            for i in range(g.order)
            for j in range(g.order)
        )
        _check(results, f"chart{ch.id}.group", defect < ga.TOL and table_err < ga.TOL, orthogonality_defect=defect, table_error=table_err)

    bad = []
    for c in ob.stratify(orb):
        chart = orb.charts[c.chart_id]
        h = ga.isotropy(chart.group, c.representative)
        if h != c.subgroup or ga.fixed_subspace(chart.group, h).dimension != c.sdim or not c.in_chamber(c.representative):
            bad.append(c.label)
    _check(results, "stratification.representatives", not bad, inconsistent=bad)

    worst = 0.0
    for ch in orb.charts:
        for _ in range(n_fields):
            lim = 1.0 if ch.radius is None else 0.5 * ch.radius
            a, b = rng.uniform(-lim, lim, size=(2, ch.dimension))
            fld = average_field(TubeBumpField(a, b, float(rng.uniform(0.1, 0.5))), ch.group)
            worst = max(worst, check_equivariance(fld, ch.group, n_samples, int(rng.integers(2**31))).residual)
    _check(results, "fields.equivariance", worst < EQUIVARIANCE_TOL, residual=worst, tol=EQUIVARIANCE_TOL)

    d = orb.charts[0].dimension
    A = rng.normal(size=(d, d))
    A /= max(1.0, float(np.linalg.norm(A, 2)))
    z0 = rng.uniform(-1.0, 1.0, size=d)
    flow_err = float(np.linalg.norm(flow(LinearField(A), z0, 1.0, max_step) - scipy.linalg.expm(A) @ z0))
    _check(results, "fields.linear_flow", flow_err < 1e-8, error=flow_err)

    pts = tr.sample_points(orb, 4 * n_pairs, seed)
    pairs = []
    for i, x in enumerate(pts):
        for y in pts[i + 1 :]:
            if len(pairs) < n_pairs and not orb.same_point(x, y) and ob.same_component(orb, x, y):
                pairs.append((x, y))
    errs, sd_bad, sup_bad = [], 0, 0
    for x, y in pairs:
        D = tr.n_transport(orb, [x], [y], seed=seed) if orb.is_spindle_like else tr.local_transport(orb, x, y)
        errs.append(tr.endpoint_error(orb, tr.evaluate(orb, D, x, 1.0, max_step), y))
        for t in (0.0, 0.25, 0.5, 0.75, 1.0):
            sd_bad += len(tr.verify_sdim_preservation(orb, D, n_samples // 4, seed, t, max_step).violations)
        sup_bad += tr.verify_support(orb, D, n_samples // 4, seed, max_step).n_changed
    _check(results, "transport.endpoints", max(errs, default=0.0) < tol, pairs=len(pairs), max_error=max(errs, default=0.0), tol=tol)
    _check(results, "transport.sdim", sd_bad == 0, violations=sd_bad)
    _check(results, "transport.support", sup_bad == 0, changed=sup_bad)

    if orb.is_spindle_like:
        worst = 0.0
        for _ in range(n_samples):
            p = orb.from_underlying(float(rng.uniform(0.3, 0.7)), float(rng.uniform(0, 2 * math.pi)), 0)
            back = orb.relift(orb.relift(p, 1), 0)
            worst = max(worst, float(np.min(np.linalg.norm(orb.charts[0].group.orbit(back.lift) - p.lift, axis=1))))
        _check(results, "charts.transition_roundtrip", worst < 1e-12, error=worst)
        form = sc.area_form
        additive = all(
            (lambda r: r.first + r.second == form.total)(ar.region_areas(ar.SpindleCurve.latitude(s0), form))
            for s0 in (0.1, 0.37, 0.5, 0.81)
        )
        _check(results, "area.additivity", additive)

    ok = all(r["passed"] for r in results)
    return {"command": "verify", "seed": seed, "checks": results, "passed": ok}, ok


# --------------------------------------------------------------------------
# displace


def _areas_dict(a: ar.RegionAreas) -> dict:
    if a.separating:
        return {"separating": True, "winding": a.winding, "A_N": a.first, "A_S": a.second, "total": a.total}
    return {"separating": False, "winding": a.winding, "A_outside": a.first, "A_inside": a.second, "total": a.total}


def _witness_dict(w) -> dict | None:
    if w is None:
        return None
    out = {"kind": w.kind, "angle": w.angle}
    if w.kind == "shear":
        out.update(s_lo=w.s_lo, s_hi=w.s_hi)
    return out


def displace(sc: Scenario, args) -> tuple[dict, bool]:
    tasks = sc.tasks_of("displace")
    if not tasks:
        raise ScenarioError("scenario has no displace tasks")
    reports = []
    out = Path(args.out) if args.out else None
    for task in tasks:
        curve = sc.curves[task.params["curve"]]
        tol_area = _param(task, "tol_area", args.tol)
        v = ar.displaceability(sc.orbifold, curve, sc.area_form, tol_area)
        rep = {
            "task": task.name,
            "curve": task.params["curve"],
            "verdict": v.kind,
            "reason": v.reason,
            "areas": _areas_dict(v.areas),
            "tol_area": 1e-6 * sc.area_form.total if tol_area is None else float(tol_area),
            "witness": _witness_dict(v.witness),
            "witness_disjoint": None if v.witness is None else ar.witness_disjoint(curve, v.witness),
        }
        n_mc = int(_param(task, "monte_carlo", 0))
        if n_mc > 0:
            seed = int(_param(task, "seed", args.seed))
            mc = ar.monte_carlo_areas(curve, sc.area_form, n_mc, seed, threads=args.threads)
            rep["monte_carlo"] = {"samples": n_mc, "seed": seed, "first": mc.north, "second": mc.other, "stderr": mc.stderr}
        reports.append(rep)
        if out:
            drawn = [(task.params["curve"], curve.samples)]
            if v.witness is not None:
                drawn.append(("image", v.witness.apply(curve).samples))
            (out / f"{task.name}.svg").write_text(plot_scene(sc.orbifold, drawn, title=f"{task.name}: {v.kind}"))
    return {"command": "displace", "seed": args.seed, "tasks": reports}, True


# --------------------------------------------------------------------------
# plot


def plot(sc: Scenario, args) -> tuple[dict, bool]:
    trajectories = []
    for task in sc.tasks_of("transport", "n_transport"):
        _, _, traj = run_transport_task(sc, task, args)
        for name, samples in traj.items():
            trajectories.append((f"{task.name}:{name}", [p for _, p in samples]))
    curves = [(name, c.samples) for name, c in sorted(sc.curves.items())]
    svg = plot_scene(sc.orbifold, curves, trajectories, title=repr(sc.orbifold))
    target = Path(args.out) / "plot.svg" if args.out else None
    if target:
        target.write_text(svg)
    return {"command": "plot", "seed": args.seed, "svg": target.name if target else None, "curves": len(curves), "trajectories": len(trajectories)}, True


HANDLERS = {"describe": describe, "transport": transport, "verify": verify, "displace": displace, "plot": plot}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ScenarioError("--threads must be at least 1")
        if not args.max_step > 0:
            raise ScenarioError("--max-step must be positive")
        if args.out:
            Path(args.out).mkdir(parents=True, exist_ok=True)
        sc = load(args.scenario)
        report, ok = HANDLERS[args.command](sc, args)
        report["backend"] = backend_name()
        text = _dump(report)
        sys.stdout.write(text)
        if args.out:
            (Path(args.out) / f"{args.command}_report.json").write_text(text)
        if not ok:
            _emit_error("CheckFailed", f"{args.command}: one or more checks failed", 2)
            return 2
        return 0
    except ScenarioError as exc:
        _emit_error(type(exc).__name__, str(exc), 1)
        return 1
    except MathematicalFailure as exc:
        _emit_error(type(exc).__name__, str(exc), 2)
        return 2
    except OrbitransError as exc:
        _emit_error(type(exc).__name__, str(exc), 3)
        return 3
    except Exception as exc:  # anything else is a bug in this package
        _emit_error(type(exc).__name__, str(exc), 3)
        return 3


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
