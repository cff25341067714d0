"""JSON scenario files: an orbifold, named points and curves, and tasks."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import groups as ga
from .area import AreaForm, SpindleCurve
from .errors import InvalidCurve, NotOrthogonal, ScenarioError
from .orbifold import Orbifold, OrbifoldPoint, quotient, round_sphere, spindle

SCHEMA_VERSION = 1
TASK_KINDS = ("transport", "n_transport", "stratify", "displace", "verify")


@dataclass
class Task:
    name: str
    kind: str
    params: dict = field(default_factory=dict)


@dataclass
class Scenario:
    orbifold: Orbifold
    points: dict[str, OrbifoldPoint]
    curves: dict[str, SpindleCurve]
    area_form: AreaForm
    tasks: list[Task]
    raw: dict

    def tasks_of(self, *kinds) -> list[Task]:
        return [t for t in self.tasks if t.kind in kinds]


def _check_finite(obj, where="scenario"):
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return
    if isinstance(obj, (int, float)):
        if not math.isfinite(obj):
            raise ScenarioError(f"non-finite number in {where}")
        return
    if isinstance(obj, dict):
        for k, v in obj.items():
            _check_finite(v, f"{where}.{k}")
        return
    if isinstance(obj, list):
        for i, v in enumerate(obj):
            _check_finite(v, f"{where}[{i}]")
        return
    raise ScenarioError(f"unsupported value of type {type(obj).__name__} in {where}")


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ScenarioError(f"{where} is missing '{key}'")
    return d[key]


def build_orbifold(cfg: dict) -> Orbifold:
    family = _require(cfg, "family", "orbifold")
    if family == "quotient":
        g = _require(cfg, "group", "orbifold")
        if "generators" in g:
            try:
                group = ga.build_group(np.array(g["generators"], dtype=float), cap=int(g.get("cap", ga.DEFAULT_CAP)), dimension=g.get("dimension"))
            except (ValueError, TypeError) as exc:
                raise NotOrthogonal(f"bad generator matrices: {exc}") from exc
        else:
            name = _require(g, "name", "orbifold.group")
            if name not in ga.NAMED_FAMILIES:
                raise ScenarioError(f"unknown group family '{name}'")
            arg = g.get("n", g.get("dimension"))
            if "order" in g:
                # dihedral groups are named by the polygon; order 2n
                order = int(g["order"])
                if name == "dihedral" and order % 2:
                    raise ScenarioError("a dihedral group has even order")
                arg = order // 2 if name == "dihedral" else order
            group = ga.NAMED_FAMILIES[name](arg) if arg is not None else ga.NAMED_FAMILIES[name]()
        return quotient(group, cfg.get("radius"))
    if family == "spindle":
        p, q = int(_require(cfg, "p", "orbifold")), int(_require(cfg, "q", "orbifold"))
        if p < 1 or q < 1:
            raise ScenarioError("spindle weights must be positive integers")
        return spindle(p, q)
    if family == "sphere":
        return round_sphere()
    raise ScenarioError(f"unknown orbifold family '{family}'")


def build_point(orb: Orbifold, name: str, cfg: dict) -> OrbifoldPoint:
    if "underlying" in cfg:
        s, phi = cfg["underlying"]
        if not orb.is_spindle_like:
            raise ScenarioError(f"point '{name}': underlying coordinates need a spindle or sphere")
        if not 0.0 < s < 1.0:
            raise ScenarioError(f"point '{name}': s must lie in (0, 1)")
        return orb.from_underlying(float(s), float(phi), cfg.get("chart"))
    cid = int(cfg.get("chart", 0))
    if not 0 <= cid < len(orb.charts):
        raise ScenarioError(f"point '{name}' refers to missing chart {cid}")
    lift = np.array(_require(cfg, "lift", f"point '{name}'"), dtype=float)
    if lift.shape != (orb.charts[cid].dimension,):
        raise ScenarioError(f"point '{name}' has a lift of the wrong dimension")
    return orb.point(cid, lift)


def build_curve(name: str, cfg: dict) -> SpindleCurve:
    try:
        if "latitude" in cfg:
            return SpindleCurve.latitude(float(cfg["latitude"]), int(cfg.get("n", 256)), bool(cfg.get("reverse", False)))
        if "circle" in cfg:
            c = cfg["circle"]
            return SpindleCurve.circle(float(c["s"]), float(c["phi"]), float(c["radius"]), int(c.get("n", 256)))
        if "square" in cfg:
            c = cfg["square"]
            return SpindleCurve.square(float(c["s"]), float(c["phi"]), float(c["side"]), int(c.get("per_side", 16)))
        if "samples" in cfg:
            return SpindleCurve(np.array(cfg["samples"], dtype=float))
    except InvalidCurve as exc:
        raise InvalidCurve(f"curve '{name}': {exc}") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"curve '{name}' is malformed: {exc}") from exc
    raise ScenarioError(f"curve '{name}' needs one of latitude, circle, square, samples")


def build_area_form(cfg) -> AreaForm:
    if cfg is None or cfg == "uniform" or cfg == {"density": "uniform"}:
        return AreaForm.uniform()
    coeffs = cfg.get("polynomial") if isinstance(cfg, dict) else None
    if coeffs is None:
        raise ScenarioError("area_form must be 'uniform' or {'polynomial': [c0, c1, ...]}")
    c = np.array(coeffs, dtype=float)
    return AreaForm(lambda s: np.polynomial.polynomial.polyval(s, c), name="polynomial")


def _resolve(names, table, where):
    out = []
    for n in names if isinstance(names, list) else [names]:
        if n not in table:
            raise ScenarioError(f"{where} refers to unknown name '{n}'")
        out.append(n)
    return out


def parse(raw: dict) -> Scenario:
    if not isinstance(raw, dict):
        raise ScenarioError("scenario must be a JSON object")
    _check_finite(raw)
    version = raw.get("version")
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported scenario version {version!r}; expected {SCHEMA_VERSION}")
    orb = build_orbifold(_require(raw, "orbifold", "scenario"))
    points = {name: build_point(orb, name, p) for name, p in raw.get("points", {}).items()}
    curves = {name: build_curve(name, c) for name, c in raw.get("curves", {}).items()}
    if curves and not orb.is_spindle_like:
        raise ScenarioError("curves need a spindle or sphere orbifold")
    form = build_area_form(raw.get("area_form"))
    tasks = []
    for k, t in enumerate(raw.get("tasks", [])):
        kind = _require(t, "kind", f"task {k}")
        if kind not in TASK_KINDS:
            raise ScenarioError(f"task {k} has unknown kind '{kind}'")
        name = str(t.get("name", f"{kind}_{k}"))
        params = {key: v for key, v in t.items() if key not in ("kind", "name")}
        if kind == "transport":
            _resolve(_require(params, "from", name), points, name)
            _resolve(_require(params, "to", name), points, name)
        elif kind == "n_transport":
            src = _resolve(_require(params, "from", name), points, name)
            dst = _resolve(_require(params, "to", name), points, name)
            if len(src) != len(dst):
                raise ScenarioError(f"task '{name}': 'from' and 'to' differ in length")
        elif kind == "displace":
            _resolve(_require(params, "curve", name), curves, name)
        tasks.append(Task(name, kind, params))
    if len({t.name for t in tasks}) != len(tasks):
        raise ScenarioError("task names must be unique")
    return Scenario(orb, points, curves, form, tasks, raw)


def load(path) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}") from exc
    try:
        raw = json.loads(text, parse_constant=lambda c: float(c))
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario is not valid JSON: {exc}") from exc
    return parse(raw)
