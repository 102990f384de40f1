"""Flat ``key = value`` run configuration with validation and defaulting."""
from __future__ import annotations

import difflib
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError


def _float(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("not finite")
    return v


def _int(s: str) -> int:
    if not re.fullmatch(r"[+-]?\d+", s.strip()):
        raise ValueError("not an integer")
    return int(s)


def _bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError("not a boolean")


def _floats(s: str) -> tuple:
    s = s.strip()
    if not s:
        return ()
    return tuple(_float(p) for p in s.split(","))


def _choice(*options):
    def parse(s: str) -> str:
        s = s.strip()
        if s not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return s
    return parse


def _text(s: str) -> str:
    return s.strip()


def _threads(s: str):
    s = s.strip()
    if s == "auto":
        return "auto"
    v = _int(s)
    if v < 1:
        raise ValueError("must be >= 1 or auto")
    return v


# key: (parser, default as text)
SCHEMA: dict = {
    "grid.dimension": (_int, "3"),
    "grid.points": (_int, "129"),
    "grid.extent": (_float, "24"),
    "kernel.family": (_choice("smooth_bump", "polynomial_compact"), "smooth_bump"),
    "kernel.radius": (_float, "1"),
    "stationary.tol": (_float, "1e-10"),
    "stationary.radii": (_floats, ""),
    "stationary.solver": (_choice("cg", "jacobi"), "cg"),
    "stationary.closure": (_bool, "true"),
    "stationary.max_iter": (_int, "200000"),
    "evolution.integrator": (_choice("rk4", "expeuler"), "rk4"),
    "evolution.dt": (_float, "0.25"),
    "evolution.tmax": (_float, "100"),
    "evolution.snapshot_times": (_floats, "12.5,25,50,100"),
    "evolution.record_ratio": (_float, "1.189207115002721"),
    "initial.kind": (_choice("gaussian", "ball_indicator", "shell"), "gaussian"),
    "initial.center": (_floats, "4,0,0"),
    "initial.width": (_float, "1"),
    "initial.mass": (_float, "1"),
    "initial.radius": (_float, "1"),
    "initial.inner": (_float, "1"),
    "initial.outer": (_float, "2"),
    "omega.times": (_floats, "1,5,10"),
    "omega.points": (_int, "65"),
    "omega.extent": (_float, "10"),
    "omega.series_tol": (_float, "1e-13"),
    "omega.gauss_times": (_floats, "25,50,100"),
    "omega.gauss_points": (_int, "121"),
    "omega.gauss_extent": (_float, "22.5"),
    "omega.residual_t": (_float, "2"),
    "omega.dt_fd": (_float, "1e-3"),
    "asymptotics.delta": (_float, "0.25"),
    "asymptotics.delta_sweep": (_floats, "0.0625,0.25,1"),
    "asymptotics.times": (_floats, "25,50,100"),
    "asymptotics.compact_radius": (_float, "5"),
    "asymptotics.kappa": (_float, "0.5"),
    "asymptotics.gamma": (_float, "0.2"),
    "asymptotics.elliptic_gammas": (_floats, "0.2,0.5"),
    "asymptotics.elliptic_radii": (_floats, "3,20"),
    "asymptotics.kplus": (_floats, "1,10"),
    "oracle.points": (_int, "11"),
    "oracle.extent": (_float, "2.2"),
    "oracle.hole_radius": (_float, "0.1"),
    "oracle.t": (_float, "1"),
    "contraction.points": (_int, "17"),
    "contraction.extent": (_float, "3.2"),
    "contraction.steps": (_int, "400"),
    "contraction.pairs": (_int, "5"),
    "cavity.inner": (_float, "3"),
    "cavity.outer": (_float, "5"),
    "cavity.points": (_int, "45"),
    "cavity.extent": (_float, "8.25"),
    "cavity.t_start": (_float, "10"),
    "cavity.t_end": (_float, "30"),
    "output_dir": (_text, "nldiff_out"),
    "seed": (_int, "0"),
    "precision": (_choice("f64"), "f64"),
    "threads": (_threads, "1"),
}

HOLE_KEY = re.compile(r"holes\[(\d+)\]\.(shape|center|size)$")
HOLE_FIELDS = {"shape": _choice("ball", "box", "shell"), "center": _floats, "size": _floats}


@dataclass
class RunConfig:
    values: dict
    holes: list = field(default_factory=list)

    def __getitem__(self, key):
        return self.values[key]

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.values == other.values and self.holes == other.holes

    def hole_specs(self) -> list:
        out = []
        for h in self.holes:
            size = h["size"]
            out.append({"shape": h["shape"], "center": h["center"],
                        "size": size[0] if h["shape"] == "ball" else size})
        return out

    def render(self) -> str:
        """Canonical text; parsing it back yields an equal config."""
        lines = []
        for key in sorted(self.values):
            lines.append(f"{key} = {_format(self.values[key])}")
        for i, h in enumerate(self.holes):
            for k in ("shape", "center", "size"):
                lines.append(f"holes[{i}].{k} = {_format(h[k])}")
        return "\n".join(lines) + "\n"


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(repr(float(x)) for x in v)
    return str(v)


def parse_text(text: str, overrides: dict | None = None) -> RunConfig:
    raw: dict = {}
    errors = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value', got {line!r}")
            continue
        key, value = (p.strip() for p in line.split("=", 1))
        if key in raw:
            errors.append(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    raw.update(overrides or {})

    values = {}
    holes: dict = {}
    for key, value in raw.items():
        mh = HOLE_KEY.match(key)
        if mh:
            idx, name = int(mh.group(1)), mh.group(2)
            try:
                holes.setdefault(idx, {})[name] = HOLE_FIELDS[name](value)
            except ValueError as exc:
                errors.append(f"{key}: {exc}")
            continue
        if key not in SCHEMA:
            near = difflib.get_close_matches(key, list(SCHEMA), n=1)
            hint = f"; did you mean {near[0]!r}?" if near else ""
            errors.append(f"unknown key {key!r}{hint}")
            continue
        try:
            values[key] = SCHEMA[key][0](value)
        except ValueError as exc:
            errors.append(f"{key} = {value!r}: {exc}")
    for key, (parser, default) in SCHEMA.items():
        if key not in values:
            values[key] = parser(default)

    hole_list = []
    for i in sorted(holes):
        h = holes[i]
        missing = [k for k in ("shape", "center", "size") if k not in h]
        if missing:
            errors.append(f"holes[{i}] is missing {', '.join(missing)}")
            continue
        hole_list.append(h)
    if sorted(holes) != list(range(len(holes))):
        errors.append(f"hole indices must be 0..{len(holes) - 1}, got {sorted(holes)}")
    errors.extend(_constraints(values, hole_list))
    if errors:
        raise ConfigurationError("invalid configuration:\n  " + "\n  ".join(errors))
    return RunConfig(values, hole_list)


def _constraints(v: dict, holes: list) -> list:
    errs = []
    N = v["grid.dimension"]
    if N < 3:
        errs.append(f"grid.dimension must be >= 3 for physics runs, got {N}")
    for key in ("grid.points", "omega.points", "omega.gauss_points", "cavity.points",
                "oracle.points", "contraction.points"):
        if v[key] % 2 == 0:
            errs.append(f"{key}: points must be odd so the origin is a node, got {v[key]}")
    if v["grid.points"] < 17:
        errs.append(f"grid.points must be >= 17, got {v['grid.points']}")
    for key in ("grid.extent", "kernel.radius", "stationary.tol", "evolution.dt", "evolution.tmax",
                "omega.extent", "omega.gauss_extent", "omega.dt_fd", "asymptotics.delta"):
        if not v[key] > 0:
            errs.append(f"{key} must be positive, got {v[key]}")
    if v["evolution.integrator"] == "rk4" and v["evolution.dt"] > 2.7:
        errs.append(f"evolution.dt {v['evolution.dt']} exceeds the RK4 stability bound 2.7")
    if len(v["initial.center"]) != N:
        errs.append(f"initial.center needs {N} coordinates, got {len(v['initial.center'])}")
    if v["evolution.record_ratio"] <= 1:
        errs.append("evolution.record_ratio must exceed 1")
    for i, h in enumerate(holes):
        if len(h["center"]) != N:
            errs.append(f"holes[{i}].center needs {N} coordinates")
        want = {"ball": 1, "box": N, "shell": 2}[h["shape"]]
        if len(h["size"]) != want:
            errs.append(f"holes[{i}].size needs {want} value(s) for a {h['shape']}")
    return errs


def parse_config(path, overrides: dict | None = None) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"config file {str(p)!r} not found")
    return parse_text(p.read_text(), overrides)


REFERENCE_HOLES = "holes[0].shape = ball\nholes[0].center = 0,0,0\nholes[0].size = 2\n"


def default_config(overrides: dict | None = None) -> RunConfig:
    """Reference configuration: one ball hole of radius 2 at the origin."""
    return parse_text(REFERENCE_HOLES, overrides)
