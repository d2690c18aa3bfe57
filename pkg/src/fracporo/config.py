"""Scenario configuration files.

Two serializations of the same nested table are accepted:

* INI (the default, read with :mod:`configparser`): one section per group,
  ``key = value`` lines, ``#`` or ``;`` comments. A number may carry a unit
  suffix that must match the key's dimension (``4 MPa``, ``10 day``,
  ``3e-15 m2``); bare numbers are SI. Lists are comma separated. The
  ``fractures`` key holds one segment ``x0, y0, x1, y1`` per line.
* JSON: an object whose members are the section names, holding SI numbers.

Sections and keys
-----------------
``[scenario]`` name, mode, model
``[geometry]`` domain (x0, x1, y0, y1), fractures
``[mesh]`` h, fine_x, fine_y, growth, h_max
``[rock]`` permeability, porosity, lame_lambda, lame_mu, biot, biot_modulus,
normal_transmissivity, damaged_width, damaged_porosity, aperture_offset,
prestress (xx, yy, zz, xy), mu_w, mu_nw
``[law.m]``, ``[law.f]``, ``[law.plus]``, ``[law.minus]`` R, saturation,
mobility, vg_q, s_lr, s_gr
``[flow_bc.<side>]`` matrix, fracture, phase, pressure, s_nw_matrix,
s_nw_fracture
``[mech_bc.<side>]`` ux, uy, normal_pressure
``[initial]`` p_nw, p_w, fracture_p_nw, fracture_p_w
``[source]`` kind, phase, center, beta, length, pore_volume_fraction
``[time]`` t_final, dt_init, dt_max, growth, chop_factor, dt_min
``[newton]``, ``[gmres]``, ``[fixed_point]`` solver settings
``[output]`` snapshots
``[bounds]`` phi_min, d0

Sides are ``left``, ``right``, ``bottom``, ``top``. Omitted keys take their
defaults; unknown sections or keys are rejected.
"""

from __future__ import annotations

import configparser
import json
import re
from dataclasses import fields, replace
from pathlib import Path

from .coupling import DAY
from .errors import ParseError
from .mech import MechBC
from .mesh import BOUNDARY_SIDES
from .scenarios import ROCK_KEYS, YEAR, FlowBoundary, LawSpec, MeshSpec, Scenario, SourceSpec, validate
from .solvers import FixedPointConfig, GmresConfig, NewtonConfig

__all__ = [
    "UNITS",
    "parse_config",
    "parse_config_text",
    "dump_config",
    "scenario_to_dict",
    "scenario_from_dict",
    "load_scenario",
]

UNITS = {
    "pressure": {"Pa": 1.0, "kPa": 1e3, "MPa": 1e6, "GPa": 1e9},
    "length": {"m": 1.0, "cm": 1e-2, "mm": 1e-3, "km": 1e3},
    "time": {"s": 1.0, "min": 60.0, "h": 3600.0, "d": DAY, "day": DAY, "yr": YEAR, "year": YEAR},
    "area": {"m2": 1.0, "m^2": 1.0, "D": 9.869233e-13, "mD": 9.869233e-16},
    "viscosity": {"Pa.s": 1.0, "mPa.s": 1e-3, "cP": 1e-3},
}
SI_UNIT = {"pressure": "Pa", "length": "m", "time": "s", "area": "m2", "viscosity": "Pa.s"}

# key -> (kind, dimension); kinds: float, int, str, bool, list<n>, segments
_NUM = ("float", None)
_OPT = ("optfloat", None)

_SCHEMA = {
    "scenario": {"name": ("str", None), "mode": ("str", None), "model": ("str", None)},
    "geometry": {"domain": ("list4", "length"), "fractures": ("segments", "length")},
    "mesh": {
        "h": ("float", "length"),
        "fine_x": ("optlist2", "length"),
        "fine_y": ("optlist2", "length"),
        "growth": _NUM,
        "h_max": ("optfloat", "length"),
    },
    "rock": {
        "permeability": ("float", "area"),
        "porosity": _NUM,
        "lame_lambda": ("float", "pressure"),
        "lame_mu": ("float", "pressure"),
        "biot": _NUM,
        "biot_modulus": ("float", "pressure"),
        "normal_transmissivity": ("optfloat", "length"),
        "damaged_width": ("float", "length"),
        "damaged_porosity": _OPT,
        "aperture_offset": ("optfloat", "length"),
        "prestress": ("list4", "pressure"),
        "mu_w": ("float", "viscosity"),
        "mu_nw": ("float", "viscosity"),
    },
    "law": {
        "R": ("float", "pressure"),
        "saturation": ("str", None),
        "mobility": ("str", None),
        "vg_q": _NUM,
        "s_lr": _NUM,
        "s_gr": _NUM,
    },
    "flow_bc": {
        "matrix": ("bool", None),
        "fracture": ("bool", None),
        "phase": ("str", None),
        "pressure": ("float", "pressure"),
        "s_nw_matrix": _NUM,
        "s_nw_fracture": _NUM,
    },
    "mech_bc": {"ux": ("optfloat", "length"), "uy": ("optfloat", "length"), "normal_pressure": ("float", "pressure")},
    "initial": {
        "p_nw": ("float", "pressure"),
        "p_w": ("float", "pressure"),
        "fracture_p_nw": ("optfloat", "pressure"),
        "fracture_p_w": ("optfloat", "pressure"),
    },
    "source": {
        "kind": ("str", None),
        "phase": ("str", None),
        "center": ("list2", "length"),
        "beta": _NUM,
        "length": ("float", "length"),
        "pore_volume_fraction": _NUM,
    },
    "time": {
        "t_final": ("float", "time"),
        "dt_init": ("float", "time"),
        "dt_max": ("float", "time"),
        "growth": _NUM,
        "chop_factor": _NUM,
        "dt_min": ("float", "time"),
    },
    "output": {"snapshots": ("int", None)},
    "bounds": {"phi_min": _OPT, "d0": ("optfloat", "length")},
}

_SOLVERS = {"newton": NewtonConfig, "gmres": GmresConfig, "fixed_point": FixedPointConfig}


def _solver_schema(cls):
    out = {}
    for f in fields(cls):
        kind = "str" if isinstance(f.default, str) else "int" if isinstance(f.default, int) else "optfloat"
        out[f.name] = (kind, None)
    return out


_SCHEMA.update({name: _solver_schema(cls) for name, cls in _SOLVERS.items()})

_ROCK_FIELDS = (
    "permeability",
    "porosity",
    "lame_lambda",
    "lame_mu",
    "biot",
    "biot_modulus",
    "normal_transmissivity",
    "damaged_width",
    "damaged_porosity",
    "aperture_offset",
    "prestress",
    "mu_w",
    "mu_nw",
)
_TIME_FIELDS = ("t_final", "dt_init", "dt_max", "growth", "chop_factor", "dt_min")


def _schema(section: str):
    base = section.split(".", 1)[0]
    if base in ("law", "flow_bc", "mech_bc"):
        if "." not in section:
            return None
        sub = section.split(".", 1)[1]
        allowed = ROCK_KEYS if base == "law" else BOUNDARY_SIDES
        if sub not in allowed:
            return None
        return _SCHEMA[base]
    if "." in section:
        return None
    return _SCHEMA.get(section)


# -- Scenario <-> nested dict -------------------------------------------


def scenario_to_dict(sc: Scenario) -> dict:
    """Nested table of ``sc`` in SI units; None values are omitted."""
    out = {
        "scenario": {"name": sc.name, "mode": sc.mode, "model": sc.model},
        "geometry": {"domain": list(sc.domain), "fractures": [[*a, *b] for a, b in sc.fractures]},
        "mesh": {f.name: _plain(getattr(sc.mesh, f.name)) for f in fields(MeshSpec)},
        "rock": {k: _plain(getattr(sc, k)) for k in _ROCK_FIELDS},
    }
    for key in ROCK_KEYS:
        law = sc.laws[key]
        out[f"law.{key}"] = {f.name: getattr(law, f.name) for f in fields(LawSpec)}
    for side, bc in sc.flow_bc.items():
        out[f"flow_bc.{side}"] = {f.name: getattr(bc, f.name) for f in fields(FlowBoundary)}
    for side, bc in sc.mech_bc.items():
        out[f"mech_bc.{side}"] = {f.name: getattr(bc, f.name) for f in fields(MechBC)}
    out["initial"] = {
        "p_nw": sc.initial_p_nw,
        "p_w": sc.initial_p_w,
        "fracture_p_nw": sc.initial_fracture_p_nw,
        "fracture_p_w": sc.initial_fracture_p_w,
    }
    out["source"] = {f.name: _plain(getattr(sc.source, f.name)) for f in fields(SourceSpec)}
    out["time"] = {k: getattr(sc, k) for k in _TIME_FIELDS}
    for name, cls in _SOLVERS.items():
        out[name] = {f.name: getattr(getattr(sc, name), f.name) for f in fields(cls)}
    out["output"] = {"snapshots": sc.snapshots}
    out["bounds"] = {"phi_min": sc.phi_min, "d0": sc.d0}
    return {s: {k: v for k, v in t.items() if v is not None} for s, t in out.items()}


def _plain(v):
    return list(v) if isinstance(v, tuple) else v


def _check_value(section, key, value, line=None):
    """Type-check a JSON-like value against the schema."""
    kind, _ = _schema(section)[key]
    where = f"{section}.{key}"

    def num(x):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise ParseError(f"expected a number, got {x!r}", line, where)
        return float(x)

    if kind == "str":
        if not isinstance(value, str):
            raise ParseError(f"expected a string, got {value!r}", line, where)
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise ParseError(f"expected true or false, got {value!r}", line, where)
        return value
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ParseError(f"expected an integer, got {value!r}", line, where)
        return value
    if kind in ("float", "optfloat"):
        return num(value)
    if kind.startswith("list") or kind.startswith("optlist"):
        n = int(kind[-1])
        if not isinstance(value, (list, tuple)) or len(value) != n:
            raise ParseError(f"expected a list of {n} numbers, got {value!r}", line, where)
        return tuple(num(x) for x in value)
    if kind == "segments":
        if not isinstance(value, (list, tuple)):
            raise ParseError("expected a list of segments", line, where)
        segs = []
        for seg in value:
            if not isinstance(seg, (list, tuple)) or len(seg) != 4:
                raise ParseError(f"a segment needs four coordinates, got {seg!r}", line, where)
            x0, y0, x1, y1 = (num(c) for c in seg)
            segs.append(((x0, y0), (x1, y1)))
        return tuple(segs)
    raise AssertionError(kind)


def scenario_from_dict(data: dict, lines: dict | None = None) -> Scenario:
    """Build and validate a Scenario from a nested table.

    ``lines`` optionally maps ``(section, key)`` to source line numbers used
    in error messages.
    """
    lines = lines or {}
    if not isinstance(data, dict):
        raise ParseError("the configuration must be a table of sections")
    tables = {}
    for section, table in data.items():
        schema = _schema(section)
        if schema is None:
            raise ParseError(f"unknown section [{section}]", lines.get((section, None)))
        if not isinstance(table, dict):
            raise ParseError(f"section [{section}] must be a table", lines.get((section, None)))
        checked = {}
        for key, value in table.items():
            if key not in schema:
                raise ParseError(f"unknown key in [{section}]", lines.get((section, key)), f"{section}.{key}")
            checked[key] = _check_value(section, key, value, lines.get((section, key)))
        tables[section] = checked
    if "scenario" not in tables or "name" not in tables["scenario"]:
        raise ParseError("missing [scenario] name", key="scenario.name")
    if "geometry" not in tables or "domain" not in tables["geometry"]:
        raise ParseError("missing [geometry] domain", key="geometry.domain")

    kw = dict(tables["scenario"])
    geo = tables["geometry"]
    kw["domain"] = geo["domain"]
    kw["fractures"] = geo.get("fractures", ())
    kw["mesh"] = MeshSpec(**tables.get("mesh", {}))
    kw.update(tables.get("rock", {}))
    kw["laws"] = {k: LawSpec(**tables.get(f"law.{k}", {})) for k in ROCK_KEYS}
    kw["flow_bc"] = {s.split(".", 1)[1]: FlowBoundary(**t) for s, t in tables.items() if s.startswith("flow_bc.")}
    kw["mech_bc"] = {s.split(".", 1)[1]: MechBC(**t) for s, t in tables.items() if s.startswith("mech_bc.")}
    for key, value in tables.get("initial", {}).items():
        kw[f"initial_{key}"] = value
    if "source" in tables:
        kw["source"] = SourceSpec(**tables["source"])
    kw.update(tables.get("time", {}))
    for name, cls in _SOLVERS.items():
        if name in tables:
            try:
                kw[name] = replace(cls(), **tables[name])
            except ValueError as exc:
                raise ParseError(str(exc), key=name) from None
    if "output" in tables:
        kw["snapshots"] = tables["output"]["snapshots"]
    kw.update(tables.get("bounds", {}))
    return validate(Scenario(**kw))


# -- INI text ------------------------------------------------------------

_NUMBER = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(\S*)\s*$")


def _number(text, dim, line, where):
    m = _NUMBER.match(text)
    if not m:
        raise ParseError(f"cannot read a number from {text.strip()!r}", line, where)
    value, unit = float(m.group(1)), m.group(2)
    if not unit:
        return value
    table = UNITS.get(dim, {}) if dim else {}
    if unit not in table:
        expected = f"one of {sorted(table)}" if table else "no unit"
        raise ParseError(f"unit {unit!r} not allowed here, expected {expected}", line, where)
    return value * table[unit]


_BOOL = {"true": True, "yes": True, "on": True, "1": True, "false": False, "no": False, "off": False, "0": False}


def _ini_value(section, key, text, line):
    kind, dim = _schema(section)[key]
    where = f"{section}.{key}"
    text = text.strip()
    if kind == "str":
        return text
    if kind == "bool":
        if text.lower() not in _BOOL:
            raise ParseError(f"expected true or false, got {text!r}", line, where)
        return _BOOL[text.lower()]
    if kind == "int":
        try:
            return int(text)
        except ValueError:
            raise ParseError(f"expected an integer, got {text!r}", line, where) from None
    if kind in ("float", "optfloat"):
        return _number(text, dim, line, where)
    if kind.startswith("list") or kind.startswith("optlist"):
        return [_number(t, dim, line, where) for t in text.split(",")]
    if kind == "segments":
        rows = [r for r in text.splitlines() if r.strip()]
        return [[_number(t, dim, line, where) for t in r.split(",")] for r in rows]
    raise AssertionError(kind)


def _line_map(text):
    """(section, key) -> 1-based line number, found by a light scan."""
    out = {}
    section = None
    for i, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        if not s or s[0] in "#;":
            continue
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
            out.setdefault((section, None), i)
        elif section is not None and not raw[:1].isspace() and ("=" in s or ":" in s):
            key = re.split(r"[=:]", s, maxsplit=1)[0].strip()
            out.setdefault((section, key), i)
    return out


def parse_config_text(text: str) -> Scenario:
    """Parse INI or JSON text into a validated Scenario."""
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno) from None
        return scenario_from_dict(data)
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.DuplicateOptionError as exc:
        raise ParseError(f"duplicate key in [{exc.section}]", exc.lineno, exc.option) from None
    except configparser.DuplicateSectionError as exc:
        raise ParseError(f"duplicate section [{exc.section}]", exc.lineno) from None
    except configparser.MissingSectionHeaderError as exc:
        raise ParseError("text before the first [section] header", exc.lineno) from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ParseError("malformed line", line) from None
    lines = _line_map(text)
    data = {}
    for section in cp.sections():
        schema = _schema(section)
        if schema is None:
            raise ParseError(f"unknown section [{section}]", lines.get((section, None)))
        table = {}
        for key, raw in cp.items(section):
            line = lines.get((section, key))
            if key not in schema:
                raise ParseError(f"unknown key in [{section}]", line, f"{section}.{key}")
            table[key] = _ini_value(section, key, raw, line)
        data[section] = table
    return scenario_from_dict(data, lines)


def parse_config(path) -> Scenario:
    """Read a configuration file (INI, or JSON for ``.json`` files)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config_text(text)


def _format(value, dim):
    unit = f" {SI_UNIT[dim]}" if dim else ""
    return f"{value!r}{unit}"


def dump_config(sc: Scenario, fmt: str = "ini") -> str:
    """Serialize ``sc`` as INI (``fmt="ini"``) or JSON text.

    Numbers are written with ``repr`` so that parsing returns an identical
    Scenario.
    """
    data = scenario_to_dict(sc)
    if fmt == "json":
        return json.dumps(data, indent=2) + "\n"
    if fmt != "ini":
        raise ValueError(f"unknown config format {fmt!r}")
    out = []
    for section, table in data.items():
        if not table and section not in ("scenario", "geometry"):
            continue
        out.append(f"[{section}]")
        schema = _schema(section)
        for key, value in table.items():
            kind, dim = schema[key]
            if kind == "str":
                text = value
            elif kind == "bool":
                text = "true" if value else "false"
            elif kind == "int":
                text = str(value)
            elif kind == "segments":
                if not value:
                    continue
                rows = [", ".join(_format(float(c), dim) for c in seg) for seg in value]
                text = "\n" + "\n".join("    " + r for r in rows)
            elif kind.startswith("list") or kind.startswith("optlist"):
                text = ", ".join(_format(float(c), dim) for c in value)
            else:
                text = _format(float(value), dim)
            out.append(f"{key} = {text}")
        out.append("")
    return "\n".join(out)


def load_scenario(spec: str) -> Scenario:
    """Builtin scenario by name, or a configuration file path."""
    from .scenarios import BUILTINS, builtin_scenario

    if spec in BUILTINS:
        return builtin_scenario(spec)
    path = Path(spec)
    if not path.exists():
        raise ParseError(f"no builtin scenario or file named {spec!r}; builtins are {sorted(BUILTINS)}")
    return parse_config(path)
