"""Experiment configuration: INI (or JSON) files checked against a typed schema.

Every key has a type and a default; unknown sections or keys, bad values
and missing required keys are reported with the file line they came from.
The resolved configuration is canonicalized to JSON and hashed for
provenance; output location and thread count do not enter the hash.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import re
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable


class ConfigError(ValueError):
    """Invalid configuration; the message names the file and line when known."""


_POW = re.compile(r"^\s*([+-]?\d+(?:\.\d*)?)\s*\^\s*([+-]?\d+(?:\.\d*)?)\s*$")


def parse_float(text: Any) -> float:
    """Plain floats plus the forms ``2^-10`` and ``1/8``."""
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return float(text)
    t = str(text).strip()
    m = _POW.match(t)
    if m:
        return float(m.group(1)) ** float(m.group(2))
    try:
        return float(t)
    except ValueError:
        pass
    try:
        return float(Fraction(t))
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"not a number: {text!r}") from None


def _parse_int(text: Any) -> int:
    if isinstance(text, bool):
        raise ValueError(f"not an integer: {text!r}")
    if isinstance(text, int):
        return text
    t = str(text).strip()
    m = _POW.match(t)
    if m and float(m.group(2)) >= 0:
        v = float(m.group(1)) ** float(m.group(2))
        if v.is_integer():
            return int(v)
    try:
        return int(t)
    except ValueError:
        raise ValueError(f"not an integer: {text!r}") from None


def _parse_bool(text: Any) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _split(text: Any) -> list:
    if isinstance(text, (list, tuple)):
        return list(text)
    t = str(text).strip()
    if t.startswith("["):
        return list(json.loads(t))
    return [p for p in re.split(r"[,\s]+", t) if p]


def _list_of(item: Callable[[Any], Any]) -> Callable[[Any], list]:
    return lambda text: [item(v) for v in _split(text)]


def _json(text: Any) -> Any:
    if not isinstance(text, str):
        return text
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"invalid JSON: {exc.msg}") from None


def _str(text: Any) -> str:
    return str(text).strip()


FLOAT, INT, BOOL, STR = parse_float, _parse_int, _parse_bool, _str
FLOATS, INTS, STRS, JSON = _list_of(parse_float), _list_of(_parse_int), _list_of(_str), _json


@dataclass(frozen=True)
class Key:
    parse: Callable[[Any], Any]
    default: Any
    doc: str
    choices: tuple[str, ...] | None = None


SCHEMA: dict[str, dict[str, Key]] = {
    "measure": {
        "family": Key(STR, "cantor", "measure family",
                      ("cantor", "ifs", "segment", "circle", "k_plane_patch", "radial_power", "file")),
        "ratio": Key(FLOAT, 0.25, "cantor contraction ratio"),
        "depth": Key(INT, 12, "IFS iteration depth"),
        "m": Key(INT, 1, "ambient dimension"),
        "maps": Key(JSON, None, "ifs maps: JSON list of {ratio, translation[, rotation]}"),
        "start": Key(FLOATS, None, "segment start point"),
        "end": Key(FLOATS, None, "segment end point"),
        "radius": Key(FLOAT, 1.0, "circle radius"),
        "center": Key(FLOATS, None, "circle / radial_power center"),
        "basis": Key(JSON, None, "k_plane_patch basis vectors (JSON list of lists)"),
        "sides": Key(FLOATS, None, "k_plane_patch side lengths"),
        "origin": Key(FLOATS, None, "k_plane_patch corner"),
        "resolution": Key(FLOAT, 2.0**-14, "rectifiable quadrature spacing"),
        "exponent": Key(FLOAT, None, "radial_power mass exponent"),
        "r_min": Key(FLOAT, 2.0**-12, "radial_power innermost node"),
        "r_max": Key(FLOAT, 1.0, "radial_power outermost node"),
        "per_octave": Key(INT, 4, "radial_power nodes per octave"),
        "path": Key(STR, None, "file family: path stem of CSV + JSON sidecar"),
        "floor_factor": Key(FLOAT, 4.0, "radius floor in units of the resolution"),
        "cap": Key(INT, 2**20, "maximum atom count"),
    },
    "ambient": {
        "s": Key(FLOAT, None, "exponent s (default: similarity dimension / set dimension)"),
    },
    "smoothing": {
        "rho": Key(FLOAT, 0.05, "cutoff width"),
        "slack": Key(FLOAT, 0.05, "allowed excess of |phi'| over 1/rho"),
    },
    "density": {
        "points": Key(INTS, None, "atom indices (default: sample)"),
        "sample": Key(INT, 8, "random atoms when points is unset"),
        "r_max": Key(FLOAT, 2.0**-4, "largest radius"),
        "r_min": Key(FLOAT, None, "smallest radius (default: floor)"),
        "per_octave": Key(INT, 16, "radii per octave"),
    },
    "transform": {
        "points": Key(INTS, None, "atom indices (default: sample)"),
        "sample": Key(INT, 8, "random atoms when points is unset"),
        "eps": Key(FLOATS, [2.0**-6], "scales"),
        "kind": Key(STR, "smoothed", "transform kind", ("smoothed", "truncated")),
    },
    "pv": {
        "points": Key(INTS, None, "atom indices to scan (default: sample)"),
        "x": Key(FLOATS, None, "explicit scan point (overrides points)"),
        "sample": Key(INT, 4, "random atoms when points is unset"),
        "eps_max": Key(FLOAT, 2.0**-4, "coarsest scale"),
        "eps_min": Key(FLOAT, 2.0**-10, "finest scale"),
        "per_octave": Key(INT, 1, "scales per octave"),
        "kind": Key(STR, "smoothed", "transform kind", ("smoothed", "truncated")),
        "tol_conv": Key(FLOAT, 1e-2, "converging threshold"),
        "tol_osc_rel": Key(FLOAT, 5e-2, "oscillating threshold relative to theta_hat"),
    },
    "fdelta": {
        "delta": Key(FLOAT, 0.9, "oscillation budget"),
        "r0": Key(FLOAT, 2.0**-4, "largest radius for the growth condition"),
        "eps0": Key(FLOAT, 2.0**-8, "largest scale for the oscillation condition"),
        "c0": Key(FLOAT, 10.0, "upper density cap"),
        "eps_min_factor": Key(FLOAT, 16.0, "finest oscillation scale in units of the floor"),
        "per_octave": Key(INT, 4, "oscillation scales per octave"),
        "limsup_octaves": Key(INT, 4, "octaves above the floor used for theta_hat*"),
        "sample": Key(INT, 64, "atoms filtered up front"),
    },
    "pipeline": {
        "checks": Key(STRS, ["lemma1", "lemma3", "lemma4", "lemma5", "section3", "pv"], "checks to run"),
        "tau": Key(FLOATS, [0.125], "tau values"),
        "eps1": Key(FLOAT, 2.0**-10, "reference scale; r = tau * eps1"),
        "max_k": Key(INT, 8, "pigeonhole depth; omega0 = 4^max_k"),
        "lemma1_bases": Key(INT, 16, "base atoms for the residual order fit"),
    },
    "selection": {
        "x0": Key(INT, 0, "center atom index"),
        "r": Key(FLOAT, 2.0**-6, "ball radius"),
        "count": Key(INT, None, "points to select (default n+2)"),
    },
    "scale": {
        "y0": Key(INT, 0, "base atom index"),
        "eps1": Key(FLOAT, 2.0**-10, "starting scale"),
        "max_k": Key(INT, 8, "pigeonhole depth"),
    },
    "verify": {
        "s": Key(FLOATS, None, "exponents to check (default: ambient s)"),
        "rho": Key(FLOATS, None, "widths to check (default: smoothing rho)"),
    },
    "output": {
        "dir": Key(STR, "rieszlab-out", "output directory"),
    },
    "run": {
        "seed": Key(INT, 0, "seed for point sampling"),
        "threads": Key(INT, None, "worker threads (default RIESZLAB_THREADS or 1)"),
    },
}

_UNHASHED = {("output", "dir"), ("run", "threads")}


class Config:
    """Resolved configuration with attribute-style section access."""

    def __init__(self, values: dict[str, dict[str, Any]], source: str = "<defaults>"):
        self.values = values
        self.source = source

    def __getitem__(self, section: str) -> dict[str, Any]:
        return self.values[section]

    def get(self, section: str, key: str) -> Any:
        return self.values[section][key]

    def canonical(self) -> dict[str, Any]:
        return {sec: {k: v for k, v in keys.items() if (sec, k) not in _UNHASHED}
                for sec, keys in self.values.items()}

    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_dict(self) -> dict[str, Any]:
        return json.loads(json.dumps(self.values, sort_keys=True))


def _line_map(text: str) -> dict[tuple[str, str], int]:
    """(section, key) -> 1-based line number for an INI file."""
    lines: dict[tuple[str, str], int] = {}
    section = None
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            lines.setdefault((section, ""), no)
        elif section is not None:
            key = re.split(r"[=:]", line, 1)[0].strip().lower()
            lines.setdefault((section, key), no)
    return lines


def _read_raw(path: Path) -> tuple[dict[str, dict[str, Any]], dict[tuple[str, str], int]]:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    if path.suffix.lower() == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
        if not isinstance(data, dict) or not all(isinstance(v, dict) for v in data.values()):
            raise ConfigError(f"{path}: JSON config must map section names to objects")
        return data, {}
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        where = f"{path}:{line}" if line else str(path)
        raise ConfigError(f"{where}: {exc.message if hasattr(exc, 'message') else exc}") from None
    return {sec: dict(parser[sec]) for sec in parser.sections()}, _line_map(text)


def _where(source: str, lines: dict, section: str, key: str) -> str:
    no = lines.get((section, key)) or lines.get((section, ""))
    return f"{source}:{no}" if no else source


def resolve(raw: dict[str, dict[str, Any]], source: str = "<overrides>",
            lines: dict[tuple[str, str], int] | None = None) -> Config:
    lines = lines or {}
    out = {sec: {k: key.default for k, key in keys.items()} for sec, keys in SCHEMA.items()}
    for sec, keys in raw.items():
        if sec not in SCHEMA:
            raise ConfigError(f"{_where(source, lines, sec, '')}: unknown section [{sec}]")
        for k, v in keys.items():
            k = k.lower()
            if k not in SCHEMA[sec]:
                raise ConfigError(f"{_where(source, lines, sec, k)}: unknown key '{k}' in [{sec}]")
            spec = SCHEMA[sec][k]
            if v is None:
                out[sec][k] = None
                continue
            try:
                val = spec.parse(v)
            except (ValueError, TypeError, json.JSONDecodeError) as exc:
                raise ConfigError(f"{_where(source, lines, sec, k)}: [{sec}] {k}: {exc}") from None
            if spec.choices and val not in spec.choices:
                raise ConfigError(f"{_where(source, lines, sec, k)}: [{sec}] {k}: {val!r} not one of "
                                  f"{', '.join(spec.choices)}")
            out[sec][k] = val
    return Config(out, source)


def load_config(path: str | Path | None, overrides: dict[str, dict[str, Any]] | None = None) -> Config:
    """Defaults, then the file (if any), then ``overrides``; validated throughout."""
    raw: dict[str, dict[str, Any]] = {}
    lines: dict[tuple[str, str], int] = {}
    source = "<defaults>"
    if path is not None:
        p = Path(path)
        raw, lines = _read_raw(p)
        source = str(p)
    merged = {sec: dict(keys) for sec, keys in raw.items()}
    cfg = resolve(merged, source, lines)
    for sec, keys in (overrides or {}).items():
        for k, v in keys.items():
            try:
                part = resolve({sec: {k: v}}, "command line")
            except ConfigError as exc:
                raise ConfigError(str(exc)) from None
            cfg.values[sec][k.lower()] = part.values[sec][k.lower()]
    validate(cfg)
    return cfg


def validate(cfg: Config) -> None:
    """Cross-field checks that the schema types alone cannot express."""
    src = cfg.source
    meas = cfg["measure"]
    fam = meas["family"]
    if fam == "ifs" and not meas["maps"]:
        raise ConfigError(f"{src}: [measure] family = ifs needs 'maps'")
    if fam == "file" and not meas["path"]:
        raise ConfigError(f"{src}: [measure] family = file needs 'path'")
    if fam == "radial_power" and meas["exponent"] is None:
        raise ConfigError(f"{src}: [measure] family = radial_power needs 'exponent'")
    if fam == "radial_power" and cfg["ambient"]["s"] is None:
        raise ConfigError(f"{src}: [ambient] s is required for the radial_power family")
    if meas["depth"] < 1 or meas["m"] < 1:
        raise ConfigError(f"{src}: [measure] depth and m must be >= 1")
    if not 0 < cfg["smoothing"]["rho"] < 0.5:
        raise ConfigError(f"{src}: [smoothing] rho must lie in (0, 1/2)")
    if not 0 < cfg["fdelta"]["delta"] < 1:
        raise ConfigError(f"{src}: [fdelta] delta must lie in (0, 1)")
    for t in cfg["pipeline"]["tau"]:
        if not 0 < t < 1:
            raise ConfigError(f"{src}: [pipeline] tau values must lie in (0, 1), got {t}")
    unknown = set(cfg["pipeline"]["checks"]) - {"lemma1", "lemma3", "lemma4", "lemma5", "section3", "pv"}
    if unknown:
        raise ConfigError(f"{src}: [pipeline] checks: unknown {sorted(unknown)}")
    pv = cfg["pv"]
    if not 0 < pv["eps_min"] <= pv["eps_max"]:
        raise ConfigError(f"{src}: [pv] need 0 < eps_min <= eps_max")
    threads = cfg["run"]["threads"]
    if threads is not None and threads < 1:
        raise ConfigError(f"{src}: [run] threads must be >= 1")


def describe_schema() -> str:
    """Human-readable table of every section and key."""
    rows = []
    for sec, keys in SCHEMA.items():
        rows.append(f"[{sec}]")
        for k, spec in keys.items():
            choice = f" (one of: {', '.join(spec.choices)})" if spec.choices else ""
            rows.append(f"  {k} = {spec.default!r}  # {spec.doc}{choice}")
    return "\n".join(rows)
