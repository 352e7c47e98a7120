"""Scenario configuration files: INI sections with flat ``key = value`` pairs.

Every key has a type, a default and a constraint.  Parsing fills defaults
(and records which ones were filled), rejects unknown keys, and checks the
scenario's symbols for ℏ dependence.
"""

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Tuple

from .errors import ConfigSyntaxError, ConstraintError, MissingConfigError, UnknownKeyError
from .scenarios import check_hbar_independent, get_scenario

_pos = ("positive", lambda v: v > 0)
_nonneg = ("non-negative", lambda v: v >= 0)
_any = ("any", lambda v: True)
_pos_int = ("a positive integer", lambda v: v >= 1)
_pow2 = ("a power of two >= 4", lambda v: v >= 4 and (v & (v - 1)) == 0)


def _floats(text):
    return tuple(float(x) for x in str(text).replace(",", " ").split())


# section -> key -> (type, default, (description, predicate))
SCHEMA: Dict[str, Dict[str, tuple]] = {
    "scenario": {
        "name": (str, None, ("a registered scenario", lambda v: True)),
    },
    "physics": {
        "mass": (float, 1.0, _pos),
        "omega": (float, 1.0, _pos),
        "kappa": (float, 1.0, _nonneg),
        "n_thermal": (float, 0.0, _nonneg),
        "kappa2": (float, 0.3, _nonneg),
        "lambda_quartic": (float, 0.1, _nonneg),
        "beta": (float, math.log(3.0), _pos),
        "hbar": (float, 1.0, _pos),
        "q0": (float, 1.5, _any),
        "p0": (float, -1.0, _any),
        "width": (float, 1.0, _pos),
        "ou_rate": (float, 1.0, _pos),
        "ou_diffusion": (float, 1.0, _pos),
    },
    "hilbert": {
        "dim": (int, 64, ("an integer >= 2", lambda v: v >= 2)),
        "extent": (float, 8.0, _pos),
    },
    "petz": {
        "dim": (int, 20, ("an integer >= 2", lambda v: v >= 2)),
        "displacement": (float, 0.8, _any),
        "dt": (float, 4e-4, _pos),
        "T": (float, 1.0, _nonneg),
    },
    "grid": {
        "q_extent": (float, 8.0, _pos),
        "p_extent": (float, 8.0, _pos),
        "n_q": (int, 256, _pow2),
        "n_p": (int, 256, _pow2),
    },
    "time": {
        "dt": (float, 1e-3, _pos),
        "T": (float, 2.0, _pos),
        "checkpoints": (int, 5, _pos_int),
        "fp_dt": (float, 2e-3, _pos),
        "fp_stride": (int, 10, _pos_int),
        "round_trip_T": (float, 1.0, _pos),
        "sde_dt": (float, 1e-2, _pos),
    },
    "ensemble": {
        "size": (int, 100000, _pos_int),
        "seed": (int, 20240611, ("an unsigned 64-bit integer", lambda v: 0 <= v < 2**64)),
        "chunk_size": (int, 0, _nonneg),
        "threads": (int, 1, _pos_int),
    },
    "sweep": {
        "hbars": (_floats, (0.2, 0.1, 0.05, 0.025), ("a list of positive numbers",
                                                     lambda v: all(x > 0 for x in v))),
        "center_q": (float, 0.5, _any),
        "center_p": (float, -0.3, _any),
        "var_q": (float, 0.3, _pos),
        "var_p": (float, 0.2, _pos),
        "quartic_tilt": (float, 0.05, _nonneg),
        "floor": (float, 1e-9, _pos),
    },
    "tolerance": {
        "wigner_fp_l2": (float, 1e-3, _pos),
        "petz": (float, 1e-6, _pos),
        "round_trip_l1": (float, 1e-2, _pos),
        "sde_l1": (float, 5e-2, _pos),
        "two_route": (float, 1e-8, _pos),
        "slope": (float, 0.3, _pos),
        "trace_drift": (float, 1e-10, _pos),
        "mass_drift": (float, 1e-8, _pos),
        "wigner_imag": (float, 1e-10, _pos),
    },
    "output": {
        "dir": (str, "out", ("a path", lambda v: len(v) > 0)),
    },
}


@dataclass
class ScenarioConfig:
    """Validated configuration; ``values[section][key]`` holds typed values."""

    values: Dict[str, Dict[str, object]]
    defaults_filled: List[str] = field(default_factory=list)
    source: str = ""

    def __getitem__(self, section: str) -> Dict[str, object]:
        return self.values[section]

    @property
    def name(self) -> str:
        return self.values["scenario"]["name"]

    @property
    def physics(self) -> dict:
        return self.values["physics"]

    @property
    def hbar(self) -> float:
        return self.values["physics"]["hbar"]

    @property
    def seed(self) -> int:
        return self.values["ensemble"]["seed"]

    @property
    def scenario(self):
        return get_scenario(self.name)

    def model(self):
        return self.scenario.build(self.physics)

    def with_overrides(self, overrides: Iterable[str]) -> "ScenarioConfig":
        raw = {s: {k: _format(v) for k, v in d.items()} for s, d in self.values.items()}
        touched = set()
        for item in overrides:
            sec, key, val = _split_override(item)
            raw.setdefault(sec, {})[key] = val
            touched.add(f"{sec}.{key}")
        cfg = validate(raw, self.source)
        cfg.defaults_filled = [k for k in self.defaults_filled if k not in touched]
        return cfg

    def to_dict(self) -> dict:
        return {s: {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}
                for s, d in self.values.items()}


def _format(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(repr(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _split_override(item: str) -> Tuple[str, str, str]:
    if "=" not in item:
        raise ConfigSyntaxError(f"override {item!r} is not of the form section.key=value")
    lhs, val = item.split("=", 1)
    if "." not in lhs:
        raise ConfigSyntaxError(f"override key {lhs!r} must be written section.key")
    sec, key = lhs.strip().split(".", 1)
    return sec.strip(), key.strip(), val.strip()


def _convert(section, key, text):
    typ, _, (desc, ok) = SCHEMA[section][key]
    try:
        if typ is int:
            value = int(str(text).strip(), 0)
        elif typ is float:
            value = float(text)
        else:
            value = typ(text)
    except (TypeError, ValueError):
        raise ConstraintError(f"[{section}] {key} = {text!r} is not a valid {getattr(typ, '__name__', 'value')}",
                              key=f"{section}.{key}") from None
    if typ is float and not math.isfinite(value):
        raise ConstraintError(f"[{section}] {key} must be finite", key=f"{section}.{key}")
    if not ok(value):
        raise ConstraintError(f"[{section}] {key} = {text!r} must be {desc}", key=f"{section}.{key}")
    return value


def validate(raw: Dict[str, Dict[str, str]], source: str = "") -> ScenarioConfig:
    """Type-check ``raw`` strings, fill defaults and check cross-field rules."""
    for sec, items in raw.items():
        if sec not in SCHEMA:
            raise UnknownKeyError(f"unknown section [{sec}]", key=sec)
        for key in items:
            if key not in SCHEMA[sec]:
                raise UnknownKeyError(f"unknown key {key!r} in section [{sec}]", key=key)
    values, filled = {}, []
    for sec, keys in SCHEMA.items():
        values[sec] = {}
        for key, (typ, default, _) in keys.items():
            if key in raw.get(sec, {}):
                values[sec][key] = _convert(sec, key, raw[sec][key])
            elif default is None:
                raise ConstraintError(f"required key [{sec}] {key} is missing", key=f"{sec}.{key}")
            else:
                values[sec][key] = default
                filled.append(f"{sec}.{key}")
    cfg = ScenarioConfig(values, filled, source)
    scenario = get_scenario(cfg.name)
    hb = values["sweep"]["hbars"]
    if len(set(hb)) != len(hb):
        raise ConstraintError("duplicate values in [sweep] hbars", key="sweep.hbars")
    if values["time"]["round_trip_T"] > values["time"]["T"]:
        raise ConstraintError("[time] round_trip_T cannot exceed T", key="time.round_trip_T")
    check_hbar_independent(scenario, values["physics"])
    return cfg


def parse_config_text(text: str, source: str = "<string>") -> ScenarioConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigSyntaxError(f"{source}:{exc.lineno}: key outside of any section", line=exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigSyntaxError(f"{source}:{lineno}: cannot parse line", line=lineno) from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigSyntaxError(f"{source}:{exc.lineno}: {exc.message if hasattr(exc, 'message') else exc}",
                                line=exc.lineno) from None
    raw = {sec: dict(parser.items(sec)) for sec in parser.sections()}
    return validate(raw, source)


def parse_config(path) -> ScenarioConfig:
    """Read and validate a configuration file."""
    path = Path(path)
    if not path.is_file():
        raise MissingConfigError(f"configuration file {str(path)!r} not found")
    return parse_config_text(path.read_text(), str(path))


def serialize_config(cfg: ScenarioConfig) -> str:
    """INI text that parses back to an equal configuration (all keys explicit)."""
    lines = []
    for sec in SCHEMA:
        lines.append(f"[{sec}]")
        for key in SCHEMA[sec]:
            lines.append(f"{key} = {_format(cfg.values[sec][key])}")
        lines.append("")
    return "\n".join(lines)
