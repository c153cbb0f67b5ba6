"""Run configuration: the protocol parameters and their INI file form.

Config files are plain ``key = value`` INI sections.  Keys keep their case
so the usual symbols (``n``, ``m``, ``B``, ``D``, ``s``, ``L``, ``tau``)
can be written as-is.  Numbers accept ``2^16`` as shorthand for powers.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .signals import SIGNAL_KINDS, SignalSpec
from .wavelets import WaveletBasis, make_basis

__all__ = ["ProtocolConfig", "MODES", "normalize_mode", "parse_number", "load_ini", "config_from_section"]

MODES = ("nonadaptive_i", "nonadaptive_ii", "linfty_combined", "adaptive")

_MODE_ALIASES = {
    "nonadaptivei": "nonadaptive_i",
    "nonadaptive1": "nonadaptive_i",
    "case1": "nonadaptive_i",
    "i": "nonadaptive_i",
    "nonadaptiveii": "nonadaptive_ii",
    "nonadaptive2": "nonadaptive_ii",
    "case2": "nonadaptive_ii",
    "ii": "nonadaptive_ii",
    "linftycombined": "linfty_combined",
    "linfty": "linfty_combined",
    "adaptive": "adaptive",
}

_POWER = re.compile(r"^\s*([0-9]*\.?[0-9]+)\s*(?:\^|\*\*)\s*(-?[0-9]*\.?[0-9]+)\s*$")


def normalize_mode(mode: str) -> str:
    key = re.sub(r"[^a-z0-9]", "", mode.lower())
    if key not in _MODE_ALIASES:
        raise ConfigError(f"unknown mode {mode!r}; expected one of {MODES}")
    return _MODE_ALIASES[key]


def parse_number(text) -> float:
    """Parse ``"4096"``, ``"0.5"`` or ``"2^12"``."""
    if isinstance(text, (int, float)):
        return text
    match = _POWER.match(str(text))
    if match:
        return float(match.group(1)) ** float(match.group(2))
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"not a number: {text!r}") from None
    return value


def _as_int(name: str, value) -> int:
    v = parse_number(value)
    if not float(v).is_integer():
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    return int(v)


@dataclass(frozen=True)
class ProtocolConfig:
    """Everything one protocol run needs; fully determined by its fields."""

    n: int
    m: int
    B: float
    D: float = 0.5
    s: float = 1.0
    L: float = 1.0
    s_min: float | None = None
    s_max: float | None = None
    tau: float = 4.0
    norm: str = "l2"
    mode: str = "nonadaptive_i"
    family: str = "haar"
    seed: int = 0
    sigma: float = 1.0
    signal: str = "worst_case"
    truth_level: int | None = None
    refinement_depth: int = 12
    # not a model parameter: where the run came from
    label: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "mode", normalize_mode(self.mode))
        self.validate()

    @property
    def log2n(self) -> float:
        return math.log2(self.n)

    @property
    def per_machine(self) -> int:
        return self.n // self.m

    def validate(self) -> None:
        if self.n < 2:
            raise ConfigError(f"n must be >= 2, got {self.n}")
        if self.m < 1:
            raise ConfigError(f"m must be >= 1, got {self.m}")
        if self.n % self.m:
            raise ConfigError(f"m = {self.m} does not divide n = {self.n}; n/m must be an integer")
        if not self.B > 0:
            raise ConfigError("B must be positive")
        if not self.D > 0:
            raise ConfigError("D must be positive")
        if not self.s > 0:
            raise ConfigError("s must be positive")
        if not self.L > 0:
            raise ConfigError("L must be positive")
        if not self.tau > 1:
            raise ConfigError(f"tau must be > 1, got {self.tau}")
        if self.sigma < 0:
            raise ConfigError("sigma must be >= 0")
        if self.norm not in ("l2", "linf"):
            raise ConfigError(f"norm must be 'l2' or 'linf', got {self.norm!r}")
        if self.signal not in SIGNAL_KINDS or self.signal == "custom":
            raise ConfigError(f"signal must be one of worst_case, random_sign, zero; got {self.signal!r}")
        if self.mode != "nonadaptive_i" and self.B < self.log2n:
            raise ConfigError(f"mode {self.mode} needs B >= log2 n = {self.log2n:.4g}, got B = {self.B}")
        if self.s_min is not None and not self.s_min >= 0:
            raise ConfigError("s_min must be >= 0")
        try:
            basis = self.basis()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.truth_level is not None and not 0 <= self.truth_level <= 24:
            raise ConfigError("truth_level must lie in 0..24")
        if self.truth_level is not None and self.truth_level > basis.max_level:
            raise ConfigError(f"truth_level {self.truth_level} too deep for {basis.name} at R = {self.refinement_depth}")

    def basis(self) -> WaveletBasis:
        return _basis_cache(self.family, self.refinement_depth)

    @property
    def effective_truth_level(self) -> int:
        return self.truth_level if self.truth_level is not None else self.basis().default_truth_level

    def signal_spec(self) -> SignalSpec:
        return SignalSpec(
            kind=self.signal,
            s=self.s,
            L=self.L,
            truth_level=self.effective_truth_level,
            seed=self.seed,
            norm=self.norm,
        )

    def replace(self, **changes) -> ProtocolConfig:
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out.pop("label")
        return out

    @classmethod
    def from_dict(cls, data: dict) -> ProtocolConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_BASES: dict[tuple[str, int], WaveletBasis] = {}


def _basis_cache(family: str, depth: int) -> WaveletBasis:
    # cascade tables are built once per (family, depth) and shared read-only
    key = (family.lower(), depth)
    if key not in _BASES:
        _BASES[key] = make_basis(family, depth)
    return _BASES[key]


_INT_KEYS = {"n", "m", "seed", "truth_level", "refinement_depth"}
_FLOAT_KEYS = {"B", "D", "s", "L", "s_min", "s_max", "tau", "sigma"}
_STR_KEYS = {"norm", "mode", "family", "signal", "label"}


def config_from_section(section, overrides: dict | None = None) -> ProtocolConfig:
    """Build a :class:`ProtocolConfig` from ``key = value`` strings."""
    data = {}
    items = dict(section)
    items.update(overrides or {})
    for key, raw in items.items():
        if key in _INT_KEYS:
            data[key] = None if str(raw).lower() == "none" else _as_int(key, raw)
        elif key in _FLOAT_KEYS:
            data[key] = None if str(raw).lower() == "none" else float(parse_number(raw))
        elif key in _STR_KEYS:
            data[key] = str(raw).strip()
        else:
            raise ConfigError(f"unknown key {key!r} in [protocol]")
    for required in ("n", "m", "B"):
        if required not in data:
            raise ConfigError(f"missing required key {required!r} in [protocol]")
    return ProtocolConfig(**data)


def load_ini(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keep B, L, D distinct from b, l, d
    try:
        with open(Path(path)) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return parser
