"""Scenario configuration: defaults, flat-text loader, and validation.

Config files are plain ``key = value`` lines; ``#`` starts a comment.  Grid
values are comma-separated.  Every key is optional — missing keys fall back
to the documented defaults (logged as they are applied), unknown keys and
malformed values raise ConfigError naming the offending field.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, fields

from .channel import ArrayGeometry

log = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0

RECONSTRUCTION_MODES = ("mmse", "no_feedback", "dft")
ALLOCATORS = ("greedy", "uniform", "none")
PRECODERS = ("gpip", "zf", "wmmse")
SE_METHODS = ("gpip_robust", "gpip_plain", "gpip_nofeedback", "gpip_dft",
              "zf_mmse", "zf_nofeedback", "zf_dft", "wmmse_perfect")


class ConfigError(ValueError):
    """Configuration problem tied to a specific field."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"config field '{field_name}': {message}")


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class ScenarioConfig:
    """All simulation knobs; physical defaults follow the reference scenario
    (10/12 GHz carriers, -113 dBm noise, 500 m cell), sizes default to desk
    scale."""

    n_antennas: int = 64
    n_users: int = 8
    n_paths: int = 3
    lambda_ul: float = SPEED_OF_LIGHT / 10e9
    lambda_dl: float = SPEED_OF_LIGHT / 12e9
    spacing: float = 0.0          # 0 means "derive as lambda_ul / 2"
    isd: float = 500.0
    noise_dbm: float = -113.0
    power_dbm_grid: tuple = (43.0,)
    b_tot: int = 15
    b_tot_grid: tuple = (0, 3, 6, 9, 12, 15, 18, 21)
    l_grid: tuple = ()            # empty means "just n_paths"
    n_grid: tuple = ()            # empty means "just n_antennas"
    trials: int = 200
    seed: int = 1234
    pl_exponent: float = 3.0
    pl_ref_gain_db: float = -54.0
    pl_ref_distance: float = 1.0
    decay_ratio: float = 0.7
    excess_range: float = 100.0
    aoa_sigma: float = 0.0
    gain_rel_sigma: float = 0.0
    reconstruction: str = "mmse"
    allocator: str = "greedy"
    precoder: str = "gpip"
    se_methods: tuple = ("gpip_robust", "gpip_plain", "zf_mmse",
                         "zf_nofeedback", "wmmse_perfect")
    gpip_epsilon: float = 1e-4
    gpip_max_iter: int = 50
    workers: int = 1

    def __post_init__(self):
        if self.spacing == 0.0:
            object.__setattr__(self, "spacing", self.lambda_ul / 2.0)
        if not self.l_grid:
            object.__setattr__(self, "l_grid", (self.n_paths,))
        if not self.n_grid:
            object.__setattr__(self, "n_grid", (self.n_antennas,))
        _validate(self)

    @property
    def noise_watts(self) -> float:
        return dbm_to_watts(self.noise_dbm)

    @property
    def pl_ref_gain(self) -> float:
        return 10.0 ** (self.pl_ref_gain_db / 10.0)

    def power_watts(self, power_dbm: float | None = None) -> float:
        return dbm_to_watts(self.power_dbm_grid[0] if power_dbm is None else power_dbm)

    def geometry(self, n_antennas: int | None = None) -> ArrayGeometry:
        return ArrayGeometry(
            num_antennas=self.n_antennas if n_antennas is None else n_antennas,
            spacing=self.spacing,
            lambda_ul=self.lambda_ul,
            lambda_dl=self.lambda_dl,
        )

    def replace(self, **changes) -> "ScenarioConfig":
        current = {f.name: getattr(self, f.name) for f in fields(self)}
        current.update(changes)
        return ScenarioConfig(**current)


def _validate(cfg: ScenarioConfig) -> None:
    def need(cond, field_name, msg):
        if not cond:
            raise ConfigError(field_name, msg)

    need(cfg.n_antennas >= 1, "n_antennas", "must be >= 1")
    need(cfg.n_users >= 1, "n_users", "must be >= 1")
    need(cfg.n_paths >= 1, "n_paths", "must be >= 1")
    need(cfg.lambda_ul > 0, "lambda_ul", "must be positive")
    need(cfg.lambda_dl > 0, "lambda_dl", "must be positive")
    need(cfg.spacing > 0, "spacing", "must be positive")
    need(cfg.isd > 0, "isd", "must be positive")
    need(len(cfg.power_dbm_grid) > 0, "power_dbm_grid", "must be non-empty")
    need(cfg.b_tot >= 0, "b_tot", "must be >= 0")
    need(len(cfg.b_tot_grid) > 0, "b_tot_grid", "must be non-empty")
    need(all(b >= 0 for b in cfg.b_tot_grid), "b_tot_grid", "entries must be >= 0")
    need(all(l >= 1 for l in cfg.l_grid), "l_grid", "entries must be >= 1")
    need(all(n >= 1 for n in cfg.n_grid), "n_grid", "entries must be >= 1")
    need(cfg.trials >= 1, "trials", "must be >= 1")
    need(cfg.seed >= 0, "seed", "must be >= 0")
    need(cfg.pl_ref_distance > 0, "pl_ref_distance", "must be positive")
    need(0 < cfg.decay_ratio <= 1, "decay_ratio", "must be in (0, 1]")
    need(cfg.excess_range >= 0, "excess_range", "must be >= 0")
    need(cfg.aoa_sigma >= 0, "aoa_sigma", "must be >= 0")
    need(cfg.gain_rel_sigma >= 0, "gain_rel_sigma", "must be >= 0")
    need(cfg.reconstruction in RECONSTRUCTION_MODES, "reconstruction",
         f"must be one of {RECONSTRUCTION_MODES}")
    need(cfg.allocator in ALLOCATORS, "allocator", f"must be one of {ALLOCATORS}")
    need(cfg.precoder in PRECODERS, "precoder", f"must be one of {PRECODERS}")
    need(len(cfg.se_methods) > 0, "se_methods", "must be non-empty")
    for m in cfg.se_methods:
        need(m in SE_METHODS, "se_methods", f"unknown method {m!r}; known: {SE_METHODS}")
    need(cfg.gpip_epsilon > 0, "gpip_epsilon", "must be positive")
    need(cfg.gpip_max_iter >= 1, "gpip_max_iter", "must be >= 1")
    need(cfg.workers >= 1, "workers", "must be >= 1")


def _parse_int(text: str) -> int:
    return int(text, 10)


def _parse_float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError("must be finite")
    return value


def _parse_int_tuple(text: str) -> tuple:
    return tuple(int(tok.strip(), 10) for tok in text.split(",") if tok.strip())


def _parse_float_tuple(text: str) -> tuple:
    return tuple(float(tok.strip()) for tok in text.split(",") if tok.strip())


def _parse_str_tuple(text: str) -> tuple:
    return tuple(tok.strip() for tok in text.split(",") if tok.strip())


_PARSERS = {
    "n_antennas": _parse_int,
    "n_users": _parse_int,
    "n_paths": _parse_int,
    "lambda_ul": _parse_float,
    "lambda_dl": _parse_float,
    "spacing": _parse_float,
    "isd": _parse_float,
    "noise_dbm": _parse_float,
    "power_dbm_grid": _parse_float_tuple,
    "b_tot": _parse_int,
    "b_tot_grid": _parse_int_tuple,
    "l_grid": _parse_int_tuple,
    "n_grid": _parse_int_tuple,
    "trials": _parse_int,
    "seed": _parse_int,
    "pl_exponent": _parse_float,
    "pl_ref_gain_db": _parse_float,
    "pl_ref_distance": _parse_float,
    "decay_ratio": _parse_float,
    "excess_range": _parse_float,
    "aoa_sigma": _parse_float,
    "gain_rel_sigma": _parse_float,
    "reconstruction": str,
    "allocator": str,
    "precoder": str,
    "se_methods": _parse_str_tuple,
    "gpip_epsilon": _parse_float,
    "gpip_max_iter": _parse_int,
    "workers": _parse_int,
}

PAPER_SCALE_OVERRIDES = {"n_antennas": 256, "n_users": 16, "trials": 1000}


def parse_config_text(text: str) -> dict:
    """Raw key/value extraction from flat config text."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(stripped.split()[0], f"line {lineno} is not 'key = value'")
        key, value = stripped.split("=", 1)
        key = key.strip()
        if key in raw:
            raise ConfigError(key, f"duplicated at line {lineno}")
        raw[key] = value.strip()
    return raw


def config_from_mapping(raw: dict, paper_scale: bool = False) -> ScenarioConfig:
    """Typed, validated config from raw string values; defaults fill the gaps."""
    values = {}
    for key, value in raw.items():
        if key not in _PARSERS:
            raise ConfigError(key, "unknown field")
        try:
            values[key] = _PARSERS[key](value)
        except (ValueError, TypeError) as exc:
            raise ConfigError(key, f"cannot parse {value!r}: {exc}") from exc
    if paper_scale:
        for key, override in PAPER_SCALE_OVERRIDES.items():
            if key not in values:
                values[key] = override
    for field_info in fields(ScenarioConfig):
        if field_info.name not in values:
            log.debug("field '%s' not set; using default", field_info.name)
    return ScenarioConfig(**values)


def load_config(path, paper_scale: bool = False) -> ScenarioConfig:
    """Read and validate a flat-text scenario file."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return config_from_mapping(parse_config_text(text), paper_scale=paper_scale)
