"""Experiment configuration, JSON loading and built-in presets.

A config file is a JSON object::

    {
      "name": "fig3",
      "system": {"n_t": 128, "n_r": 16, "n_subcarriers": 64, "n_paths": 8,
                 "n_selected": 3, "n_targets": 2, "f_c": 3e11, "bandwidth": 3e10},
      "sweep": {"axis": "snr_db", "values": [-20, -15, -10, -5, 0, 5, 10]},
      "trials": 500,
      "seed": 2023
    }

Every other field of :class:`ExperimentConfig` may appear at the top level.
``N_RF = K + L_S`` and ``N_S = L_S`` are derived, not configured.
"""

from __future__ import annotations

import dataclasses
import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

__all__ = [
    "SWEEP_AXES",
    "ConfigError",
    "SystemConfig",
    "SweepSpec",
    "ExperimentConfig",
    "load_config",
    "load_preset",
    "preset_names",
    "config_from_dict",
]

SWEEP_AXES = (
    "snr_db",
    "epsilon",
    "l_s",
    "bandwidth",
    "mismatch_dod",
    "mismatch_doa",
    "mismatch_target",
    "beampattern",
    "arraygain",
)
_ESTIMATION = ("genie", "estimated")
_SE_VARIANTS = ("paper", "derivation", "normalized")
_SCALES = ("unit", "array")
_FOPT = ("design", "actual")


class ConfigError(ValueError):
    """Invalid configuration; the message names the key and, when known, its line."""

    def __init__(self, message, key=None, detail=None):
        super().__init__(message)
        self.key = key
        self.detail = detail


@dataclass(frozen=True)
class SystemConfig:
    n_t: int = 128
    n_r: int = 16
    n_subcarriers: int = 64
    n_paths: int = 8
    n_selected: int = 3
    n_targets: int = 2
    f_c: float = 300e9
    bandwidth: float = 30e9

    @property
    def n_rf(self) -> int:
        return self.n_targets + self.n_selected

    @property
    def n_streams(self) -> int:
        return self.n_selected


@dataclass(frozen=True)
class SweepSpec:
    axis: str = "snr_db"
    values: tuple = (0.0,)


@dataclass(frozen=True)
class ExperimentConfig:
    """All knobs of one Monte Carlo experiment.

    Angles in ``targets_deg``, ``path_dods_deg`` and ``path_doas_deg`` fix the
    corresponding directions instead of drawing them.  Mismatch sweep values
    are in degrees.  ``bandwidth`` sweep values are in Hz.
    """

    name: str = "custom"
    system: SystemConfig = field(default_factory=SystemConfig)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    trials: int = 100
    seed: int = 2023
    epsilon: float = 0.5
    snr_db: float = 0.0
    estimation: str = "genie"
    se_variant: str = "normalized"
    channel_scale: str = "unit"
    fopt_channel: str = "design"
    sd_unwrap: bool = True
    gain_mean: float = 1.0
    gain_std: float = 0.1
    delay_max: float = 20e-9
    complex_gains: bool = False
    targets_deg: tuple | None = None
    path_dods_deg: tuple | None = None
    path_doas_deg: tuple | None = None
    mismatch_std_ratio: float = 0.1
    alt_tol: float = 1e-6
    alt_max_iter: int = 50
    beampattern_points: int = 361
    radar_snapshots: int = 64
    radar_snr_db: float = 10.0
    doa_grid_points: int = 2048
    pilot_tx: int = 32
    pilot_rx: int = 8
    omp_grid: int | None = None
    arraygain_n: int = 128
    arraygain_direction_deg: float = 40.0

    def __post_init__(self):
        validate(self)

    def replace(self, **changes) -> "ExperimentConfig":
        """Copy with top-level fields (or ``system=dict(...)`` entries) changed."""
        if isinstance(changes.get("system"), dict):
            changes["system"] = dataclasses.replace(self.system, **changes["system"])
        if isinstance(changes.get("sweep"), dict):
            sw = dict(changes["sweep"])
            if "values" in sw:
                sw["values"] = tuple(float(v) for v in sw["values"])
            changes["sweep"] = dataclasses.replace(self.sweep, **sw)
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _fail(key, msg, lines=None):
    where = ""
    if lines is not None and key in lines:
        where = f" (line {lines[key]})"
    raise ConfigError(f"{key}{where}: {msg}", key, msg)


def validate(cfg: ExperimentConfig, lines=None) -> None:
    """Check invariants; raises :class:`ConfigError`."""
    s = cfg.system
    for key in ("n_t", "n_r", "n_subcarriers", "n_paths", "n_selected", "n_targets"):
        v = getattr(s, key)
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            _fail(key, f"must be a positive integer, got {v!r}", lines)
    if s.n_selected > s.n_paths:
        _fail("n_selected", f"L_S = {s.n_selected} exceeds L = {s.n_paths}", lines)
    if s.n_streams > min(s.n_t, s.n_r):
        _fail("n_selected", f"N_S = L_S = {s.n_selected} exceeds min(N_T, N_R)", lines)
    if s.n_rf > s.n_t:
        _fail("n_targets", f"N_RF = K + L_S = {s.n_rf} exceeds N_T = {s.n_t}", lines)
    if not s.f_c > 0:
        _fail("f_c", "must be positive", lines)
    if not 0 <= s.bandwidth < 2 * s.f_c:
        _fail("bandwidth", "must lie in [0, 2 f_c)", lines)
    if cfg.sweep.axis not in SWEEP_AXES:
        _fail("axis", f"unknown sweep axis {cfg.sweep.axis!r}; choose from {', '.join(SWEEP_AXES)}", lines)
    if len(cfg.sweep.values) == 0 and cfg.sweep.axis not in ("beampattern", "arraygain"):
        _fail("values", "sweep needs at least one value", lines)
    if not isinstance(cfg.trials, int) or isinstance(cfg.trials, bool) or cfg.trials < 1:
        _fail("trials", f"must be an integer >= 1, got {cfg.trials!r}", lines)
    if not isinstance(cfg.seed, int) or isinstance(cfg.seed, bool) or not 0 <= cfg.seed < 2**64:
        _fail("seed", "must be a 64-bit non-negative integer", lines)
    if not 0 <= cfg.epsilon <= 1:
        _fail("epsilon", "must lie in [0, 1]", lines)
    for key, allowed in (
        ("estimation", _ESTIMATION),
        ("se_variant", _SE_VARIANTS),
        ("channel_scale", _SCALES),
        ("fopt_channel", _FOPT),
    ):
        if getattr(cfg, key) not in allowed:
            _fail(key, f"must be one of {', '.join(allowed)}, got {getattr(cfg, key)!r}", lines)
    axis, values = cfg.sweep.axis, cfg.sweep.values
    if axis == "epsilon" and any(not 0 <= v <= 1 for v in values):
        _fail("values", "epsilon values must lie in [0, 1]", lines)
    if axis == "l_s" and any(v != int(v) or not 1 <= v <= s.n_paths for v in values):
        _fail("values", f"L_S values must be integers in 1..{s.n_paths}", lines)
    if axis.startswith("mismatch") and any(v < 0 for v in values):
        _fail("values", "mismatch values must be non-negative", lines)
    if axis == "bandwidth" and any(not 0 <= v < 2 * s.f_c for v in values):
        _fail("values", "bandwidth values must lie in [0, 2 f_c)", lines)
    if cfg.targets_deg is not None and len(cfg.targets_deg) != s.n_targets:
        _fail("targets_deg", f"needs K = {s.n_targets} angles", lines)
    for key in ("path_dods_deg", "path_doas_deg"):
        v = getattr(cfg, key)
        if v is not None and len(v) != s.n_paths:
            _fail(key, f"needs L = {s.n_paths} angles", lines)
    if cfg.alt_max_iter < 1:
        _fail("alt_max_iter", "must be >= 1", lines)
    if cfg.beampattern_points < 2:
        _fail("beampattern_points", "must be >= 2", lines)
    if cfg.estimation == "estimated":
        if cfg.pilot_tx > s.n_t or cfg.pilot_rx > s.n_r:
            _fail("pilot_tx", "pilot counts must not exceed the array sizes", lines)
        if s.n_targets >= s.n_rf:
            _fail("n_targets", "MUSIC needs K < N_RF", lines)


def _key_lines(text: str) -> dict:
    # first line on which each quoted key appears
    lines = {}
    for n, line in enumerate(text.splitlines(), start=1):
        for key in re.findall(r'"([A-Za-z_][A-Za-z0-9_]*)"\s*:', line):
            lines.setdefault(key, n)
    return lines


_TOP_FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)} - {"system", "sweep"}
_SYSTEM_FIELDS = {f.name for f in dataclasses.fields(SystemConfig)}
_SWEEP_FIELDS = {f.name for f in dataclasses.fields(SweepSpec)}
_TUPLE_FIELDS = {"targets_deg", "path_dods_deg", "path_doas_deg"}


def config_from_dict(data: dict, text: str | None = None) -> ExperimentConfig:
    """Build and validate a config; ``text`` enables line numbers in errors."""
    lines = _key_lines(text) if text is not None else None
    if not isinstance(data, dict):
        raise ConfigError("top level: config must be a JSON object")
    for key in data:
        if key not in _TOP_FIELDS | {"system", "sweep"}:
            _fail(key, "unknown key", lines)
    system = data.get("system", {})
    sweep = data.get("sweep", {})
    for block, allowed in ((system, _SYSTEM_FIELDS), (sweep, _SWEEP_FIELDS)):
        if not isinstance(block, dict):
            raise ConfigError("system and sweep must be JSON objects")
        for key in block:
            if key not in allowed:
                _fail(key, "unknown key", lines)
    kwargs = {k: v for k, v in data.items() if k in _TOP_FIELDS}
    for key in _TUPLE_FIELDS & kwargs.keys():
        if kwargs[key] is not None:
            kwargs[key] = tuple(float(v) for v in kwargs[key])
    sweep = dict(sweep)
    if "values" in sweep:
        if not isinstance(sweep["values"], list):
            _fail("values", "must be a list", lines)
        sweep["values"] = tuple(float(v) for v in sweep["values"])
    try:
        return ExperimentConfig(**kwargs, system=SystemConfig(**system), sweep=SweepSpec(**sweep))
    except ConfigError as exc:
        if lines is not None and exc.key in lines:
            _fail(exc.key, exc.detail, lines)
        raise
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    """Load a JSON config file."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}: invalid JSON ({exc.msg})") from None
    return config_from_dict(data, text)


def preset_names() -> list[str]:
    root = resources.files("spimisac.experiments") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_preset(name: str) -> ExperimentConfig:
    """Load a built-in preset by name."""
    root = resources.files("spimisac.experiments") / "presets"
    res = root / f"{name}.json"
    if not res.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    text = res.read_text(encoding="utf-8")
    return config_from_dict(json.loads(text), text)
