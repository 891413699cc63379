"""Run configuration: one ``key = value`` text file plus command-line overrides.

Keys prefixed ``synthetic.`` fill the :class:`SyntheticSpec`. Lists are
comma-separated. Every value is validated before any computation starts.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable

from .anomaly import DEFAULT_SWEEP
from .backtest import DEFAULT_DEPTHS, DEFAULT_LAMBDAS
from .errors import ConfigError
from .synthetic import SyntheticSpec

PROB_MODELS = ("ea", "ea_ev", "naive", "gamlss", "qra", "gbqrt")
MODEL_LABELS = {"ea": "EA", "ea_ev": "EA-EV", "naive": "Naive", "gamlss": "GAMLSS", "qra": "QRA", "gbqrt": "GBQRT"}
_SECTION = "run"


@dataclass(frozen=True)
class RunConfig:
    input: str = "synthetic"
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    train_year: int = 2017
    validation_year: int = 2018
    test_year: int = 2019
    heating_start: tuple = (9, 1)
    heating_end: tuple = (5, 31)
    holidays: tuple = ()
    validation_days_limit: int = 0
    test_days_limit: int = 0
    models: tuple = PROB_MODELS
    lasso_grid: tuple = DEFAULT_LAMBDAS
    gam_grid: tuple = DEFAULT_LAMBDAS
    gbr_grid: tuple = DEFAULT_DEPTHS
    retrain_every_days: int = 1
    gbr_retrain_every_days: int = 0
    combiner_window_days: int = 365
    gamlss_refit_every_days: int = 1
    qra_refit_every_days: int = 1
    gbqrt_refit_every_days: int = 1
    gamlss_penalty: float = 1.0
    gamlss_knots: int = 20
    crps_samples: int = 1000
    threshold_sweep: tuple = DEFAULT_SWEEP
    anomaly_runs: int = 30
    anomaly_rate: float = 0.05
    master_seed: int = 0
    output_dir: str = "heatcast_out"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.train_year < self.validation_year < self.test_year:
            raise ConfigError("splits must be ordered: train_year < validation_year < test_year")
        unknown = [m for m in self.models if m not in PROB_MODELS]
        if unknown:
            raise ConfigError(f"unknown model name(s): {', '.join(unknown)}; known: {', '.join(PROB_MODELS)}")
        if len(set(self.models)) != len(self.models):
            raise ConfigError("duplicate model names")
        for name in ("lasso_grid", "gam_grid", "gbr_grid", "threshold_sweep"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must not be empty")
        if any(lam < 0 for lam in self.lasso_grid + self.gam_grid):
            raise ConfigError("lambda grids must be nonnegative")
        if any(not 1 <= d <= 6 for d in self.gbr_grid):
            raise ConfigError("gbr depths must lie in 1..6")
        if any(not 0 < t < 0.5 for t in self.threshold_sweep):
            raise ConfigError("threshold levels must lie in (0, 0.5)")
        for name in ("retrain_every_days", "combiner_window_days", "gamlss_refit_every_days",
                     "qra_refit_every_days", "gbqrt_refit_every_days", "anomaly_runs", "gamlss_knots"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.crps_samples < 2:
            raise ConfigError("crps_samples must be at least 2")
        if not 0 < self.anomaly_rate < 1:
            raise ConfigError("anomaly_rate must lie in (0, 1)")
        if min(self.validation_days_limit, self.test_days_limit, self.gbr_retrain_every_days) < 0:
            raise ConfigError("day limits and cadences must be nonnegative")
        for md in (self.heating_start, self.heating_end):
            if not (1 <= md[0] <= 12 and 1 <= md[1] <= 31):
                raise ConfigError(f"bad month-day {md}")

    def retrain_every(self, method: str) -> int:
        if method == "gbr" and self.gbr_retrain_every_days:
            return self.gbr_retrain_every_days
        return self.retrain_every_days

    def canonical(self) -> dict:
        """Everything that influences results (the output directory does not)."""
        d = asdict(self)
        d.pop("output_dir")
        return json.loads(json.dumps(d, sort_keys=True, default=list))

    @property
    def config_hash(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def header(self) -> str:
        return f"config_hash={self.config_hash}, master_seed={self.master_seed}"

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "synthetic":
                for sf in fields(value):
                    lines.append(f"synthetic.{sf.name} = {_fmt(getattr(value, sf.name))}")
            elif f.name in ("heating_start", "heating_end"):
                lines.append(f"{f.name} = {value[0]:02d}-{value[1]:02d}")
            else:
                lines.append(f"{f.name} = {_fmt(value)}")
        return "\n".join(lines) + "\n"


def _fmt(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _items(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _convert(name: str, annotation, text: str, default):
    if name in ("heating_start", "heating_end"):
        month, day = text.strip().split("-")
        return (int(month), int(day))
    if name == "holidays":
        return tuple(_items(text))
    if isinstance(default, tuple):
        elem = type(default[0]) if default else str
        return tuple(elem(v) for v in _items(text))
    if isinstance(default, bool):
        return _parse_bool(text)
    if isinstance(default, (int, float, str)):
        return type(default)(text.strip())
    raise ValueError(f"cannot parse {name}")


def _apply(config: RunConfig, pairs: Iterable[tuple[str, str]]) -> RunConfig:
    top = {f.name: f for f in fields(RunConfig)}
    syn = {f.name: f for f in fields(SyntheticSpec)}
    updates: dict = {}
    syn_updates: dict = {}
    for key, text in pairs:
        key = key.strip()
        try:
            if key.startswith("synthetic."):
                sub = key.split(".", 1)[1]
                if sub not in syn:
                    raise ConfigError(f"unknown config key {key!r}")
                syn_updates[sub] = _convert(sub, syn[sub].type, text, getattr(config.synthetic, sub))
            elif key in top and key != "synthetic":
                updates[key] = _convert(key, top[key].type, text, getattr(config, key))
            else:
                raise ConfigError(f"unknown config key {key!r}")
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from None
    try:
        if syn_updates:
            updates["synthetic"] = replace(config.synthetic, **syn_updates)
        return replace(config, **updates)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_overrides(overrides: Iterable[str]) -> list[tuple[str, str]]:
    pairs = []
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, value = item.split("=", 1)
        pairs.append((key.strip(), value.strip()))
    return pairs


def load_config(path: str | Path | None = None, overrides: Iterable[str] = ()) -> RunConfig:
    """Defaults, then the file (if any), then ``key=value`` overrides."""
    pairs: list[tuple[str, str]] = []
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        parser.optionxform = str
        try:
            parser.read_string(f"[{_SECTION}]\n" + text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from None
        pairs.extend(parser.items(_SECTION))
    pairs.extend(parse_overrides(overrides))
    return _apply(RunConfig(), pairs)
