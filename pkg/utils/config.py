"""Run configuration: defaults, HITTING_* environment, a dotenv-style file, then flags."""
import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Callable, Dict, Mapping, Optional, Tuple

from dotenv import dotenv_values

from generators.models import MAX_STATES, PATTERNS, GeneratorSpec, ModelKind, build_spec
from utils.errors import ConfigError, HittingTimesError
from utils.logger import get_logger

logger = get_logger(__name__)

ENV_PREFIX = "HITTING_"
STRATEGIES = ("kernel", "upsets")
SAMPLERS = ("rejection", "fleming-viot")
STARTS = ("random", "mismatch")


@dataclass(frozen=True)
class Caps:
    states: int = MAX_STATES
    generator_sites: int = 6
    domination_sites: int = 14


@dataclass(frozen=True)
class RunConfig:
    model: str = "ssep"
    d: int = 2
    n: int = 1
    rho: float = 0.5
    pattern: str = "A1"
    beta: float = 1.0
    a: float = 1.0
    b: float = 1.0
    C: Optional[float] = None
    experiment: str = "default"
    seed: int = 0
    trials: int = 10_000
    workers: Optional[int] = None
    output_dir: str = "runs"
    t: Optional[float] = None
    r: float = 1.0
    horizon: Optional[float] = None
    t_max: int = 2000
    strategy: str = "kernel"
    method: str = "rejection"
    start: str = "random"
    naive: bool = False
    t_grid: Tuple[float, ...] = ()
    n_grid: Tuple[int, ...] = (1, 2, 3, 4)
    caps: Caps = field(default_factory=Caps)

    def spec(self) -> GeneratorSpec:
        try:
            return build_spec(self.model, self.d, self.n, self.rho, self.pattern, self.beta, self.a, self.b)
        except HittingTimesError as exc:
            raise ConfigError("model", str(exc)) from exc

    def as_dict(self) -> dict:
        out = asdict(self)
        out["t_grid"] = list(self.t_grid)
        out["n_grid"] = list(self.n_grid)
        return out


def _parse_bool(text: str) -> bool:
    lowered = str(text).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_optional_float(text: str) -> Optional[float]:
    return None if str(text).strip().lower() in ("", "none", "auto") else float(text)


def _parse_optional_int(text) -> Optional[int]:
    return None if str(text).strip().lower() in ("", "none", "auto") else int(text)


def _parse_floats(text) -> Tuple[float, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(float(x) for x in text)
    return tuple(float(x) for x in str(text).replace(",", " ").split())


def _parse_ints(text) -> Tuple[int, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(int(x) for x in text)
    return tuple(int(x) for x in str(text).replace(",", " ").split())


# dotted key -> (attribute, parser); caps.* live on the nested dataclass
KEYS: Dict[str, Tuple[str, Callable[[Any], Any]]] = {
    "model.kind": ("model", str),
    "model.d": ("d", int),
    "model.n": ("n", int),
    "model.rho": ("rho", float),
    "model.pattern": ("pattern", str),
    "model.beta": ("beta", float),
    "model.a": ("a", float),
    "model.b": ("b", float),
    "model.C": ("C", _parse_optional_float),
    "run.experiment": ("experiment", str),
    "run.seed": ("seed", int),
    "run.trials": ("trials", int),
    "run.workers": ("workers", _parse_optional_int),
    "run.output_dir": ("output_dir", str),
    "run.t": ("t", _parse_optional_float),
    "run.r": ("r", float),
    "run.horizon": ("horizon", _parse_optional_float),
    "run.t_max": ("t_max", int),
    "run.strategy": ("strategy", str),
    "run.method": ("method", str),
    "run.start": ("start", str),
    "run.naive": ("naive", _parse_bool),
    "grid.t": ("t_grid", _parse_floats),
    "grid.n": ("n_grid", _parse_ints),
    "caps.states": ("states", int),
    "caps.generator_sites": ("generator_sites", int),
    "caps.domination_sites": ("domination_sites", int),
}


def _env_name(key: str) -> str:
    return ENV_PREFIX + key.replace(".", "_").upper()


def _from_environment(environ: Mapping[str, str]) -> Dict[str, str]:
    return {key: environ[_env_name(key)] for key in KEYS if _env_name(key) in environ}


def _from_file(path: str) -> Dict[str, str]:
    if not os.path.exists(path):
        raise ConfigError("config", f"file not found: {path}")
    raw = dotenv_values(path)
    for key in raw:
        if key not in KEYS:
            raise ConfigError(key, f"unknown key; known keys are {', '.join(sorted(KEYS))}")
    return {k: v for k, v in raw.items() if v is not None}


def _apply(config: RunConfig, values: Mapping[str, Any]) -> RunConfig:
    top, caps = {}, {}
    for key, raw in values.items():
        if key not in KEYS:
            raise ConfigError(key, "unknown key")
        attr, parse = KEYS[key]
        try:
            value = parse(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(key, f"invalid value {raw!r} ({exc})") from exc
        (caps if key.startswith("caps.") else top)[attr] = value
    if caps:
        top["caps"] = replace(config.caps, **caps)
    return replace(config, **top)


def validate(config: RunConfig) -> RunConfig:
    if config.model not in ModelKind.names():
        raise ConfigError("model.kind", f"unknown model {config.model!r}; allowed: {', '.join(ModelKind.names())}")
    if config.pattern not in PATTERNS:
        raise ConfigError("model.pattern", f"unknown pattern {config.pattern!r}; allowed: {', '.join(PATTERNS)}")
    if config.d < 1:
        raise ConfigError("model.d", "must be at least 1")
    if config.n < 0:
        raise ConfigError("model.n", "must be non-negative")
    if not 0.0 < config.rho < 1.0:
        raise ConfigError("model.rho", "must lie in (0, 1)")
    for key, value in (("model.beta", config.beta), ("model.a", config.a), ("model.b", config.b)):
        if value <= 0:
            raise ConfigError(key, "must be positive")
    if config.C is not None and config.C <= 0:
        raise ConfigError("model.C", "must be positive")
    if config.trials < 1:
        raise ConfigError("run.trials", "must be at least 1")
    if config.seed < 0:
        raise ConfigError("run.seed", "must be non-negative")
    if config.workers is not None and config.workers < 1:
        raise ConfigError("run.workers", "must be at least 1")
    if config.r < 0:
        raise ConfigError("run.r", "must be non-negative")
    if config.strategy not in STRATEGIES:
        raise ConfigError("run.strategy", f"unknown strategy {config.strategy!r}; allowed: {', '.join(STRATEGIES)}")
    if config.method not in SAMPLERS:
        raise ConfigError("run.method", f"unknown sampler {config.method!r}; allowed: {', '.join(SAMPLERS)}")
    if config.start not in STARTS:
        raise ConfigError("run.start", f"unknown start {config.start!r}; allowed: {', '.join(STARTS)}")
    if any(t < 0 for t in config.t_grid) or list(config.t_grid) != sorted(config.t_grid):
        raise ConfigError("grid.t", "times must be non-negative and ascending")
    if any(n < 1 for n in config.n_grid):
        raise ConfigError("grid.n", "box half-widths must be at least 1")
    for f in fields(Caps):
        if getattr(config.caps, f.name) < 1:
            raise ConfigError(f"caps.{f.name}", "must be positive")
    return config


def load_config(
    path: Optional[str] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> RunConfig:
    """Defaults < HITTING_* environment < config file < ``overrides`` (dotted keys)."""
    config = RunConfig()
    config = _apply(config, _from_environment(os.environ if environ is None else environ))
    if path:
        config = _apply(config, _from_file(path))
    if overrides:
        config = _apply(config, {k: v for k, v in overrides.items() if v is not None})
    return validate(config)
