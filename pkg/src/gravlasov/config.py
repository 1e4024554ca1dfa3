"""Line-oriented ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored. Every key has a default; unknown
keys are rejected. ``auto`` leaves ``dt``/``eps`` to the spacing rules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

from .initial_data import InitialDataParams, TruncationParams, beta_ceiling
from .study import MAX_PARTICLES, StudySpec

__all__ = ["ConfigError", "RunConfig", "parse_config", "load_config"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # c1 = 0.03 keeps E(0) > 0 across the default family (see README)
    c1: float = 0.03
    lam: float = 1.0
    alpha: float = 2.0
    n: float = 16.0
    beta: float = 0.3
    n_list: tuple = (8.0, 16.0, 32.0, 64.0)
    particles: int = 2048
    study_particles: int = 4096
    seed: int = 0
    t_end: float = 2.0
    dt: float | None = None
    eps: float | None = None
    softening_factor: float = 0.02
    dt_factor: float = 0.05
    method: str = "auto"
    theta: float = 0.4
    direct_limit: int = 4096
    c3: float = 1.0
    record_every: int = 1
    assert_bounds: bool = True
    energy_tol: float = 1e-3
    grid_cells: int = 8
    out: str = "gravlasov-out"

    def initial_params(self) -> InitialDataParams:
        return InitialDataParams(self.c1, self.lam, self.alpha)

    def truncation(self) -> TruncationParams:
        return TruncationParams(self.n, self.beta)

    def study_spec(self) -> StudySpec:
        return StudySpec(self.initial_params(), self.beta, self.n_list, horizon=self.t_end,
                         particles=self.study_particles, seed=self.seed, dt=self.dt, eps=self.eps,
                         softening_factor=self.softening_factor, dt_factor=self.dt_factor,
                         c3=self.c3, record_every=self.record_every, method=self.method,
                         theta=self.theta, direct_limit=self.direct_limit,
                         assert_bounds=self.assert_bounds)

    def to_text(self) -> str:
        """Effective configuration in the input syntax; parses back to an equal config."""
        lines = []
        for f in fields(self):
            lines.append(f"{_KEY_OF[f.name]} = {_render(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"


# config keys that differ from attribute names
_KEY_OF = {f.name: f.name for f in fields(RunConfig)}
_KEY_OF["lam"] = "lambda"
_ATTR_OF = {v: k for k, v in _KEY_OF.items()}


def _render(v) -> str:
    if v is None:
        return "auto"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    return str(v)


def _as_float(key, text):
    try:
        val = float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {text!r}") from None
    if not math.isfinite(val):
        raise ConfigError(f"{key}: value must be finite")
    return val


def _as_int(key, text):
    try:
        return int(text, 0)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from None


def _as_bool(key, text):
    low = text.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"{key}: expected true/false, got {text!r}")


def _convert(attr, key, text):
    kind = {f.name: f.type for f in fields(RunConfig)}[attr]
    if kind == "float | None":
        return None if text.lower() == "auto" else _as_float(key, text)
    if kind == "float":
        return _as_float(key, text)
    if kind == "int":
        return _as_int(key, text)
    if kind == "bool":
        return _as_bool(key, text)
    if kind == "tuple":
        parts = [p for p in text.replace(",", " ").split() if p]
        return tuple(_as_float(key, p) for p in parts)
    return text


def _validate(cfg: RunConfig) -> None:
    if not cfg.alpha > 1:
        raise ConfigError(f"alpha = {cfg.alpha}: the decay hypothesis requires alpha > 1")
    if not cfg.c1 > 0:
        raise ConfigError(f"c1 = {cfg.c1}: the datum amplitude must be positive")
    if not cfg.lam > 0:
        raise ConfigError(f"lambda = {cfg.lam}: the velocity decay rate must be positive")
    if not cfg.n > 0:
        raise ConfigError(f"n = {cfg.n}: the velocity cutoff must be positive")
    if not cfg.beta > 0:
        raise ConfigError(f"beta = {cfg.beta}: the spatial cutoff exponent must be positive")
    if cfg.assert_bounds and cfg.alpha < 3 and cfg.beta >= beta_ceiling(cfg.alpha):
        raise ConfigError(
            f"beta = {cfg.beta}: bound assertions require 0 < beta < 2/(5(3-alpha)) ="
            f" {beta_ceiling(cfg.alpha):.6g} for alpha = {cfg.alpha}")
    ns = cfg.n_list
    if len(ns) < 1 or any(b <= a for a, b in zip(ns, ns[1:])) or ns[0] <= 0:
        raise ConfigError(f"n_list must be positive and strictly increasing, got {ns}")
    for key in ("particles", "study_particles"):
        p = getattr(cfg, key)
        if not 1 <= p <= MAX_PARTICLES:
            raise ConfigError(f"{key} = {p}: must lie in [1, {MAX_PARTICLES}]")
    if not 0 <= cfg.seed < 2 ** 64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    if not cfg.t_end > 0:
        raise ConfigError("t_end must be positive")
    for key in ("dt", "eps"):
        v = getattr(cfg, key)
        if v is not None and (v < 0 or (key == "dt" and v == 0)):
            raise ConfigError(f"{key} = {v}: out of range")
    if cfg.method not in ("auto", "direct", "tree"):
        raise ConfigError(f"method must be auto, direct or tree, got {cfg.method!r}")
    if cfg.theta < 0:
        raise ConfigError("theta must be nonnegative")
    if cfg.record_every < 1 or cfg.grid_cells < 1 or cfg.direct_limit < 0:
        raise ConfigError("record_every and grid_cells must be positive")
    if not cfg.energy_tol > 0:
        raise ConfigError("energy_tol must be positive")


def parse_config(text: str, **overrides) -> RunConfig:
    """Parse and validate configuration text; ``overrides`` replace parsed values."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (p.strip() for p in line.split("=", 1))
        if key not in _ATTR_OF:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        attr = _ATTR_OF[key]
        if attr in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[attr] = _convert(attr, key, val)
    for attr, val in overrides.items():
        if val is not None:
            values[attr] = val
    cfg = RunConfig(**values)
    _validate(cfg)
    return cfg


def load_config(path, **overrides) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), **overrides)
