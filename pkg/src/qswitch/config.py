"""Run configuration shared by the command-line subcommands.

A configuration is a flat JSON object.  Keys left out take the defaults
below; unknown keys are rejected.  Command-line flags override file values.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from typing import Optional, Union

from .capacity import MAX_CAPACITY_CLIENTS
from .congestion import SERVICE_RULES, CongestionParams, required_memory

MODELS = ("decoherent", "congestion")
PROFILES = ("uniform", "skewed")


class ConfigError(ValueError):
    """A configuration value is missing, malformed or out of range."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class RunConfig:
    model: str = "decoherent"
    n: int = 6
    tau: Union[float, tuple] = 0.8
    profile: str = "uniform"
    total_load: Optional[float] = None
    skew_factor: float = 16.0
    heavy_types: Optional[tuple] = None
    p_req: Union[float, tuple, None] = None
    p_lle: Union[float, tuple, None] = None
    b: Union[float, tuple, None] = None
    b_hat: Union[float, tuple, None] = None
    direction: Optional[tuple] = None
    alpha: float = 1.0
    gamma: float = 2.0
    delta: Optional[float] = None
    memory: Optional[int] = None
    service_rule: str = "per-request"
    gap_cost: Optional[str] = None
    slots: int = 50000
    seed: int = 0
    seeds: tuple = tuple(range(10))
    checkpoint: int = 100
    loads: tuple = ()
    load_fractions: tuple = ()
    alphas: tuple = (1.0, 0.1, 0.01)
    out: Optional[str] = None
    force: bool = False

    # -- (de)serialisation -------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        extra = sorted(set(data) - known)
        if extra:
            raise ConfigError(extra[0], "unknown configuration key")
        clean = {k: _freeze(v) for k, v in data.items()}
        return cls(**clean)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"not valid JSON ({exc.msg})") from None
        if not isinstance(data, dict):
            raise ConfigError("config", "expected a JSON object")
        return cls.from_dict(data)

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())

    def override(self, **changes) -> "RunConfig":
        """Apply non-None overrides, e.g. parsed command-line flags."""
        return replace(self, **{k: _freeze(v) for k, v in changes.items() if v is not None})

    # -- derived values ----------------------------------------------------

    def congestion_params(self) -> CongestionParams:
        a, g = self.alpha, self.gamma
        delta = 2 * (g + a) + a if self.delta is None else self.delta
        memory = required_memory(a, g) if self.memory is None else self.memory
        return CongestionParams(a, g, delta, memory, self.service_rule)

    def validate(self) -> "RunConfig":
        """Check every field against the preconditions of the run it drives."""
        if self.model not in MODELS:
            raise ConfigError("model", f"must be one of {', '.join(MODELS)}")
        if not isinstance(self.n, int) or isinstance(self.n, bool) or self.n < 2:
            raise ConfigError("n", "need an integer of at least 2 clients")
        if self.n > MAX_CAPACITY_CLIENTS:
            raise ConfigError("n", f"at most {MAX_CAPACITY_CLIENTS} clients are supported")
        _check_probs("tau", self.tau, self.n)
        d = self.n * (self.n - 1) // 2
        if self.profile not in PROFILES:
            raise ConfigError("profile", f"must be one of {', '.join(PROFILES)}")
        if self.total_load is not None and self.total_load < 0:
            raise ConfigError("total_load", "must be nonnegative")
        if self.skew_factor <= 0:
            raise ConfigError("skew_factor", "must be positive")
        if self.heavy_types is not None and any(not 0 <= int(e) < d for e in self.heavy_types):
            raise ConfigError("heavy_types", f"request indices must lie in [0, {d})")
        if self.p_req is not None:
            _check_probs("p_req", self.p_req, d)
        if self.p_lle is not None:
            _check_probs("p_lle", self.p_lle, self.n)
        if self.service_rule not in SERVICE_RULES:
            raise ConfigError("service_rule", f"must be one of {', '.join(SERVICE_RULES)}")
        if self.gap_cost is not None and self.gap_cost not in SERVICE_RULES:
            raise ConfigError("gap_cost", f"must be one of {', '.join(SERVICE_RULES)}")
        if not isinstance(self.slots, int) or self.slots < 0:
            raise ConfigError("slots", "must be a nonnegative integer")
        if not isinstance(self.checkpoint, int) or self.checkpoint < 1:
            raise ConfigError("checkpoint", "must be a positive integer")
        for key in ("loads", "load_fractions"):
            if any(not isinstance(x, (int, float)) or x < 0 for x in getattr(self, key)):
                raise ConfigError(key, "must be nonnegative numbers")
        for key, size in (("b", d), ("b_hat", self.n), ("direction", d)):
            v = getattr(self, key)
            if v is None:
                continue
            vals = v if isinstance(v, tuple) else (v,)
            if len(vals) not in (1, size):
                raise ConfigError(key, f"expected 1 or {size} values, got {len(vals)}")
            if any(not isinstance(x, (int, float)) or isinstance(x, bool) or not x >= 0 for x in vals):
                raise ConfigError(key, "rates must be finite and nonnegative")
        if not isinstance(self.seeds, tuple) or any(not isinstance(s, int) for s in self.seeds):
            raise ConfigError("seeds", "must be a list of integers")
        if self.model == "congestion":
            try:
                self.congestion_params()
            except ValueError as exc:
                raise ConfigError("alpha/gamma/delta/memory", str(exc)) from None
            for a in self.alphas:
                if not 0 < a <= 1:
                    raise ConfigError("alphas", "step sizes must lie in (0, 1]")
        return self


def _freeze(v):
    if isinstance(v, list):
        return tuple(_freeze(x) for x in v)
    return v


def _check_probs(key: str, value, size: int):
    vals = value if isinstance(value, tuple) else (value,)
    if len(vals) not in (1, size):
        raise ConfigError(key, f"expected 1 or {size} values, got {len(vals)}")
    for v in vals:
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not 0 <= v <= 1:
            raise ConfigError(key, f"probabilities must lie in [0, 1], got {v!r}")


__all__ = ["RunConfig", "ConfigError", "MODELS", "PROFILES"]
