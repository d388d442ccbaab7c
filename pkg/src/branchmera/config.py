"""Key-value run configuration.

One ``key = value`` per line, ``#`` starts a comment. Lists are comma
separated. Unknown keys and out-of-range values are rejected.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    model: str = "xx"
    mu: float = 0.0
    g: float = 1.0
    chi_trunk: int = 4
    chi_branch: int = 4
    s_star_list: list = field(default_factory=lambda: [1, 2, 3])
    swap_kind: str = "fermionic"
    branching: bool = True
    sweeps: int = 200
    branch_sweeps: int = 4
    n_transitional: int = 2
    tol: float = 1e-9
    seed: int | None = None
    n_ops: int = 12
    checkpoint_every: int = 0

    def validate(self, need_seed: bool = False):
        if self.model not in ("xx", "ising"):
            raise ConfigError(f"model must be xx or ising, got {self.model!r}")
        if not -4.0 <= self.mu <= 4.0:
            raise ConfigError("mu must lie in [-4, 4]")
        if not 0.0 < self.g <= 10.0:
            raise ConfigError("g must lie in (0, 10]")
        for key in ("chi_trunk", "chi_branch"):
            if not 2 <= getattr(self, key) <= 16:
                raise ConfigError(f"{key} must lie in [2, 16]")
        if not self.s_star_list or any(not 0 <= s <= 6 for s in self.s_star_list):
            raise ConfigError("s_star_list entries must lie in [0, 6]")
        if self.swap_kind not in ("fermionic", "bosonic"):
            raise ConfigError("swap_kind must be fermionic or bosonic")
        if self.sweeps < 1 or self.branch_sweeps < 1 or self.n_transitional < 1:
            raise ConfigError("sweep counts and n_transitional must be positive")
        if not 0.0 <= self.tol < 1.0:
            raise ConfigError("tol must lie in [0, 1)")
        if self.n_ops < 1:
            raise ConfigError("n_ops must be positive")
        if need_seed and self.seed is None:
            raise ConfigError("seed is required for optimize runs")
        return self

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


_BOOL = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _convert(key: str, raw: str, default):
    try:
        if isinstance(default, bool):
            return _BOOL[raw.lower()]
        if isinstance(default, list):
            return [int(x) for x in raw.replace(" ", "").split(",") if x]
        if key == "seed":
            return int(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def parse_config(text: str) -> RunConfig:
    cfg = RunConfig()
    seen = set()
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in cfg.__dataclass_fields__:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        seen.add(key)
        setattr(cfg, key, _convert(key, raw, getattr(RunConfig(), key)))
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
