"""Run configuration: one flat set of parameters grouped into INI sections."""
from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, fields

from .errors import ConfigError

# section of every key; also fixes the order of the written document
SECTIONS = {
    "spectral": ["sigma", "dense_max", "smoothing"],
    "schedule": ["k_init", "k_max", "steps", "inner_iterations", "first_level_iterations"],
    "embedding": ["w_spec", "w_xyz", "w_normal", "spectral_damping"],
    "alignment": ["lambda_feat", "lambda_arap", "feature_every_level", "hks_times",
                  "arap_max_inner", "arap_tol"],
    "mcmc": ["mcmc", "n_proposals", "sigma_match_sq", "surrogate_vertices", "surrogate_k_max",
             "surrogate_steps", "proposal_scale", "include_initial"],
    "rigid": ["rigid", "extra_random"],
    "run": ["seed", "threads", "cache_dir"],
}


@dataclass(frozen=True)
class RunConfig:
    sigma: float = 0.5
    dense_max: int = 1500
    smoothing: str = "shell"

    k_init: int = 6
    k_max: int = 500
    steps: int = 50
    inner_iterations: int = 1
    first_level_iterations: int = 3

    w_spec: float = 1.0
    w_xyz: float = 1.0
    w_normal: float = 1.0
    spectral_damping: bool = True

    lambda_feat: float = 1.0
    lambda_arap: float = 10.0
    feature_every_level: bool = True
    hks_times: int = 16
    arap_max_inner: int = 10
    arap_tol: float = 1e-5

    mcmc: bool = True
    n_proposals: int = 100
    sigma_match_sq: float = 0.001
    surrogate_vertices: int = 1000
    surrogate_k_max: int = 20
    surrogate_steps: int = 10
    proposal_scale: float = 1.0
    include_initial: bool = True

    rigid: str = "search"
    extra_random: int = 8

    seed: int = 0
    threads: int = 1
    cache_dir: str = ""

    def __post_init__(self):
        self.validate()

    def validate(self):
        checks = [
            (self.sigma > 0, "sigma must be > 0"),
            (self.dense_max >= 0, "dense_max must be >= 0"),
            (self.smoothing in ("shell", "spectral"), "smoothing must be 'shell' or 'spectral'"),
            (2 <= self.k_init < self.k_max, "need 2 <= k_init < k_max"),
            (self.steps >= 2, "steps must be >= 2"),
            (self.inner_iterations >= 1, "inner_iterations must be >= 1"),
            (self.first_level_iterations >= 1, "first_level_iterations must be >= 1"),
            (min(self.w_spec, self.w_xyz, self.w_normal) >= 0, "channel weights must be >= 0"),
            (max(self.w_spec, self.w_xyz, self.w_normal) > 0, "at least one channel weight must be > 0"),
            (self.lambda_feat >= 0 and self.lambda_arap >= 0, "lambdas must be >= 0"),
            (self.hks_times >= 1, "hks_times must be >= 1"),
            (self.arap_max_inner >= 1, "arap_max_inner must be >= 1"),
            (self.arap_tol > 0, "arap_tol must be > 0"),
            (self.n_proposals >= 1, "n_proposals must be >= 1"),
            (self.sigma_match_sq > 0, "sigma_match_sq must be > 0"),
            (self.surrogate_vertices >= 4, "surrogate_vertices must be >= 4"),
            (2 <= self.k_init < self.surrogate_k_max, "need k_init < surrogate_k_max"),
            (self.surrogate_steps >= 2, "surrogate_steps must be >= 2"),
            (self.proposal_scale > 0, "proposal_scale must be > 0"),
            (self.rigid in ("search", "random", "none"), "rigid must be search, random or none"),
            (self.extra_random >= 0, "extra_random must be >= 0"),
            (self.seed >= 0, "seed must be >= 0"),
            (self.threads >= 1, "threads must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    def replace(self, **changes):
        unknown = set(changes) - {f.name for f in fields(self)}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return dataclasses.replace(self, **changes)

    def as_dict(self):
        return dataclasses.asdict(self)

    # ------------------------------------------------------------- text I/O

    def to_text(self):
        cp = configparser.ConfigParser()
        d = self.as_dict()
        for section, keys in SECTIONS.items():
            cp[section] = {k: _fmt(d[k]) for k in keys}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())

    @classmethod
    def from_text(cls, text, base=None):
        cp = configparser.ConfigParser()
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config: {exc}") from None
        changes = {}
        for section in cp.sections():
            if section not in SECTIONS:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in cp[section].items():
                if key not in SECTIONS[section]:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                changes[key] = raw
        return (base or cls()).with_strings(changes)

    @classmethod
    def load(cls, path, base=None):
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read(), base)

    def with_strings(self, changes):
        """Apply ``key -> string`` overrides, coercing to each field's type."""
        types = {f.name: f.type for f in fields(self)}
        typed = {}
        for key, raw in changes.items():
            key = key.split(".")[-1]
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            typed[key] = _coerce(key, raw, types[key])
        try:
            return self.replace(**typed)
        except ConfigError:
            raise


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _coerce(key, raw, typ):
    if not isinstance(raw, str):
        return raw
    typ = typ if isinstance(typ, str) else typ.__name__
    try:
        if typ == "bool":
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
