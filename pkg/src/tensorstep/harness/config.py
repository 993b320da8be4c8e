"""Experiment configuration: a flat JSON document checked against a schema."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

SCHEMA_NAME = "experiment.schema.json"

EXPLICIT = {"exp_euler": "euler", "exp_midpoint": "midpoint", "ab2": "ab2"}
IMPLICIT = {"imp_euler": "euler", "imp_midpoint": "midpoint"}
SPLITTINGS = {"lie": "lie_trotter", "strang": "strang"}

# keys that change the trajectory (everything except output locations)
_OUTPUT_KEYS = ("output_csv", "final_state", "cache_dir")
_PROBLEM_KEYS = {
    "allen_cahn": ("n", "eps", "reaction"),
    "fokker_planck": ("n", "d", "sigma", "drift"),
    "nls": ("n", "d", "theta", "eps_nl", "potential"),
}


class ConfigError(ValueError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def load_schema() -> dict:
    return json.loads(resources.files(__package__).joinpath(SCHEMA_NAME).read_text())


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str
    n: int
    scheme: str
    dt: float
    T: float
    d: int = 2
    eps: float = 0.1
    reaction: bool = True
    sigma: float = 2.0
    drift: bool = True
    theta: float = 0.1
    eps_nl: float = 1e-4
    potential: bool = True
    splitting: str = "none"
    k1: float = 1.0
    k2: float = 1.0
    a: float = 1.0
    b: float = 1.0
    g: float = 1.0
    k: float = 1.0
    eps_tol: float | None = None
    compress: bool = True
    rank_cap: int = 512
    eta: float = 1e-3
    forcing: str = "constant"
    newton_max_iters: int = 50
    gmres_restart: int = 30
    gmres_max_restarts: int = 20
    reference: str = "none"
    reference_abs_tol: float = 1e-12
    steady_state_tol: float | None = None
    output_csv: str | None = None
    final_state: str | None = None
    cache_dir: str | None = None
    seed: int = 0

    def __post_init__(self):
        _validate(asdict(self))
        _check_semantics(self)

    @property
    def implicit(self) -> bool:
        return self.scheme in IMPLICIT

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **changes) -> "ExperimentConfig":
        return config_from_dict({**self.to_dict(), **changes})

    def problem_key(self) -> dict:
        """The parameters that determine the problem (and hence its reference)."""
        out = {"problem": self.problem}
        for name in _PROBLEM_KEYS[self.problem]:
            out[name] = getattr(self, name)
        return out

    def digest(self) -> str:
        """Hash of everything that affects the computed trajectory."""
        payload = {k: v for k, v in self.to_dict().items() if k not in _OUTPUT_KEYS}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def _check_semantics(cfg: ExperimentConfig) -> None:
    if cfg.T < cfg.dt * (1 - 1e-12):
        raise ConfigError("T", f"final time {cfg.T} is shorter than one step dt={cfg.dt}")
    if cfg.problem == "allen_cahn":
        if cfg.n < 16:
            raise ConfigError("n", "Allen-Cahn needs n >= 16")
        if cfg.d != 2:
            raise ConfigError("d", "Allen-Cahn is two-dimensional")
    if cfg.problem == "fokker_planck" and cfg.d < 2:
        raise ConfigError("d", "Fokker-Planck needs d >= 2")
    if cfg.scheme == "ab2" and cfg.splitting != "none":
        # the multistep history would straddle sub-flows of different length
        raise ConfigError("splitting", "ab2 cannot drive split sub-flows")


@lru_cache(maxsize=1)
def _validator() -> jsonschema.Draft202012Validator:
    return jsonschema.Draft202012Validator(load_schema())


def _validate(raw: dict) -> None:
    errors = sorted(_validator().iter_errors(raw), key=lambda e: list(e.path))
    if errors:
        err = errors[0]
        where = ".".join(str(p) for p in err.path)
        if not where and err.validator == "required":
            where = err.message.split("'")[1]
        elif not where and err.validator == "additionalProperties":
            unknown = sorted(set(raw) - set(load_schema()["properties"]))
            where = ", ".join(unknown)
        raise ConfigError(where or "(top level)", err.message)


def config_from_dict(raw: dict[str, Any]) -> ExperimentConfig:
    """Validate ``raw`` against the schema and build the config."""
    _validate(raw)
    names = {f.name for f in fields(ExperimentConfig)}
    return ExperimentConfig(**{k: v for k, v in raw.items() if k in names})


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError("config", f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"{path} is not valid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError("config", "top level must be a JSON object")
    return config_from_dict(raw)
