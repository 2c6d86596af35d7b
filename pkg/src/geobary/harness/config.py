"""Experiment configuration read from a YAML key-value file."""

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from ..errors import ContractError
from ..geometry import ManifoldSpec

LAMBDA_PRESETS = ("bilinear4", "corners", "uniform")


def bilinear_grid(k=4):
    """``k x k`` bilinear weights over four corner marginals (row-major in ``(v, u)``)."""
    t = np.linspace(0, 1, k)
    return [[(1 - u) * (1 - v), u * (1 - v), (1 - u) * v, u * v] for v in t for u in t]


@dataclass(frozen=True)
class ExperimentConfig:
    """All knobs of the experiments; every field is a config-file key.

    ``lambdas`` is either a list of weight vectors or one of the presets
    ``bilinear4`` (4x4 grid, S = 4), ``corners`` (the S unit vectors) or
    ``uniform``. ``support``/``centers`` give explicit coordinates for the
    barycenter support and the marginal bump centers and override the
    lattice placement.
    """

    manifold: str = "sphere"
    ambient_dim: int = 3
    S: int = 2
    n: int = 8
    m: int = 8
    shared_support: bool = False
    support: list = None
    centers: list = None
    bandwidth: float = 0.1
    lambdas: object = "uniform"
    epsilon: float = 0.05
    p: float = 2.0
    N: list = field(default_factory=lambda: [250, 1000, 4000])
    trials: int = 30
    seed: int = 0
    radius_c: float = None
    bypass: bool = False
    tol: float = 1e-9
    max_iter: int = 5000
    deltas: list = field(default_factory=lambda: [1e-3, 1e-2, 1e-1])
    epsilons: list = field(default_factory=lambda: [0.1])
    shapes: list = field(default_factory=lambda: ["uniform", "spike", "shift"])
    bound_n: int = 10
    figures: bool = True
    output: str = "out"

    def __post_init__(self):
        if self.S < 1 or self.n < 1 or self.m < 1:
            raise ContractError("S, n and m must be positive")
        if self.trials < 1:
            raise ContractError("trials must be at least 1")
        ladder = list(self.N)
        if any(b <= a for a, b in zip(ladder, ladder[1:])) or (ladder and ladder[0] < 2):
            raise ContractError("the N ladder must be strictly increasing and start at 2 or more")
        if not self.epsilon > 0 or any(not e >= 0 for e in self.epsilons):
            raise ContractError("epsilon must be positive")
        if self.p < 1:
            raise ContractError("p must be at least 1")
        for lam in self.lambda_grid():
            if len(lam) != self.S or min(lam) < 0 or abs(sum(lam) - 1) > 1e-12:
                raise ContractError(f"weight vector {lam} is not in the simplex of size S={self.S}")
        unknown = set(self.shapes) - {"uniform", "spike", "shift"}
        if unknown:
            raise ContractError(f"unknown perturbation shapes {sorted(unknown)}")
        self.spec()

    def spec(self):
        return ManifoldSpec(self.manifold, 2 if self.manifold == "square" else self.ambient_dim)

    def lambda_grid(self):
        if isinstance(self.lambdas, str):
            if self.lambdas == "bilinear4":
                if self.S != 4:
                    raise ContractError("the bilinear4 preset needs S = 4")
                return bilinear_grid(4)
            if self.lambdas == "corners":
                return np.eye(self.S).tolist()
            if self.lambdas == "uniform":
                return [[1.0 / self.S] * self.S]
            raise ContractError(f"unknown lambda preset {self.lambdas!r}; use one of {LAMBDA_PRESETS}")
        return [list(map(float, lam)) for lam in self.lambdas]

    def to_dict(self):
        return asdict(self)

    def digest(self):
        """SHA-256 of the canonical JSON form."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def replace(self, **changes):
        return type(self)(**{**self.to_dict(), **changes})


KEYS = tuple(f.name for f in fields(ExperimentConfig))


def parse_overrides(pairs):
    """``["--key", "value", ...]`` to a dict; values are parsed as YAML scalars or lists."""
    out = {}
    it = iter(pairs)
    for flag in it:
        if not flag.startswith("--"):
            raise ContractError(f"expected --key, got {flag!r}")
        key = flag[2:].replace("-", "_")
        if key not in KEYS:
            raise ContractError(f"unknown config key {key!r}")
        try:
            out[key] = yaml.safe_load(next(it))
        except StopIteration:
            raise ContractError(f"missing value for {flag}") from None
    return out


def load_config(path=None, overrides=None):
    """Build a config from an optional YAML file plus overrides.

    Raises
    ------
    FileNotFoundError
        If ``path`` is given but missing.
    ContractError
        On unknown keys or invalid values.
    """
    values = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        values = yaml.safe_load(path.read_text()) or {}
        if not isinstance(values, dict):
            raise ContractError(f"{path} must hold a key-value mapping")
        unknown = set(values) - set(KEYS)
        if unknown:
            raise ContractError(f"unknown config keys {sorted(unknown)} in {path}")
    values.update(overrides or {})
    return ExperimentConfig(**values)
