"""Seeded synthetic regression data: ``y = g(x) + eps`` on R^3.

``g(x) = h2(||x||)`` with ``h2(r) = (1 - r)^6 (35 r^2 + 18 r + 3)`` on
``[0, 1]`` and zero outside; ``h2(0) = 3`` is the continuous extension.

Randomness comes from numpy's Philox counter-based generator (4x64, 10
rounds). Inputs and noise use independent sub-streams of the seed, so two
datasets that differ only in ``noise_variance`` share their inputs and their
standard-normal noise draws.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from kreboot.errors import InputDomainError

PRNG_NAME = "numpy.random.Philox-4x64-10"

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(master: int, trial: int) -> int:
    """Seed for trial ``trial``: splitmix64 of ``master + trial`` (mod 2^64)."""
    return splitmix64((int(master) + int(trial)) & _MASK64)


class InputLaw(str, enum.Enum):
    UNIFORM_BALL3 = "ball"
    UNIFORM_CUBE3 = "cube"


@dataclass(frozen=True)
class DataGenConfig:
    m: int
    noise_variance: float = 1.0
    seed: int = 0
    input_law: InputLaw = InputLaw.UNIFORM_BALL3

    def __post_init__(self):
        object.__setattr__(self, "input_law", InputLaw(self.input_law))
        if int(self.m) != self.m or self.m < 1:
            raise InputDomainError("m must be a positive integer")
        if not self.noise_variance >= 0:
            raise InputDomainError("noise_variance must be nonnegative")
        if not 0 <= int(self.seed) <= _MASK64:
            raise InputDomainError("seed must fit in 64 unsigned bits")


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    clean: np.ndarray

    @property
    def m(self) -> int:
        return self.y.size


def h2(r):
    r = np.asarray(r, dtype=float)
    t = np.clip(1.0 - r, 0.0, None)
    return t**6 * (35.0 * r * r + 18.0 * r + 3.0)


def target_g(x):
    """Regression function; ``x`` is one point of R^3 or an ``(n, 3)`` array."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InputDomainError("non-finite coordinates")
    if x.ndim == 1:
        return float(h2(np.linalg.norm(x)))
    return h2(np.linalg.norm(x, axis=1))


def _streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    ss = np.random.SeedSequence(int(seed))
    inputs, noise = ss.spawn(2)
    return np.random.Generator(np.random.Philox(inputs)), np.random.Generator(np.random.Philox(noise))


def sample_inputs(rng: np.random.Generator, m: int, law: InputLaw) -> np.ndarray:
    if law is InputLaw.UNIFORM_CUBE3:
        return rng.uniform(-1.0, 1.0, size=(m, 3))
    direction = rng.standard_normal((m, 3))
    direction /= np.linalg.norm(direction, axis=1)[:, None]
    radius = rng.random(m) ** (1.0 / 3.0)
    return direction * np.minimum(radius, 1.0)[:, None]


def generate(config: DataGenConfig) -> Dataset:
    input_rng, noise_rng = _streams(config.seed)
    X = sample_inputs(input_rng, config.m, config.input_law)
    clean = target_g(X)
    z = noise_rng.standard_normal(config.m)
    y = clean + np.sqrt(config.noise_variance) * z
    return Dataset(X, y, clean)


def write_csv(path, data: Dataset) -> None:
    d = data.X.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(d)] + ["y", "clean"])
        for row, yi, ci in zip(data.X, data.y, data.clean):
            w.writerow([repr(float(v)) for v in row] + [repr(float(yi)), repr(float(ci))])


def read_csv(path) -> Dataset:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise InputDomainError(f"{path} is empty")
        xcols = [i for i, h in enumerate(header) if h.startswith("x")]
        if "y" not in header or not xcols:
            raise InputDomainError(f"{path} needs x1..xd and y columns")
        iy = header.index("y")
        ic = header.index("clean") if "clean" in header else None
        rows = [r for r in reader if r]
    if not rows:
        raise InputDomainError(f"{path} has no data rows")
    arr = np.array([[float(v) for v in r] for r in rows])
    X = arr[:, xcols]
    y = arr[:, iy]
    clean = arr[:, ic] if ic is not None else np.full_like(y, np.nan)
    return Dataset(X, y, clean)
