"""Radial kernels and Gram matrices over a point set.

Every kernel here is radial, ``K(x, x') = phi(||x - x'||_2)``, with
``phi(0) <= 1`` so that ``kappa = sqrt(sup K(x, x)) <= 1``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from kreboot.errors import InputDomainError


class Profile(str, enum.Enum):
    WENDLAND31 = "wendland31"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class RadialKernel:
    """A radial profile ``phi``.

    ``wendland31`` is ``(1 - r)^4 (4 r^2 + 1)`` on ``[0, 1]`` and zero beyond;
    ``gaussian`` is ``exp(-r^2 / (2 bandwidth^2))``.
    """

    profile: Profile = Profile.WENDLAND31
    bandwidth: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "profile", Profile(self.profile))
        if self.profile is Profile.GAUSSIAN:
            if self.bandwidth is None or not self.bandwidth > 0:
                raise InputDomainError("gaussian kernel needs a positive bandwidth")
        elif self.bandwidth is not None:
            raise InputDomainError("wendland31 kernel takes no bandwidth")

    @classmethod
    def wendland31(cls) -> "RadialKernel":
        return cls(Profile.WENDLAND31)

    @classmethod
    def gaussian(cls, bandwidth: float) -> "RadialKernel":
        return cls(Profile.GAUSSIAN, float(bandwidth))

    @property
    def kappa(self) -> float:
        return float(np.sqrt(eval_radial(self, 0.0)))

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"profile": self.profile.value}
        if self.bandwidth is not None:
            out["bandwidth"] = self.bandwidth
        return out

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RadialKernel":
        return cls(Profile(d["profile"]), d.get("bandwidth"))


def _profile_values(kernel: RadialKernel, r: np.ndarray) -> np.ndarray:
    if kernel.profile is Profile.WENDLAND31:
        t = np.clip(1.0 - r, 0.0, None)
        return t**4 * (4.0 * r * r + 1.0)
    return np.exp(-(r * r) / (2.0 * kernel.bandwidth**2))


def eval_radial(kernel: RadialKernel, r):
    """Evaluate ``phi(r)``; accepts a scalar or an array of radii."""
    arr = np.asarray(r, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0):
        raise InputDomainError("radius must be a nonnegative number")
    out = _profile_values(kernel, arr)
    if out.ndim == 0:
        return float(out)
    return out


def _as_points(X, name: str) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] < 1:
        raise InputDomainError(f"{name} must be a non-empty (n, d) array")
    if not np.all(np.isfinite(X)):
        raise InputDomainError(f"{name} contains non-finite coordinates")
    return X


def gram(X, kernel: RadialKernel) -> np.ndarray:
    """Gram matrix ``G[i, j] = phi(||x_i - x_j||)`` of the dictionary anchored at ``X``.

    Distances come from the condensed upper triangle, so the result is
    symmetric bit for bit.
    """
    X = _as_points(X, "X")
    if X.shape[0] == 1:
        return np.array([[eval_radial(kernel, 0.0)]])
    dist = squareform(pdist(X))
    return _profile_values(kernel, dist)


def cross_gram(X_new, anchors, kernel: RadialKernel) -> np.ndarray:
    """``K[t, j] = phi(||x_new_t - anchor_j||)``, shape ``(n, m)``."""
    X_new = _as_points(X_new, "X_new")
    anchors = _as_points(anchors, "anchors")
    if X_new.shape[1] != anchors.shape[1]:
        raise InputDomainError(
            f"dimension mismatch: queries have d={X_new.shape[1]}, anchors d={anchors.shape[1]}"
        )
    return _profile_values(kernel, cdist(X_new, anchors))
