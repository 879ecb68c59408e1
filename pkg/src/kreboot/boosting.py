"""Re-scaled L2-boosting with truncation over a kernel dictionary.

The dictionary is ``S = {K(x_i, .)}``, one atom per training input, and an
estimator is ``f = sum_j a_j K(x_j, .)``. Each iteration

1. picks the atom most correlated (in ``<u, v>_m = mean(u * v)``) with the
   residual ``y - f_{k-1}``;
2. shrinks the current estimator by ``1 - alpha_k`` and adds ``beta * atom``,
   where ``beta`` minimizes the empirical risk over ``[-alpha_k l_k, alpha_k l_k]``.

Because ``l_k`` is non-decreasing, ``sum_j |a_j| <= l_k`` after every step.

Three comparator step rules share the same loop: ``Rboosting`` (re-scaling,
no truncation), ``RTboosting`` (truncation with a decaying cap, no
re-scaling) and ``EpsilonBoosting`` (fixed-size steps).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from kreboot.errors import DegenerateAtomError, InputDomainError
from kreboot.kernels import RadialKernel, cross_gram, gram

# Above this many atoms G @ G is not cached (memory ~ 8 m^2 bytes).
PRODUCT_CACHE_LIMIT = 6000

# Relative slack for the l1 structure bound.
L1_SLACK = 1e-12


# --------------------------------------------------------------------------
# schedules


@dataclass(frozen=True)
class HarmonicAlpha:
    """``alpha_k = 2 / (k + 2)``."""

    def __call__(self, k: int) -> float:
        return 2.0 / (k + 2.0)

    def to_dict(self) -> dict[str, Any]:
        return {"type": "harmonic"}


@dataclass(frozen=True)
class ConstantAlpha:
    value: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.value < 1.0:
            raise InputDomainError("constant alpha must lie in [0, 1)")

    def __call__(self, k: int) -> float:
        return self.value

    def to_dict(self) -> dict[str, Any]:
        return {"type": "constant", "value": self.value}


@dataclass(frozen=True)
class LogarithmicEll:
    """``l_k = c0 * log(k + 1)``."""

    c0: float = 0.5

    def __post_init__(self):
        if not self.c0 > 0:
            raise InputDomainError("c0 must be positive")

    def __call__(self, k: int) -> float:
        return self.c0 * math.log(k + 1.0)

    def to_dict(self) -> dict[str, Any]:
        return {"type": "logarithmic", "c0": self.c0}


@dataclass(frozen=True)
class ConstantEll:
    L: float = 1.0

    def __post_init__(self):
        if not self.L > 0:
            raise InputDomainError("L must be positive")

    def __call__(self, k: int) -> float:
        return self.L

    def to_dict(self) -> dict[str, Any]:
        return {"type": "constant", "L": self.L}


@dataclass(frozen=True)
class UnboundedEll:
    def __call__(self, k: int) -> float:
        return math.inf

    def to_dict(self) -> dict[str, Any]:
        return {"type": "unbounded"}


def alpha_from_dict(d: Mapping[str, Any]):
    kind = d["type"]
    if kind == "harmonic":
        return HarmonicAlpha()
    if kind == "constant":
        return ConstantAlpha(float(d["value"]))
    raise InputDomainError(f"unknown alpha schedule {kind!r}")


def ell_from_dict(d: Mapping[str, Any]):
    kind = d["type"]
    if kind == "logarithmic":
        return LogarithmicEll(float(d["c0"]))
    if kind == "constant":
        return ConstantEll(float(d["L"]))
    if kind == "unbounded":
        return UnboundedEll()
    raise InputDomainError(f"unknown ell schedule {kind!r}")


@dataclass(frozen=True)
class Schedules:
    alpha: HarmonicAlpha | ConstantAlpha = field(default_factory=HarmonicAlpha)
    ell: LogarithmicEll | ConstantEll | UnboundedEll = field(default_factory=LogarithmicEll)

    def to_dict(self) -> dict[str, Any]:
        return {"alpha_schedule": self.alpha.to_dict(), "ell_schedule": self.ell.to_dict()}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Schedules":
        return cls(alpha_from_dict(d["alpha_schedule"]), ell_from_dict(d["ell_schedule"]))


# --------------------------------------------------------------------------
# step policies


def compute_step(corr: float, atom_norm_sq: float, alpha_k: float, ell_k: float) -> float:
    """Minimizer of ``||r - beta g||_m^2`` over ``|beta| <= alpha_k * ell_k``.

    ``corr`` is ``<r, g>_m`` against the re-scaled residual
    ``r = y - (1 - alpha_k) f_{k-1}``.
    """
    if not atom_norm_sq > 0:
        raise DegenerateAtomError(f"atom has empirical norm^2 {atom_norm_sq!r}")
    bound = 0.0 if alpha_k == 0 else alpha_k * ell_k
    if corr == 0:
        return 0.0
    return math.copysign(min(abs(corr) / atom_norm_sq, bound), corr)


@dataclass(frozen=True)
class KReBooT:
    name = "kreboot"

    def alpha(self, schedules: Schedules, k: int) -> float:
        return schedules.alpha(k)

    def beta(self, corr: float, norm_sq: float, alpha_k: float, schedules: Schedules, k: int) -> float:
        return compute_step(corr, norm_sq, alpha_k, schedules.ell(k))

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name}


@dataclass(frozen=True)
class Rboosting:
    """Re-scaling with an unrestricted line search."""

    name = "rboosting"

    def alpha(self, schedules: Schedules, k: int) -> float:
        return schedules.alpha(k)

    def beta(self, corr, norm_sq, alpha_k, schedules, k):
        if not norm_sq > 0:
            raise DegenerateAtomError(f"atom has empirical norm^2 {norm_sq!r}")
        return corr / norm_sq

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name}


@dataclass(frozen=True)
class RTboosting:
    """No re-scaling; the line search is clipped to ``c0 * k^(-2/3)``.

    The clipped steps sum to at most ``3 c0 k^(1/3)``, which is the l1 growth
    order of this comparator.
    """

    c0: float = 1.0
    name = "rtboosting"

    def __post_init__(self):
        if not self.c0 > 0:
            raise InputDomainError("RTboosting cap constant must be positive")

    def cap(self, k: int) -> float:
        return self.c0 * k ** (-2.0 / 3.0)

    def alpha(self, schedules: Schedules, k: int) -> float:
        return 0.0

    def beta(self, corr, norm_sq, alpha_k, schedules, k):
        if not norm_sq > 0:
            raise DegenerateAtomError(f"atom has empirical norm^2 {norm_sq!r}")
        if corr == 0:
            return 0.0
        return math.copysign(min(abs(corr) / norm_sq, self.cap(k)), corr)

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "c0": self.c0}


@dataclass(frozen=True)
class EpsilonBoosting:
    eps: float = 1e-2
    name = "epsilon"

    def __post_init__(self):
        if not self.eps > 0:
            raise InputDomainError("eps must be positive")

    def alpha(self, schedules: Schedules, k: int) -> float:
        return 0.0

    def beta(self, corr, norm_sq, alpha_k, schedules, k):
        if not norm_sq > 0:
            raise DegenerateAtomError(f"atom has empirical norm^2 {norm_sq!r}")
        if corr == 0:
            return 0.0
        return math.copysign(self.eps, corr)

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "eps": self.eps}


def policy_from_dict(d: Mapping[str, Any]):
    name = d["name"]
    if name == "kreboot":
        return KReBooT()
    if name == "rboosting":
        return Rboosting()
    if name == "rtboosting":
        return RTboosting(float(d.get("c0", 1.0)))
    if name == "epsilon":
        return EpsilonBoosting(float(d.get("eps", 1e-2)))
    raise InputDomainError(f"unknown boosting variant {name!r}")


# --------------------------------------------------------------------------
# state


@dataclass
class History:
    """Per-iteration records, possibly thinned.

    ``monitors`` maps a query-set name to its MSE at each recorded iteration.
    """

    iteration: list[int] = field(default_factory=list)
    risk: list[float] = field(default_factory=list)
    l1: list[float] = field(default_factory=list)
    index: list[int] = field(default_factory=list)
    beta: list[float] = field(default_factory=list)
    clipped: list[bool] = field(default_factory=list)
    monitors: dict[str, list[float]] = field(default_factory=dict)
    terminated_early: bool = False

    def __len__(self) -> int:
        return len(self.iteration)

    def copy(self) -> "History":
        return History(
            list(self.iteration),
            list(self.risk),
            list(self.l1),
            list(self.index),
            list(self.beta),
            list(self.clipped),
            {k: list(v) for k, v in self.monitors.items()},
            self.terminated_early,
        )

    def first_unclipped(self) -> int | None:
        """First recorded iteration after which the step bound never binds again.

        A diagnostic for when the l1 budget has caught up with the target;
        ``None`` if the last recorded step was still clipped.
        """
        last = None
        for it, c in zip(reversed(self.iteration), reversed(self.clipped)):
            if c:
                break
            last = it
        return last


@dataclass
class BoostingState:
    coefficients: np.ndarray
    fitted: np.ndarray
    k: int = 0
    history: History = field(default_factory=History)

    @classmethod
    def zero(cls, m: int) -> "BoostingState":
        return cls(np.zeros(m), np.zeros(m))

    @property
    def l1(self) -> float:
        return float(np.abs(self.coefficients).sum())


def empirical_risk(state: BoostingState, y) -> float:
    """``(1/m) sum_i (y_i - f(x_i))^2``."""
    y = np.asarray(y, dtype=float)
    if y.shape != state.fitted.shape:
        raise InputDomainError(f"y has shape {y.shape}, state has {state.fitted.shape}")
    r = y - state.fitted
    return float(r @ r) / y.size


def select_atom(residual, G) -> tuple[int, float]:
    """Index and value of the largest ``|<residual, G[:, j]>_m|``; ties go to the smallest index."""
    residual = np.asarray(residual, dtype=float)
    G = np.asarray(G)
    if G.ndim != 2 or G.shape[0] != residual.size:
        raise InputDomainError(f"residual length {residual.size} does not match Gram {G.shape}")
    corr = (residual @ G) / residual.size
    j = int(np.argmax(np.abs(corr)))
    return j, float(corr[j])


def _check_selection(selection_residual: str) -> None:
    if selection_residual not in ("plain", "rescaled"):
        raise InputDomainError("selection_residual must be 'plain' or 'rescaled'")


def boost_step(
    state: BoostingState,
    y,
    G,
    schedules: Schedules,
    policy=KReBooT(),
    selection_residual: str = "plain",
) -> BoostingState:
    """One iteration from ``state`` (which holds ``f_{k-1}``); returns a new state.

    Reference implementation with ``O(m^2)`` work per call; :func:`fit` runs the
    same recurrence with cached correlations.
    """
    _check_selection(selection_residual)
    y = np.asarray(y, dtype=float)
    G = np.asarray(G, dtype=float)
    m = y.size
    if G.shape != (m, m) or state.fitted.shape != (m,):
        raise InputDomainError("state, y and G dimensions disagree")
    k = state.k + 1
    alpha = policy.alpha(schedules, k)
    rescaled = y - (1.0 - alpha) * state.fitted
    sel = y - state.fitted if selection_residual == "plain" else rescaled
    norm_sq = np.einsum("ij,ij->j", G, G) / m
    scores = np.abs(sel @ G) / m
    scores[~(norm_sq > 0)] = -1.0
    history = state.history.copy()
    if scores.max() < 0:
        history.terminated_early = True
        return replace(state, history=history)
    j = int(np.argmax(scores))
    corr = float(rescaled @ G[:, j]) / m
    beta = policy.beta(corr, float(norm_sq[j]), alpha, schedules, k)

    a = (1.0 - alpha) * state.coefficients
    a[j] += beta
    fitted = (1.0 - alpha) * state.fitted + beta * G[:, j]
    new = BoostingState(a, fitted, k, history)
    history.iteration.append(k)
    history.risk.append(empirical_risk(new, y))
    history.l1.append(new.l1)
    history.index.append(j)
    history.beta.append(beta)
    history.clipped.append(abs(beta) < abs(corr) / float(norm_sq[j]))
    return new


# --------------------------------------------------------------------------
# fast loop


@dataclass(frozen=True)
class Dictionary:
    """The atom set anchored at ``anchors`` with its Gram matrix and derived caches.

    ``gram_sq`` holds ``G @ G / m`` (or ``None`` past ``PRODUCT_CACHE_LIMIT``);
    it lets the loop update all atom correlations in ``O(m)`` per iteration.
    """

    anchors: np.ndarray
    kernel: RadialKernel
    gram: np.ndarray
    norm_sq: np.ndarray
    gram_sq: np.ndarray | None

    @property
    def m(self) -> int:
        return self.gram.shape[0]

    @classmethod
    def build(cls, anchors, kernel: RadialKernel, cache_products: bool | None = None, G=None) -> "Dictionary":
        anchors = np.asarray(anchors, dtype=float)
        G = gram(anchors, kernel) if G is None else np.asarray(G, dtype=float)
        m = G.shape[0]
        norm_sq = np.einsum("ij,ij->j", G, G) / m
        if cache_products is None:
            cache_products = m <= PRODUCT_CACHE_LIMIT
        gram_sq = (G @ G) / m if cache_products else None
        return cls(anchors, kernel, G, norm_sq, gram_sq)


def _record_due(k: int, k_max: int, record_every: int, dense_until: int) -> bool:
    return k <= dense_until or k % record_every == 0 or k == k_max


def fit_dictionary(
    dictionary: Dictionary,
    y,
    schedules: Schedules,
    policy=KReBooT(),
    k_max: int = 1000,
    *,
    selection_residual: str = "plain",
    record_every: int = 1,
    dense_until: int = 0,
    monitors: Mapping[str, tuple[np.ndarray, np.ndarray]] | None = None,
) -> BoostingState:
    """Run ``k_max`` iterations from ``f_0 = 0`` over a prepared dictionary.

    ``monitors`` maps a name to ``(K_cross, target)`` with ``K_cross`` of shape
    ``(n, m)``; predictions on those points are tracked incrementally and their
    MSE against ``target`` is recorded alongside the training risk.
    """
    _check_selection(selection_residual)
    if int(k_max) != k_max or k_max < 1:
        raise InputDomainError("k_max must be a positive integer")
    if record_every < 1:
        raise InputDomainError("record_every must be >= 1")
    y = np.asarray(y, dtype=float)
    G = dictionary.gram
    m = G.shape[0]
    if y.shape != (m,):
        raise InputDomainError(f"y has shape {y.shape}, dictionary has {m} atoms")

    norm_sq = dictionary.norm_sq
    valid = norm_sq > 0
    any_degenerate = not bool(valid.all())
    Gsq = dictionary.gram_sq
    gy = (G @ y) / m
    h = np.zeros(m)  # G f / m
    a = np.zeros(m)
    fitted = np.zeros(m)
    plain = selection_residual == "plain"
    check_l1 = isinstance(policy, KReBooT) and math.isfinite(schedules.ell(1))

    mon = []
    for name, (K, target) in (monitors or {}).items():
        K = np.asarray(K, dtype=float)
        if K.ndim != 2 or K.shape[1] != m:
            raise InputDomainError(f"monitor {name!r} cross-Gram must have {m} columns")
        mon.append((name, np.ascontiguousarray(K.T), np.asarray(target, dtype=float), np.zeros(K.shape[0])))
    hist = History(monitors={name: [] for name, *_ in mon})

    k = 0
    for k in range(1, int(k_max) + 1):
        alpha = policy.alpha(schedules, k)
        shrink = 1.0 - alpha
        scores = gy - h if plain or alpha == 0 else gy - shrink * h
        scores = np.abs(scores)
        if any_degenerate:
            scores[~valid] = -1.0
            if scores.max() < 0:
                hist.terminated_early = True
                k -= 1
                break
        j = int(np.argmax(scores))
        corr = float(gy[j] - shrink * h[j])
        nsq = float(norm_sq[j])
        beta = policy.beta(corr, nsq, alpha, schedules, k)

        if alpha != 0:
            a *= shrink
            fitted *= shrink
            h *= shrink
            for _, _, _, pred in mon:
                pred *= shrink
        a[j] += beta
        if beta != 0:
            col = G[j]
            fitted += beta * col
            if Gsq is not None:
                h += beta * Gsq[j]
            else:
                h = (G @ fitted) / m
            for _, KT, _, pred in mon:
                pred += beta * KT[j]

        if check_l1:
            l1 = float(np.abs(a).sum())
            bound = schedules.ell(k)
            assert l1 <= bound * (1.0 + L1_SLACK) + 1e-300, f"l1 {l1} exceeds l_{k} = {bound}"
        if _record_due(k, k_max, record_every, dense_until):
            r = y - fitted
            hist.iteration.append(k)
            hist.risk.append(float(r @ r) / m)
            hist.l1.append(float(np.abs(a).sum()))
            hist.index.append(j)
            hist.beta.append(beta)
            hist.clipped.append(abs(beta) < abs(corr) / nsq)
            for name, _, target, pred in mon:
                d = pred - target
                hist.monitors[name].append(float(d @ d) / d.size)

    return BoostingState(a, fitted, k, hist)


def fit(
    data,
    kernel: RadialKernel,
    schedules: Schedules = Schedules(),
    policy=KReBooT(),
    k_max: int = 1000,
    **kwargs,
) -> tuple[BoostingState, History]:
    """Fit on ``data`` (anything with ``X`` and ``y``); returns ``(state, history)``.

    Keyword arguments are forwarded to :func:`fit_dictionary`.
    """
    dictionary = Dictionary.build(data.X, kernel)
    state = fit_dictionary(dictionary, data.y, schedules, policy, k_max, **kwargs)
    return state, state.history


def predict(state: BoostingState, anchors, kernel: RadialKernel, X_new) -> np.ndarray:
    """``out[t] = sum_j a_j phi(||x_new_t - anchor_j||)``."""
    anchors = np.asarray(anchors, dtype=float)
    if anchors.shape[0] != state.coefficients.size:
        raise InputDomainError(
            f"{anchors.shape[0]} anchors but {state.coefficients.size} coefficients"
        )
    return cross_gram(X_new, anchors, kernel) @ state.coefficients


# --------------------------------------------------------------------------
# serialization


@dataclass
class Model:
    anchors: np.ndarray
    coefficients: np.ndarray
    kernel: RadialKernel
    schedules: Schedules
    policy: Any = field(default_factory=KReBooT)
    k: int = 0

    def predict(self, X_new) -> np.ndarray:
        return cross_gram(X_new, self.anchors, self.kernel) @ self.coefficients

    def to_dict(self) -> dict[str, Any]:
        return {
            "anchors": self.anchors.tolist(),
            "coefficients": self.coefficients.tolist(),
            "kernel": self.kernel.to_dict(),
            **self.schedules.to_dict(),
            "policy": self.policy.to_dict(),
            "k": self.k,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Model":
        anchors = np.asarray(d["anchors"], dtype=float)
        coef = np.asarray(d["coefficients"], dtype=float)
        if anchors.ndim != 2 or anchors.shape[0] != coef.size:
            raise InputDomainError("model anchors and coefficients disagree in length")
        return cls(
            anchors,
            coef,
            RadialKernel.from_dict(d["kernel"]),
            Schedules.from_dict(d),
            policy_from_dict(d.get("policy", {"name": "kreboot"})),
            int(d.get("k", 0)),
        )


def save_model(path, state: BoostingState, anchors, kernel: RadialKernel, schedules: Schedules, policy=KReBooT()) -> None:
    model = Model(np.asarray(anchors, dtype=float), state.coefficients, kernel, schedules, policy, state.k)
    Path(path).write_text(json.dumps(model.to_dict(), indent=1))


def load_model(path) -> Model:
    return Model.from_dict(json.loads(Path(path).read_text()))
