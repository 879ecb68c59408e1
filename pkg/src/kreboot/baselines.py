"""Comparator and oracle solvers over the same kernel dictionary.

* kernel ridge regression, ``(G + m lam I) a = y``;
* least squares ``G a = y`` (the unconstrained limit of the boosting loop);
* l1-ball constrained least squares (kernel lasso in constrained form),
  by projected gradient with a sort-and-threshold projection.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from kreboot.errors import InputDomainError, SingularSystemError
from kreboot.kernels import RadialKernel, gram

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class KRRConfig:
    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise InputDomainError("KRR lambda must be positive")


@dataclass(frozen=True)
class LassoConfig:
    radius: float = 1.0
    max_iters: int = 100_000
    step_size: float | None = None  # None: 0.9 m / ||G||_op^2
    tolerance: float = 1e-13

    def __post_init__(self):
        if not self.radius > 0:
            raise InputDomainError("lasso radius must be positive")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise InputDomainError("max_iters must be a positive integer")
        if self.step_size is not None and not self.step_size > 0:
            raise InputDomainError("step_size must be positive")
        if not self.tolerance > 0:
            raise InputDomainError("tolerance must be positive")


@dataclass
class LassoResult:
    coefficients: np.ndarray
    objective: float
    iterations: int
    converged: bool
    objective_trace: list[float] = field(default_factory=list)


def cholesky_solve(A: np.ndarray, b: np.ndarray, jitter: float = 0.0) -> np.ndarray:
    """Solve SPD ``A x = b``; on failure add ``1e-12 trace``, growing x10 up to ``1e-6 trace``."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    trace = float(np.trace(A))
    eye = np.eye(n)
    extra = 0.0
    limit = 1e-6 * trace
    while True:
        try:
            factor = cho_factor(A + (jitter + extra) * eye if (jitter or extra) else A, lower=True)
            if extra:
                log.debug("cholesky succeeded with jitter %.3g", extra)
            return cho_solve(factor, b)
        except LinAlgError:
            if not trace > 0:
                raise SingularSystemError("matrix is not positive definite (trace <= 0)") from None
            extra = 1e-12 * trace if extra == 0 else extra * 10.0
            if extra > limit * (1 + 1e-9):
                raise SingularSystemError(
                    f"Cholesky failed up to jitter {limit:.3g} (1e-6 * trace)"
                ) from None


def _gram_for(data, kernel: RadialKernel, G):
    if G is not None:
        return np.asarray(G, dtype=float)
    return gram(data.X, kernel)


def krr_fit(data, kernel: RadialKernel, config: KRRConfig, G=None) -> np.ndarray:
    """Coefficients of kernel ridge regression with the ``m``-scaled penalty."""
    G = _gram_for(data, kernel, G)
    y = np.asarray(data.y, dtype=float)
    m = y.size
    return cholesky_solve(G + m * config.lam * np.eye(m), y)


def least_squares_fit(data, kernel: RadialKernel, jitter: float = 1e-10, G=None) -> np.ndarray:
    """Minimizer of ``||G a - y||^2``, via Cholesky of ``G + jitter I``."""
    G = _gram_for(data, kernel, G)
    return cholesky_solve(G, np.asarray(data.y, dtype=float), jitter=jitter)


def project_l1_ball(v, L: float) -> np.ndarray:
    """Euclidean projection onto ``{a : ||a||_1 <= L}``."""
    if not L > 0:
        raise InputDomainError("radius must be positive")
    v = np.asarray(v, dtype=float)
    u = np.abs(v)
    if u.sum() <= L:
        return v.copy()
    s = np.sort(u)[::-1]
    css = np.cumsum(s)
    ks = np.arange(1, s.size + 1)
    rho = np.nonzero(s * ks > css - L)[0][-1]
    theta = (css[rho] - L) / (rho + 1.0)
    w = np.sign(v) * np.maximum(u - theta, 0.0)
    # cancellation in u - theta can leave the sum ~1e-12 off L; put it back on the sphere
    total = np.abs(w).sum()
    if total > 0:
        w *= L / total
    if np.abs(w).sum() > L:
        w *= 1.0 - 2.0 * np.finfo(float).eps
    return w


def spectral_norm_sq(G: np.ndarray, n_iter: int = 50) -> float:
    """``||G||_op^2`` for symmetric ``G`` by power iteration from the ones vector."""
    v = np.ones(G.shape[0]) / np.sqrt(G.shape[0])
    lam = 0.0
    for _ in range(n_iter):
        w = G @ v
        nrm = np.linalg.norm(w)
        if nrm == 0:
            return 0.0
        lam = float(v @ w)
        v = w / nrm
    lam = max(abs(lam), float(np.linalg.norm(G @ v)))
    return lam * lam


def lasso_objective(G, a, y) -> float:
    r = G @ a - y
    return float(r @ r) / y.size


def lasso_fit(
    data,
    kernel: RadialKernel,
    config: LassoConfig,
    G=None,
    start=None,
    keep_trace: bool = True,
    gram_sq=None,
    op_norm_sq: float | None = None,
) -> LassoResult:
    """Projected gradient descent on ``(1/m)||G a - y||^2`` over the l1 ball.

    The objective never increases: the default step ``0.9 m / ||G||^2`` is
    below ``2 / Lip``. ``converged`` is False when ``max_iters`` ran out first.

    With ``gram_sq = G @ G / m`` the gradient and objective are formed from
    the iterate's support alone, which is much cheaper while the iterate is
    sparse; the objective is then a quadratic form, accurate to roughly
    ``1e-15 * ||y||^2 / m``.
    """
    G = _gram_for(data, kernel, G)
    y = np.asarray(data.y, dtype=float)
    m = y.size
    op_sq = spectral_norm_sq(G) if op_norm_sq is None else op_norm_sq
    limit = m / op_sq if op_sq > 0 else np.inf
    step = 0.9 * limit if config.step_size is None else config.step_size
    if step > limit:
        raise InputDomainError(f"step_size {step:.4g} exceeds m/||G||^2 = {limit:.4g}")

    if gram_sq is None:
        def state(a):
            r = G @ a - y
            return (2.0 / m) * (G @ r), float(r @ r) / m
    else:
        gy = (G @ y) / m
        yy = float(y @ y) / m

        def state(a):
            support = np.flatnonzero(a)
            u = a[support] @ gram_sq[support] if support.size < m // 4 else gram_sq @ a
            return 2.0 * (u - gy), float(a @ u) - 2.0 * float(a @ gy) + yy

    a = np.zeros(m) if start is None else project_l1_ball(start, config.radius)
    grad, obj = state(a)
    trace = [obj] if keep_trace else []
    converged = False
    it = 0
    for it in range(1, config.max_iters + 1):
        a_new = project_l1_ball(a - step * grad, config.radius)
        grad, obj_new = state(a_new)
        if keep_trace:
            trace.append(obj_new)
        decrease = obj - obj_new
        a, obj = a_new, obj_new
        if decrease < config.tolerance:
            converged = True
            break
    return LassoResult(a, obj, it, converged, trace)
