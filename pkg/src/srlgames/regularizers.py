"""Separable penalty kernels and the regularized choice maps they induce.

A kernel ``theta`` on [0, 1] defines the penalty ``h(x) = sum_a theta(x_a)``
on the simplex and the choice map

    Q(y) = argmax_{x in simplex} <y, x> - h(x).

Entropy gives the logit map and the quadratic kernel gives Euclidean
projection; anything else goes through a 1-D root find for the simplex
multiplier.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.special import logsumexp, xlogy

SIMPLEX_TOL = 1e-9


class ChoiceMapError(ValueError):
    pass


@dataclass(frozen=True)
class PenaltyKernel:
    """Strongly convex kernel ``theta`` with its first three derivatives.

    ``phi`` is the inverse of ``dtheta``; it may return values outside [0, 1]
    (or inf) away from the range of ``dtheta``, the solver handles that.
    """

    name: str
    theta: Callable
    dtheta: Callable
    d2theta: Callable
    d3theta: Callable
    steep: bool
    K: float
    phi: Callable | None = None
    kind: str = "generic"

    def as_generic(self) -> "PenaltyKernel":
        """Same kernel, but routed through the generic root-finding solver."""
        return replace(self, kind="generic", name=self.name + "-generic")

    def check_strong_convexity(self, n_grid: int = 10_000) -> float:
        """Smallest theta'' on a grid of (0, 1]; raises if it falls below K."""
        z = np.linspace(1.0 / n_grid, 1.0, n_grid)
        lo = float(np.min(self.d2theta(z)))
        if lo < self.K * (1 - 1e-12):
            raise ValueError(f"kernel {self.name}: theta'' reaches {lo} < K = {self.K}")
        return lo


def _entropy_d1(z):
    with np.errstate(divide="ignore"):
        return 1.0 + np.log(z)


def _entropy_d2(z):
    with np.errstate(divide="ignore"):
        return 1.0 / np.asarray(z, dtype=float)


def _entropy_d3(z):
    with np.errstate(divide="ignore"):
        return -1.0 / np.asarray(z, dtype=float) ** 2


def entropy_kernel() -> PenaltyKernel:
    return PenaltyKernel(
        name="entropy",
        theta=lambda z: xlogy(z, z),
        dtheta=_entropy_d1,
        d2theta=_entropy_d2,
        d3theta=_entropy_d3,
        phi=lambda w: np.exp(np.asarray(w, dtype=float) - 1.0),
        steep=True,
        K=1.0,
        kind="entropy",
    )


def quadratic_kernel() -> PenaltyKernel:
    return PenaltyKernel(
        name="quadratic",
        theta=lambda z: 0.5 * np.asarray(z, dtype=float) ** 2,
        dtheta=lambda z: np.asarray(z, dtype=float),
        d2theta=lambda z: np.ones_like(np.asarray(z, dtype=float)),
        d3theta=lambda z: np.zeros_like(np.asarray(z, dtype=float)),
        phi=lambda w: np.asarray(w, dtype=float),
        steep=False,
        K=1.0,
        kind="quadratic",
    )


def tsallis_kernel(q: float = 0.5) -> PenaltyKernel:
    """theta(z) = (z - z^q) / (1 - q); steep for q in (0, 1), with K = q."""
    if not 0 < q < 1:
        raise ValueError("Tsallis index must lie in (0, 1)")

    def phi(w):
        w = np.asarray(w, dtype=float)
        base = (1.0 - (1.0 - q) * w) / q
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(base > 0, np.abs(base) ** (1.0 / (q - 1.0)), np.inf)
        return out

    def d1(z):
        with np.errstate(divide="ignore"):
            return (1.0 - q * np.asarray(z, dtype=float) ** (q - 1.0)) / (1.0 - q)

    return PenaltyKernel(
        name=f"tsallis-{q:g}",
        theta=lambda z: (np.asarray(z, dtype=float) - np.asarray(z, dtype=float) ** q) / (1.0 - q),
        dtheta=d1,
        d2theta=lambda z: q * np.asarray(z, dtype=float) ** (q - 2.0),
        d3theta=lambda z: q * (q - 2.0) * np.asarray(z, dtype=float) ** (q - 3.0),
        phi=phi,
        steep=True,
        K=q,
    )


_REGISTRY: dict[str, Callable[[], PenaltyKernel]] = {
    "entropy": entropy_kernel,
    "quadratic": quadratic_kernel,
    "tsallis": tsallis_kernel,
}


def register_kernel(name: str, factory: Callable[[], PenaltyKernel]) -> None:
    _REGISTRY[name] = factory


def get_kernel(name: str) -> PenaltyKernel:
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise KeyError(f"unknown kernel {name!r}; known: {sorted(_REGISTRY)}") from None


def kernel_names() -> list[str]:
    return sorted(_REGISTRY)


# --------------------------------------------------------------------------
# choice maps

def logit(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    z = y - y.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def simplex_projection(y) -> np.ndarray:
    """Euclidean projection onto the simplex along the last axis (sort and threshold)."""
    y = np.asarray(y, dtype=float)
    n = y.shape[-1]
    u = -np.sort(-y, axis=-1)
    css = np.cumsum(u, axis=-1) - 1.0
    j = np.arange(1, n + 1)
    cond = u - css / j > 0
    rho = n - 1 - np.argmax(cond[..., ::-1], axis=-1)
    tau = np.take_along_axis(css, rho[..., None], axis=-1) / (rho[..., None] + 1.0)
    return np.maximum(y - tau, 0.0)


def _phi(kernel: PenaltyKernel, w: np.ndarray) -> np.ndarray:
    if kernel.phi is not None:
        x = kernel.phi(w)
    else:
        x = _invert_dtheta(kernel, w)
    if not kernel.steep:
        with np.errstate(invalid="ignore"):
            x = np.where(w <= kernel.dtheta(0.0), 0.0, x)
    return np.clip(x, 0.0, None)


def _invert_dtheta(kernel: PenaltyKernel, w: np.ndarray) -> np.ndarray:
    # monotone bisection on (0, 1]; values beyond theta'(1) clamp to 1
    w = np.atleast_1d(np.asarray(w, dtype=float))
    lo = np.zeros_like(w)
    hi = np.ones_like(w)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        below = kernel.dtheta(mid) < w
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def _solve_multiplier(kernel: PenaltyKernel, y: np.ndarray, tol: float = 1e-12,
                      max_iter: int = 200) -> np.ndarray:
    """Find zeta with sum_a phi(y_a - zeta) = 1 (safeguarded Newton + bisection)."""
    n = y.size
    d1_one = float(kernel.dtheta(1.0))
    d1_unif = float(kernel.dtheta(1.0 / n))
    lo = float(y.min()) - d1_one      # sum >= 1 here
    hi = float(y.max()) - d1_unif     # sum <= 1 here
    if hi < lo:
        lo, hi = hi, lo

    def g(zeta):
        x = _phi(kernel, y - zeta)
        return float(np.sum(x)) - 1.0, x

    zeta = hi
    for _ in range(max_iter):
        val, x = g(zeta)
        if abs(val) <= 4e-15:
            return x / (1.0 + val)
        if val > 0:
            lo = zeta
        else:
            hi = zeta
        if hi - lo <= tol * max(1.0, abs(zeta)):
            return _phi(kernel, y - 0.5 * (lo + hi))
        step = None
        if np.all(np.isfinite(x)) and np.all(x <= 1.0):
            inner = x > 0
            slope = float(np.sum(1.0 / kernel.d2theta(x[inner]))) if inner.any() else 0.0
            if slope > 0 and np.isfinite(slope):
                step = zeta + val / slope
        if step is None or not lo < step < hi:
            step = 0.5 * (lo + hi)
        if abs(step - zeta) <= 0.25 * tol * max(1.0, abs(zeta)):
            return _phi(kernel, y - step)
        zeta = step
    raise ChoiceMapError(f"multiplier search did not converge for kernel {kernel.name}")


def choice_map(kernel: PenaltyKernel, y) -> np.ndarray:
    """Regularized best response to the score vector ``y``."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise ChoiceMapError("score vector must be a nonempty 1-D array")
    if not np.all(np.isfinite(y)):
        raise ChoiceMapError("score vector has non-finite entries")
    if kernel.kind == "entropy":
        return logit(y)
    if kernel.kind == "quadratic":
        return simplex_projection(y)
    x = _solve_multiplier(kernel, y)
    return x / x.sum()


def choice_map_batch(kernel: PenaltyKernel, Y: np.ndarray) -> np.ndarray:
    """Row-wise choice map of a ``(B, n)`` array; no input validation."""
    if kernel.kind == "entropy":
        return logit(Y)
    if kernel.kind == "quadratic":
        return simplex_projection(Y)
    out = np.empty_like(Y)
    for i, row in enumerate(Y):
        x = _solve_multiplier(kernel, row)
        out[i] = x / x.sum()
    return out


# --------------------------------------------------------------------------
# conjugate, coupling, curvature

def penalty(kernel: PenaltyKernel, x) -> float:
    return float(np.sum(kernel.theta(np.asarray(x, dtype=float))))


def penalty_range(kernel: PenaltyKernel, n: int) -> float:
    """max h - min h over the n-simplex (vertices vs. barycenter for separable h)."""
    top = float(kernel.theta(1.0)) + (n - 1) * float(kernel.theta(0.0))
    return top - n * float(kernel.theta(1.0 / n))


def conjugate_value(kernel: PenaltyKernel, y) -> float:
    y = np.asarray(y, dtype=float)
    if kernel.kind == "entropy":
        if not np.all(np.isfinite(y)):
            raise ChoiceMapError("score vector has non-finite entries")
        return float(logsumexp(y))
    x = choice_map(kernel, y)
    return float(y @ x) - penalty(kernel, x)


def _check_simplex(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or np.any(p < -SIMPLEX_TOL) or abs(p.sum() - 1.0) > SIMPLEX_TOL:
        raise ChoiceMapError(f"benchmark point is not on the simplex: {p}")
    return np.clip(p, 0.0, None)


def fenchel_coupling(kernel: PenaltyKernel, p, y) -> float:
    """h(p) + h*(y) - <y, p>; nonnegative, zero iff p = Q(y)."""
    p = _check_simplex(p)
    y = np.asarray(y, dtype=float)
    if p.shape != y.shape:
        raise ChoiceMapError("benchmark and score vector differ in size")
    val = penalty(kernel, p) + conjugate_value(kernel, y) - float(y @ p)
    # rounding can leave a tiny negative residue at p = Q(y)
    if -1e-12 < val < 0:
        val = 0.0
    return val


def conjugate_hessian(kernel: PenaltyKernel, y) -> tuple[np.ndarray, bool]:
    """Hessian of h* at y and a flag set when Q(y) is a vertex (Hessian is zero there).

    On the support S of Q(y), with w = 1/theta'', the Hessian is
    diag(w) - w w^T / sum(w); it vanishes off the support.
    """
    x = choice_map(kernel, y)
    n = x.size
    H = np.zeros((n, n))
    support = np.flatnonzero(x > 0)
    if support.size <= 1:
        return H, True
    w = 1.0 / kernel.d2theta(x[support])
    block = np.diag(w) - np.outer(w, w) / w.sum()
    H[np.ix_(support, support)] = block
    return H, False


def conjugate_hessian_diag(kernel: PenaltyKernel, y) -> tuple[np.ndarray, bool]:
    H, degenerate = conjugate_hessian(kernel, y)
    return np.diag(H).copy(), degenerate


def lipschitz_constant(kernel: PenaltyKernel) -> float:
    return 1.0 / kernel.K


def entropy_phi(w: float) -> float:
    return math.exp(w - 1.0)
