"""Energy, gradient and Hessian of the coupled cubic system.

Two functionals are available.  ``plain`` is

    I(u, v) = 1/2 int |grad u|^2 + |grad v|^2 + lam u^2 + mu v^2
              - 1/4 int u^4 + v^4 + beta/2 int u^2 v^2

and ``truncated`` replaces the linear and quartic terms by ``F(u+)`` and
``(u+)^4`` with ``lam = mu = -1`` built in.  Component-wise pieces are
evaluated by the same helper for ``u`` and ``v`` so that, for ``lam == mu``,
swapping the components swaps every intermediate result bit for bit.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, DimensionError
from .grid import Grid, solve_poisson


class Variant(str, enum.Enum):
    PLAIN = "plain"
    TRUNCATED = "truncated"


class Metric(str, enum.Enum):
    L2 = "L2"
    H1 = "H1"


@dataclass(frozen=True)
class SystemParams:
    lam: float = -1.0
    mu: float = -1.0
    beta: float = 50.0
    eps: float = 0.0
    R: float = math.inf

    def __post_init__(self):
        if not self.eps >= 0:
            raise ConfigurationError(f"eps must be >= 0, got {self.eps}")
        if not self.R > 1:
            raise ConfigurationError(f"R must exceed 1 (or be inf), got {self.R}")

    def with_beta(self, beta: float) -> SystemParams:
        return SystemParams(self.lam, self.mu, float(beta), self.eps, self.R)


@dataclass(frozen=True, eq=False)
class StatePair:
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if u.shape != v.shape or u.ndim != 1:
            raise DimensionError(f"components differ in shape: {u.shape} vs {v.shape}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @classmethod
    def zeros(cls, grid: Grid) -> StatePair:
        return cls(np.zeros(grid.N), np.zeros(grid.N))

    @classmethod
    def from_stack(cls, x: np.ndarray) -> StatePair:
        n = x.size // 2
        return cls(x[:n].copy(), x[n:].copy())

    def stack(self) -> np.ndarray:
        return np.concatenate([self.u, self.v])

    def swap(self) -> StatePair:
        return StatePair(self.v, self.u)

    def __add__(self, other: StatePair) -> StatePair:
        return StatePair(self.u + other.u, self.v + other.v)

    def __sub__(self, other: StatePair) -> StatePair:
        return StatePair(self.u - other.u, self.v - other.v)

    def __mul__(self, c: float) -> StatePair:
        return StatePair(c * self.u, c * self.v)

    __rmul__ = __mul__


def swap_sigma(state: StatePair) -> StatePair:
    return state.swap()


def positive_negative_parts(f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    f = np.asarray(f, dtype=float)
    return np.maximum(f, 0.0), np.maximum(-f, 0.0)


def _check_state(grid: Grid, state: StatePair) -> None:
    grid.check(state.u)
    grid.check(state.v)


# --- truncation -----------------------------------------------------------

def _tail_shift(eps: float, R: float) -> float:
    # f_eps(R) - (2 sqrt(R) sqrt(R) - R); keeps the s >= R branch continuous
    return eps * (R - 1.0)


def f_trunc(s, eps: float = 0.0, R: float = math.inf):
    """Odd truncation: s^(1+eps) on [0,1], affine on [1,R], sqrt growth beyond R."""
    s = np.asarray(s, dtype=float)
    a = np.abs(s)
    low = np.power(np.minimum(a, 1.0), 1.0 + eps)
    out = np.where(a <= 1.0, low, (1.0 + eps) * a - eps)
    if math.isfinite(R):
        tail = 2.0 * np.sqrt(R) * np.sqrt(a) - R + _tail_shift(eps, R)
        out = np.where(a >= R, tail, out)
    out = np.sign(s) * out
    return out if out.ndim else float(out)


def F_trunc(s, eps: float = 0.0, R: float = math.inf):
    """Even antiderivative of :func:`f_trunc` with F(0) = 0."""
    s = np.asarray(s, dtype=float)
    a = np.abs(s)
    F1 = 1.0 / (2.0 + eps)
    low = np.power(np.minimum(a, 1.0), 2.0 + eps) / (2.0 + eps)
    mid = F1 + 0.5 * (1.0 + eps) * (a * a - 1.0) - eps * (a - 1.0)
    out = np.where(a <= 1.0, low, mid)
    if math.isfinite(R):
        FR = F1 + 0.5 * (1.0 + eps) * (R * R - 1.0) - eps * (R - 1.0)
        tail = (
            FR
            + (4.0 / 3.0) * np.sqrt(R) * (a**1.5 - R**1.5)
            - (R - _tail_shift(eps, R)) * (a - R)
        )
        out = np.where(a >= R, tail, out)
    return out if out.ndim else float(out)


def f_trunc_prime(s, eps: float = 0.0, R: float = math.inf):
    """A.e. derivative of :func:`f_trunc`; takes the value 1 at |s| = R."""
    a = np.abs(np.asarray(s, dtype=float))
    if eps == 0.0:
        low = np.ones_like(a)
    else:
        low = (1.0 + eps) * np.power(np.minimum(a, 1.0), eps)
    out = np.where(a < 1.0, low, 1.0 + eps)
    if math.isfinite(R):
        out = np.where(a > R, np.sqrt(R) / np.sqrt(np.maximum(a, R)), out)
        out = np.where(a == R, 1.0, out)
    return out if out.ndim else float(out)


# --- functionals ------------------------------------------------------------

def _component_energy(grid: Grid, params: SystemParams, w: np.ndarray, lin: float, variant: Variant) -> float:
    dirichlet = 0.5 * np.dot(w, grid.laplacian @ w)
    if variant is Variant.PLAIN:
        return grid.weight * (dirichlet + 0.5 * lin * np.dot(w, w) - 0.25 * np.sum(w**4))
    wp = np.maximum(w, 0.0)
    return grid.weight * (dirichlet - np.sum(F_trunc(wp, params.eps, params.R)) - 0.25 * np.sum(wp**4))


def energy(grid: Grid, params: SystemParams, state: StatePair, variant: Variant | str = Variant.PLAIN) -> float:
    variant = Variant(variant)
    _check_state(grid, state)
    u, v = state.u, state.v
    eu = _component_energy(grid, params, u, params.lam, variant)
    ev = _component_energy(grid, params, v, params.mu, variant)
    coupling = 0.5 * params.beta * grid.weight * np.sum((u * u) * (v * v))
    return float((eu + ev) + coupling)


def _component_gradient(grid: Grid, params: SystemParams, w, other, lin: float, variant: Variant) -> np.ndarray:
    cross = params.beta * w * (other * other)
    if variant is Variant.PLAIN:
        return grid.laplacian @ w + lin * w - w**3 + cross
    wp = np.maximum(w, 0.0)
    return grid.laplacian @ w - f_trunc(wp, params.eps, params.R) - wp**3 + cross


def gradient(
    grid: Grid,
    params: SystemParams,
    state: StatePair,
    variant: Variant | str = Variant.PLAIN,
    metric: Metric | str = Metric.L2,
) -> StatePair:
    """L2 gradient (strong-form residual) or its H1 Riesz representative."""
    variant, metric = Variant(variant), Metric(metric)
    _check_state(grid, state)
    gu = _component_gradient(grid, params, state.u, state.v, params.lam, variant)
    gv = _component_gradient(grid, params, state.v, state.u, params.mu, variant)
    if metric is Metric.H1:
        gu, gv = solve_poisson(grid, gu), solve_poisson(grid, gv)
    return StatePair(gu, gv)


def _hessian_diagonals(grid: Grid, params: SystemParams, state: StatePair, variant: Variant):
    u, v = state.u, state.v
    b = params.beta
    if variant is Variant.PLAIN:
        du = params.lam - 3.0 * u * u + b * (v * v)
        dv = params.mu - 3.0 * v * v + b * (u * u)
    else:
        def local(w):
            wp = np.maximum(w, 0.0)
            return -f_trunc_prime(wp, params.eps, params.R) * (w > 0) - 3.0 * wp * wp

        du = local(u) + b * (v * v)
        dv = local(v) + b * (u * u)
    off = 2.0 * b * (u * v)
    return du, dv, off


def hessian_apply(
    grid: Grid,
    params: SystemParams,
    state: StatePair,
    direction: StatePair,
    variant: Variant | str = Variant.PLAIN,
) -> StatePair:
    variant = Variant(variant)
    _check_state(grid, state)
    _check_state(grid, direction)
    du, dv, off = _hessian_diagonals(grid, params, state, variant)
    phi, psi = direction.u, direction.v
    hu = grid.laplacian @ phi + du * phi + off * psi
    hv = grid.laplacian @ psi + dv * psi + off * phi
    return StatePair(hu, hv)


def hessian_matrix(
    grid: Grid, params: SystemParams, state: StatePair, variant: Variant | str = Variant.PLAIN
) -> sp.csr_matrix:
    """Sparse 2N x 2N Jacobian of the L2 gradient, ordered as (u, v)."""
    variant = Variant(variant)
    _check_state(grid, state)
    du, dv, off = _hessian_diagonals(grid, params, state, variant)
    A = grid.laplacian
    D = sp.diags(off)
    return sp.bmat([[A + sp.diags(du), D], [D, A + sp.diags(dv)]], format="csr")


def quadform(grid: Grid, params: SystemParams, state: StatePair, direction: StatePair, variant=Variant.PLAIN) -> float:
    """Second variation evaluated on ``direction`` twice."""
    h = hessian_apply(grid, params, state, direction, variant)
    return float(grid.weight * (np.dot(h.u, direction.u) + np.dot(h.v, direction.v)))


def residual_norm(grid: Grid, params: SystemParams, state: StatePair, variant: Variant | str = Variant.PLAIN) -> float:
    g = gradient(grid, params, state, variant, Metric.L2)
    return float(np.sqrt(grid.weight * (np.dot(g.u, g.u) + np.dot(g.v, g.v))))


def pair_inner(grid: Grid, a: StatePair, b: StatePair) -> float:
    return float(grid.weight * (np.dot(a.u, b.u) + np.dot(a.v, b.v)))


def pair_h1_norm(grid: Grid, s: StatePair) -> float:
    A = grid.laplacian
    return float(np.sqrt(grid.weight * (np.dot(s.u, A @ s.u) + np.dot(s.v, A @ s.v))))
