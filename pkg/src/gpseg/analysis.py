"""Numerical certificates for computed states.

Morse index and nullity, the interior Pohozaev balance, Nehari identities,
segregation and its decay along a beta branch, nodal component counts, and
the positivity and diagonal-solution checks used in the existence argument.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import ndimage
from scipy.stats import linregress

from .errors import ConfigurationError, SolverError
from .grid import DENSE_EIGEN_LIMIT, Grid, dirichlet_eigenpairs, h1_norm, integrate
from .model import (
    StatePair,
    SystemParams,
    Variant,
    energy,
    hessian_matrix,
    residual_norm,
)

if TYPE_CHECKING:
    from .solver import Branch

N_SMALLEST = 10


@dataclass(frozen=True)
class MorseReport:
    index: int
    nullity: int
    tol: float
    smallest_eigs: tuple[float, ...]


@dataclass(frozen=True)
class PohozaevReport:
    residual: float
    cutoff_id: str
    grid_h: float


@dataclass(frozen=True)
class DecayFit:
    betas: tuple[float, ...]
    overlaps: tuple[float, ...]
    slope: float
    intercept: float
    r_squared: float
    excluded: tuple[float, ...] = field(default=())


# --- Morse index -------------------------------------------------------------

def _gram(grid: Grid, kind: str):
    if kind == "L2":
        return None
    if kind == "H1":
        return sp.block_diag([grid.laplacian, grid.laplacian], format="csc")
    raise ConfigurationError(f"unknown Gram matrix {kind!r}")


def _backward_errors(vals: np.ndarray, vecs: np.ndarray, G) -> np.ndarray:
    """Norm of the smallest symmetric J-perturbation that zeroes each eigenpair.

    For J x = nu G x the rank-one term -nu G x x^T G / (x^T G x) annihilates x,
    at cost |nu| |G x|^2 / (x^T G x).  With G the identity this is |nu|.
    """
    if G is None:
        return np.abs(vals)
    Gx = G @ vecs
    return np.abs(vals) * np.sum(Gx * Gx, axis=0) / np.sum(vecs * Gx, axis=0)


def _dense_spectrum(J: sp.csr_matrix, G) -> tuple[np.ndarray, np.ndarray]:
    """All eigenpairs of the pencil (J, G); G=None means the identity."""
    if G is None:
        return np.linalg.eigh(J.toarray())
    return sla.eigh(J.toarray(), G.toarray())


def _smallest_sparse(J, G, lower: float, stop: float) -> tuple[np.ndarray, np.ndarray]:
    """Smallest eigenpairs of (J, G), extended until one exceeds ``stop``."""
    n = J.shape[0]
    m = N_SMALLEST
    while True:
        m = min(m, n - 2)
        vals, vecs = spla.eigsh(J.tocsc(), k=m, M=G, sigma=lower, which="LM", tol=1e-12)
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
        if vals[-1] > stop or m >= n - 2:
            return vals, vecs
        m *= 2


def morse_index(
    grid: Grid,
    params: SystemParams,
    state: StatePair,
    variant=Variant.PLAIN,
    tol: float = 1e-6,
    gram: str = "L2",
    dense_limit: int = DENSE_EIGEN_LIMIT,
) -> MorseReport:
    """Inertia of the second variation.

    ``tol`` is relative to the largest |eigenvalue| of the Hessian.  An
    eigenpair of the pencil (J, G) counts toward the nullity when J lies
    within ``tol * scale`` of a matrix annihilating its eigenvector (see
    :func:`_backward_errors`); for the L2 Gram matrix this is just
    ``|eig| <= tol * scale``.  Measuring closeness to singularity in J
    itself keeps the classification independent of the inner product.
    """
    if not tol > 0:
        raise ConfigurationError("Morse tolerance must be positive")
    J = hessian_matrix(grid, params, state, variant)
    G = _gram(grid, gram)
    dense = J.shape[0] <= dense_limit
    try:
        if dense and G is None:
            vals, vecs = _dense_spectrum(J, None)
            scale = np.max(np.abs(vals))
        elif dense:
            scale = np.max(np.abs(np.linalg.eigvalsh(J.toarray())))
            vals, vecs = _dense_spectrum(J, G)
        else:
            big = spla.eigsh(J.tocsc(), k=1, which="LM", return_eigenvectors=False)
            scale = float(np.max(np.abs(big)))
        threshold = tol * scale
        if not dense:
            diag = J.diagonal()
            radius = np.asarray(abs(J).sum(axis=1)).ravel() - np.abs(diag)
            lower = float(np.min(diag - radius))
            # past this value a generalized eigenvalue cannot be near-null
            stop = threshold
            if G is not None:
                lam1 = dirichlet_eigenpairs(grid, 1)[0].value
                lower = min(lower, 0.0) / lam1
                stop = threshold / lam1
            vals, vecs = _smallest_sparse(J, G, lower - 1.0, stop)
    except (np.linalg.LinAlgError, spla.ArpackError, spla.ArpackNoConvergence) as exc:
        raise SolverError(f"Hessian eigen-solve failed: {exc}") from exc
    null = _backward_errors(vals, vecs, G) <= threshold
    index = int(np.sum((vals < 0) & ~null))
    nullity = int(np.sum(null))
    return MorseReport(index, nullity, float(threshold), tuple(float(x) for x in vals[:N_SMALLEST]))


def inertia_invariance_check(grid, params, state, variant=Variant.PLAIN, tol: float = 1e-6) -> bool:
    a = morse_index(grid, params, state, variant, tol, gram="L2")
    b = morse_index(grid, params, state, variant, tol, gram="H1")
    return (a.index, a.nullity) == (b.index, b.nullity)


# --- Pohozaev ------------------------------------------------------------------

def central_gradient(grid: Grid, f: np.ndarray) -> np.ndarray:
    """``(N, dim)`` central differences with the zero boundary value padded in."""
    F = np.pad(grid.reshape(f), 1)
    cols = []
    for a, h in enumerate(grid.h):
        hi = [slice(1, -1)] * grid.dim
        lo = [slice(1, -1)] * grid.dim
        hi[a] = slice(2, None)
        lo[a] = slice(None, -2)
        cols.append(((F[tuple(hi)] - F[tuple(lo)]) / (2.0 * h)).ravel())
    return np.stack(cols, axis=1)


def central_divergence(grid: Grid, W: np.ndarray) -> np.ndarray:
    return sum(central_gradient(grid, W[:, a])[:, a] for a in range(grid.dim))


def quintic_bump(grid: Grid, center, radius: float) -> np.ndarray:
    """Radial C^2 bump ``1 - 10 t^3 + 15 t^4 - 6 t^5`` with t = |x - center| / radius."""
    center = np.broadcast_to(np.asarray(center, dtype=float), (grid.dim,))
    t = np.linalg.norm(grid.coords - center, axis=1) / radius
    return np.where(t < 1.0, 1.0 - 10.0 * t**3 + 15.0 * t**4 - 6.0 * t**5, 0.0)


def _check_cutoff(grid: Grid, cutoff: np.ndarray, layer: int = 2) -> np.ndarray:
    c = grid.reshape(cutoff)
    for a, n in enumerate(grid.shape):
        edge = np.take(c, list(range(layer)) + list(range(n - layer, n)), axis=a)
        if np.any(edge != 0):
            raise ConfigurationError(f"cutoff must vanish on the {layer}-node boundary layer")
    return c.ravel()


def pohozaev_field(grid: Grid, params: SystemParams, state: StatePair) -> tuple[np.ndarray, np.ndarray]:
    """Vector field W for V(x) = x, and the integrand it balances against."""
    x = grid.coords
    gu = central_gradient(grid, state.u)
    gv = central_gradient(grid, state.v)
    u, v = state.u, state.v
    Q = u**4 + v**4 - 2 * params.beta * (u * u) * (v * v) - 2 * params.lam * u * u - 2 * params.mu * v * v
    d = grid.dim
    grad_sq = np.sum(gu * gu, axis=1) + np.sum(gv * gv, axis=1)
    W = (
        np.sum(gu * x, axis=1)[:, None] * gu
        + np.sum(gv * x, axis=1)[:, None] * gv
        + (-0.5 * grad_sq + 0.25 * Q)[:, None] * x
    )
    balance = (1.0 - 0.5 * d) * grad_sq + 0.25 * d * Q
    return W, balance


def pohozaev_residual(
    grid: Grid, params: SystemParams, state: StatePair, cutoff: np.ndarray, cutoff_id: str = ""
) -> PohozaevReport:
    phi2 = _check_cutoff(grid, cutoff) ** 2
    W, balance = pohozaev_field(grid, params, state)
    dphi2 = central_gradient(grid, phi2)
    value = integrate(grid, balance * phi2) + integrate(grid, np.sum(W * dphi2, axis=1))
    return PohozaevReport(abs(value), cutoff_id, float(max(grid.h)))


def divergence_defect(grid: Grid, params: SystemParams, state: StatePair, cutoff: np.ndarray) -> float:
    """|int div_h(W phi^2)|; vanishes up to rounding whenever phi^2 W does at the boundary."""
    phi2 = _check_cutoff(grid, cutoff) ** 2
    W, _ = pohozaev_field(grid, params, state)
    return abs(integrate(grid, central_divergence(grid, W * phi2[:, None])))


# --- Nehari, segregation -----------------------------------------------------

def nehari_residual(grid: Grid, params: SystemParams, state: StatePair) -> tuple[float, float]:
    A = grid.laplacian
    w = grid.weight

    def one(a, b, lin):
        return abs(w * (np.dot(a, A @ a) + lin * np.dot(a, a) - np.sum(a**4) + params.beta * np.sum((a * a) * (b * b))))

    return float(one(state.u, state.v, params.lam)), float(one(state.v, state.u, params.mu))


def segregation(grid: Grid, state: StatePair) -> float:
    return integrate(grid, (state.u * state.u) * (state.v * state.v))


def cross_moment(grid: Grid, state: StatePair) -> float:
    """int u v (v^2 - u^2); zero at every solution with lam == mu."""
    u, v = state.u, state.v
    return integrate(grid, u * v * (v * v - u * u))


# --- decay along a branch ----------------------------------------------------

def fit_decay(betas, overlaps) -> DecayFit:
    """Least squares of log(overlap) against sqrt(beta); non-positive overlaps are dropped."""
    betas = np.asarray(betas, dtype=float)
    overlaps = np.asarray(overlaps, dtype=float)
    if betas.size < 3 or betas.shape != overlaps.shape:
        raise ConfigurationError("decay fit needs at least 3 (beta, overlap) points")
    keep = overlaps > 0
    if keep.sum() < 3:
        raise ConfigurationError("fewer than 3 positive overlaps left to fit")
    fit = linregress(np.sqrt(betas[keep]), np.log(overlaps[keep]))
    return DecayFit(
        tuple(betas[keep].tolist()),
        tuple(overlaps[keep].tolist()),
        float(fit.slope),
        float(fit.intercept),
        float(fit.rvalue**2),
        tuple(betas[~keep].tolist()),
    )


def decay_fit(branch: Branch, grid: Grid | None = None, ball=None, component: str = "v") -> DecayFit:
    """Fit the overlap decay along a branch.

    By default the overlap is the global int u^2 v^2.  With ``ball=(center,
    radius)`` it is the mass of one component inside that ball instead.
    """
    if len(branch) < 3:
        raise ConfigurationError("decay fit needs a branch with at least 3 points")
    if ball is None:
        overlaps = [d["segregation"] for d in branch.diagnostics]
    else:
        if grid is None:
            raise ConfigurationError("a local decay fit needs the grid")
        center, radius = ball
        inside = np.linalg.norm(grid.coords - np.asarray(center, dtype=float), axis=1) < radius
        overlaps = [integrate(grid, getattr(s, component) ** 2 * inside) for s in branch.states]
    return fit_decay(branch.betas, overlaps)


def norm_tracking(grid: Grid, branch: Branch) -> list[tuple[float, float, float, float]]:
    rows = []
    for s in branch.states:
        rows.append((h1_norm(grid, s.u), h1_norm(grid, s.v), float(np.max(np.abs(s.u))), float(np.max(np.abs(s.v)))))
    return rows


# --- nodal sets ----------------------------------------------------------------

def nodal_components(grid: Grid, f: np.ndarray, delta: float) -> int:
    """Connected components of {f > delta} under face adjacency."""
    if not delta > 0:
        raise ConfigurationError("delta must be positive")
    _, count = ndimage.label(grid.reshape(f) > delta)
    return int(count)


def default_delta(state: StatePair, rel: float = 1e-3) -> float:
    return rel * float(np.max(state.u + state.v))


# --- positivity and diagonal checks --------------------------------------------

def first_mode_identity(grid: Grid, lin: float, w: np.ndarray) -> float:
    """(lambda_1 + lin) int w phi_1 - int w^3 phi_1, zero for solutions of -Delta w + lin w = w^3."""
    first = dirichlet_eigenpairs(grid, 1)[0]
    phi = first.vector
    return (first.value + lin) * integrate(grid, w * phi) - integrate(grid, w**3 * phi)


def step4_positivity_certificate(grid: Grid, params: SystemParams, state: StatePair) -> bool:
    """Guard against semi-trivial states.

    When one component vanishes, return whether the identity tested against
    the first eigenfunction rules the other out as a nonnegative nonzero
    solution (it does whenever lambda_1 + lam <= 0).  When neither vanishes,
    return whether both are strictly positive at every node.
    """
    lam1 = dirichlet_eigenpairs(grid, 1)[0].value
    zero_u, zero_v = not np.any(state.u), not np.any(state.v)
    if zero_u and zero_v:
        return True
    for w, other_zero, lin in ((state.u, zero_v, params.lam), (state.v, zero_u, params.mu)):
        if other_zero:
            if np.any(w < 0):
                return False
            return lam1 + lin <= 0 and first_mode_identity(grid, lin, w) < 0
    return bool(np.min(state.u) > 0 and np.min(state.v) > 0)


def solve_diagonal(grid: Grid, beta: float, max_iter: int = 60) -> np.ndarray:
    """Positive solution of -Delta u + (beta - 1) u^3 = u by Newton from the first mode."""
    if not beta > 1:
        raise ConfigurationError("the diagonal equation needs beta > 1")
    first = dirichlet_eigenpairs(grid, 1)[0]
    if first.value >= 1:
        raise SolverError("no positive diagonal solution: lambda_1 >= 1 on this grid")
    phi = np.asarray(first.vector)
    c = beta - 1.0
    u = np.sqrt((1.0 - first.value) / (c * integrate(grid, phi**4))) * phi
    A = grid.laplacian
    eye = sp.identity(grid.N, format="csr")

    def res(w):
        return A @ w - w + c * w**3

    r = np.linalg.norm(res(u))
    for _ in range(max_iter):
        J = A - eye + sp.diags(3.0 * c * u * u)
        du = spla.spsolve(J.tocsc(), -res(u))
        u_new = u + du
        r_new = np.linalg.norm(res(u_new))
        if not r_new < r:
            break
        u, r = u_new, r_new
    scale = np.linalg.norm(A @ u)
    if not r <= 1e-10 * scale or np.min(u) <= 0:
        raise SolverError(f"diagonal Newton failed (residual {r:.3e}, scale {scale:.3e})")
    return u


def rescale_diagonal(u: np.ndarray, beta: float, beta_new: float) -> np.ndarray:
    """Map a diagonal solution at beta to the one at beta_new (exact scaling law)."""
    return u * math.sqrt((beta - 1.0) / (beta_new - 1.0))


def step5_diagonal_check(grid: Grid, beta: float) -> tuple[StatePair, float, float]:
    """Diagonal state (u, u), its energy, and the closed form -(beta - 1)/2 int u^4."""
    u = solve_diagonal(grid, beta)
    state = StatePair(u, u.copy())
    params = SystemParams(-1.0, -1.0, beta)
    return state, energy(grid, params, state), -0.5 * (beta - 1.0) * integrate(grid, u**4)


# --- per-state summary -----------------------------------------------------------

def diagnostics(
    grid: Grid,
    params: SystemParams,
    state: StatePair,
    variant=Variant.PLAIN,
    morse: bool = True,
    morse_tol: float = 1e-6,
    delta_rel: float = 1e-3,
) -> dict:
    rec = {
        "energy": energy(grid, params, state, variant),
        "residual": residual_norm(grid, params, state, variant),
        "segregation": segregation(grid, state),
        "h1_u": h1_norm(grid, state.u),
        "h1_v": h1_norm(grid, state.v),
        "linf_u": float(np.max(np.abs(state.u))),
        "linf_v": float(np.max(np.abs(state.v))),
    }
    if morse:
        rep = morse_index(grid, params, state, variant, morse_tol)
        rec["morse_index"] = rep.index
        rec["nullity"] = rep.nullity
    delta = default_delta(state, delta_rel)
    rec["nodal_delta"] = delta
    rec["nodal_components"] = nodal_components(grid, state.u + state.v, delta) if delta > 0 else 0
    return rec
