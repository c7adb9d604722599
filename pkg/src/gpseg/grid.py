"""Finite-difference discretization of box domains with zero Dirichlet data.

Fields are flat float arrays over the interior nodes in C order, so in 2D
node ``(i, j)`` precedes ``(i, j + 1)`` which precedes ``(i + 1, 0)``.
The boundary value is implicitly zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, DimensionError, SolverError

DENSE_EIGEN_LIMIT = 4096
POISSON_RTOL = 1e-12


@dataclass(frozen=True)
class Domain:
    """Box ``(0, L_1) x ... x (0, L_d)`` with ``nodes[a]`` interior nodes per axis."""

    dim: int
    lengths: tuple[float, ...]
    nodes: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "lengths", tuple(float(x) for x in np.atleast_1d(self.lengths)))
        object.__setattr__(self, "nodes", tuple(int(x) for x in np.atleast_1d(self.nodes)))
        if self.dim not in (1, 2):
            raise ConfigurationError(f"dim must be 1 or 2, got {self.dim}")
        if len(self.lengths) != self.dim or len(self.nodes) != self.dim:
            raise ConfigurationError("lengths and nodes need one entry per axis")
        if any(not np.isfinite(L) or L <= 0 for L in self.lengths):
            raise ConfigurationError(f"lengths must be positive, got {self.lengths}")
        if any(n < 3 for n in self.nodes):
            raise ConfigurationError(f"need at least 3 interior nodes per axis, got {self.nodes}")


@dataclass(frozen=True)
class EigenPair:
    value: float
    vector: np.ndarray


@dataclass(frozen=True, eq=False)
class Grid:
    domain: Domain
    h: tuple[float, ...] = field(init=False)
    N: int = field(init=False)
    weight: float = field(init=False)

    def __post_init__(self):
        h = tuple(L / (n + 1) for L, n in zip(self.domain.lengths, self.domain.nodes))
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "N", int(np.prod(self.domain.nodes)))
        object.__setattr__(self, "weight", float(np.prod(h)))

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return self.domain.nodes

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.N, self.weight)

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        """Interior node coordinates along each axis."""
        return tuple(h * np.arange(1, n + 1) for h, n in zip(self.h, self.shape))

    @cached_property
    def coords(self) -> np.ndarray:
        """``(N, dim)`` array of node coordinates in field order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @cached_property
    def laplacian(self) -> sp.csr_matrix:
        """Sparse matrix of the negative Dirichlet Laplacian (-Delta_h)."""
        ops = [_second_difference(n, h) for n, h in zip(self.shape, self.h)]
        if self.dim == 1:
            return ops[0].tocsr()
        eye0 = sp.identity(self.shape[0], format="csr")
        eye1 = sp.identity(self.shape[1], format="csr")
        return (sp.kron(ops[0], eye1) + sp.kron(eye0, ops[1])).tocsr()

    @cached_property
    def _eigen_cache(self) -> dict:
        return {}

    @cached_property
    def _poisson_lu(self):
        return spla.splu(self.laplacian.tocsc())

    def check(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != (self.N,):
            raise DimensionError(f"field has shape {f.shape}, grid expects ({self.N},)")
        return f

    def reshape(self, f: np.ndarray) -> np.ndarray:
        return self.check(f).reshape(self.shape)

    def sample(self, fn) -> np.ndarray:
        """Evaluate ``fn(*coords)`` at the interior nodes."""
        return np.asarray(fn(*self.coords.T), dtype=float)


def _second_difference(n: int, h: float) -> sp.dia_matrix:
    main = np.full(n, 2.0 / h**2)
    off = np.full(n - 1, -1.0 / h**2)
    return sp.diags([off, main, off], [-1, 0, 1])


def build_grid(domain: Domain) -> Grid:
    return Grid(domain)


def interval(length: float = np.pi, n: int = 199) -> Grid:
    return Grid(Domain(1, (length,), (n,)))


def box(lengths=(np.pi, np.pi), nodes=(63, 63)) -> Grid:
    return Grid(Domain(2, tuple(lengths), tuple(nodes)))


def apply_neg_laplacian(grid: Grid, f: np.ndarray) -> np.ndarray:
    return grid.laplacian @ grid.check(f)


def integrate(grid: Grid, nodal: np.ndarray) -> float:
    return float(grid.weight * np.sum(grid.check(nodal)))


def inner(grid: Grid, f: np.ndarray, g: np.ndarray) -> float:
    """Weighted L2 inner product."""
    return float(grid.weight * np.dot(grid.check(f), grid.check(g)))


def l2_norm(grid: Grid, f: np.ndarray) -> float:
    return float(np.sqrt(inner(grid, f, f)))


def h1_seminorm_sq(grid: Grid, f: np.ndarray) -> float:
    f = grid.check(f)
    return float(grid.weight * np.dot(f, grid.laplacian @ f))


def h1_norm(grid: Grid, f: np.ndarray) -> float:
    return float(np.sqrt(max(h1_seminorm_sq(grid, f), 0.0)))


def solve_poisson(grid: Grid, rhs: np.ndarray) -> np.ndarray:
    """Return g with -Delta_h g = rhs (sparse LU plus iterative refinement)."""
    rhs = grid.check(rhs)
    scale = np.linalg.norm(rhs)
    if scale == 0.0:
        return np.zeros(grid.N)
    lu = grid._poisson_lu
    g = lu.solve(rhs)
    for it in range(1, 4):
        r = rhs - grid.laplacian @ g
        if np.linalg.norm(r) <= POISSON_RTOL * scale:
            return g
        g = g + lu.solve(r)
    r = rhs - grid.laplacian @ g
    if not np.linalg.norm(r) <= POISSON_RTOL * scale:
        raise SolverError(
            f"Poisson solve stalled at relative residual {np.linalg.norm(r) / scale:.3e} "
            f"after {it} refinement sweeps"
        )
    return g


def dirichlet_eigenpairs(grid: Grid, k: int) -> list[EigenPair]:
    """The k smallest eigenpairs of -Delta_h, L2-normalized in the weighted product."""
    if not 1 <= k <= grid.N:
        raise ConfigurationError(f"need 1 <= k <= N={grid.N}, got k={k}")
    cache = grid._eigen_cache
    cached = cache.get("pairs")
    if cached is not None and len(cached) >= k:
        return cached[:k]
    A = grid.laplacian
    if grid.N <= DENSE_EIGEN_LIMIT:
        vals, vecs = sla.eigh(A.toarray(), subset_by_index=[0, k - 1])
    else:
        vals, vecs = spla.eigsh(A.tocsc(), k=k, sigma=0.0, which="LM", tol=1e-10)
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    vecs = vecs / np.sqrt(grid.weight)
    pairs = []
    for j in range(k):
        vec = vecs[:, j].copy()
        # fix the sign: first clearly nonzero node positive (phi_1 > 0 then follows)
        first = vec[np.flatnonzero(np.abs(vec) > 1e-6 * np.abs(vec).max())[0]]
        if first < 0:
            vec = -vec
        vec.setflags(write=False)
        pairs.append(EigenPair(float(vals[j]), vec))
    cache["pairs"] = pairs
    return pairs


def stencil_eigenvalue_1d(j: int, h: float, length: float = np.pi) -> float:
    """Closed-form eigenvalue of the 3-point stencil for the mode sin(j pi x / L)."""
    theta = j * np.pi * h / length
    # 4 sin^2(theta/2) equals 2 - 2 cos(theta) without the cancellation
    return 4.0 * np.sin(0.5 * theta) ** 2 / h**2
