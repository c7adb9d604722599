"""Critical-point search: minimax seeds, Sobolev descent, Newton, deflation, continuation."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import minimize_scalar

from . import analysis
from .errors import ConfigurationError, NotFoundError, SolverError
from .grid import Grid, dirichlet_eigenpairs, h1_norm, integrate, solve_poisson
from .model import (
    Metric,
    StatePair,
    SystemParams,
    Variant,
    energy,
    gradient,
    hessian_matrix,
    pair_h1_norm,
    pair_inner,
    positive_negative_parts,
    residual_norm,
)

log = logging.getLogger(__name__)

DEFAULT_SCHEDULE = (50.0, 1e2, 10**2.5, 1e3, 10**3.5, 1e4)


@dataclass(frozen=True)
class SolveOptions:
    grad_tol: float = 1e-9
    max_descent_iters: int = 5000
    max_newton_iters: int = 50
    armijo_c: float = 1e-4
    armijo_shrink: float = 0.5
    deflation_power: float = 2.0
    deflation_shift: float = 1.0
    # largest beta ratio attempted in one continuation substep
    max_beta_ratio: float = 2.0

    def __post_init__(self):
        if not self.grad_tol > 0:
            raise ConfigurationError("grad_tol must be positive")
        if self.max_descent_iters < 0 or self.max_newton_iters < 0:
            raise ConfigurationError("iteration limits must be non-negative")
        for name in ("armijo_c", "armijo_shrink"):
            if not 0 < getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must lie in (0, 1)")
        if not self.deflation_power >= 1:
            raise ConfigurationError("deflation_power must be >= 1")
        if not self.deflation_shift > 0:
            raise ConfigurationError("deflation_shift must be positive")
        if not self.max_beta_ratio > 1:
            raise ConfigurationError("max_beta_ratio must exceed 1")


@dataclass(frozen=True)
class MinimaxSeed:
    """Point ``amplitude * sum(mix_j phi_j)`` of the ball in the span of the first k modes.

    ``amplitude=None`` asks :func:`minimax_init` to place the seed at the
    energy maximum along the ray through ``(w+, w-)``.
    """

    k: int
    amplitude: float | None = None
    mix: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ConfigurationError(f"k must be >= 1, got {self.k}")
        mix = self.mix
        if mix is None:
            mix = tuple([0.0] * (self.k - 1) + [1.0])
        mix = np.asarray(mix, dtype=float)
        if mix.shape != (self.k,):
            raise ConfigurationError(f"mix needs {self.k} coefficients, got {mix.size}")
        norm = np.linalg.norm(mix)
        if norm == 0:
            raise ConfigurationError("mix must be nonzero")
        object.__setattr__(self, "mix", tuple(float(c) for c in mix / norm))
        if self.amplitude is not None and not self.amplitude > 0:
            raise ConfigurationError("amplitude must be positive")


@dataclass
class SolveResult:
    state: StatePair
    converged: bool
    iterations: int
    residuals: list[float] = field(default_factory=list)
    energies: list[float] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)

    @property
    def residual(self) -> float:
        return self.residuals[-1] if self.residuals else math.nan


@dataclass
class Branch:
    betas: list[float] = field(default_factory=list)
    states: list[StatePair] = field(default_factory=list)
    diagnostics: list[dict] = field(default_factory=list)
    complete: bool = True
    flags: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.betas)


@dataclass(frozen=True)
class LinkingProbeReport:
    k: int
    rho: float
    samples: int
    min_energy: float
    beta: float


# --- initialization ------------------------------------------------------------

def seed_direction(grid: Grid, seed: MinimaxSeed) -> np.ndarray:
    """Unit H1 vector ``sum(mix_j phi_j)`` in the span of the first k modes."""
    if seed.k > grid.N:
        raise ConfigurationError(f"k={seed.k} exceeds the {grid.N} modes this grid resolves")
    pairs = dirichlet_eigenpairs(grid, seed.k)
    w = sum(c * p.vector for c, p in zip(seed.mix, pairs))
    return w / h1_norm(grid, w)


def ray_amplitude(grid: Grid, params: SystemParams, w: np.ndarray, variant=Variant.PLAIN) -> float:
    """Maximizer over t > 0 of the energy of ``(t w+, t w-)``."""
    wp, wm = positive_negative_parts(w)

    def e(t):
        return energy(grid, params, StatePair(t * wp, t * wm), variant)

    ts = np.geomspace(1e-3, 1e3, 121)
    vals = np.array([e(t) for t in ts])
    i = int(np.argmax(vals))
    if i == 0 or i == len(ts) - 1 or not vals[i] > 0:
        raise ConfigurationError("energy has no interior maximum along the seed ray")
    res = minimize_scalar(lambda t: -e(t), bounds=(ts[i - 1], ts[i + 1]), method="bounded",
                          options={"xatol": 1e-10 * ts[i]})
    return float(res.x)


def minimax_init(
    grid: Grid, seed: MinimaxSeed, params: SystemParams | None = None, variant=Variant.PLAIN
) -> StatePair:
    """Boundary value ``(w+, w-)`` of the minimax class at the seed point."""
    w = seed_direction(grid, seed)
    amplitude = seed.amplitude
    if amplitude is None:
        if params is None:
            raise ConfigurationError("default amplitude needs system parameters")
        amplitude = ray_amplitude(grid, params, w, variant)
    wp, wm = positive_negative_parts(amplitude * w)
    return StatePair(wp, wm)


def canonical_representative(grid: Grid, state: StatePair) -> StatePair:
    """Pick between a state and its swap: the one whose u has the larger first moment."""
    x1 = grid.coords[:, 0]
    if integrate(grid, state.u * x1) >= integrate(grid, state.v * x1):
        return state
    return state.swap()


# --- descent -------------------------------------------------------------------

def descend(
    grid: Grid,
    params: SystemParams,
    init: StatePair,
    opts: SolveOptions = SolveOptions(),
    variant=Variant.PLAIN,
) -> SolveResult:
    """Steepest descent along the H1 gradient with Armijo backtracking."""
    variant = Variant(variant)
    state = init
    E = energy(grid, params, state, variant)
    r = residual_norm(grid, params, state, variant)
    result = SolveResult(state, False, 0, [r], [E])
    alpha_min = 1e-14
    for it in range(opts.max_descent_iters):
        if r <= opts.grad_tol:
            result.converged = True
            break
        g_l2 = gradient(grid, params, state, variant, Metric.L2)
        g_h1 = StatePair(solve_poisson(grid, g_l2.u), solve_poisson(grid, g_l2.v))
        slope = pair_inner(grid, g_l2, g_h1)
        # energy differences below this are rounding noise
        noise = 1e-13 * max(abs(E), slope, 1e-300)
        alpha = 1.0
        while alpha >= alpha_min:
            trial = StatePair(state.u - alpha * g_h1.u, state.v - alpha * g_h1.v)
            E_trial = energy(grid, params, trial, variant)
            if E_trial <= E - opts.armijo_c * alpha * slope:
                break
            if opts.armijo_c * alpha * slope <= noise and E_trial <= E:
                r_trial = residual_norm(grid, params, trial, variant)
                if r_trial < r:
                    break
            alpha *= opts.armijo_shrink
        else:
            result.flags.append("line search stalled")
            break
        state, E = trial, E_trial
        r = residual_norm(grid, params, state, variant)
        result.iterations = it + 1
        result.residuals.append(r)
        result.energies.append(E)
    else:
        result.converged = r <= opts.grad_tol
    if not result.converged:
        result.flags.append("descent not converged")
    result.state = state
    return result


# --- Newton ------------------------------------------------------------------

def _linear_solve(J: sp.csr_matrix, rhs: np.ndarray, shift: float, flags: list[str]) -> np.ndarray:
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            dx = spla.spsolve(J.tocsc(), rhs)
            if np.all(np.isfinite(dx)):
                return dx
        except (spla.MatrixRankWarning, RuntimeError):
            pass
    flags.append("regularized solve")
    Jr = J + shift * sp.identity(J.shape[0], format="csr")
    dx = spla.spsolve(Jr.tocsc(), rhs)
    if not np.all(np.isfinite(dx)):
        raise SolverError("regularized Newton system is singular")
    return dx


def newton_refine(
    grid: Grid,
    params: SystemParams,
    state: StatePair,
    opts: SolveOptions = SolveOptions(),
    variant=Variant.PLAIN,
) -> SolveResult:
    """Damped Newton on the strong-form residual.

    Raises :class:`SolverError` when the iteration produces non-finite values
    or the backtracking cannot reduce the residual at all.
    """
    variant = Variant(variant)
    r = residual_norm(grid, params, state, variant)
    result = SolveResult(state, False, 0, [r], [energy(grid, params, state, variant)])
    for it in range(opts.max_newton_iters):
        if r <= opts.grad_tol:
            break
        J = hessian_matrix(grid, params, state, variant)
        F = gradient(grid, params, state, variant).stack()
        dx = _linear_solve(J, -F, opts.deflation_shift, result.flags)
        state, r = _backtrack(grid, params, state, dx, r, variant, result)
        result.iterations = it + 1
        result.residuals.append(r)
        result.energies.append(energy(grid, params, state, variant))
    result.state = state
    result.converged = r <= opts.grad_tol
    if not result.converged:
        result.flags.append("newton not converged")
    elif result.iterations >= 3 and not newton_quadratic(result.residuals):
        result.flags.append("convergence not quadratic")
    return result


def _backtrack(grid, params, state, dx, r, variant, result, merit=None):
    if merit is None:
        merit = lambda s: residual_norm(grid, params, s, variant)  # noqa: E731
        m0 = r
    else:
        m0 = merit(state)
    x = state.stack()
    lam = 1.0
    while lam >= 1e-8:
        trial = StatePair.from_stack(x + lam * dx)
        m = merit(trial)
        if np.isfinite(m) and m < (1.0 - 1e-4 * lam) * m0:
            return trial, residual_norm(grid, params, trial, variant)
        lam *= 0.5
    trace = ", ".join(f"{v:.3e}" for v in result.residuals[-6:])
    raise SolverError(f"Newton line search failed; residual trace [{trace}]")


def newton_quadratic(residuals: list[float], floor: float = 1e-10, C: float = 1.0) -> bool:
    """True when r_{n+1} <= C r_n^2 holds over the last three steps above ``floor``."""
    steps = [(a, b) for a, b in zip(residuals, residuals[1:]) if b > floor]
    tail = steps[-3:]
    return bool(tail) and all(b <= C * a * a for a, b in tail)


def convergence_orders(residuals: list[float]) -> list[float]:
    """Local order estimates log(r_{n+1}/r_n) / log(r_n/r_{n-1})."""
    r = np.asarray(residuals, dtype=float)
    out = []
    for a, b, c in zip(r, r[1:], r[2:]):
        if a > b > c > 0:
            out.append(float(np.log(c / b) / np.log(b / a)))
    return out


# --- deflation -----------------------------------------------------------------

class Deflation:
    """Shifted-power deflation over known solutions and their swaps (H1 distance)."""

    def __init__(self, grid: Grid, known: list[StatePair], power: float, shift: float):
        self.grid = grid
        self.power = power
        self.shift = shift
        self.roots = []
        for k in known:
            self.roots.append(k.stack())
            self.roots.append(k.swap().stack())

    def _h1(self, e: np.ndarray):
        n = self.grid.N
        A = self.grid.laplacian
        Ae = np.concatenate([A @ e[:n], A @ e[n:]])
        return self.grid.weight * np.dot(e, Ae), self.grid.weight * Ae

    def factor(self, x: np.ndarray) -> float:
        M = 1.0
        for root in self.roots:
            d2, _ = self._h1(x - root)
            M *= d2 ** (-self.power / 2) + self.shift
        return M

    def log_gradient(self, x: np.ndarray) -> np.ndarray:
        """Gradient of log M with respect to the nodal vector."""
        out = np.zeros_like(x)
        for root in self.roots:
            d2, wAe = self._h1(x - root)
            m = d2 ** (-self.power / 2)
            out += (-self.power * m / d2) * wAe / (m + self.shift)
        return out


def deflated_solve(
    grid: Grid,
    params: SystemParams,
    known: list[StatePair],
    init: StatePair,
    opts: SolveOptions = SolveOptions(),
    variant=Variant.PLAIN,
) -> SolveResult:
    """Newton on M(x) F(x), where M blows up at every known solution and its swap."""
    variant = Variant(variant)
    if not known:
        return newton_refine(grid, params, init, opts, variant)
    defl = Deflation(grid, known, opts.deflation_power, opts.deflation_shift)

    def merit(s):
        return defl.factor(s.stack()) * residual_norm(grid, params, s, variant)

    state = init
    r = residual_norm(grid, params, state, variant)
    result = SolveResult(state, False, 0, [r], [energy(grid, params, state, variant)])
    for it in range(opts.max_newton_iters):
        if r <= opts.grad_tol:
            break
        J = hessian_matrix(grid, params, state, variant)
        F = gradient(grid, params, state, variant).stack()
        y = _linear_solve(J, F, opts.deflation_shift, result.flags)
        x = state.stack()
        # Sherman-Morrison for (M J + F grad(M)^T) dx = -M F
        dx = -y / (1.0 + np.dot(defl.log_gradient(x), y))
        try:
            state, r = _backtrack(grid, params, state, dx, r, variant, result, merit)
        except SolverError as exc:
            raise NotFoundError(f"deflated Newton stalled: {exc}") from exc
        result.iterations = it + 1
        result.residuals.append(r)
        result.energies.append(energy(grid, params, state, variant))
    result.state = state
    result.converged = r <= opts.grad_tol
    if not result.converged:
        raise NotFoundError(f"no new solution within {opts.max_newton_iters} iterations (residual {r:.3e})")
    gap = min(
        min(pair_h1_norm(grid, state - k), pair_h1_norm(grid, state - k.swap())) for k in known
    )
    if gap < opts.deflation_shift:
        raise NotFoundError(f"deflated Newton returned to a known solution (H1 gap {gap:.3e})")
    return result


# --- continuation --------------------------------------------------------------

def continue_in_beta(
    grid: Grid,
    params: SystemParams,
    state: StatePair,
    schedule,
    opts: SolveOptions = SolveOptions(),
    variant=Variant.PLAIN,
    morse: bool = True,
) -> Branch:
    """Warm-started Newton along an ascending beta schedule.

    Between schedule points beta is advanced geometrically in substeps of
    ratio at most ``opts.max_beta_ratio``; a failed substep is halved in
    log-beta until the ratio drops below 1.001, at which point the branch is
    returned partial.
    """
    variant = Variant(variant)
    schedule = [float(b) for b in schedule]
    if not schedule or any(b1 <= b0 for b0, b1 in zip(schedule, schedule[1:])):
        raise ConfigurationError("beta schedule must be non-empty and strictly ascending")
    p0 = params.with_beta(schedule[0])
    first = newton_refine(grid, p0, state, opts, variant)
    if not first.converged:
        raise SolverError(f"initial state does not solve at beta={schedule[0]} "
                          f"(residual {first.residual:.3e})")
    branch = Branch()
    _record(branch, grid, p0, first.state, variant, morse)
    current, beta = first.state, schedule[0]
    for target in schedule[1:]:
        try:
            current = _advance(grid, params, current, beta, target, opts, variant)
        except SolverError as exc:
            branch.complete = False
            branch.flags.append(f"stopped before beta={target}: {exc}")
            log.warning("continuation stopped before beta=%g: %s", target, exc)
            break
        beta = target
        _record(branch, grid, params.with_beta(beta), current, variant, morse)
    _check_morse_changes(branch)
    return branch


def _advance(grid, params, state, beta, target, opts, variant):
    log_ratio = math.log(opts.max_beta_ratio)
    while beta < target:
        step = min(log_ratio, math.log(target / beta))
        while True:
            nxt = target if step >= math.log(target / beta) else beta * math.exp(step)
            try:
                res = newton_refine(grid, params.with_beta(nxt), state, opts, variant)
                if res.converged:
                    break
            except SolverError:
                pass
            step /= 2
            if step < math.log(1.001):
                raise SolverError(f"Newton failed stepping beta from {beta:g}")
        state, beta = res.state, nxt
    return state


def _record(branch, grid, params, state, variant, morse):
    branch.betas.append(params.beta)
    branch.states.append(state)
    branch.diagnostics.append(analysis.diagnostics(grid, params, state, variant, morse=morse))


def _check_morse_changes(branch: Branch) -> None:
    d = branch.diagnostics
    for a, b, b0, b1 in zip(d, d[1:], branch.betas, branch.betas[1:]):
        if "morse_index" not in a:
            continue
        if a["morse_index"] != b["morse_index"] and a["nullity"] == 0 and b["nullity"] == 0:
            msg = f"Morse index changed between beta={b0:g} and beta={b1:g}; refine the schedule"
            branch.flags.append(msg)
            log.warning(msg)


# --- linking probe -------------------------------------------------------------

def linking_probe(
    grid: Grid, params: SystemParams, k: int, rho: float, samples: int, rng_seed: int
) -> LinkingProbeReport:
    """Monte Carlo upper estimate of inf I over {u - v in E_{k-1}^perp, ||u - v|| = rho}.

    Each sample draws the difference d from modes k .. k+63 and the sum as
    ``|d| + eta``, where eta spans the first min(N, 64) modes; both use
    standard normal coefficients scaled by 1/lambda_j.  Centering the sum at
    ``|d|`` keeps the coupling term from masking the infimum.  The energy is
    the truncated functional.
    """
    if k < 1 or not rho > 0 or samples < 1:
        raise ConfigurationError("linking probe needs k >= 1, rho > 0 and samples >= 1")
    if k > grid.N:
        raise ConfigurationError(f"k={k} exceeds the {grid.N} modes this grid resolves")
    top = min(grid.N, k - 1 + 64)
    pairs = dirichlet_eigenpairs(grid, max(top, min(grid.N, 64)))
    V = np.stack([p.vector for p in pairs], axis=1)
    lam = np.array([p.value for p in pairs])
    n_sum = min(grid.N, 64)
    hi = top
    rng = np.random.default_rng(rng_seed)
    best = math.inf
    for _ in range(samples):
        eta = V[:, :n_sum] @ (rng.standard_normal(n_sum) / lam[:n_sum])
        cd = rng.standard_normal(hi - (k - 1)) / lam[k - 1:hi]
        d = V[:, k - 1:hi] @ cd
        d *= rho / h1_norm(grid, d)
        s = np.abs(d) + eta
        e = energy(grid, params, StatePair(0.5 * (s + d), 0.5 * (s - d)), Variant.TRUNCATED)
        best = min(best, e)
    return LinkingProbeReport(k, float(rho), samples, float(best), params.beta)
