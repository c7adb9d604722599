from __future__ import annotations

import numpy as np
import pytest

from conftest import random_state
from gpseg.analysis import (
    cross_moment,
    decay_fit,
    diagnostics,
    divergence_defect,
    fit_decay,
    inertia_invariance_check,
    morse_index,
    nehari_residual,
    nodal_components,
    norm_tracking,
    pohozaev_residual,
    quintic_bump,
    rescale_diagonal,
    segregation,
    solve_diagonal,
    first_mode_identity,
    step4_positivity_certificate,
    step5_diagonal_check,
)
from gpseg.errors import ConfigurationError, SolverError
from gpseg.grid import box, dirichlet_eigenpairs, integrate, interval
from gpseg.model import StatePair, SystemParams, residual_norm
from gpseg.solver import Branch, newton_refine, SolveOptions


def test_morse_zero_state(grid199):
    z = StatePair.zeros(grid199)
    rep = morse_index(grid199, SystemParams(-1, -1, 50), z, tol=1e-6)
    assert (rep.index, rep.nullity) == (0, 2)
    rep = morse_index(grid199, SystemParams(-2, -2, 50), z)
    assert (rep.index, rep.nullity) == (2, 0)


def test_morse_k2_solution(grid199, params50, k2_solution):
    rep = morse_index(grid199, params50, k2_solution.state)
    assert rep.index <= 2 and rep.nullity == 0


def test_morse_sparse_path_agrees(grid199, params50, k2_solution):
    a = morse_index(grid199, params50, k2_solution.state)
    b = morse_index(grid199, params50, k2_solution.state, dense_limit=10)
    assert (a.index, a.nullity) == (b.index, b.nullity)
    np.testing.assert_allclose(a.smallest_eigs[:3], b.smallest_eigs[:3], rtol=1e-8)


def test_morse_bad_tol(grid199, params50):
    with pytest.raises(ConfigurationError):
        morse_index(grid199, params50, StatePair.zeros(grid199), tol=0)


def test_inertia_invariance_zero(grid199):
    z = StatePair.zeros(grid199)
    p = SystemParams(-1, -1, 0.0)
    assert inertia_invariance_check(grid199, p, z)
    h1 = morse_index(grid199, p, z, gram="H1")
    assert (h1.index, h1.nullity) == (0, 2)


@pytest.mark.parametrize("beta", [-5.0, 0.0, 50.0])
def test_inertia_invariance_random(beta):
    g = interval(np.pi, 60)
    rng = np.random.default_rng(int(beta) + 100)
    p = SystemParams(-1, -1, beta)
    for _ in range(20):
        assert inertia_invariance_check(g, p, random_state(g, rng))


def test_pohozaev_zero_state(grid199, params50):
    phi = quintic_bump(grid199, (np.pi / 2,), np.pi / 4)
    assert pohozaev_residual(grid199, params50, StatePair.zeros(grid199), phi).residual == 0.0


def test_pohozaev_cutoff_support_checked(grid199, params50):
    with pytest.raises(ConfigurationError):
        pohozaev_residual(grid199, params50, StatePair.zeros(grid199), np.ones(grid199.N))


def test_divergence_defect_compact_state():
    g = interval(np.pi, 199)
    x = g.coords[:, 0]
    # support of u, v inside (pi/3, 2pi/3), bump on (pi/4, 3pi/4)
    t = np.clip((x - np.pi / 3) / (np.pi / 3), 0, 1)
    u = (t * (1 - t)) ** 3 * 50
    s = StatePair(u, 0.5 * u[::-1])
    phi = quintic_bump(g, (np.pi / 2,), np.pi / 4)
    assert divergence_defect(g, SystemParams(-1, -1, 50), s, phi) <= 1e-10
    g2 = box((np.pi, np.pi), (40, 40))
    rng = np.random.default_rng(2)
    phi2 = quintic_bump(g2, (np.pi / 2, np.pi / 2), np.pi / 4)
    s2 = StatePair(rng.standard_normal(g2.N) * phi2, rng.standard_normal(g2.N) * phi2)
    assert divergence_defect(g2, SystemParams(-1, -1, 50), s2, phi2) <= 1e-10


def test_pohozaev_refinement(params50):
    res = []
    for n in (199, 399):
        g = interval(np.pi, n)
        from gpseg.solver import MinimaxSeed, minimax_init

        sol = newton_refine(g, params50, minimax_init(g, MinimaxSeed(2), params50))
        phi = quintic_bump(g, (np.pi / 2,), np.pi / 4)
        res.append(pohozaev_residual(g, params50, sol.state, phi).residual)
    assert res[0] / res[1] >= 1.8


def test_nehari(grid199, params50, k2_solution):
    assert nehari_residual(grid199, params50, StatePair.zeros(grid199)) == (0.0, 0.0)
    s = k2_solution.state
    nu, nv = nehari_residual(grid199, params50, s)
    assert nu <= 1e-7 * integrate(grid199, s.u**4)
    assert nv <= 1e-7 * integrate(grid199, s.v**4)
    r = random_state(grid199, np.random.default_rng(3))
    assert min(nehari_residual(grid199, params50, r)) > 1e-3


def test_segregation():
    g = interval(np.pi, 199)
    x = g.coords[:, 0]
    u = np.where(x < 1, 1.0, 0.0)
    assert segregation(g, StatePair(u, 1 - u)) == 0.0
    phi = dirichlet_eigenpairs(g, 1)[0].vector
    assert segregation(g, StatePair(phi, phi)) == pytest.approx(3 / (2 * np.pi), abs=1e-3)


def test_segregation_decreasing(k2_branch):
    seg = [d["segregation"] for d in k2_branch.diagnostics[1:]]
    assert all(b < a for a, b in zip(seg, seg[1:]))


def test_cross_moment_vanishes(grid199, params50, k2_solution):
    s = k2_solution.state
    scale = integrate(grid199, np.abs(s.u * s.v) * (s.u**2 + s.v**2))
    assert abs(cross_moment(grid199, s)) <= 1e-8 * scale


def test_fit_decay_exact():
    betas = np.array([100.0, 1000.0, 10000.0])
    fit = fit_decay(betas, np.exp(-np.sqrt(betas)))
    assert fit.slope == pytest.approx(-1.0, abs=1e-10)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-10)


def test_fit_decay_preconditions():
    with pytest.raises(ConfigurationError):
        fit_decay([1.0, 2.0], [0.1, 0.01])
    with pytest.raises(ConfigurationError):
        fit_decay([1.0, 2.0, 3.0, 4.0], [0.1, 0.0, -1.0, 0.01])
    fit = fit_decay([1.0, 2.0, 3.0, 4.0], [0.1, 0.0, 0.02, 0.01])
    assert fit.excluded == (2.0,)
    with pytest.raises(ConfigurationError):
        decay_fit(Branch([1.0, 2.0], [None, None], [{}, {}]))


def test_decay_fit_branch(grid199, k2_branch):
    sub = Branch(k2_branch.betas[1:], k2_branch.states[1:], k2_branch.diagnostics[1:])
    fit = decay_fit(sub)
    assert fit.slope < 0 and fit.r_squared >= 0.9
    # canonical states put v on the left, so near pi/4 the intruding component is u
    local = decay_fit(sub, grid199, ball=((np.pi / 4,), 0.3), component="u")
    assert local.slope < 0


def test_norm_tracking(grid199, k2_branch):
    z = StatePair.zeros(grid199)
    assert norm_tracking(grid199, Branch([1.0], [z], [{}])) == [(0.0, 0.0, 0.0, 0.0)]
    rows = norm_tracking(grid199, k2_branch)
    assert len(rows) == len(k2_branch)
    tot = [a + b for a, b, _, _ in rows[1:]]
    assert max(tot) / min(tot) <= 2


def test_nodal_components():
    g = interval(np.pi, 199)
    x = g.coords[:, 0]
    assert nodal_components(g, np.abs(np.sin(2 * x)), 1e-3) == 2
    assert nodal_components(g, np.full(g.N, 1e-4), 1e-3) == 0
    with pytest.raises(ConfigurationError):
        nodal_components(g, x, 0.0)
    g2 = box((np.pi, np.pi), (31, 31))
    X = g2.coords
    f = np.abs(np.sin(2 * X[:, 0]) * np.sin(X[:, 1]))
    assert nodal_components(g2, f, 1e-3) == 2


def test_nodal_limit_state(k2_branch):
    d = k2_branch.diagnostics[-1]
    assert k2_branch.betas[-1] == 1e4
    assert d["nodal_components"] <= 2


def test_positivity_certificate(grid199, params50, k2_solution):
    z = np.zeros(grid199.N)
    assert step4_positivity_certificate(grid199, params50, StatePair(z, z))
    s = k2_solution.state
    assert np.min(s.u) > 0 and np.min(s.v) > 0
    assert step4_positivity_certificate(grid199, params50, s)


def test_semitrivial_state_collapses(grid199, params50):
    # Newton on -u'' - u = u^3 from a positive start cannot reach a positive solution
    phi = dirichlet_eigenpairs(grid199, 1)[0].vector
    res = newton_refine(grid199, params50, StatePair(phi, np.zeros(grid199.N)),
                        SolveOptions(grad_tol=1e-14, max_newton_iters=60))
    assert res.converged
    # the iteration collapses onto the zero state
    assert np.max(np.abs(res.state.u)) <= 1e-12
    assert abs(first_mode_identity(grid199, -1.0, phi)) > 1e-3


def test_diagonal_energy_identity(grid199):
    state, E, ref = step5_diagonal_check(grid199, 50.0)
    assert E < 0 and ref < 0
    assert abs(E - ref) <= 1e-8 * abs(ref)


def test_diagonal_scaling_law():
    g = interval(np.pi, 99)
    u2 = solve_diagonal(g, 2.0)
    u5 = rescale_diagonal(u2, 2.0, 5.0)
    state = StatePair(u5, u5.copy())
    assert residual_norm(g, SystemParams(-1, -1, 5.0), state) <= 1e-8
    peaks = [np.max(rescale_diagonal(u2, 2.0, b)) for b in (1.5, 1.25, 1.1)]
    assert peaks[0] < peaks[1] < peaks[2]


def test_diagonal_needs_beta_above_one(grid199):
    with pytest.raises(ConfigurationError):
        solve_diagonal(grid199, 1.0)
    with pytest.raises(SolverError):
        solve_diagonal(interval(1.0, 50), 5.0)


def test_diagnostics_keys(grid199, params50, k2_solution):
    d = diagnostics(grid199, params50, k2_solution.state)
    assert {"energy", "residual", "morse_index", "nullity", "nodal_components"} <= set(d)
    assert "morse_index" not in diagnostics(grid199, params50, k2_solution.state, morse=False)


def test_morse_of_swap(grid199, params50, k2_solution):
    a = morse_index(grid199, params50, k2_solution.state)
    b = morse_index(grid199, params50, k2_solution.state.swap())
    assert (a.index, a.nullity) == (b.index, b.nullity)


def test_morse_change_is_flagged():
    from gpseg.solver import _check_morse_changes

    br = Branch([1.0, 2.0, 3.0], [None] * 3,
                [{"morse_index": 2, "nullity": 0}, {"morse_index": 2, "nullity": 1}, {"morse_index": 3, "nullity": 0}])
    _check_morse_changes(br)
    assert not br.flags
    br = Branch([1.0, 2.0], [None] * 2, [{"morse_index": 2, "nullity": 0}, {"morse_index": 3, "nullity": 0}])
    _check_morse_changes(br)
    assert len(br.flags) == 1 and "refine" in br.flags[0]


def test_nodal_invariances():
    g = interval(np.pi, 199)
    x = g.coords[:, 0]
    f = np.abs(np.sin(3 * x)) + 0.01 * np.cos(7 * x)
    n = nodal_components(g, f, 0.05)
    assert nodal_components(g, 7.5 * f, 7.5 * 0.05) == n
    assert nodal_components(g, f[::-1], 0.05) == n


def test_segregation_swap_exact(grid199):
    s = random_state(grid199, np.random.default_rng(18))
    assert segregation(grid199, s) == segregation(grid199, s.swap())
