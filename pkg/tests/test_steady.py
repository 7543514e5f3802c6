import numpy as np
import pytest
import scipy.sparse as sp

from nsns import forms, linalg, steady
from nsns.benchmarks import ManufacturedSolution
from nsns.forms import PhysicalParams
from nsns.mesh import Mesh
from nsns.spaces import build_taylor_hood

TEST1 = PhysicalParams(nu=1.0, beta=10.0, gamma=10.0)
SOL = ManufacturedSolution()


@pytest.fixture(scope="module")
def level8():
    space = SOL.space(8)
    data = SOL.problem_data(TEST1)
    state, report = steady.solve_navier_stokes(space, TEST1, **data)
    return space, data, state, report


def test_exact_velocity_is_divergence_free():
    x = np.random.default_rng(0).uniform(-1, 1, (500, 2))
    g = SOL.velocity_gradient(x)
    assert np.abs(g[:, 0, 0] + g[:, 1, 1]).max() < 1e-14


def test_zero_data_gives_zero_solution():
    space = SOL.space(4)
    st = steady.solve_stokes(space, TEST1)
    assert np.all(st.to_vector() == 0)
    st, rep = steady.solve_navier_stokes(space, TEST1)
    assert rep.converged and rep.iterations == 0 and np.all(st.velocity == 0)


def test_state_vector_round_trip():
    space = SOL.space(2)
    x = np.arange(space.n_unknowns, dtype=float)
    st = steady.SolutionState.from_vector(space, x)
    assert np.array_equal(st.to_vector(), x)
    assert st.multiplier == x[-1]
    assert np.all(steady.SolutionState.zeros(space).to_vector() == 0)


def _relabel(mesh, perm):
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    return Mesh(mesh.nodes[perm], inv[mesh.triangles], inv[mesh.boundary_edges],
                mesh.boundary_tags)


def test_stokes_invariant_under_renumbering():
    mesh = SOL.mesh(4)
    perm = np.random.default_rng(2).permutation(mesh.n_nodes)
    data = SOL.problem_data(TEST1)
    results = []
    for m in (mesh, _relabel(mesh, perm)):
        space = build_taylor_hood(m)
        st = steady.solve_stokes(space, TEST1, **data)
        u = st.velocity.reshape(-1, 2)
        order = np.lexsort(np.round(space.node_coords, 12).T[::-1])
        p_order = np.lexsort(np.round(m.nodes, 12).T[::-1])
        results.append((u[order], st.pressure[p_order]))
    assert np.abs(results[0][0] - results[1][0]).max() < 1e-10
    assert np.abs(results[0][1] - results[1][1]).max() < 1e-10


def test_stokes_is_first_newton_iterate():
    space = SOL.space(8)
    data = SOL.problem_data(TEST1)
    st = steady.solve_stokes(space, TEST1, **data)
    nw, rep = steady.solve_navier_stokes(space, TEST1, max_iter=1, **data)
    assert rep.iterations == 1 and not rep.converged
    assert np.abs(st.to_vector() - nw.to_vector()).max() < 1e-10


def test_oseen_without_advection_is_stokes():
    space = SOL.space(4)
    data = SOL.problem_data(TEST1)
    st = steady.solve_stokes(space, TEST1, **data)
    os_ = steady.solve_oseen(space, TEST1, np.zeros(space.n_velocity), **data)
    assert np.abs(st.to_vector() - os_.to_vector()).max() < 1e-12


def test_newton_converges_at_coarsest_level(level8):
    space, data, state, report = level8
    assert report.converged
    assert abs(report.iterations - 3) <= 1
    r = report.residual_norms
    assert all(b < a for a, b in zip(r, r[1:]))
    assert r[-1] <= 1e-7


def test_converged_state_invariants(level8):
    space, data, state, report = level8
    vd = forms.volume_data(space)
    mean = np.sum(vd.wq * (state.pressure[space.mesh.triangles] @ vd.psi.T))
    assert abs(mean) <= 1e-10 * 4.0
    prob = steady.SteadyProblem.build(space, TEST1, **data)
    R = prob.residual(state.to_vector())
    cont = R[space.n_velocity:space.n_total]
    assert np.abs(cont).max() <= 1e-7
    # Galerkin consistency against unit random test vectors
    rng = np.random.default_rng(17)
    Z = rng.standard_normal((200, space.n_unknowns))
    Z[:, space.dirichlet_dofs] = 0
    Z /= np.linalg.norm(Z, axis=1, keepdims=True)
    assert np.abs(Z @ R).max() <= 1e-7


def test_dirichlet_values_are_imposed(level8):
    space, data, state, _ = level8
    nodes = space.node_coords[space.dirichlet_nodes]
    u = state.velocity.reshape(-1, 2)[space.dirichlet_nodes]
    assert np.abs(u - SOL.velocity(nodes)).max() < 1e-12


def test_viscous_dominated_newton():
    space = SOL.space(8)
    params = PhysicalParams(nu=1e3, beta=10.0, gamma=10.0)
    f = SOL.forcing(1.0)
    _, rep = steady.solve_navier_stokes(space, params, f=f, dirichlet_data=SOL.velocity)
    assert rep.converged and rep.iterations <= 2


def test_jacobian_matches_finite_differences():
    space = SOL.space(2)
    prob = steady.SteadyProblem.build(space, TEST1, **SOL.problem_data(TEST1))
    rng = np.random.default_rng(4)
    x = rng.standard_normal(space.n_unknowns)
    d = rng.standard_normal(space.n_unknowns)
    free = np.setdiff1d(np.arange(space.n_unknowns), space.dirichlet_dofs)
    eps = 1e-6
    fd = (prob.residual(x + eps * d) - prob.residual(x - eps * d)) / (2 * eps)
    J = prob.jacobian(x) @ d
    assert np.abs(fd[free] - J[free]).max() < 1e-7 * np.abs(J).max()


def test_manufactured_rates_short_sweep():
    levels = steady.run_manufactured_convergence([8, 16, 32], TEST1)
    assert [lv.dofs for lv in levels] == [659, 2467, 9539]
    assert all(lv.converged for lv in levels)
    rp = steady.convergence_rates([lv.errors.pressure_l2 for lv in levels])
    rh = steady.convergence_rates([lv.errors.velocity_h1 for lv in levels])
    rl = steady.convergence_rates([lv.errors.velocity_l2 for lv in levels])
    assert np.all((1.8 <= rp) & (rp <= 2.3))
    assert np.all((1.8 <= rh) & (rh <= 2.3))
    assert 2.7 <= rl[-1] <= 3.4
    with pytest.raises(ValueError):
        steady.run_manufactured_convergence([16, 8], TEST1)


def test_convergence_rates_helper():
    assert np.allclose(steady.convergence_rates([1.0, 0.25, 0.0625]), [2.0, 2.0])


def test_singular_system_is_reported():
    A = sp.csr_matrix(np.array([[1.0, 2.0], [2.0, 4.0]]))
    with pytest.raises(linalg.LinearSolveError, match="8x8 test"):
        linalg.solve(A, np.ones(2), "8x8 test")


def test_superlu_fallback_agrees():
    space = SOL.space(4)
    prob = steady.SteadyProblem.build(space, TEST1, **SOL.problem_data(TEST1))
    A, b = forms.apply_dirichlet(prob.operator, prob.rhs, prob.dirichlet.dofs,
                                 prob.dirichlet.values)
    x = linalg._superlu(A, b)
    assert np.abs(x - linalg.solve(A, b)).max() < 1e-10
