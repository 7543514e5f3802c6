import csv

import numpy as np
import pytest

import oracle
from nsns import forms, steady, vms
from nsns.benchmarks import (ManufacturedSolution, TaylorGreen, cavity_mesh, cavity_params,
                             lid_velocity)
from nsns.forms import PhysicalParams
from nsns.mesh import BoundaryTag, generate_structured_square
from nsns.reference import affine_map, affine_maps, triangle_quadrature
from nsns.spaces import build_taylor_hood, dirichlet_values, interpolate
from nsns.steady import SolutionState


def bottom_navier(mid):
    return BoundaryTag.NAVIER if abs(mid[1]) < 1e-12 else BoundaryTag.DIRICHLET


def small_space(n=2):
    return build_taylor_hood(generate_structured_square(n, tagger=bottom_navier))


def state_of(space, u, p=None):
    x = np.zeros(space.n_unknowns)
    x[:space.n_velocity] = u
    if p is not None:
        x[space.n_velocity:space.n_total] = p
    return SolutionState.from_vector(space, x)


# coefficients and history ----------------------------------------------------

def test_bdf_coefficients():
    assert vms.bdf_coefficients(1) == (1.0, (1.0, 0.0), (1.0, 0.0))
    assert vms.bdf_coefficients(2) == (1.5, (2.0, -1.0), (2.0, -0.5))
    with pytest.raises(ValueError):
        vms.bdf_coefficients(3)


def test_history_combinations():
    space = small_space(1)
    rng = np.random.default_rng(0)
    old = state_of(space, rng.standard_normal(space.n_velocity),
                   rng.standard_normal(space.n_pressure))
    new = state_of(space, rng.standard_normal(space.n_velocity),
                   rng.standard_normal(space.n_pressure))
    h1 = vms.HistoryState.start(old)
    assert h1.order(2) == 1 and h1.alpha(2) == 1.0
    assert np.array_equal(h1.extrapolated_velocity(2), old.velocity)
    assert np.array_equal(h1.bdf_velocity(2), old.velocity)
    h2 = h1.push(new)
    assert h2.order(2) == 2 and h2.alpha(2) == 1.5 and h2.order(1) == 1
    assert np.array_equal(h2.extrapolated_velocity(2), 2 * new.velocity - old.velocity)
    assert np.array_equal(h2.extrapolated_pressure(2), 2 * new.pressure - old.pressure)
    assert np.array_equal(h2.bdf_velocity(2), 2 * new.velocity - 0.5 * old.velocity)
    assert np.array_equal(h2.extrapolated_velocity(1), new.velocity)
    assert len(h2.push(old).states) == 2


def test_time_config_validation(caplog):
    assert vms.TimeConfig(0.035, 35.0).n_steps == 1000
    for bad in (dict(dt=0.0, t_end=1.0), dict(dt=2.0, t_end=1.0),
                dict(dt=0.1, t_end=1.0, sigma=3), dict(dt=0.1, t_end=1.0, c_tilde=0.5)):
        with pytest.raises(ValueError):
            vms.TimeConfig(**bad)
    vms.TimeConfig(0.1, 1.0, c_tilde=1)
    assert "experimental" in caplog.text


# metric tensor and stabilization parameters -----------------------------------

def test_metric_tensor_examples():
    hx, hy = 0.25, 0.5
    _, jinv, _ = affine_maps(np.array([[[1.0, 1.0], [1 + hx, 1.0], [1.0, 1 + hy]]]))
    G, g = vms.metric_tensor(jinv[0])
    assert np.allclose(G, np.diag([1 / hx ** 2, 1 / hy ** 2]))
    assert np.allclose(g, [1 / hx, 1 / hy])
    G, g = vms.metric_tensor(np.eye(2))
    assert np.array_equal(G, np.eye(2)) and np.array_equal(g, [1.0, 1.0])
    with pytest.raises(ValueError):
        vms.metric_tensor(np.full((2, 2), np.inf))


def test_metric_tensor_positive_definite():
    rng = np.random.default_rng(1)
    m = generate_structured_square(3, (0, 0), (2, 1))
    for t in range(m.n_triangles):
        G, _ = vms.metric_tensor(affine_map(m, t))
        x = rng.standard_normal((10, 2))
        assert np.all(np.einsum("ki,ij,kj->k", x, G, x) > 0)


def test_inverse_estimate_constant():
    assert vms.inverse_estimate_constant() == 60.0
    assert vms.inverse_estimate_constant(3) == 120.0


def test_stabilization_examples():
    G, g = np.diag([4.0, 9.0]), np.array([2.0, 3.0])
    for sigma in (1, 2):
        s_m, _ = vms.stabilization_params(np.zeros(2), G, g, 0.0, 0.2, sigma)
        assert s_m == pytest.approx(0.2 / sigma, rel=1e-15)
    G = np.eye(2) * 16.0
    u = np.array([0.6, -0.8])
    s1, _ = vms.stabilization_params(u, G, g, 0.0, 1e12, 1)
    s2, _ = vms.stabilization_params(2 * u, G, g, 0.0, 1e12, 1)
    assert s2 == pytest.approx(s1 / 2, rel=1e-12)


def test_stabilization_against_formula():
    rng = np.random.default_rng(2)
    J = rng.standard_normal((1000, 2, 2)) + 3 * np.eye(2)
    G, g = vms.metric_tensor(np.linalg.inv(J))
    u = rng.standard_normal((1000, 2))
    nu = rng.uniform(1e-4, 1.0, 1000)
    dt = 10.0 ** rng.uniform(-4, 1, 1000)
    sigma = rng.integers(1, 3, 1000)
    s_m, s_c = vms.stabilization_params(u, G, g, nu, dt, sigma)
    assert np.all(s_m > 0) and np.all(s_c > 0)
    assert np.abs(s_c * s_m * np.einsum("ki,ki->k", g, g) - 1).max() < 1e-13
    for k in range(0, 1000, 97):
        ref = (sigma[k] ** 2 / dt[k] ** 2 + u[k] @ G[k] @ u[k]
               + 60 * nu[k] ** 2 * np.sum(G[k] * G[k])) ** -0.5
        assert s_m[k] == pytest.approx(ref, rel=1e-13)


@pytest.mark.parametrize("sigma", [1, 2])
def test_small_step_limits(sigma):
    G, g = np.array([[5.0, 1.0], [1.0, 3.0]]), np.array([1.5, -2.0])
    u = np.array([1.0, 2.0])
    for dt in 10.0 ** -np.arange(1, 7):
        s_m, s_c = vms.stabilization_params(u, G, g, 0.01, dt, sigma)
        if dt == 1e-6:
            assert s_m / dt == pytest.approx(1 / sigma, rel=0.01)
            assert s_c * dt == pytest.approx(sigma / (g @ g), rel=0.01)


# strong residuals -------------------------------------------------------------

def test_momentum_residual_vanishes_for_steady_polynomial_solution():
    space = small_space(3)
    nu = 0.3
    u = lambda x: np.stack([x[..., 0] ** 2 - x[..., 1], -2 * x[..., 0] * x[..., 1] + x[..., 0]],
                           -1)
    grad = lambda x: np.stack([np.stack([2 * x[..., 0], -np.ones_like(x[..., 0])], -1),
                               np.stack([1 - 2 * x[..., 1], -2 * x[..., 0]], -1)], -2)
    lap = np.array([2.0, 0.0])
    gp = np.array([1.0, -2.0])

    def f(x, t):
        return np.einsum("...ij,...j->...i", grad(x), u(x)) + gp - nu * lap

    st = state_of(space, interpolate(space, u),
                  interpolate(space, lambda x: x[..., 0] - 2 * x[..., 1], "pressure"))
    cfg = vms.TimeConfig(0.01, 1.0)
    r_m, r_c = vms.strong_residuals(space, PhysicalParams(nu=nu), cfg,
                                    vms.HistoryState.start(st), st, f)
    assert np.abs(r_m).max() < 1e-12
    assert np.abs(r_c).max() < 1e-12


def test_continuity_residual_of_rotation():
    space = small_space(3)
    st = state_of(space, interpolate(space, lambda x: np.stack([x[..., 1], -x[..., 0]], -1)))
    cfg = vms.TimeConfig(0.1, 1.0)
    _, r_c = vms.strong_residuals(space, PhysicalParams(), cfg, vms.HistoryState.start(st), st)
    assert np.abs(r_c).max() < 1e-13


def test_zero_state_has_zero_residual():
    space = small_space(2)
    z = SolutionState.zeros(space)
    r_m, r_c = vms.strong_residuals(space, PhysicalParams(), vms.TimeConfig(0.1, 1.0),
                                    vms.HistoryState.start(z), z)
    assert np.all(r_m == 0) and np.all(r_c == 0)


# step operator ------------------------------------------------------------------

def _oracle_step_matrix(space, params, cfg, history, f):
    """Step matrix rebuilt from forms pieces plus element-by-element
    stabilization oracles."""
    sigma = history.order(cfg.sigma)
    alpha = history.alpha(cfg.sigma)
    u_ext = history.extrapolated_velocity(cfg.sigma)
    p_ext = history.extrapolated_pressure(cfg.sigma)
    u_bdf = history.bdf_velocity(cfg.sigma)
    N = space.n_unknowns
    K = (forms.assemble_stokes_operator(space, params) + alpha / cfg.dt * forms.assemble_mass(
        space) + forms.assemble_convection(space, u_ext)).toarray()
    rule = triangle_quadrature(forms.VOLUME_DEGREE)
    mesh = space.mesh
    f1 = lambda x: f(np.asarray(x)[None], cfg.dt)[0]
    data = {}
    for t in range(mesh.n_triangles):
        el = oracle.PhysicalElement(mesh.nodes[mesh.triangles[t]])
        vd_ = space.velocity_dofs[t]
        sd = oracle.StepData(el, u_ext[vd_], u_ext[vd_], p_ext[mesh.triangles[t]], u_bdf[vd_],
                             f1, params.nu, cfg.dt, alpha, sigma, cfg.c_tilde)
        data[t] = sd
        xs, ws = oracle.physical_points(el, (rule.points, rule.weights))
        Kl, _ = oracle.residual_terms(sd, xs, ws, ("supg", "vms", "les"))
        Kl += oracle.grad_div(sd, xs, ws)
        idx = space.dofs[t]
        K[np.ix_(idx, idx)] += Kl
    for e in mesh.navier_edges():
        t, k = mesh.boundary_owner[e], mesh.boundary_local_edge[e]
        Kb, _ = oracle.vms_boundary(data[t], k)
        idx = space.dofs[t]
        K[np.ix_(idx, idx)] += Kb
    assert K.shape == (N, N)
    return K


@pytest.mark.parametrize("dt", [0.05, 1e12])
def test_step_matrix_against_oracle(dt):
    space = small_space(2)
    params = PhysicalParams(nu=0.02, beta=2.0, gamma=10.0)
    rng = np.random.default_rng(6)
    if dt > 1:
        hist = vms.HistoryState.start(SolutionState.zeros(space))
        cfg = vms.TimeConfig(dt, dt)
    else:
        a = state_of(space, rng.standard_normal(space.n_velocity),
                     rng.standard_normal(space.n_pressure))
        b = state_of(space, rng.standard_normal(space.n_velocity),
                     rng.standard_normal(space.n_pressure))
        hist = vms.HistoryState.start(a).push(b)
        cfg = vms.TimeConfig(dt, 1.0, sigma=2)
    f = lambda x, t: np.stack([np.sin(3 * x[..., 1]), x[..., 0] * x[..., 1] + t], -1)
    sys_ = vms.assemble_vms_step(space, params, cfg, hist, f, t_new=cfg.dt)
    K = _oracle_step_matrix(space, params, cfg, hist, f)
    M = sys_.matrix.toarray()
    assert np.abs(M - K).max() <= 1e-12 * np.abs(K).max()


def test_unstabilized_step_is_implicit_euler_oseen():
    space = small_space(3)
    params = PhysicalParams(nu=0.1, beta=1.0, gamma=10.0)
    w = np.random.default_rng(3).standard_normal(space.n_velocity)
    hist = vms.HistoryState.start(state_of(space, w))
    cfg = vms.TimeConfig(0.1, 1.0)
    s = vms.assemble_vms_step(space, params, cfg, hist, stabilization=False)
    mass = forms.assemble_mass(space)
    K = (forms.assemble_stokes_operator(space, params) + mass / 0.1
         + forms.assemble_convection(space, w))
    assert abs(s.matrix - K).max() < 1e-12 * abs(K).max()
    x = np.zeros(space.n_unknowns)
    x[:space.n_velocity] = w
    assert np.allclose(s.rhs, mass @ x / 0.1, atol=1e-13)


def test_huge_step_reproduces_steady_oseen():
    sol = ManufacturedSolution()
    space = sol.space(8)
    params = PhysicalParams(nu=1.0, beta=10.0, gamma=10.0)
    data = sol.problem_data(params)
    w = interpolate(space, lambda x: 0.5 * sol.velocity(x) + 0.1)
    ref = steady.solve_oseen(space, params, w, **data)
    cfg = vms.TimeConfig(1e9, 1e9)
    hist = vms.HistoryState.start(state_of(space, w))
    ops = vms.StepOperators.build(space, params, data["g_normal"], data["g_tangent"])
    got = vms.advance(space, params, cfg, hist, lambda x, t: data["f"](x), 1e9,
                      dirichlet_values(space, sol.velocity), stabilization=False,
                      operators=ops)
    assert np.abs(got.to_vector() - ref.to_vector()).max() < 1e-6


def test_zero_data_stays_zero():
    space = build_taylor_hood(cavity_mesh(4))
    res = vms.run_unsteady(space, cavity_params(100), vms.TimeConfig(0.1, 0.3, sigma=2))
    assert np.all(res.final.to_vector() == 0)
    assert [r[2] for r in res.diagnostics] == [0.0, 0.0, 0.0]


def test_second_order_bootstrap_uses_first_order_step():
    space = small_space(2)
    rng = np.random.default_rng(8)
    hist = vms.HistoryState.start(state_of(space, rng.standard_normal(space.n_velocity)))
    f = lambda x, t: np.ones_like(x)
    a = vms.assemble_vms_step(space, PhysicalParams(nu=0.05), vms.TimeConfig(0.1, 1, 2), hist, f)
    b = vms.assemble_vms_step(space, PhysicalParams(nu=0.05), vms.TimeConfig(0.1, 1, 1), hist, f)
    assert abs(a.matrix - b.matrix).max() == 0
    assert np.array_equal(a.rhs, b.rhs)


def test_step_solve_residual():
    space = build_taylor_hood(cavity_mesh(8))
    params = cavity_params(1000)
    cfg = vms.TimeConfig(0.035, 1.0)
    rng = np.random.default_rng(0)
    hist = vms.HistoryState.start(state_of(space, 0.1 * rng.standard_normal(space.n_velocity)))
    D = dirichlet_values(space, lid_velocity)
    st = vms.advance(space, params, cfg, hist, dirichlet=D)
    sys_ = vms.assemble_vms_step(space, params, cfg, hist)
    A, b = forms.apply_dirichlet(sys_.matrix, sys_.rhs, D.dofs, D.values)
    assert np.linalg.norm(A @ st.to_vector() - b) <= 1e-8 * np.linalg.norm(b)


def test_nan_history_is_detected():
    space = small_space(2)
    u = np.zeros(space.n_velocity)
    u[7] = np.nan
    hist = vms.HistoryState.start(state_of(space, u))
    with pytest.raises(vms.SimulationDiverged) as info:
        vms.advance(space, PhysicalParams(), vms.TimeConfig(0.1, 1.0), hist, step=12)
    assert info.value.step == 12 and "step 12" in str(info.value)


# time accuracy and runs --------------------------------------------------------

def _taylor_green_error(dt, sigma=1, n=16, t_end=1.0):
    nu = 1.0 / (2 * np.pi ** 2)
    tg = TaylorGreen(nu)
    space = build_taylor_hood(tg.mesh(n))
    params = PhysicalParams(nu=nu, beta=0.0, gamma=10.0)
    init = state_of(space, interpolate(space, tg.velocity(0.0)))
    res = vms.run_unsteady(space, params, vms.TimeConfig(dt, t_end, sigma), initial=init,
                           stabilization=False, convection=False)
    exact = tg.velocity(t_end)
    e = forms.error_norms(space, res.final.velocity, res.final.pressure, exact,
                          lambda x: 0.0, lambda x: np.zeros(x.shape + (2,)))
    return e.velocity_l2


def test_implicit_euler_is_first_order():
    errs = [_taylor_green_error(dt) for dt in (0.1, 0.05, 0.025)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(orders - 1.0) <= 0.1), orders


def test_bdf2_beats_bdf1():
    assert _taylor_green_error(0.05, sigma=2) < 0.2 * _taylor_green_error(0.05, sigma=1)


def test_cavity_smoke_and_diagnostics(tmp_path):
    space = build_taylor_hood(cavity_mesh(32))
    seen = []
    path = tmp_path / "diag.csv"
    res = vms.run_unsteady(space, cavity_params(1000), vms.TimeConfig(0.035, 0.35),
                           dirichlet_data=lid_velocity, diagnostics_path=path,
                           snapshot_every=4, on_snapshot=lambda k, t, s: seen.append(k),
                           keep_snapshots=True)
    assert len(res.diagnostics) == 10 and seen == [4, 8, 10]
    assert [s[0] for s in res.snapshots] == seen
    ke = np.array([r[2] for r in res.diagnostics])
    slip = np.array([r[3] for r in res.diagnostics])
    assert np.all(np.isfinite(ke)) and np.all(ke > 0)
    assert np.all(slip < 1e-1)
    rows = list(csv.reader(open(path)))
    assert tuple(rows[0]) == vms.DIAGNOSTIC_COLUMNS and len(rows) == 11
    assert float(rows[-1][1]) == pytest.approx(0.35)
