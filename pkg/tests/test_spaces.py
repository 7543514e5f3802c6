import numpy as np
import pytest

from nsns import forms
from nsns.benchmarks import ManufacturedSolution, cavity_mesh, lid_velocity
from nsns.mesh import BoundaryTag, generate_structured_square
from nsns.reference import triangle_quadrature
from nsns.spaces import build_taylor_hood, dirichlet_values, full_vector, interpolate

# degrees of freedom of the convergence study, multiplier excluded
TABLE_DOFS = {8: 659, 16: 2467, 32: 9539, 64: 37507, 128: 148739}


@pytest.mark.parametrize("n", sorted(TABLE_DOFS))
def test_dof_counts(n):
    space = build_taylor_hood(generate_structured_square(n, (-1, -1), (1, 1)))
    assert space.n_total == TABLE_DOFS[n]
    assert space.n_total == 2 * ((n + 1) ** 2 + 3 * n * n + 2 * n) + (n + 1) ** 2
    assert space.n_unknowns == space.n_total + 1


def test_smallest_space():
    space = build_taylor_hood(generate_structured_square(1))
    assert space.n_total == 22
    assert space.velocity_dofs.shape == (2, 12)
    assert space.pressure_dofs.min() == space.n_velocity


def test_every_dof_is_used():
    space = build_taylor_hood(generate_structured_square(5))
    assert np.array_equal(np.unique(space.dofs), np.arange(space.n_total))


def test_numbering_is_deterministic():
    a = build_taylor_hood(cavity_mesh(6))
    b = build_taylor_hood(cavity_mesh(6))
    for name in ("dofs", "node_coords", "dirichlet_dofs", "navier_edges"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_constant_pressure():
    space = build_taylor_hood(generate_structured_square(3))
    assert np.array_equal(interpolate(space, lambda x: 1.0, "pressure"), np.ones(16))
    with pytest.raises(ValueError):
        interpolate(space, lambda x: 1.0, "temperature")


def test_polynomials_are_reproduced():
    space = build_taylor_hood(generate_structured_square(4, (-1, -1), (1, 1)))
    quad = lambda x: np.stack([x[..., 1] ** 2 - x[..., 0] * x[..., 1], 3 * x[..., 0] - 1], -1)
    u = interpolate(space, quad)
    p = interpolate(space, lambda x: 2 * x[..., 0] - x[..., 1] + 0.5, "pressure")
    rule = triangle_quadrature(6)
    tri = np.arange(space.mesh.n_triangles)
    verts = space.mesh.nodes[space.mesh.triangles]
    x = (verts[:, None, 0] + rule.points[None, :, :1] * (verts[:, None, 1] - verts[:, None, 0])
         + rule.points[None, :, 1:] * (verts[:, None, 2] - verts[:, None, 0]))
    assert np.abs(space.velocity_at(u, tri, rule.points) - quad(x)).max() < 1e-13
    assert np.abs(space.pressure_at(p, tri, rule.points)
                  - (2 * x[..., 0] - x[..., 1] + 0.5)).max() < 1e-13


def test_rotation_field_on_nodes():
    space = build_taylor_hood(generate_structured_square(3))
    u = interpolate(space, lambda x: np.stack([x[..., 1], -x[..., 0]], -1))
    xy = space.node_coords
    assert np.allclose(u[0::2], xy[:, 1]) and np.allclose(u[1::2], -xy[:, 0])


def test_interpolation_h1_order():
    sol = ManufacturedSolution()
    errs = []
    for n in (8, 16):
        space = sol.space(n)
        u = interpolate(space, sol.velocity)
        e = forms.error_norms(space, u, np.zeros(space.n_pressure), sol.velocity,
                              lambda x: 0.0, sol.velocity_gradient)
        errs.append(e.velocity_h1)
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_dirichlet_nodes_cover_closed_segments():
    # unit square, Dirichlet only on the top side
    space = build_taylor_hood(cavity_mesh(4))
    on_lid = np.abs(space.node_coords[:, 1] - 1) < 1e-12
    assert np.array_equal(np.sort(space.dirichlet_nodes), np.flatnonzero(on_lid))
    assert len(space.dirichlet_dofs) == 2 * on_lid.sum()
    assert len(space.navier_edges) == 12


def test_homogeneous_dirichlet_values():
    space = build_taylor_hood(cavity_mesh(4))
    d = dirichlet_values(space)
    assert np.array_equal(d.dofs, space.dirichlet_dofs)
    assert np.all(d.values == 0)


def test_lid_profile_values():
    space = build_taylor_hood(cavity_mesh(10))
    d = dirichlet_values(space, lid_velocity)
    value = dict(zip(d.dofs.tolist(), d.values.tolist()))
    for x1, expected in ((0.05, (0.5, 0.0)), (0.5, (1.0, 0.0)), (0.0, (0.0, 0.0))):
        node = int(np.flatnonzero(np.all(np.isclose(space.node_coords, [x1, 1.0]), axis=1))[0])
        assert (value[2 * node], value[2 * node + 1]) == pytest.approx(expected, abs=1e-14)


def test_split_and_full_vector():
    space = build_taylor_hood(generate_structured_square(2))
    x = full_vector(space, velocity=1.0, pressure=2.0, multiplier=3.0)
    u, p, lam = space.split(x)
    assert np.all(u == 1) and np.all(p == 2) and lam == 3.0
    assert len(u) == space.n_velocity and len(p) == space.n_pressure


def test_navier_tagged_corner_is_weak():
    tag = lambda mid: BoundaryTag.NAVIER
    space = build_taylor_hood(generate_structured_square(3, tagger=tag))
    assert len(space.dirichlet_dofs) == 0
