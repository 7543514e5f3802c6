"""Taylor-Hood P2-P1 mixed space with global numbering.

Unknown layout of a full coefficient vector::

    [ velocity (2 * (V + E)) | pressure (V) | mean-zero multiplier (1) ]

Velocity nodes are the mesh vertices followed by the edge midpoints;
velocity DOF ``2 * node + component`` (component fastest).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import BoundaryTag, Mesh
from .reference import p1_values, p2_values


class MixedSpace:
    """Taylor-Hood space on ``mesh``.

    Attributes
    ----------
    velocity_dofs : (T, 12) int array
        Global velocity DOFs of each triangle, local index ``2 * a + c``.
    pressure_dofs : (T, 3) int array
        Global pressure DOFs (already offset past the velocity block).
    dirichlet_dofs : int array
        Velocity DOFs whose node lies on the closure of the Dirichlet boundary.
    """

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        V, E = mesh.n_nodes, mesh.n_edges
        self.n_vertices = V
        self.n_edges = E
        self.n_velocity_nodes = V + E
        self.n_velocity = 2 * (V + E)
        self.n_pressure = V
        self.n_total = self.n_velocity + self.n_pressure
        self.multiplier = self.n_total
        self.n_unknowns = self.n_total + 1

        nodes6 = np.hstack([mesh.triangles, V + mesh.triangle_edges])
        self.velocity_nodes = nodes6
        vd = np.empty((mesh.n_triangles, 12), dtype=np.int64)
        vd[:, 0::2] = 2 * nodes6
        vd[:, 1::2] = 2 * nodes6 + 1
        self.velocity_dofs = vd
        self.pressure_dofs = self.n_velocity + mesh.triangles
        self.dofs = np.hstack([vd, self.pressure_dofs])

        self.node_coords = np.vstack([mesh.nodes, mesh.edge_midpoints()])

        d_edges = mesh.dirichlet_edges()
        d_nodes = np.unique(np.concatenate([
            mesh.boundary_edges[d_edges].ravel(),
            V + mesh.boundary_edge_ids[d_edges]]))
        self.dirichlet_nodes = d_nodes
        self.dirichlet_dofs = np.sort(np.concatenate([2 * d_nodes, 2 * d_nodes + 1]))
        self.navier_edges = mesh.navier_edges()

        for a in (self.velocity_dofs, self.pressure_dofs, self.dofs, self.node_coords,
                  self.dirichlet_nodes, self.dirichlet_dofs, self.navier_edges):
            a.setflags(write=False)

    def split(self, x):
        """Split a full coefficient vector into (velocity, pressure, multiplier)."""
        x = np.asarray(x)
        return (x[:self.n_velocity], x[self.n_velocity:self.n_total],
                float(x[self.n_total]) if len(x) > self.n_total else 0.0)

    def velocity_at(self, u, tri, ref_points):
        """Evaluate velocity coefficients ``u`` on triangles ``tri`` at
        reference points, returning shape (len(tri), Q, 2)."""
        phi = p2_values(ref_points)
        loc = np.asarray(u)[self.velocity_dofs[tri]].reshape(-1, 6, 2)
        return np.einsum("qa,tac->tqc", phi, loc)

    def pressure_at(self, p, tri, ref_points):
        psi = p1_values(ref_points)
        loc = np.asarray(p)[self.mesh.triangles[tri]]
        return loc @ psi.T

    def __repr__(self):
        return (f"MixedSpace(velocity={self.n_velocity}, pressure={self.n_pressure}, "
                f"n_total={self.n_total})")


def build_taylor_hood(mesh: Mesh) -> MixedSpace:
    return MixedSpace(mesh)


def _call_field(field, points):
    vals = np.asarray(field(points), dtype=float)
    if vals.ndim == 0:
        vals = np.full(len(points), float(vals))
    return vals


def interpolate(space: MixedSpace, field, which: str = "velocity") -> np.ndarray:
    """Nodal interpolant of ``field``.

    ``field`` takes an (N, 2) array of points and returns (N, 2) values for
    velocity or (N,) values for pressure.
    """
    if which == "velocity":
        vals = _call_field(field, space.node_coords)
        if vals.shape != (space.n_velocity_nodes, 2):
            vals = np.broadcast_to(vals, (space.n_velocity_nodes, 2))
        return np.ascontiguousarray(vals).reshape(-1).copy()
    if which == "pressure":
        vals = _call_field(field, space.mesh.nodes)
        return np.broadcast_to(vals, (space.n_pressure,)).astype(float).copy()
    raise ValueError(f"which must be 'velocity' or 'pressure', got {which!r}")


@dataclass(frozen=True)
class DirichletData:
    dofs: np.ndarray
    values: np.ndarray


def dirichlet_values(space: MixedSpace, boundary_field=None) -> DirichletData:
    """Prescribed values for every Dirichlet velocity DOF.

    ``boundary_field=None`` means homogeneous data.
    """
    nodes = space.dirichlet_nodes
    if boundary_field is None:
        vals = np.zeros((len(nodes), 2))
    else:
        vals = np.broadcast_to(_call_field(boundary_field, space.node_coords[nodes]),
                               (len(nodes), 2))
    dofs = np.stack([2 * nodes, 2 * nodes + 1], axis=1).ravel()
    order = np.argsort(dofs, kind="stable")
    return DirichletData(dofs[order], np.ascontiguousarray(vals).ravel()[order])


def full_vector(space: MixedSpace, velocity=None, pressure=None, multiplier=0.0):
    x = np.zeros(space.n_unknowns)
    if velocity is not None:
        x[:space.n_velocity] = velocity
    if pressure is not None:
        x[space.n_velocity:space.n_total] = pressure
    x[space.n_total] = multiplier
    return x


__all__ = ["MixedSpace", "build_taylor_hood", "interpolate", "dirichlet_values",
           "DirichletData", "full_vector", "BoundaryTag"]
