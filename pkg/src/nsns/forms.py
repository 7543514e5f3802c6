"""Element kernels and global assembly of the Nitsche-Navier-Stokes forms.

Sign conventions::

    A_h = a + a_tau + a_gamma - a_c - a_c^T
    B_h = b + b_partial

Local element matrices are indexed ``[test, trial]``; local velocity index
``2 * a + c`` for scalar basis function ``a`` and component ``c``.  Every
``assemble_*`` function returns a sparse matrix (or vector) over the full
unknown vector of :class:`~nsns.spaces.MixedSpace`, so contributions are
combined by plain addition.
"""
from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .reference import (affine_maps, edge_quadrature, p1_gradients, p1_values,
                        p2_gradients, p2_hessians, p2_values, triangle_quadrature)

VOLUME_DEGREE = 6
EDGE_DEGREE = 5
ERROR_DEGREE = 8


@dataclass(frozen=True)
class PhysicalParams:
    nu: float = 1.0
    beta: float = 10.0
    gamma: float = 10.0

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"viscosity must be positive, got {self.nu}")
        if not self.gamma > 0:
            raise ValueError(f"Nitsche penalty must be positive, got {self.gamma}")
        if self.beta < 0:
            warnings.warn(f"negative friction coefficient beta={self.beta}; "
                          "coercivity holds only for small |beta|", stacklevel=2)


@dataclass
class SparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray


# geometric tables ------------------------------------------------------------

class VolumeData:
    """Basis functions and weights at the quadrature points of triangles.

    Built from raw vertex coordinates (T, 3, 2) so it works for a mesh or
    for an arbitrary batch of triangles.
    """

    def __init__(self, coords, degree=VOLUME_DEGREE):
        coords = np.asarray(coords, dtype=float)
        rule = triangle_quadrature(degree)
        J, Jinv, det = affine_maps(coords)
        self.coords = coords
        self.rule = rule
        self.Jinv = Jinv
        self.det = det
        self.wq = det[:, None] * rule.weights[None, :]
        self.x = coords[:, None, 0, :] + np.einsum("tij,qj->tqi", J, rule.points)
        self.phi = p2_values(rule.points)                                   # (Q, 6)
        self.dphi = np.einsum("qak,tki->tqai", p2_gradients(rule.points), Jinv)
        self.hess = np.einsum("tki,akl,tlj->taij", Jinv, p2_hessians(), Jinv)  # (T, 6, 2, 2)
        self.lap = np.trace(self.hess, axis1=2, axis2=3)                     # (T, 6)
        self.psi = p1_values(rule.points)                                   # (Q, 3)
        self.dpsi = np.einsum("ak,tki->tai", p1_gradients(), Jinv)          # (T, 3, 2)

    def __len__(self):
        return len(self.det)

    def take(self, idx):
        out = object.__new__(VolumeData)
        out.rule, out.phi, out.psi = self.rule, self.phi, self.psi
        for name in ("coords", "Jinv", "det", "wq", "x", "dphi", "hess", "lap", "dpsi"):
            setattr(out, name, getattr(self, name)[idx])
        return out

    def velocity(self, u_local):
        """Velocity values (T, Q, 2) from local coefficients (T, 12)."""
        return np.einsum("qa,tac->tqc", self.phi, u_local.reshape(-1, 6, 2))

    def velocity_gradient(self, u_local):
        """Gradient (T, Q, 2, 2), entry ``[..., i, j] = d u_i / d x_j``."""
        return np.einsum("tqaj,tai->tqij", self.dphi, u_local.reshape(-1, 6, 2))

    def velocity_laplacian(self, u_local):
        return np.einsum("ta,tai->ti", self.lap, u_local.reshape(-1, 6, 2))


class EdgeData:
    """Traces of the owner-triangle basis on boundary edges.

    ``local_edge[e] = k`` means the edge runs from local vertex ``k`` to
    ``k + 1`` of its (counterclockwise) owner triangle.
    """

    _REF_VERTS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])

    def __init__(self, coords, local_edge, degree=EDGE_DEGREE):
        coords = np.asarray(coords, dtype=float)
        local_edge = np.asarray(local_edge, dtype=np.int64)
        rule = edge_quadrature(degree)
        J, Jinv, det = affine_maps(coords)
        a = self._REF_VERTS[local_edge]
        b = self._REF_VERTS[(local_edge + 1) % 3]
        t = rule.points
        ref = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]       # (E, Q, 2)
        pa = coords[np.arange(len(coords)), local_edge]
        pb = coords[np.arange(len(coords)), (local_edge + 1) % 3]
        d = pb - pa
        length = np.linalg.norm(d, axis=1)
        tangent = d / length[:, None]
        self.coords = coords
        self.rule = rule
        self.Jinv = Jinv
        self.length = length
        self.tangent = tangent
        self.normal = np.stack([tangent[:, 1], -tangent[:, 0]], axis=1)
        self.wq = length[:, None] * rule.weights[None, :]
        self.x = pa[:, None, :] + t[None, :, None] * d[:, None, :]
        self.phi = p2_values(ref)                                            # (E, Q, 6)
        self.dphi = np.einsum("eqak,eki->eqai", p2_gradients(ref), Jinv)
        self.hess = np.einsum("eki,akl,elj->eaij", Jinv, p2_hessians(), Jinv)
        self.lap = np.trace(self.hess, axis1=2, axis2=3)
        self.psi = p1_values(ref)                                           # (E, Q, 3)
        self.dpsi = np.einsum("ak,eki->eai", p1_gradients(), Jinv)

    def __len__(self):
        return len(self.length)

    def velocity(self, u_local):
        return np.einsum("eqa,eac->eqc", self.phi, u_local.reshape(-1, 6, 2))

    def velocity_gradient(self, u_local):
        return np.einsum("eqaj,eai->eqij", self.dphi, u_local.reshape(-1, 6, 2))

    def velocity_laplacian(self, u_local):
        return np.einsum("ea,eai->ei", self.lap, u_local.reshape(-1, 6, 2))


def volume_data(space, degree=VOLUME_DEGREE) -> VolumeData:
    cache = space.__dict__.setdefault("_volume_cache", {})
    if degree not in cache:
        m = space.mesh
        cache[degree] = VolumeData(m.nodes[m.triangles], degree)
    return cache[degree]


def navier_edge_data(space, degree=EDGE_DEGREE) -> EdgeData | None:
    cache = space.__dict__.setdefault("_edge_cache", {})
    if degree not in cache:
        m = space.mesh
        nav = space.navier_edges
        if len(nav) == 0:
            cache[degree] = None
        else:
            owner = m.boundary_owner[nav]
            cache[degree] = EdgeData(m.nodes[m.triangles[owner]],
                                     m.boundary_local_edge[nav], degree)
    return cache[degree]


def navier_owner(space):
    return space.mesh.boundary_owner[space.navier_edges]


# element kernels -----------------------------------------------------------

def _vec(K):
    """(B, 6, 2, 6, 2) -> (B, 12, 12)."""
    return K.reshape(K.shape[0], 12, 12)


def _eye_components(S):
    """Scalar (B, 6, 6) block -> vector (B, 12, 12) with identity in components."""
    return np.einsum("bij,cd->bicjd", S, np.eye(2)).reshape(S.shape[0], 12, 12)


def viscous_element(vd: VolumeData, nu):
    """(nu/2) (D(u), D(v))."""
    G, w = vd.dphi, vd.wq
    lap = np.einsum("tq,tqbi,tqai->tba", w, G, G)
    cross = np.einsum("tq,tqad,tqbc->tbdac", w, G, G)
    return nu * (_eye_components(lap) + _vec(cross))


def divergence_element(vd: VolumeData):
    """-(div u, q) as a (T, 3, 12) pressure-by-velocity block."""
    B = -np.einsum("tq,qk,tqac->tkac", vd.wq, vd.psi, vd.dphi)
    return B.reshape(len(vd), 3, 12)


def mass_element(vd: VolumeData):
    S = np.einsum("tq,qb,qa->tba", vd.wq, vd.phi, vd.phi)
    return _eye_components(S)


def pressure_mass_element(vd: VolumeData):
    return np.einsum("tq,qk,ql->tkl", vd.wq, vd.psi, vd.psi)


def pressure_mean_element(vd: VolumeData):
    return np.einsum("tq,qk->tk", vd.wq, vd.psi)


def convection_element(vd: VolumeData, w_local, newton=False):
    """(w . grad u, v); with ``newton`` also adds (u . grad w, v)."""
    wv = vd.velocity(w_local)
    adv = np.einsum("tqi,tqai->tqa", wv, vd.dphi)
    K = _eye_components(np.einsum("tq,tqa,qb->tba", vd.wq, adv, vd.phi))
    if newton:
        gw = vd.velocity_gradient(w_local)   # [d, c] = d w_d / d x_c
        K = K + _vec(np.einsum("tq,qb,qa,tqdc->tbdac", vd.wq, vd.phi, vd.phi, gw))
    return K


def load_element(vd: VolumeData, f_values):
    """(f, v) with ``f_values`` of shape (T, Q, 2)."""
    return np.einsum("tq,qb,tqd->tbd", vd.wq, vd.phi, f_values).reshape(len(vd), 12)


def consistency_edge(ed: EdgeData, nu):
    """a_c(u, v) = int n^t nu D(u) n (n . v)."""
    n = ed.normal
    dn = np.einsum("eqai,ei->eqa", ed.dphi, n)
    K = 2.0 * nu * np.einsum("eq,eqa,ec,eqb,ed->ebdac", ed.wq, dn, n, ed.phi, n)
    return _vec(K)


def friction_edge(ed: EdgeData, beta):
    t = ed.tangent
    K = beta * np.einsum("eq,eqa,ec,eqb,ed->ebdac", ed.wq, ed.phi, t, ed.phi, t)
    return _vec(K)


def penalty_edge(ed: EdgeData, gamma):
    n = ed.normal
    scale = gamma / ed.length
    K = np.einsum("e,eq,eqa,ec,eqb,ed->ebdac", scale, ed.wq, ed.phi, n, ed.phi, n)
    return _vec(K)


def pressure_normal_edge(ed: EdgeData):
    """b_partial(u, q) = int q (n . u) as an (E, 3, 12) block."""
    B = np.einsum("eq,eqk,eqa,ec->ekac", ed.wq, ed.psi, ed.phi, ed.normal)
    return B.reshape(len(ed), 3, 12)


def nitsche_data_edge(ed: EdgeData, params: PhysicalParams, g_normal=None, g_tangent=None):
    """Right-hand-side contributions of non-homogeneous slip data.

    ``g_normal`` prescribes ``u . n`` and ``g_tangent`` the tangential
    traction ``nu n^t D(u) tau + beta u . tau``, both as (E, Q) arrays.
    Returns (velocity part (E, 12), pressure part (E, 3)).
    """
    n, t = ed.normal, ed.tangent
    Fv = np.zeros((len(ed), 6, 2))
    Fp = np.zeros((len(ed), 3))
    if g_normal is not None:
        g = np.asarray(g_normal)
        scale = params.gamma / ed.length
        Fv += np.einsum("e,eq,eq,eqb,ed->ebd", scale, ed.wq, g, ed.phi, n)
        dn = np.einsum("eqbi,ei->eqb", ed.dphi, n)
        Fv -= 2.0 * params.nu * np.einsum("eq,eq,eqb,ed->ebd", ed.wq, g, dn, n)
        Fp += np.einsum("eq,eq,eqk->ek", ed.wq, g, ed.psi)
    if g_tangent is not None:
        Fv += np.einsum("eq,eq,eqb,ed->ebd", ed.wq, np.asarray(g_tangent), ed.phi, t)
    return Fv.reshape(len(ed), 12), Fp


# global scatter ------------------------------------------------------------

def _threads():
    try:
        return max(0, int(os.environ.get("NSNS_THREADS", "0")))
    except ValueError:
        return 0


def map_elements(kernel, vd: VolumeData, *args):
    """Evaluate ``kernel(vd, *args)``, chunked over a thread pool when
    ``NSNS_THREADS`` > 1.  Per-element arguments must be arrays indexed by
    element; scalars pass through.  Output order is preserved."""
    nthreads = _threads()
    if nthreads <= 1 or len(vd) < 2 * nthreads:
        return kernel(vd, *args)
    bounds = np.linspace(0, len(vd), nthreads + 1).astype(int)
    slices = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]

    def run(s):
        sub = [a[s] if isinstance(a, np.ndarray) and a.shape[:1] == (len(vd),) else a
               for a in args]
        return kernel(vd.take(s), *sub)

    with ThreadPoolExecutor(nthreads) as pool:
        parts = list(pool.map(run, slices))
    return np.concatenate(parts)


def scatter(rows, cols, local, shape) -> sp.csr_matrix:
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    R = np.broadcast_to(rows[:, :, None], local.shape)
    C = np.broadcast_to(cols[:, None, :], local.shape)
    return sp.csr_matrix((local.ravel(), (R.ravel(), C.ravel())), shape=shape)


def scatter_vector(rows, local, size) -> np.ndarray:
    return np.bincount(np.asarray(rows).ravel(), weights=local.ravel(), minlength=size)


def _square(space):
    return (space.n_unknowns, space.n_unknowns)


def assemble_viscous(space, params: PhysicalParams):
    vd = volume_data(space)
    K = map_elements(viscous_element, vd, params.nu)
    return scatter(space.velocity_dofs, space.velocity_dofs, K, _square(space))


def assemble_divergence(space, transpose=True):
    """b(v, q) in the pressure rows; with ``transpose`` also in the
    velocity rows, giving the symmetric saddle-point coupling."""
    vd = volume_data(space)
    B = map_elements(divergence_element, vd)
    M = scatter(space.pressure_dofs, space.velocity_dofs, B, _square(space))
    return M + M.T if transpose else M


def assemble_mass(space):
    vd = volume_data(space)
    M = map_elements(mass_element, vd)
    return scatter(space.velocity_dofs, space.velocity_dofs, M, _square(space))


def assemble_mean_constraint(space):
    """Multiplier row and column holding int q_h for each pressure function."""
    vd = volume_data(space)
    m = scatter_vector(space.pressure_dofs, pressure_mean_element(vd), space.n_unknowns)
    idx = np.flatnonzero(m)
    n = space.multiplier
    rows = np.concatenate([idx, np.full(len(idx), n)])
    cols = np.concatenate([np.full(len(idx), n), idx])
    return sp.csr_matrix((np.concatenate([m[idx], m[idx]]), (rows, cols)),
                         shape=_square(space))


def assemble_convection(space, w, newton_linearize=False):
    """c(w; u, v) for the velocity coefficients ``w`` (plus c(u; w, v))."""
    w = np.asarray(w)[:space.n_velocity]
    vd = volume_data(space)
    K = map_elements(lambda d, wl: convection_element(d, wl, newton_linearize),
                     vd, w[space.velocity_dofs])
    return scatter(space.velocity_dofs, space.velocity_dofs, K, _square(space))


NITSCHE_TERMS = ("consistency", "adjoint", "tangential_friction", "penalty", "pressure_normal")


def assemble_nitsche(space, params: PhysicalParams, fields=NITSCHE_TERMS, signed=True):
    """Navier-boundary forms.

    With ``signed=True`` each form carries its sign in A_h / B_h
    (consistency and adjoint negative); ``pressure_normal`` is added in
    both the pressure rows and velocity rows.  With ``signed=False`` the
    raw forms are returned (and ``pressure_normal`` only in pressure rows).
    """
    unknown = set(fields) - set(NITSCHE_TERMS)
    if unknown:
        raise ValueError(f"unknown Nitsche terms {sorted(unknown)}")
    shape = _square(space)
    ed = navier_edge_data(space)
    if ed is None:
        return sp.csr_matrix(shape)
    owner = navier_owner(space)
    vdofs = space.velocity_dofs[owner]
    pdofs = space.pressure_dofs[owner]
    local = np.zeros((len(ed), 12, 12))
    sign = -1.0 if signed else 1.0
    if "consistency" in fields or "adjoint" in fields:
        Kc = consistency_edge(ed, params.nu)
        if "consistency" in fields:
            local += sign * Kc
        if "adjoint" in fields:
            local += sign * Kc.transpose(0, 2, 1)
    if "tangential_friction" in fields:
        local += friction_edge(ed, params.beta)
    if "penalty" in fields:
        local += penalty_edge(ed, params.gamma)
    M = scatter(vdofs, vdofs, local, shape)
    if "pressure_normal" in fields:
        Bn = scatter(pdofs, vdofs, pressure_normal_edge(ed), shape)
        M = M + (Bn + Bn.T if signed else Bn)
    return M


def assemble_load(space, f, degree=VOLUME_DEGREE):
    """Load vector (f, v_h); ``f`` maps (N, 2) points to (N, 2) values."""
    vd = volume_data(space, degree)
    fx = np.asarray(f(vd.x.reshape(-1, 2)), dtype=float)
    fx = np.broadcast_to(fx, (vd.x.shape[0] * vd.x.shape[1], 2)).reshape(vd.x.shape)
    F = load_element(vd, fx)
    return scatter_vector(space.velocity_dofs, F, space.n_unknowns)


def assemble_nitsche_data(space, params: PhysicalParams, g_normal=None, g_tangent=None):
    """Right-hand side from slip data.

    ``g_normal(x, n)`` returns the prescribed normal velocity and
    ``g_tangent(x, n, tau)`` the prescribed tangential traction at edge
    quadrature points ``x`` (N, 2) with normals/tangents (N, 2).
    """
    F = np.zeros(space.n_unknowns)
    ed = navier_edge_data(space)
    if ed is None or (g_normal is None and g_tangent is None):
        return F
    shape = ed.x.shape[:2]
    x = ed.x.reshape(-1, 2)
    n = np.repeat(ed.normal, shape[1], axis=0)
    t = np.repeat(ed.tangent, shape[1], axis=0)
    gn = None if g_normal is None else np.asarray(g_normal(x, n), float).reshape(shape)
    gt = None if g_tangent is None else np.asarray(g_tangent(x, n, t), float).reshape(shape)
    Fv, Fp = nitsche_data_edge(ed, params, gn, gt)
    owner = navier_owner(space)
    F += scatter_vector(space.velocity_dofs[owner], Fv, space.n_unknowns)
    F += scatter_vector(space.pressure_dofs[owner], Fp, space.n_unknowns)
    return F


def assemble_stokes_operator(space, params: PhysicalParams):
    """Linear operator C_h: A_h, B_h, B_h^T and the mean-zero multiplier."""
    return (assemble_viscous(space, params)
            + assemble_nitsche(space, params)
            + assemble_divergence(space)
            + assemble_mean_constraint(space)).tocsr()


def assemble_monolithic_linear(space, params: PhysicalParams):
    """Single-pass assembly of the linear part of the combined Nitsche form.

    Builds each element/edge matrix over the 15 local unknowns
    (12 velocity, 3 pressure) and scatters once.  Used to cross-check the
    composition in :func:`assemble_stokes_operator`.
    """
    vd = volume_data(space)
    T = len(vd)
    local = np.zeros((T, 15, 15))
    local[:, :12, :12] = viscous_element(vd, params.nu)
    B = divergence_element(vd)
    local[:, 12:, :12] = B
    local[:, :12, 12:] = B.transpose(0, 2, 1)
    M = scatter(space.dofs, space.dofs, local, _square(space))
    ed = navier_edge_data(space)
    if ed is not None:
        owner = navier_owner(space)
        le = np.zeros((len(ed), 15, 15))
        Kc = consistency_edge(ed, params.nu)
        le[:, :12, :12] = (friction_edge(ed, params.beta) + penalty_edge(ed, params.gamma)
                           - Kc - Kc.transpose(0, 2, 1))
        Bn = pressure_normal_edge(ed)
        le[:, 12:, :12] = Bn
        le[:, :12, 12:] = Bn.transpose(0, 2, 1)
        M = M + scatter(space.dofs[owner], space.dofs[owner], le, _square(space))
    return (M + assemble_mean_constraint(space)).tocsr()


# boundary conditions -------------------------------------------------------

def apply_dirichlet(matrix, rhs, dofs, values):
    """Strongly impose ``x[dofs] = values``.

    Constrained rows and columns are replaced by identity, and the known
    column contributions are moved to the right-hand side, so symmetric
    input stays symmetric.  Returns ``(matrix, rhs)`` as new objects.
    """
    dofs = np.asarray(dofs, dtype=np.int64).ravel()
    values = np.broadcast_to(np.asarray(values, dtype=float), dofs.shape)
    order = np.argsort(dofs, kind="stable")
    d, v = dofs[order], values[order]
    dup = np.flatnonzero(d[1:] == d[:-1])
    if len(dup) and np.any(v[dup] != v[dup + 1]):
        raise ValueError(f"conflicting Dirichlet values for DOF {int(d[dup[0]])}")
    n = matrix.shape[0]
    mask = np.zeros(n, dtype=bool)
    mask[d] = True
    g = np.zeros(n)
    g[d] = v
    A = sp.csr_matrix(matrix)
    b = np.asarray(rhs, dtype=float) - A @ g
    keep = sp.diags((~mask).astype(float))
    A = (keep @ A @ keep + sp.diags(mask.astype(float))).tocsr()
    A.eliminate_zeros()
    b[mask] = g[mask]
    return A, b


# norms ---------------------------------------------------------------------

def energy_norm(space, v) -> float:
    """Mesh-dependent norm: ||grad v||^2 + sum_E (1/h_E) ||v . n||_E^2."""
    v = np.asarray(v)[:space.n_velocity]
    vd = volume_data(space)
    gv = vd.velocity_gradient(v[space.velocity_dofs])
    total = float(np.einsum("tq,tqij,tqij->", vd.wq, gv, gv))
    ed = navier_edge_data(space)
    if ed is not None:
        vn = np.einsum("eqc,ec->eq", ed.velocity(v[space.velocity_dofs[navier_owner(space)]]),
                       ed.normal)
        total += float(np.einsum("e,eq,eq->", 1.0 / ed.length, ed.wq, vn ** 2))
    return float(np.sqrt(total))


def slip_norm(space, u, degree=ERROR_DEGREE) -> float:
    """||u_h . n||_{0, Gamma_Nav}."""
    ed = navier_edge_data(space, degree)
    if ed is None:
        return 0.0
    u = np.asarray(u)[:space.n_velocity]
    vn = np.einsum("eqc,ec->eq", ed.velocity(u[space.velocity_dofs[navier_owner(space)]]),
                   ed.normal)
    return float(np.sqrt(np.einsum("eq,eq->", ed.wq, vn ** 2)))


@dataclass(frozen=True)
class ErrorNorms:
    pressure_l2: float
    velocity_h1: float
    velocity_l2: float
    slip: float


def error_norms(space, u_h, p_h, u_exact, p_exact, grad_u_exact, degree=ERROR_DEGREE):
    """L2 pressure error, H1-seminorm and L2 velocity errors, slip norm.

    Both pressures are compared after removing their mean over the domain.
    Callables take (N, 2) points; ``grad_u_exact`` returns (N, 2, 2) with
    entry ``[i, j] = d u_i / d x_j``.
    """
    vd = volume_data(space, degree)
    u_h = np.asarray(u_h)[:space.n_velocity]
    loc = u_h[space.velocity_dofs]
    pts = vd.x.reshape(-1, 2)
    shape = vd.x.shape[:2]
    ue = np.asarray(u_exact(pts), float).reshape(shape + (2,))
    ge = np.asarray(grad_u_exact(pts), float).reshape(shape + (2, 2))
    pe = np.broadcast_to(np.asarray(p_exact(pts), float), (len(pts),)).reshape(shape)
    ph = np.asarray(p_h)[space.mesh.triangles] @ vd.psi.T
    area = vd.wq.sum()
    pe = pe - np.sum(vd.wq * pe) / area
    ph = ph - np.sum(vd.wq * ph) / area
    eu = ue - vd.velocity(loc)
    eg = ge - vd.velocity_gradient(loc)
    ep = pe - ph
    return ErrorNorms(
        pressure_l2=float(np.sqrt(np.sum(vd.wq * ep ** 2))),
        velocity_h1=float(np.sqrt(np.einsum("tq,tqij,tqij->", vd.wq, eg, eg))),
        velocity_l2=float(np.sqrt(np.einsum("tq,tqi,tqi->", vd.wq, eu, eu))),
        slip=slip_norm(space, u_h, degree),
    )
