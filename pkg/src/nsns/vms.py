"""Linearly implicit VMS-LES time stepping with Nitsche slip conditions.

One linear solve per step.  The advecting velocity, the stabilization
parameters and the left factor of the LES term are frozen at the
extrapolated state, so every step is linear in ``(u^{n+1}, p^{n+1})``.

Per quadrature point the momentum residual is written as
``r_M = R x_loc - g`` with a (2, 15) trial operator ``R`` over the local
unknowns of a triangle (12 velocity, 3 pressure) and a known part
``g = u^{BDF} / dt + f``.  SUPG, VMS-cross and LES contributions differ
only in their test vectors ``W``, giving local matrices
``sum_q w_q S_M W^T R``.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import forms
from .forms import PhysicalParams, apply_dirichlet
from .linalg import LinearSolveError, solve
from .spaces import MixedSpace, dirichlet_values
from .steady import SolutionState

log = logging.getLogger(__name__)

VMS_TERMS = ("supg", "grad_div", "vms", "les", "boundary")


class SimulationDiverged(RuntimeError):
    def __init__(self, step, message):
        super().__init__(f"step {step}: {message}")
        self.step = step


def inverse_estimate_constant(r=2):
    """C_r = 60 * 2^(r - 2) for velocity polynomial degree r."""
    return 60.0 * 2.0 ** (r - 2)


@dataclass(frozen=True)
class TimeConfig:
    dt: float
    t_end: float
    sigma: int = 1
    c_tilde: float = 0.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"time step must be positive, got {self.dt}")
        if self.dt > self.t_end:
            raise ValueError(f"dt={self.dt} exceeds t_end={self.t_end}")
        if self.sigma not in (1, 2):
            raise ValueError(f"BDF order must be 1 or 2, got {self.sigma}")
        if self.c_tilde not in (0, 1):
            raise ValueError(f"c_tilde must be 0 or 1, got {self.c_tilde}")
        if self.c_tilde == 1:
            log.warning("c_tilde = 1 is intended for equal-order pairs; "
                        "with Taylor-Hood it is experimental")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


def bdf_coefficients(sigma):
    """Return ``(alpha, ext, bdf)`` where ``ext`` and ``bdf`` weight
    ``(u^n, u^{n-1})``."""
    if sigma == 1:
        return 1.0, (1.0, 0.0), (1.0, 0.0)
    if sigma == 2:
        return 1.5, (2.0, -1.0), (2.0, -0.5)
    raise ValueError(f"BDF order must be 1 or 2, got {sigma}")


@dataclass(frozen=True)
class HistoryState:
    """Up to two previous solutions, newest first."""
    states: tuple = ()

    @classmethod
    def start(cls, initial: SolutionState):
        return cls((initial,))

    def push(self, state: SolutionState) -> "HistoryState":
        return HistoryState((state,) + self.states[:1])

    def order(self, sigma) -> int:
        """BDF order usable with the stored history (bootstrap to 1)."""
        return min(sigma, len(self.states))

    def _combine(self, name, weights):
        out = weights[0] * getattr(self.states[0], name)
        if weights[1] != 0.0:
            out = out + weights[1] * getattr(self.states[1], name)
        return out

    def extrapolated_velocity(self, sigma):
        return self._combine("velocity", bdf_coefficients(self.order(sigma))[1])

    def extrapolated_pressure(self, sigma):
        return self._combine("pressure", bdf_coefficients(self.order(sigma))[1])

    def bdf_velocity(self, sigma):
        return self._combine("velocity", bdf_coefficients(self.order(sigma))[2])

    def alpha(self, sigma):
        return bdf_coefficients(self.order(sigma))[0]


# stabilization parameters ------------------------------------------------------

def metric_tensor(jinv):
    """Metric tensor ``G = Jinv^T Jinv`` and vector ``g_i = sum_k Jinv[k, i]``.

    Accepts an inverse Jacobian array (..., 2, 2) or an object with an
    ``inverse_jacobian`` attribute.
    """
    jinv = np.asarray(getattr(jinv, "inverse_jacobian", jinv), dtype=float)
    if not np.all(np.isfinite(jinv)):
        raise ValueError("degenerate element: non-finite inverse Jacobian")
    G = np.einsum("...ki,...kj->...ij", jinv, jinv)
    g = jinv.sum(axis=-2)
    return G, g


def stabilization_params(u, G, g, nu, dt, sigma, c_r=None):
    """Pointwise ``(S_M, S_C)``.

    ``S_M = (sigma^2/dt^2 + u.Gu + C_r nu^2 G:G)^(-1/2)`` and
    ``S_C = 1 / (S_M g.g)``.  Arguments broadcast against each other.
    """
    c_r = inverse_estimate_constant() if c_r is None else c_r
    u = np.asarray(u, dtype=float)
    uGu = np.einsum("...i,...ij,...j->...", u, G, u)
    GG = np.einsum("...ij,...ij->...", G, G)
    s_m = (sigma ** 2 / dt ** 2 + uGu + c_r * nu ** 2 * GG) ** -0.5
    s_c = 1.0 / (s_m * np.einsum("...i,...i->...", g, g))
    return s_m, s_c


# pointwise fields ------------------------------------------------------------------

@dataclass(frozen=True)
class StepCoefficients:
    nu: float
    dt: float
    alpha: float = 1.0
    sigma: int = 1
    c_tilde: float = 0.0
    c_r: float = 60.0


@dataclass
class PointFields:
    """Quantities at the quadrature points of a batch of triangles/edges."""
    advection: np.ndarray   # (B, Q, 2) frozen advecting velocity
    tau_m: np.ndarray       # (B, Q)
    tau_c: np.ndarray       # (B, Q)
    trial: np.ndarray       # (B, Q, 2, 15) operator R
    known: np.ndarray       # (B, Q, 2) known part g of the residual
    les: np.ndarray         # (B, Q, 2) S_M r_M evaluated at the extrapolated state
    div: np.ndarray         # (B, Q, 12) divergence of the velocity basis
    phi: np.ndarray         # (B, Q, 6)
    dphi: np.ndarray        # (B, Q, 6, 2)


def point_fields(data, coeffs: StepCoefficients, adv_local, ext_local, p_ext_local,
                 bdf_local, f_values):
    """Evaluate the frozen fields on ``data`` (volume or edge tables).

    ``*_local`` are (B, 12) or (B, 3) local coefficient arrays and
    ``f_values`` is (B, Q, 2).
    """
    B = len(data)
    Q = data.wq.shape[1]
    phi = np.broadcast_to(data.phi, (B, Q, 6))
    dphi = data.dphi
    to6 = lambda c: c.reshape(B, 6, 2)
    a = np.einsum("bqa,bac->bqc", phi, to6(adv_local))
    G, g = metric_tensor(data.Jinv)
    tau_m, tau_c = stabilization_params(a, G[:, None], g[:, None], coeffs.nu, coeffs.dt,
                                        coeffs.sigma, coeffs.c_r)
    adv = np.einsum("bqi,bqai->bqa", a, dphi)
    scal = coeffs.alpha / coeffs.dt * phi + adv - coeffs.nu * data.lap[:, None, :]
    R = np.zeros((B, Q, 2, 15))
    R[:, :, 0, 0:12:2] = scal
    R[:, :, 1, 1:12:2] = scal
    R[:, :, :, 12:] = np.broadcast_to(data.dpsi.transpose(0, 2, 1)[:, None], (B, Q, 2, 3))
    bdf = np.einsum("bqa,bac->bqc", phi, to6(bdf_local))
    known = bdf / coeffs.dt + f_values
    ext = to6(ext_local)
    r_ext = (coeffs.alpha / coeffs.dt * np.einsum("bqa,bac->bqc", phi, ext)
             + np.einsum("bqa,bac->bqc", adv, ext)
             + np.einsum("bk,bki->bi", p_ext_local, data.dpsi)[:, None, :]
             - coeffs.nu * np.einsum("ba,bac->bc", data.lap, ext)[:, None, :]
             - known)
    div = dphi.reshape(B, Q, 12)
    return PointFields(a, tau_m, tau_c, R, known, tau_m[..., None] * r_ext, div, phi, dphi)


def _velocity_test(B, Q):
    return np.zeros((B, Q, 2, 15))


def supg_test(pf: PointFields, dpsi, c_tilde):
    """Test vectors of ``(a . grad v - C grad q, .)``."""
    B, Q = pf.tau_m.shape
    W = _velocity_test(B, Q)
    adv = np.einsum("bqi,bqai->bqa", pf.advection, pf.dphi)
    W[:, :, 0, 0:12:2] = adv
    W[:, :, 1, 1:12:2] = adv
    if c_tilde:
        W[:, :, :, 12:] = -c_tilde * dpsi.transpose(0, 2, 1)[:, None]
    return W


def vms_cross_test(pf: PointFields):
    """Test vectors ``w_j = sum_i a_i d_j v_i``."""
    B, Q = pf.tau_m.shape
    W = _velocity_test(B, Q)
    W[:, :, :, :12] = np.einsum("bqc,bqaj->bqjac", pf.advection, pf.dphi).reshape(B, Q, 2, 12)
    return W


def les_test(pf: PointFields):
    """Test vectors ``w_j = -sum_i s_i d_j v_i`` with the frozen LES factor s."""
    B, Q = pf.tau_m.shape
    W = _velocity_test(B, Q)
    W[:, :, :, :12] = -np.einsum("bqc,bqaj->bqjac", pf.les, pf.dphi).reshape(B, Q, 2, 12)
    return W


def residual_element(data, pf: PointFields, W):
    """``sum_q w_q S_M W^T (R x - g)`` as (matrix (B, 15, 15), rhs (B, 15))."""
    B = len(data)
    Wt = (W * (data.wq * pf.tau_m)[:, :, None, None]).reshape(B, -1, 15)
    K = np.matmul(Wt.transpose(0, 2, 1), pf.trial.reshape(B, -1, 15))
    F = np.einsum("bkA,bk->bA", Wt, pf.known.reshape(B, -1))
    return K, F


def grad_div_element(data, pf: PointFields):
    """(div v, S_C div u) as a (B, 15, 15) local matrix."""
    K = np.zeros((len(data), 15, 15))
    Dw = pf.div * (data.wq * pf.tau_c)[:, :, None]
    K[:, :12, :12] = np.matmul(Dw.transpose(0, 2, 1), pf.div)
    return K


def boundary_element(ed, pf: PointFields):
    """Navier-edge terms ``-int S_C r_C (n . v) - int q n . S_M r_M``.

    Returns (matrix (E, 15, 15), rhs (E, 15)) over the owner's local unknowns.
    """
    E, Q = ed.wq.shape
    n = ed.normal
    K = np.zeros((E, 15, 15))
    F = np.zeros((E, 15))
    vn = np.einsum("eqa,ec->eqac", pf.phi, n).reshape(E, Q, 12)
    K[:, :12, :12] = -np.einsum("eq,eqA,eqB->eAB", ed.wq * pf.tau_c, vn, pf.div)
    wt = ed.wq * pf.tau_m
    K[:, 12:, :] = -np.einsum("eq,eqk,ei,eqiB->ekB", wt, ed.psi, n, pf.trial)
    F[:, 12:] = -np.einsum("eq,eqk,ei,eqi->ek", wt, ed.psi, n, pf.known)
    return K, F


# step assembly -----------------------------------------------------------------------

def _f_at(f, x, t):
    if f is None:
        return np.zeros(x.shape)
    return np.asarray(f(x.reshape(-1, 2), t), dtype=float).reshape(x.shape)


@dataclass
class StepOperators:
    """Time-independent pieces cached across steps."""
    stokes: object
    mass: object
    nitsche_rhs: np.ndarray

    @classmethod
    def build(cls, space, params, g_normal=None, g_tangent=None):
        return cls(forms.assemble_stokes_operator(space, params), forms.assemble_mass(space),
                   forms.assemble_nitsche_data(space, params, g_normal, g_tangent))


def assemble_vms_step(space: MixedSpace, params: PhysicalParams, config: TimeConfig,
                      history: HistoryState, f=None, t_new=None, stabilization=True,
                      convection=True, terms=VMS_TERMS, operators=None):
    """Linear system of one time step (before Dirichlet elimination).

    Parameters
    ----------
    f : callable ``f(x, t)`` returning (N, 2), optional
    stabilization : bool
        ``False`` drops every SUPG/VMS/LES term (plain BDF-Oseen step).
    convection : bool
        ``False`` uses a zero advecting field everywhere.
    terms : subset of ``VMS_TERMS``
    """
    ops = operators or StepOperators.build(space, params)
    sigma = history.order(config.sigma)
    alpha = history.alpha(config.sigma)
    dt = config.dt
    t_new = config.dt if t_new is None else t_new
    u_ext = history.extrapolated_velocity(config.sigma)
    p_ext = history.extrapolated_pressure(config.sigma)
    u_bdf = history.bdf_velocity(config.sigma)
    adv = u_ext if convection else np.zeros_like(u_ext)
    N = space.n_unknowns

    u_bdf_full = np.zeros(N)
    u_bdf_full[:space.n_velocity] = u_bdf
    K = (alpha / dt) * ops.mass + ops.stokes
    rhs = ops.mass @ u_bdf_full / dt + ops.nitsche_rhs
    if convection:
        K = K + forms.assemble_convection(space, adv)
    vd = forms.volume_data(space)
    f_vol = _f_at(f, vd.x, t_new)
    rhs += forms.scatter_vector(space.velocity_dofs, forms.load_element(vd, f_vol), N)
    if not stabilization:
        return forms.SparseSystem(K.tocsr(), rhs)

    coeffs = StepCoefficients(params.nu, dt, alpha, sigma, config.c_tilde)
    vdofs = space.velocity_dofs
    pf = point_fields(vd, coeffs, adv[vdofs], u_ext[vdofs], p_ext[space.mesh.triangles],
                      u_bdf[vdofs], f_vol)
    T = len(vd)
    W = np.zeros((T, vd.wq.shape[1], 2, 15))
    if "supg" in terms:
        W += supg_test(pf, vd.dpsi, config.c_tilde)
    if "vms" in terms:
        W += vms_cross_test(pf)
    if "les" in terms:
        W += les_test(pf)
    Kl, Fl = residual_element(vd, pf, W)
    if "grad_div" in terms:
        Kl = Kl + grad_div_element(vd, pf)
    shape = (N, N)
    K = K + forms.scatter(space.dofs, space.dofs, Kl, shape)
    rhs += forms.scatter_vector(space.dofs, Fl, N)

    ed = forms.navier_edge_data(space)
    if "boundary" in terms and ed is not None:
        owner = forms.navier_owner(space)
        m = space.mesh
        pfe = point_fields(ed, coeffs, adv[vdofs[owner]], u_ext[vdofs[owner]],
                           p_ext[m.triangles[owner]], u_bdf[vdofs[owner]],
                           _f_at(f, ed.x, t_new))
        Ke, Fe = boundary_element(ed, pfe)
        K = K + forms.scatter(space.dofs[owner], space.dofs[owner], Ke, shape)
        rhs += forms.scatter_vector(space.dofs[owner], Fe, N)
    return forms.SparseSystem(K.tocsr(), rhs)


def strong_residuals(space: MixedSpace, params: PhysicalParams, config: TimeConfig,
                     history: HistoryState, state: SolutionState, f=None, t_new=None,
                     convection=True):
    """Strong residuals ``(r_M (T, Q, 2), r_C (T, Q))`` of ``state`` at the
    volume quadrature points."""
    vd = forms.volume_data(space)
    sigma = history.order(config.sigma)
    coeffs = StepCoefficients(params.nu, config.dt, history.alpha(config.sigma), sigma,
                              config.c_tilde)
    u_ext = history.extrapolated_velocity(config.sigma)
    adv = u_ext if convection else np.zeros_like(u_ext)
    vdofs = space.velocity_dofs
    tri = space.mesh.triangles
    pf = point_fields(vd, coeffs, adv[vdofs], u_ext[vdofs],
                      history.extrapolated_pressure(config.sigma)[tri],
                      history.bdf_velocity(config.sigma)[vdofs],
                      _f_at(f, vd.x, config.dt if t_new is None else t_new))
    x_loc = np.hstack([state.velocity[vdofs], state.pressure[tri]])
    r_m = np.einsum("tqiA,tA->tqi", pf.trial, x_loc) - pf.known
    r_c = np.einsum("tqA,tA->tq", pf.div, state.velocity[vdofs])
    return r_m, r_c


# time loop ---------------------------------------------------------------------------

def advance(space, params, config, history, f=None, t_new=None, dirichlet=None,
            stabilization=True, convection=True, operators=None, step=0):
    """Solve one step and return the new :class:`SolutionState`.

    Raises :class:`SimulationDiverged` (with the step index) on a failed
    solve or non-finite solution.
    """
    system = assemble_vms_step(space, params, config, history, f, t_new,
                               stabilization, convection, operators=operators)
    D = dirichlet if dirichlet is not None else dirichlet_values(space)
    A, b = apply_dirichlet(system.matrix, system.rhs, D.dofs, D.values)
    try:
        x = solve(A, b, f"time step {step}")
    except LinearSolveError as exc:
        raise SimulationDiverged(step, str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SimulationDiverged(step, "non-finite solution")
    return SolutionState.from_vector(space, x)


@dataclass
class UnsteadyResult:
    final: SolutionState
    diagnostics: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)


DIAGNOSTIC_COLUMNS = ("step", "time", "kinetic_energy", "slip_norm")


def kinetic_energy(mass, space, u):
    x = np.zeros(space.n_unknowns)
    x[:space.n_velocity] = u
    return 0.5 * float(x @ (mass @ x))


def run_unsteady(space, params, config: TimeConfig, dirichlet_data=None, f=None,
                 initial=None, stabilization=True, convection=True, g_normal=None,
                 g_tangent=None, diagnostics_path=None, snapshot_every=0,
                 on_snapshot=None, keep_snapshots=False):
    """March from ``initial`` (default zero) to ``config.t_end``.

    ``dirichlet_data`` is a time-independent velocity field on the
    Dirichlet boundary.  Every ``snapshot_every`` steps (and at the final
    step) ``on_snapshot(step, time, state)`` is called.  Diagnostics rows
    ``(step, time, kinetic_energy, slip_norm)`` are returned and, if
    ``diagnostics_path`` is given, written as CSV.
    """
    ops = StepOperators.build(space, params, g_normal, g_tangent)
    D = dirichlet_values(space, dirichlet_data)
    state = initial if initial is not None else SolutionState.zeros(space)
    history = HistoryState.start(state)
    result = UnsteadyResult(state)
    n = config.n_steps
    for k in range(1, n + 1):
        t = k * config.dt
        state = advance(space, params, config, history, f, t, D, stabilization, convection,
                        ops, step=k)
        history = history.push(state)
        ke = kinetic_energy(ops.mass, space, state.velocity)
        slip = forms.slip_norm(space, state.velocity)
        if not (math.isfinite(ke) and math.isfinite(slip)):
            raise SimulationDiverged(k, "non-finite diagnostics")
        result.diagnostics.append((k, t, ke, slip))
        if snapshot_every and (k % snapshot_every == 0 or k == n):
            if on_snapshot is not None:
                on_snapshot(k, t, state)
            if keep_snapshots:
                result.snapshots.append((k, t, state))
    result.final = state
    if diagnostics_path is not None:
        write_diagnostics(diagnostics_path, result.diagnostics)
    return result


def write_diagnostics(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DIAGNOSTIC_COLUMNS)
        for step, t, ke, slip in rows:
            w.writerow([step, repr(float(t)), repr(float(ke)), repr(float(slip))])
