"""Library entry points behind the command-line interface.

Each ``run_*`` function takes a :class:`~nsns.io.RunConfig`, writes its
outputs under ``config.out_dir`` and returns a result object, so the CLI
is a thin wrapper and every run is reproducible from Python.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .benchmarks import (ManufacturedSolution, cavity_mesh, cavity_params, lid_velocity)
from .forms import PhysicalParams, slip_norm
from .mesh import read_mesh
from .spaces import build_taylor_hood
from .steady import solve_navier_stokes, run_manufactured_convergence
from .vms import TimeConfig, run_unsteady

log = logging.getLogger(__name__)


@dataclass
class ConvergenceResult:
    tables: dict                     # gamma -> RateTable
    converged: bool
    files: list = field(default_factory=list)


def _out(config):
    path = Path(config.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _gammas(config, default):
    g = config.gamma if config.gamma is not None else default
    return list(g) if isinstance(g, list) else [g]


def run_convergence(config: io.RunConfig) -> ConvergenceResult:
    """Manufactured-solution study; one rate CSV per penalty value, plus a
    slip-norm sweep table when several are given."""
    out = _out(config)
    nu = config.nu if config.nu is not None else 1.0
    beta = config.beta if config.beta is not None else 10.0
    gammas = _gammas(config, 10.0)
    tables, files, ok = {}, [], True
    for g in gammas:
        params = PhysicalParams(nu, beta, g)
        levels = run_manufactured_convergence(config.levels, params, ManufacturedSolution())
        ok &= all(lv.converged for lv in levels)
        table = io.RateTable.from_levels(levels)
        tables[g] = table
        path = out / f"convergence_gamma{g:g}.csv"
        io.write_rate_csv(table, path)
        files.append(path)
    if len(gammas) > 1:
        slips = [[tables[g].rows[i].slip for g in gammas] for i in range(len(config.levels))]
        path = out / "slip_sweep.csv"
        io.write_slip_table(config.levels, gammas, slips, path)
        files.append(path)
    return ConvergenceResult(tables, ok, files)


@dataclass
class FieldResult:
    space: object
    state: object
    converged: bool
    files: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    newton_iterations: int = 0


def _write_fields(out, stem, space, state, files):
    vtk = out / f"{stem}.vtk"
    io.write_vtk(vtk, space, state.velocity, state.pressure)
    raw = out / f"{stem}.npz"
    io.write_coefficients(raw, space, state.velocity, state.pressure)
    files += [vtk, raw]


def _steady(config, space, params, stem, dirichlet=None, f=None):
    out = _out(config)
    state, report = solve_navier_stokes(space, params, f=f, dirichlet_data=dirichlet)
    files = []
    _write_fields(out, stem, space, state, files)
    return FieldResult(space, state, report.converged, files,
                       newton_iterations=report.iterations)


def _unsteady(config, space, params, stem, dirichlet=None, f=None):
    out = _out(config)
    files = []

    def snap(step, t, state):
        _write_fields(out, f"{stem}_{step:05d}", space, state, files)

    tc = TimeConfig(config.dt, config.t_end, config.sigma, config.c_tilde)
    diag = out / f"{stem}_diagnostics.csv"
    res = run_unsteady(space, params, tc, dirichlet_data=dirichlet, f=f,
                       diagnostics_path=diag, snapshot_every=config.snapshot_every,
                       on_snapshot=snap)
    if not config.snapshot_every:
        snap(tc.n_steps, tc.n_steps * tc.dt, res.final)
    files.append(diag)
    return FieldResult(space, res.final, True, files, res.diagnostics)


def _cavity_params(config):
    re = config.re if config.re is not None else 1.0 / config.nu
    beta = config.beta if config.beta is not None else 1.0
    gamma = config.gamma if config.gamma is not None else 10.0
    return re, cavity_params(re, beta, gamma)


def run_cavity(config: io.RunConfig) -> FieldResult:
    """Lid-driven cavity, steady Newton or unsteady VMS-LES."""
    n = config.mesh.get("n", 32)
    space = build_taylor_hood(read_mesh(config.mesh["file"]) if "file" in config.mesh
                              else cavity_mesh(n))
    re, params = _cavity_params(config)
    stem = f"cavity_re{re:g}"
    if config.problem == "cavity_unsteady":
        return _unsteady(config, space, params, stem, lid_velocity)
    res = _steady(config, space, params, stem, lid_velocity)
    if not res.converged:
        log.error("Newton failed at Re=%g; high Reynolds numbers need the unsteady "
                  "VMS-LES mode (problem 'cavity_unsteady')", re)
    return res


def run_custom(config: io.RunConfig) -> FieldResult:
    """User mesh with constant forcing and constant Dirichlet velocity."""
    space = build_taylor_hood(read_mesh(config.mesh["file"]))
    params = PhysicalParams(config.nu if config.nu is not None else 1.0,
                            config.beta if config.beta is not None else 0.0,
                            config.gamma if config.gamma is not None else 10.0)
    fc = np.asarray(config.forcing if config.forcing is not None else (0.0, 0.0), float)
    gd = np.asarray(config.dirichlet_velocity if config.dirichlet_velocity is not None
                    else (0.0, 0.0), float)
    dirichlet = lambda x: np.broadcast_to(gd, x.shape)
    stem = Path(config.mesh["file"]).stem
    if config.dt is not None:
        return _unsteady(config, space, params, stem, dirichlet,
                         lambda x, t: np.broadcast_to(fc, x.shape))
    return _steady(config, space, params, stem, dirichlet,
                   lambda x: np.broadcast_to(fc, x.shape))


def final_slip(result: FieldResult) -> float:
    return slip_norm(result.space, result.state.velocity)
