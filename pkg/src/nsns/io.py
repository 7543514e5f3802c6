"""Run configuration and output writers (CSV tables, legacy VTK, raw coefficients)."""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

PROBLEMS = ("convergence", "cavity_steady", "cavity_unsteady", "custom")


class ConfigError(ValueError):
    pass


def _positive(name, value):
    if value is not None and not (isinstance(value, (int, float)) and value > 0):
        raise ConfigError(f"{name} must be a positive number, got {value!r}")


@dataclass
class RunConfig:
    """Parsed JSON run configuration.

    ``gamma`` may be a list for the convergence problem, which then sweeps
    the penalty parameter.  For ``custom`` runs, ``forcing`` and
    ``dirichlet_velocity`` are constant vectors; a ``dt`` selects the
    unsteady stepper.
    """
    problem: str
    mesh: dict = field(default_factory=dict)
    nu: float | None = None
    beta: float | None = None
    gamma: float | list | None = None
    re: float | None = None
    dt: float | None = None
    t_end: float | None = None
    sigma: int = 1
    c_tilde: float = 0
    levels: list | None = None
    out_dir: str = "out"
    snapshot_every: int = 0
    forcing: list | None = None
    dirichlet_velocity: list | None = None

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"problem must be one of {PROBLEMS}, got {self.problem!r}")
        if not isinstance(self.mesh, dict) or set(self.mesh) - {"n", "file"}:
            raise ConfigError(f"mesh must be an object with 'n' or 'file', got {self.mesh!r}")
        if "n" in self.mesh and (not isinstance(self.mesh["n"], int) or self.mesh["n"] < 1):
            raise ConfigError(f"mesh.n must be a positive integer, got {self.mesh['n']!r}")
        for name in ("nu", "re", "dt", "t_end"):
            _positive(name, getattr(self, name))
        for g in (self.gamma if isinstance(self.gamma, list) else [self.gamma]):
            _positive("gamma", g)
        if self.beta is not None and self.beta < 0:
            warnings.warn(f"negative friction coefficient beta={self.beta}", stacklevel=2)
        if self.sigma not in (1, 2):
            raise ConfigError(f"sigma must be 1 or 2, got {self.sigma!r}")
        if self.c_tilde not in (0, 1):
            raise ConfigError(f"c_tilde must be 0 or 1, got {self.c_tilde!r}")
        if not isinstance(self.snapshot_every, int) or self.snapshot_every < 0:
            raise ConfigError(f"snapshot_every must be a non-negative integer")
        if self.problem == "convergence":
            if not self.levels:
                raise ConfigError("convergence runs need a non-empty 'levels' list")
            if any(not isinstance(n, int) or n < 1 for n in self.levels) or \
                    any(b <= a for a, b in zip(self.levels, self.levels[1:])):
                raise ConfigError(f"levels must be increasing positive integers: {self.levels}")
        if self.problem.startswith("cavity") and self.re is None and self.nu is None:
            raise ConfigError("cavity runs need 're' (or 'nu')")
        if self.problem == "cavity_unsteady" and (self.dt is None or self.t_end is None):
            raise ConfigError("unsteady runs need 'dt' and 't_end'")
        if self.problem == "custom" and "file" not in self.mesh:
            raise ConfigError("custom runs need mesh.file")
        if (self.dt is None) != (self.t_end is None):
            raise ConfigError("'dt' and 't_end' must be given together")
        for name in ("forcing", "dirichlet_velocity"):
            v = getattr(self, name)
            if v is not None and (len(v) != 2 or not all(math.isfinite(float(c)) for c in v)):
                raise ConfigError(f"{name} must be a 2-vector, got {v!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        if "problem" not in data:
            raise ConfigError("config needs a 'problem' key")
        return cls(**data)

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
        return cls.from_dict(data)

    def dump(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


# rate tables -----------------------------------------------------------------

RATE_COLUMNS = ("mesh", "dofs", "newton_its", "pressure_l2", "rate_pressure",
                "velocity_h1", "rate_h1", "velocity_l2", "rate_l2", "slip_norm")


@dataclass(frozen=True)
class RateRow:
    n: int
    dofs: int
    newton_iterations: int
    pressure_l2: float
    velocity_h1: float
    velocity_l2: float
    slip: float
    rates: tuple | None = None   # (pressure, h1, l2) or None on the first row


@dataclass
class RateTable:
    rows: list = field(default_factory=list)

    @classmethod
    def from_levels(cls, levels) -> "RateTable":
        """Build from :class:`~nsns.steady.ConvergenceLevel` results."""
        rows = []
        prev = None
        for lv in levels:
            e = lv.errors
            errs = (e.pressure_l2, e.velocity_h1, e.velocity_l2)
            rates = None
            if prev is not None:
                rates = tuple(math.log2(a / b) for a, b in zip(prev, errs))
            rows.append(RateRow(lv.n, lv.dofs, lv.newton_iterations, *errs, e.slip, rates))
            prev = errs
        return cls(rows)

    def __len__(self):
        return len(self.rows)


def _sci(x):
    return f"{x:.2e}"


def write_rate_csv(table: RateTable, path):
    """One header line plus one row per level; errors in 3-significant-digit
    scientific notation, rates with two decimals, empty on the first row."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RATE_COLUMNS)
        for r in table.rows:
            rp = [f"{v:.2f}" for v in r.rates] if r.rates else ["", "", ""]
            w.writerow([f"{r.n}x{r.n}", r.dofs, r.newton_iterations, _sci(r.pressure_l2), rp[0],
                        _sci(r.velocity_h1), rp[1], _sci(r.velocity_l2), rp[2], _sci(r.slip)])


def write_slip_table(levels, gammas, slips, path):
    """Slip-norm sweep: rows per mesh level, one column per penalty value.

    ``slips[i][j]`` is the value for ``levels[i]`` and ``gammas[j]``.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mesh"] + [f"gamma={g:g}" for g in gammas])
        for n, row in zip(levels, slips):
            w.writerow([f"{n}x{n}"] + [_sci(v) for v in row])


# field output ----------------------------------------------------------------

def write_vtk(path, space, velocity, pressure, title="nsns solution"):
    """Legacy ASCII VTK of vertex-sampled fields.

    Only the mesh vertices are written; the P2 edge-midpoint values are
    dropped (see :func:`write_coefficients` for the full vector).
    """
    mesh = space.mesh
    V, T = mesh.n_nodes, mesh.n_triangles
    u = np.asarray(velocity, dtype=float)[:2 * V].reshape(V, 2)
    p = np.asarray(pressure, dtype=float)
    if p.shape != (V,):
        raise ValueError(f"pressure must have {V} vertex values, got shape {p.shape}")
    g = lambda x: repr(float(x))
    lines = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {V} double"]
    lines += [f"{g(x)} {g(y)} 0.0" for x, y in mesh.nodes]
    lines.append(f"CELLS {T} {4 * T}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {T}")
    lines += ["5"] * T
    lines += [f"POINT_DATA {V}", "VECTORS velocity double"]
    lines += [f"{g(a)} {g(b)} 0.0" for a, b in u]
    lines += ["SCALARS pressure double 1", "LOOKUP_TABLE default"]
    lines += [g(v) for v in p]
    Path(path).write_text("\n".join(lines) + "\n")


def read_vtk_points(path):
    """Point coordinates and point-data arrays of a file written by
    :func:`write_vtk` (used for round-trip checks)."""
    tokens = Path(path).read_text().split("\n")
    i = next(k for k, t in enumerate(tokens) if t.startswith("POINTS"))
    n = int(tokens[i].split()[1])
    pts = np.array([[float(v) for v in t.split()] for t in tokens[i + 1:i + 1 + n]])
    j = next(k for k, t in enumerate(tokens) if t.startswith("VECTORS"))
    vel = np.array([[float(v) for v in t.split()] for t in tokens[j + 1:j + 1 + n]])
    k = next(k for k, t in enumerate(tokens) if t.startswith("LOOKUP_TABLE"))
    pres = np.array([float(t) for t in tokens[k + 1:k + 1 + n]])
    return pts, vel[:, :2], pres


def write_coefficients(path, space, velocity, pressure, **meta):
    """Full-fidelity coefficient dump (.npz) including edge DOFs."""
    np.savez(path, velocity=np.asarray(velocity), pressure=np.asarray(pressure),
             nodes=space.mesh.nodes, triangles=space.mesh.triangles,
             **{k: np.asarray(v) for k, v in meta.items()})
