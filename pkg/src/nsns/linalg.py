"""Sparse direct solver selection.

PARDISO (through ``pypardiso``) is used when it can be loaded; its
nested-dissection ordering keeps the 128 x 128 manufactured level well
inside a few GB.  SuperLU is the fallback.
"""
from __future__ import annotations

import glob
import logging
import os
import sys
import sysconfig

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

log = logging.getLogger(__name__)


class LinearSolveError(RuntimeError):
    pass


def _locate_mkl_rt():
    roots = {sys.prefix, sys.base_prefix, sysconfig.get_config_var("prefix") or "",
             "/usr/local", "/usr"}
    for root in sorted(r for r in roots if r):
        hits = sorted(glob.glob(os.path.join(root, "lib", "libmkl_rt.so*")))
        if hits:
            return hits[0]
    return None


def _load_pardiso():
    if os.environ.get("NSNS_SOLVER", "").lower() == "superlu":
        return None
    if "PYPARDISO_MKL_RT" not in os.environ:
        path = _locate_mkl_rt()
        if path:
            os.environ["PYPARDISO_MKL_RT"] = path
    try:
        import pypardiso
    except (ImportError, OSError) as exc:
        log.debug("pypardiso unavailable (%s); using SuperLU", exc)
        return None
    return pypardiso


_PARDISO = _load_pardiso()


def backend() -> str:
    return "pardiso" if _PARDISO is not None else "superlu"


def _superlu(A, b):
    # the saddle-point pattern is structurally symmetric, so symmetric mode
    # with a minimum-degree ordering on A + A^T gives the least fill
    lu = splu(sp.csc_matrix(A), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
              options=dict(SymmetricMode=True))
    return lu.solve(b)


def solve(A, b, context="", rtol=1e-8):
    """Solve ``A x = b`` with a sparse direct method.

    The relative residual is checked; one step of iterative refinement is
    taken if it exceeds ``rtol``.

    Raises
    ------
    LinearSolveError
        If the factorization fails or the result is not finite / accurate.
    """
    A = sp.csr_matrix(A, dtype=float)
    b = np.asarray(b, dtype=float)
    inner = _superlu
    if _PARDISO is not None:
        inner = lambda M, r: _PARDISO.spsolve(M, r, squeeze=False).reshape(r.shape)
    try:
        x = inner(A, b)
        if not np.all(np.isfinite(x)):
            raise LinearSolveError("non-finite solution")
        scale = max(np.linalg.norm(b), 1e-300)
        r = b - A @ x
        if np.linalg.norm(r) > rtol * scale:
            x = x + inner(A, r)
            r = b - A @ x
    except LinearSolveError as exc:
        raise LinearSolveError(f"linear solve failed ({context}): {exc}") from exc
    except (RuntimeError, ValueError) as exc:
        raise LinearSolveError(f"linear solve failed ({context}): {exc}") from exc
    if not np.all(np.isfinite(x)) or np.linalg.norm(r) > 1e3 * rtol * scale:
        raise LinearSolveError(f"linear solve inaccurate or singular ({context}): "
                               f"relative residual {np.linalg.norm(r) / scale:.2e}")
    return x
