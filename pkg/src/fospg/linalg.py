"""Sparse symmetric positive definite solves.

The direct path is SuperLU in symmetric mode (diagonal pivoting, minimum
degree ordering on ``A + A^T``), which for an SPD matrix is an LDL^T-type
factorization whose pivots are the diagonal of ``U``.  A nonpositive pivot
means the matrix was not SPD.  If the factorization itself fails the solve
falls back to diagonally preconditioned conjugate gradients.
"""

from __future__ import annotations

import logging
import warnings

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)


class AssemblyError(RuntimeError):
    """Raised when a matrix expected to be SPD is not."""


class SPDFactor:
    """Reusable factorization of a sparse SPD matrix."""

    def __init__(self, K, check=True):
        K = sp.csc_matrix(K)
        self.shape = K.shape
        self.K = K
        self.lu = None
        self.pivots = None
        if K.shape[0] == 0:
            return
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", spla.MatrixRankWarning)
                self.lu = spla.splu(
                    K,
                    permc_spec="MMD_AT_PLUS_A",
                    diag_pivot_thresh=0.0,
                    options={"SymmetricMode": True},
                )
        except RuntimeError as exc:  # exactly singular
            raise AssemblyError(f"factorization failed: {exc}") from exc
        self.pivots = self.lu.U.diagonal()
        if check and not np.all(self.pivots > 0):
            raise AssemblyError(
                f"nonpositive pivot {self.pivots.min():.3e}: matrix is not positive definite"
            )

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if self.shape[0] == 0:
            return np.zeros_like(b)
        return self.lu.solve(b)


def cg_solve(K, b, rtol=1e-12, maxiter=None):
    """Jacobi-preconditioned conjugate gradients."""
    K = sp.csr_matrix(K)
    d = K.diagonal()
    if np.any(d <= 0):
        raise AssemblyError("nonpositive diagonal entry: matrix is not positive definite")
    M = sp.diags(1.0 / d)
    x, info = spla.cg(K, b, rtol=rtol, atol=0.0, M=M, maxiter=maxiter or 10 * K.shape[0])
    if info != 0:
        log.warning("conjugate gradients stopped without reaching rtol=%g (info=%d)", rtol, info)
    return x


def spd_solve(K, b, rtol=1e-12):
    """Solve ``K x = b`` for sparse SPD ``K``; direct first, CG as fallback."""
    b = np.asarray(b, dtype=float)
    if K.shape[0] == 0:
        return np.zeros_like(b)
    try:
        factor = SPDFactor(K)
    except AssemblyError:
        raise
    except Exception as exc:  # pragma: no cover - SuperLU memory or option failure
        log.warning("direct factorization failed (%s); using CG", exc)
        return cg_solve(K, b, rtol)
    x = factor.solve(b)
    nb = np.linalg.norm(b)
    for _ in range(2):
        # iterative refinement for badly scaled systems
        r = b - K @ x
        if nb == 0 or np.linalg.norm(r) <= rtol * nb:
            break
        x = x + factor.solve(r)
    return x


def symmetry_defect(K):
    """``max|K - K^T| / max|K|``."""
    K = sp.csr_matrix(K)
    big = abs(K).max()
    if big == 0:
        return 0.0
    diff = K - K.T
    return float(abs(diff).max() / big) if diff.nnz else 0.0
