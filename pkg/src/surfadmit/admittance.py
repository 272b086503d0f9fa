"""Discrete surface admittances.

``Y`` maps tangential-E coefficients to tangential-H coefficients for the
body's own material, ``Y_tilde`` does the same with the surrounding medium
filling the body, and ``Y_s = Y_tilde - Y`` maps E to the contrast current.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
from scipy.linalg.lapack import get_lapack_funcs

from .operators import OperatorBlocks

__all__ = [
    "FormulationError",
    "AdmittanceSet",
    "condition_estimate",
    "compute_admittance",
    "compute_Ys",
    "admittance_set",
    "COND_LIMIT",
]

COND_LIMIT = 1e14


class FormulationError(RuntimeError):
    """A combined operator is singular or too ill-conditioned to use."""


def condition_estimate(lu_piv, anorm: float) -> float:
    """1-norm condition estimate from an LU factorization (LAPACK ``gecon``)."""
    lu, _ = lu_piv
    gecon = get_lapack_funcs("gecon", (lu,))
    rcond, info = gecon(lu, anorm, norm="1")
    if info != 0 or rcond == 0:
        return float("inf")
    return float(1.0 / rcond)


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must satisfy 0 < alpha < 1, got {alpha}")


def compute_admittance(blocks: OperatorBlocks, alpha: float = 0.5, *, return_cond: bool = False):
    """Admittance ``Y`` with ``(alpha L_e + (1-alpha) K_m) Y = -(alpha K_e + (1-alpha) L_m)``.

    The sign makes ``H = Y E`` satisfy the combined boundary row
    ``(alpha K_e + (1-alpha) L_m) E + (alpha L_e + (1-alpha) K_m) H = 0``.
    """
    _check_alpha(alpha)
    A, B = blocks.combined(alpha)
    anorm = float(np.abs(A).sum(axis=0).max())
    with warnings.catch_warnings():
        # an exactly singular factor is reported below as FormulationError
        warnings.simplefilter("ignore", la.LinAlgWarning)
        lu_piv = la.lu_factor(A, check_finite=True)
    cond = condition_estimate(lu_piv, anorm)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise FormulationError(
            f"combined block is unusable (condition estimate {cond:.3g}) "
            f"at alpha={alpha}, frequency={blocks.medium.frequency:.6g} Hz")
    Y = -la.lu_solve(lu_piv, B)
    return (Y, cond) if return_cond else Y


def compute_Ys(Y: np.ndarray, Y_tilde: np.ndarray) -> np.ndarray:
    if Y.shape != Y_tilde.shape:
        raise ValueError(f"shape mismatch {Y.shape} vs {Y_tilde.shape}")
    return Y_tilde - Y


@dataclass(frozen=True, eq=False)
class AdmittanceSet:
    Y: np.ndarray
    Y_tilde: np.ndarray
    Y_s: np.ndarray
    alpha: float
    conds: dict = field(default_factory=dict)
    elapsed: float = 0.0

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @property
    def nbytes(self) -> int:
        return self.Y.nbytes + self.Y_tilde.nbytes + self.Y_s.nbytes


def admittance_set(interior: OperatorBlocks, exterior: OperatorBlocks, alpha: float = 0.5) -> AdmittanceSet:
    """Both admittances and their difference for one closed body.

    ``exterior`` holds the same basis's blocks evaluated with the
    surrounding medium's parameters.
    """
    t0 = time.perf_counter()
    Y, c_in = compute_admittance(interior, alpha, return_cond=True)
    Yt, c_out = compute_admittance(exterior, alpha, return_cond=True)
    return AdmittanceSet(Y, Yt, compute_Ys(Y, Yt), alpha, {"interior": c_in, "exterior": c_out},
                         time.perf_counter() - t0)
