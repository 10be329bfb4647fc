"""Dense symmetric linear algebra for the small species-level matrices.

The matrices handled here are m x m with m the number of species, so a
cyclic Jacobi eigensolver is both fast enough and exact to rounding.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import InvalidMatrix

JACOBI_MAX_SWEEPS = 100
JACOBI_REL_TOL = 1e-14


class Definiteness(enum.Enum):
    PSD = "PSD"
    INDEFINITE = "Indefinite"


@dataclass(frozen=True)
class EigenDecomp:
    """Eigenvalues sorted descending; eigenvectors stored as columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        q = self.eigenvectors
        return (q * self.eigenvalues) @ q.T


def as_symmetric(a) -> np.ndarray:
    """Validate and return ``a`` as a float64 symmetric matrix."""
    arr = np.array(a, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise InvalidMatrix(f"expected a non-empty square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidMatrix("matrix has non-finite entries")
    if not np.array_equal(arr, arr.T):
        raise InvalidMatrix("matrix is not symmetric")
    return arr


def _off_norm(a: np.ndarray) -> float:
    off = a - np.diag(np.diag(a))
    return float(np.linalg.norm(off))


def sym_eigen(a) -> EigenDecomp:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations."""
    a = as_symmetric(a).copy()
    m = a.shape[0]
    v = np.eye(m)
    target = JACOBI_REL_TOL * float(np.linalg.norm(a))
    for _ in range(JACOBI_MAX_SWEEPS):
        if _off_norm(a) <= target:
            break
        for p in range(m - 1):
            for r in range(p + 1, m):
                apr = a[p, r]
                if apr == 0.0:
                    continue
                # classical symmetric Schur 2x2 rotation
                diff = a[r, r] - a[p, p]
                if abs(apr) < 1e-150 * abs(diff):
                    # angle below double resolution; avoids overflow in tau
                    t = apr / diff
                else:
                    tau = diff / (2.0 * apr)
                    if tau >= 0:
                        t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                    else:
                        t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                ap = a[:, p].copy()
                ar = a[:, r].copy()
                a[:, p] = c * ap - s * ar
                a[:, r] = s * ap + c * ar
                ap = a[p, :].copy()
                ar = a[r, :].copy()
                a[p, :] = c * ap - s * ar
                a[r, :] = s * ap + c * ar
                a[p, r] = a[r, p] = 0.0
                vp = v[:, p].copy()
                vr = v[:, r].copy()
                v[:, p] = c * vp - s * vr
                v[:, r] = s * vp + c * vr
    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    return EigenDecomp(eigenvalues=w[order], eigenvectors=v[:, order])


def spectral_radius(a) -> float:
    """Largest absolute eigenvalue (equal to the operator norm for symmetric ``a``)."""
    return float(np.max(np.abs(sym_eigen(a).eigenvalues)))


def matrix_abs(a) -> np.ndarray:
    """Matrix absolute value ``Q |D| Q^T``."""
    ed = sym_eigen(a)
    q = ed.eigenvectors
    out = (q * np.abs(ed.eigenvalues)) @ q.T
    return 0.5 * (out + out.T)


def classify_definiteness(a, tol: float = 1e-10) -> Definiteness:
    """PSD unless the smallest eigenvalue is below ``-tol * max(1, rho(a))``."""
    if tol < 0:
        raise ValueError("tol must be non-negative")
    w = sym_eigen(a).eigenvalues
    rho = float(np.max(np.abs(w)))
    if w[-1] < -tol * max(1.0, rho):
        return Definiteness.INDEFINITE
    return Definiteness.PSD


def sqrt_diag_congruence(delta2, lambdas) -> np.ndarray:
    """``Lambda^{1/2} Delta2 Lambda^{1/2}``, the symmetric matrix similar to ``Delta2 Lambda``."""
    root = np.sqrt(np.asarray(lambdas, dtype=np.float64))
    out = as_symmetric(delta2) * np.outer(root, root)
    return 0.5 * (out + out.T)
