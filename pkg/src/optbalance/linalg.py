"""Dense symmetric linear algebra used by the metric and optimizer modules."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import InputError, NotPSDError

#: Relative threshold below which negative eigenvalues are treated as rounding noise.
PSD_CLAMP = 1e-8


class Spectrum(NamedTuple):
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # columns, orthonormal


def as_symmetric(a, name="matrix") -> np.ndarray:
    """Validate a square finite matrix and return its exact symmetrization."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InputError(f"{name} must be square, got shape {a.shape}", module="linalg")
    if not np.all(np.isfinite(a)):
        raise InputError(f"{name} has non-finite entries", module="linalg")
    return 0.5 * (a + a.T)


def sym_eigen(a) -> Spectrum:
    """Full eigendecomposition of a symmetric matrix, eigenvalues descending.

    Eigenvector signs are fixed so that each vector's largest-magnitude entry is
    positive, which makes the output deterministic for a given input.
    """
    a = as_symmetric(a)
    w, v = np.linalg.eigh(a)
    w = w[::-1].copy()
    v = v[:, ::-1].copy()
    if v.size:
        pivot = np.argmax(np.abs(v), axis=0)
        signs = np.sign(v[pivot, np.arange(v.shape[1])])
        signs[signs == 0] = 1.0
        v *= signs
    return Spectrum(w, v)


def lambda_max(a) -> float:
    a = as_symmetric(a)
    if a.shape[0] == 0:
        return 0.0
    return float(np.linalg.eigvalsh(a)[-1])


def _clamped_spectrum(a) -> Spectrum:
    spec = sym_eigen(a)
    w = spec.eigenvalues
    if w.size:
        tol = PSD_CLAMP * max(float(w[0]), 0.0)
        if w[-1] < -tol:
            raise NotPSDError(
                f"matrix is not positive semi-definite (min eigenvalue {w[-1]:.3g}, "
                f"max {w[0]:.3g})"
            )
    return Spectrum(np.clip(w, 0.0, None), spec.eigenvectors)


def psd_factor(a) -> np.ndarray:
    """Return B (n x r) with B B^T = a, dropping clamped-zero directions."""
    w, v = _clamped_spectrum(a)
    keep = w > 0
    return v[:, keep] * np.sqrt(w[keep])


def psd_sqrt(a) -> np.ndarray:
    """Symmetric PSD square root R with R R = a."""
    w, v = _clamped_spectrum(a)
    r = (v * np.sqrt(w)) @ v.T
    return 0.5 * (r + r.T)


def cholesky_psd(a) -> np.ndarray:
    """Lower-triangular L with L L^T = a; handles rank-deficient PSD input."""
    a = as_symmetric(a)
    w = _clamped_spectrum(a).eigenvalues
    if w.size and w[-1] > PSD_CLAMP * w[0]:
        try:
            return np.linalg.cholesky(a)
        except np.linalg.LinAlgError:
            pass
    b = psd_factor(a)
    n = a.shape[0]
    if b.shape[1] == 0:
        return np.zeros((n, n))
    # B = R^T Q^T from the QR of B^T, so a = R^T R with R^T lower triangular.
    bt = np.zeros((n, n))
    bt[: b.shape[1], :] = b.T
    _, r = np.linalg.qr(bt)
    lower = r.T
    signs = np.sign(np.diag(lower))
    signs[signs == 0] = 1.0
    return lower * signs
