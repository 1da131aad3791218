"""Small dense complex-matrix algebra for self-adjoint operators.

Operators are plain ``numpy`` complex arrays. ``hermitian`` is the
constructor: it symmetrizes its input so downstream code can rely on exact
self-adjointness.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import DimensionMismatch, NotPositiveSemidefinite

PSD_TOL = 1e-10
MAX_DIM = 8

IDENTITY2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (SIGMA_X, SIGMA_Y, SIGMA_Z)


def hermitian(a) -> np.ndarray:
    """Return ``(a + a^*)/2`` as a complex array, rejecting non-finite entries."""
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] < 1 or a.shape[0] > MAX_DIM:
        raise DimensionMismatch(f"dimension {a.shape[0]} outside 1..{MAX_DIM}")
    if not np.all(np.isfinite(a)):
        raise ValueError("operator has non-finite entries")
    return 0.5 * (a + a.conj().T)


def spin(direction) -> np.ndarray:
    """``n . sigma`` for a real 3-vector ``n``."""
    n = np.asarray(direction, dtype=float)
    return n[0] * SIGMA_X + n[1] * SIGMA_Y + n[2] * SIGMA_Z


def trace_product(a, b) -> complex:
    """``trace(a b)`` without forming the product."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"cannot multiply {a.shape} by {b.shape}")
    return complex(np.sum(a * b.T))


def frobenius(a) -> float:
    return float(np.sqrt(np.sum(np.abs(a) ** 2)))


class EigenDecomposition(NamedTuple):
    """Eigenvalues in descending order with matching orthonormal columns."""

    values: np.ndarray
    vectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ self.vectors.conj().T

    def projector(self, i: int) -> np.ndarray:
        v = self.vectors[:, i]
        return np.outer(v, v.conj())


def _eig2(h: np.ndarray) -> EigenDecomposition:
    a = h[0, 0].real
    d = h[1, 1].real
    b = h[0, 1]
    mean = 0.5 * (a + d)
    half_gap = 0.5 * (a - d)
    radius = float(np.hypot(half_gap, abs(b)))
    if radius == 0.0:
        return EigenDecomposition(np.array([a, d]), np.eye(2, dtype=complex))
    top = mean + radius
    # two candidate eigenvectors for `top`; take the better conditioned one
    c1 = np.array([b, top - a], dtype=complex)
    c2 = np.array([top - d, np.conj(b)], dtype=complex)
    v = c1 if np.linalg.norm(c1) >= np.linalg.norm(c2) else c2
    v = v / np.linalg.norm(v)
    w = np.array([-np.conj(v[1]), np.conj(v[0])])
    return EigenDecomposition(np.array([top, mean - radius]), np.column_stack([v, w]))


def herm_eig(h) -> EigenDecomposition:
    """Eigendecomposition of a self-adjoint operator, eigenvalues descending.

    Dimension 2 uses the closed-form quadratic solution; larger dimensions
    defer to LAPACK (``numpy.linalg.eigh``).
    """
    h = hermitian(h)
    if h.shape[0] == 1:
        return EigenDecomposition(np.array([h[0, 0].real]), np.ones((1, 1), dtype=complex))
    if h.shape[0] == 2:
        return _eig2(h)
    values, vectors = np.linalg.eigh(h)
    return EigenDecomposition(values[::-1].copy(), vectors[:, ::-1].copy())


def psd_sqrt(h) -> np.ndarray:
    """Positive square root; eigenvalues down to ``-PSD_TOL`` are clipped to zero.

    Eigenvalues at round-off level are treated as exact zeros, since the
    square root would otherwise blow ~1e-17 noise up to ~1e-9.
    """
    eig = herm_eig(h)
    if eig.values.min() < -PSD_TOL:
        raise NotPositiveSemidefinite(f"smallest eigenvalue {eig.values.min():.3e}")
    floor = 64 * np.finfo(float).eps * max(abs(eig.values[0]), 1.0)
    root = np.sqrt(np.where(eig.values > floor, eig.values, 0.0))
    return hermitian((eig.vectors * root) @ eig.vectors.conj().T)


def psd_inv_sqrt(h, cutoff: float = PSD_TOL) -> np.ndarray:
    """Inverse square root on the support (pseudo-inverse sense)."""
    eig = herm_eig(h)
    if eig.values.min() < -PSD_TOL:
        raise NotPositiveSemidefinite(f"smallest eigenvalue {eig.values.min():.3e}")
    vals = eig.values
    inv = np.where(vals > cutoff, 1.0 / np.sqrt(np.where(vals > cutoff, vals, 1.0)), 0.0)
    return hermitian((eig.vectors * inv) @ eig.vectors.conj().T)


def pseudo_inverse(h, cutoff: float = PSD_TOL) -> np.ndarray:
    eig = herm_eig(h)
    vals = eig.values
    inv = np.where(np.abs(vals) > cutoff, 1.0 / np.where(np.abs(vals) > cutoff, vals, 1.0), 0.0)
    return hermitian((eig.vectors * inv) @ eig.vectors.conj().T)
