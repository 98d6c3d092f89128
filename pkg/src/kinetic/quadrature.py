"""Shared quadrature rules and small linear-algebra helpers."""

from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=64)
def gauss_legendre(n: int, a: float = -1.0, b: float = 1.0):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


@lru_cache(maxsize=64)
def gauss_hermite_3d(n: int):
    """Nodes z (m, 3) and weights for E[f(Z)], Z standard normal in 3D."""
    x, w = np.polynomial.hermite_e.hermegauss(n)
    w = w / np.sqrt(2 * np.pi)
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    W = w[:, None, None] * w[None, :, None] * w[None, None, :]
    return np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1), W.ravel()


@lru_cache(maxsize=64)
def sphere_rule(n_mu: int, n_phi: int):
    """Product rule on the unit sphere: Gauss-Legendre in cos(theta), trapezoid in phi.

    Returns directions (m, 3) and weights summing to 4 pi.  Exact for
    polynomials of degree < 2 n_mu in cos(theta) and < n_phi in phi.
    """
    mu, wmu = np.polynomial.legendre.leggauss(n_mu)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    M, P = np.meshgrid(mu, phi, indexing="ij")
    s = np.sqrt(1 - M**2)
    dirs = np.stack([s * np.cos(P), s * np.sin(P), M], axis=-1).reshape(-1, 3)
    w = (wmu[:, None] * np.full(n_phi, 2 * np.pi / n_phi)[None, :]).ravel()
    return dirs, w


def rotation_to(axis) -> np.ndarray:
    """Orthogonal matrix whose third column is the unit vector ``axis``."""
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    t = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(a, t)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(a, e1)
    return np.stack([e1, e2, a], axis=1)


def orthonormal_pair(n):
    """Two unit vectors spanning the plane orthogonal to each row of n (m, 3)."""
    n = np.atleast_2d(np.asarray(n, dtype=float))
    t = np.where(np.abs(n[:, :1]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
    e1 = np.cross(n, t)
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(n, e1)
    return e1, e2


def psd_clip(M, rel_tol: float = 1e-8):
    """Symmetrize and clip eigenvalues below zero; returns (matrix, clipped magnitude).

    Negative eigenvalues larger than ``rel_tol * trace`` are kept (not hidden)
    so callers can detect a genuine loss of positivity.
    """
    S = 0.5 * (np.asarray(M, dtype=float) + np.asarray(M, dtype=float).T)
    lam, Q = np.linalg.eigh(S)
    scale = max(abs(np.trace(S)), 1e-300)
    neg = lam < 0
    small = neg & (lam >= -rel_tol * scale)
    clipped = float(-lam[small].sum()) if small.any() else 0.0
    lam = np.where(small, 0.0, lam)
    return (Q * lam) @ Q.T, clipped
