"""Euclidean distance matrix algebra.

Squared distance matrices are plain ``(n, n)`` float arrays throughout the
package.  This module builds them from coordinates, double-centres them,
projects onto the EDM sign cone, evaluates the rank penalty and recovers
coordinates by classical multidimensional scaling (cMDS) followed by a
rigid alignment onto anchor points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AlignmentUnderdeterminedError, ValidationError

__all__ = [
    "Embedding",
    "RigidTransform",
    "WeightSpec",
    "centering_matrix",
    "check_sdm",
    "cmds_embed",
    "double_center",
    "edm_from_points",
    "project_cone",
    "procrustes_align",
    "rank_penalty",
    "sorted_eigh",
]


@dataclass
class Embedding:
    """Coordinates recovered by cMDS, one row per point."""

    points: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] not in (2, 3):
            raise ValidationError(f"embedding must be n x 2 or n x 3, got {self.points.shape}")

    @property
    def r(self):
        return self.points.shape[1]

    @property
    def n(self):
        return self.points.shape[0]


@dataclass
class RigidTransform:
    """``x -> rotation @ x + translation``; the rotation may include a reflection."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=float)
        self.translation = np.asarray(self.translation, dtype=float)
        r = self.rotation.shape[0]
        if not np.allclose(self.rotation.T @ self.rotation, np.eye(r), atol=1e-10, rtol=0):
            raise ValidationError("rotation is not orthogonal")

    def apply(self, points):
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation

    @classmethod
    def identity(cls, r):
        return cls(np.eye(r), np.zeros(r))


@dataclass
class WeightSpec:
    """Entry weights ``H`` of the fit term.

    ``mode="uniform"`` is ``H = ee^T``.  For ``mode="general"`` the solver
    majorizes with the diagonal weight ``u_i = max(tau, max_j H_ij)``.
    """

    mode: str = "uniform"
    H: np.ndarray | None = None
    tau: float = 1e-3

    def __post_init__(self):
        if self.mode not in ("uniform", "general"):
            raise ValidationError(f"unknown weight mode {self.mode!r}")
        if self.tau <= 0:
            raise ValidationError("tau must be positive")
        if self.mode == "general":
            if self.H is None:
                raise ValidationError("general weights require H")
            self.H = np.asarray(self.H, dtype=float)
            if not np.allclose(self.H, self.H.T) or np.any(self.H < 0):
                raise ValidationError("H must be symmetric with non-negative entries")

    def matrix(self, n):
        if self.mode == "uniform":
            return np.ones((n, n))
        return self.H

    def diagonal_weight(self, n):
        """The vector ``u`` with ``u_i = max(tau, max_j H_ij)``."""
        return np.maximum(self.tau, self.matrix(n).max(axis=1))


def check_sdm(D, atol=1e-9):
    """Validate a squared distance matrix and return it as a float array."""
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValidationError(f"distance matrix must be square, got shape {D.shape}")
    scale = max(1.0, float(np.abs(D).max(initial=0.0)))
    if not np.allclose(D, D.T, atol=atol * scale, rtol=0):
        raise ValidationError("distance matrix is not symmetric")
    if np.any(np.abs(np.diag(D)) > atol * scale):
        raise ValidationError("distance matrix has a non-zero diagonal")
    if np.any(D < -atol * scale):
        raise ValidationError("distance matrix has negative entries")
    return D


def centering_matrix(n):
    return np.eye(n) - np.full((n, n), 1.0 / n)


def edm_from_points(points):
    """Squared Euclidean distances between the rows of ``points``."""
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    diff = X[:, None, :] - X[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def double_center(D):
    """Gram matrix ``-1/2 J D J`` of the configuration behind ``D``."""
    D = np.asarray(D, dtype=float)
    n = D.shape[0]
    # J D J computed by subtracting row/column means; avoids two dense products
    row = D.mean(axis=1, keepdims=True)
    col = D.mean(axis=0, keepdims=True)
    B = -0.5 * (D - row - col + D.mean())
    return 0.5 * (B + B.T) if n > 1 else B


def sorted_eigh(B):
    """Eigenpairs of symmetric ``B`` in descending order with a sign convention.

    Each eigenvector is flipped so that its first component of non-negligible
    magnitude is positive, which makes the output reproducible.
    """
    w, V = np.linalg.eigh(B)
    w = w[::-1]
    V = V[:, ::-1].copy()
    for k in range(V.shape[1]):
        col = V[:, k]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0:
            V[:, k] = -col
    return w, V


def cmds_embed(D, r=3):
    """Classical MDS: the top-``r`` scaled eigenvectors of ``double_center(D)``.

    Negative eigenvalues among the top ``r`` (a non-EDM input) are clamped to
    zero.  ``Embedding.degenerate`` is set when ``lambda_r == lambda_{r+1} > 0``,
    in which case the embedding is not unique.
    """
    if r not in (2, 3):
        raise ValidationError(f"embedding dimension must be 2 or 3, got {r}")
    D = np.asarray(D, dtype=float)
    n = D.shape[0]
    if n < r:
        raise ValidationError(f"need at least {r} points to embed in {r} dimensions")
    w, V = sorted_eigh(double_center(D))
    top = np.maximum(w[:r], 0.0)
    degenerate = False
    if n > r and w[r - 1] > 0:
        degenerate = abs(w[r - 1] - w[r]) <= 1e-10 * max(abs(w[0]), 1e-300)
    return Embedding(V[:, :r] * np.sqrt(top), degenerate=degenerate)


def project_cone(A):
    """Frobenius-nearest ``X`` with ``v^T X v <= 0`` for every ``v`` orthogonal to ``e``.

    Only the centred part ``JAJ`` is constrained, so the projection keeps
    ``A - JAJ`` and the non-positive spectral part of ``JAJ``.
    """
    A = np.asarray(A, dtype=float)
    C = -2.0 * double_center(A)
    w, V = np.linalg.eigh(C)
    neg = np.minimum(w, 0.0)
    X = A - C + (V * neg) @ V.T
    return 0.5 * (X + X.T)


def rank_penalty(D, r):
    """Rank penalty ``q(D) = sum_{i>r} lambda_i(-1/2 J D J)`` and a supergradient.

    ``q`` is the trace minus the Ky Fan ``r``-norm of the Gram matrix, hence
    concave; the returned matrix ``g = -1/2 J (I - P_r P_r^T) J`` satisfies
    ``q(D') <= q(D) + <g, D' - D>`` for every symmetric ``D'``.
    """
    D = np.asarray(D, dtype=float)
    n = D.shape[0]
    w, V = sorted_eigh(double_center(D))
    value = float(w[r:].sum())
    P = V[:, :r]
    J = centering_matrix(n)
    g = -0.5 * J @ (np.eye(n) - P @ P.T) @ J
    return value, 0.5 * (g + g.T)


def procrustes_align(est, anchor_indices, anchor_coords):
    """Rigidly map an embedding onto known anchor coordinates.

    Solves the orthogonal Procrustes problem over rotations *and*
    reflections on the anchor rows, then applies the transform to every row.

    Returns
    -------
    aligned : Embedding
    transform : RigidTransform
    """
    points = est.points if isinstance(est, Embedding) else np.asarray(est, dtype=float)
    r = points.shape[1]
    idx = np.asarray(anchor_indices, dtype=int)
    Y = np.asarray(anchor_coords, dtype=float).reshape(len(idx), r)
    if len(set(idx.tolist())) != len(idx) or np.any(idx < 0) or np.any(idx >= points.shape[0]):
        raise ValidationError("anchor indices must be distinct and in range")
    if len(idx) < r + 1:
        raise AlignmentUnderdeterminedError(f"need at least {r + 1} anchors in {r}D, got {len(idx)}")

    X = points[idx]
    x0 = X.mean(axis=0)
    y0 = Y.mean(axis=0)
    Yc = Y - y0
    sv = np.linalg.svd(Yc, compute_uv=False)
    if sv[-1] <= 1e-9 * max(sv[0], 1e-300):
        raise AlignmentUnderdeterminedError("anchors are affinely degenerate")

    U, _, Vt = np.linalg.svd((X - x0).T @ Yc)
    Q = Vt.T @ U.T
    transform = RigidTransform(Q, y0 - Q @ x0)
    return Embedding(transform.apply(points)), transform
