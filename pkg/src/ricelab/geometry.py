"""Deterministic integral geometry: normal Jacobians, Grassmannians, Crofton.

The two Gamma-function constants here, the determinant identity relating a
Jacobian to averages over random subspaces, and the line-sampling (Favard)
length estimator form the geometric half of every level-set formula check.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .rng import stream

__all__ = [
    "GrassmannElement",
    "Polyline",
    "normal_jacobian",
    "gaussian_det_expectation",
    "crofton_constant",
    "sample_haar_grassmann",
    "crofton_identity_mc",
    "favard_measure",
    "mean_normal_jacobian_mc",
]

_GRAM_CLAMP = 1e-14


def _as_matrix(M) -> np.ndarray:
    A = np.asarray(M, dtype=float)
    if A.ndim != 2:
        raise ConfigurationError("Jacobian must be a 2D matrix")
    d, D = A.shape
    if d > D:
        raise ConfigurationError(f"need d <= D, got {d}x{D}")
    return A


def normal_jacobian(M) -> float:
    """sqrt(det(M M^T)) for a d x D matrix, d <= D; |det M| when square.

    Gram determinants that round off slightly negative (above -1e-14) clamp
    to zero; rank-deficient inputs therefore return exactly 0.
    """
    A = _as_matrix(M)
    d, D = A.shape
    if d == D:
        return abs(float(np.linalg.det(A)))
    gram = A @ A.T
    g = float(np.linalg.det(gram))
    if g < 0:
        if g < -_GRAM_CLAMP * max(1.0, float(np.trace(gram)) ** d):
            raise ConfigurationError(f"Gram determinant {g} is negative beyond round-off")
        g = 0.0
    return math.sqrt(g)


def _batch_normal_jacobian(A: np.ndarray) -> np.ndarray:
    """Vectorized normal Jacobian over a stack (n, d, D)."""
    n, d, D = A.shape
    if d == D:
        return np.abs(np.linalg.det(A))
    gram = np.einsum("nij,nkj->nik", A, A)
    g = np.linalg.det(gram)
    return np.sqrt(np.clip(g, 0.0, None))


def gaussian_det_expectation(D: int, d: int) -> float:
    """E Delta for a d x D matrix of i.i.d. standard normals.

    Equals 2^{d/2} Gamma((D+1)/2) / Gamma((D-d+1)/2).
    """
    D, d = int(D), int(d)
    if not 1 <= d <= D:
        raise ConfigurationError(f"need 1 <= d <= D, got d={d}, D={D}")
    return 2.0 ** (d / 2.0) * math.gamma((D + 1) / 2.0) / math.gamma((D - d + 1) / 2.0)


def _crofton_c(D: int, m: int) -> float:
    return (
        math.sqrt(math.pi)
        * math.gamma((D + 1) / 2.0)
        / (math.gamma((m + 1) / 2.0) * math.gamma((D - m + 1) / 2.0))
    )


def crofton_constant(D: int, m: int) -> float:
    """pi^{1/2} Gamma((D+1)/2) / (Gamma((m+1)/2) Gamma((D-m+1)/2))."""
    D, m = int(D), int(m)
    if not 1 <= m <= D - 1:
        raise ConfigurationError(f"need 1 <= m <= D-1, got m={m}, D={D}")
    return _crofton_c(D, m)


@dataclass(frozen=True)
class GrassmannElement:
    """A d-dimensional subspace of R^D, stored as an orthonormal D x d basis."""

    basis: np.ndarray

    def __post_init__(self):
        B = np.asarray(self.basis, dtype=float)
        if B.ndim != 2 or B.shape[0] < B.shape[1]:
            raise ConfigurationError("basis must be D x d with d <= D")
        gram = B.T @ B
        if not np.allclose(gram, np.eye(B.shape[1]), atol=1e-12):
            raise ConfigurationError("basis columns are not orthonormal to 1e-12")
        object.__setattr__(self, "basis", B)

    @property
    def D(self) -> int:
        return self.basis.shape[0]

    @property
    def d(self) -> int:
        return self.basis.shape[1]


def _haar_batch(D: int, d: int, n: int, rng) -> np.ndarray:
    """(n, D, d) orthonormal bases, Haar-distributed spans.

    Gram-Schmidt on standard Gaussian columns; the classical construction has
    a positive R diagonal by definition, which fixes the sign convention.
    """
    G = rng.standard_normal((n, D, d))
    Q = np.empty_like(G)
    for j in range(d):
        v = G[:, :, j].copy()
        for i in range(j):
            proj = np.einsum("nk,nk->n", Q[:, :, i], v)
            v -= proj[:, None] * Q[:, :, i]
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        Q[:, :, j] = v
    return Q


def sample_haar_grassmann(D: int, d: int, seed: int) -> GrassmannElement:
    """Haar-distributed element of G(D, d)."""
    D, d = int(D), int(d)
    if not 1 <= d <= D:
        raise ConfigurationError(f"need 1 <= d <= D, got d={d}, D={D}")
    rng = stream(seed, "haar-grassmann")
    return GrassmannElement(_haar_batch(D, d, 1, rng)[0])


def crofton_identity_mc(M, n: int, seed: int) -> tuple:
    """Monte Carlo check of Delta(M) = c_{D,D-d} E |det(M Q_V)|.

    Returns (estimate, standard_error).  V is Haar on G(D, d) and Q_V an
    orthonormal basis of V; the estimate is consistent for normal_jacobian(M).
    """
    A = _as_matrix(M)
    d, D = A.shape
    n = int(n)
    if n < 100:
        raise ConfigurationError("need at least 100 samples")
    c = _crofton_c(D, D - d)  # c_{D,0} = 1 covers the square case
    rng = stream(seed, "crofton-identity")
    vals = np.empty(n)
    chunk = max(1, 2_000_000 // (D * d))
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        Q = _haar_batch(D, d, hi - lo, rng)
        prod = np.einsum("ij,njk->nik", A, Q)
        vals[lo:hi] = np.abs(np.linalg.det(prod))
    est = c * float(np.mean(vals))
    se = c * float(np.std(vals, ddof=1)) / math.sqrt(n) if n > 1 else 0.0
    return est, se


def mean_normal_jacobian_mc(D: int, d: int, n: int, seed: int) -> tuple:
    """Sample mean (and SE) of Delta over n i.i.d. standard Gaussian d x D matrices."""
    rng = stream(seed, "gauss-jacobian")
    n = int(n)
    vals = np.empty(n)
    chunk = max(1, 4_000_000 // (D * d))
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        vals[lo:hi] = _batch_normal_jacobian(rng.standard_normal((hi - lo, d, D)))
    return float(np.mean(vals)), float(np.std(vals, ddof=1)) / math.sqrt(n)


# ---------------------------------------------------------------------------
# Polylines and the Favard (integral-geometric) length estimator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Polyline:
    """Piecewise-linear set in the plane: one vertex array (k_i, 2) per component."""

    components: tuple

    def __post_init__(self):
        comps = []
        for c in self.components:
            a = np.asarray(c, dtype=float)
            if a.ndim != 2 or a.shape[1] != 2 or a.shape[0] < 1:
                raise ConfigurationError("each component needs shape (k, 2), k >= 1")
            comps.append(a)
        object.__setattr__(self, "components", tuple(comps))

    @property
    def length(self) -> float:
        total = 0.0
        for c in self.components:
            if c.shape[0] > 1:
                total += float(np.sum(np.linalg.norm(np.diff(c, axis=0), axis=1)))
        return total

    def vertex_count(self) -> int:
        return int(sum(c.shape[0] for c in self.components))

    def bounding_box(self):
        allv = np.vstack(self.components)
        return allv.min(axis=0), allv.max(axis=0)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["component", "vertex", "x", "y"])
            for ci, c in enumerate(self.components):
                for vi, (x, y) in enumerate(c):
                    w.writerow([ci, vi, repr(float(x)), repr(float(y))])

    @classmethod
    def from_csv(cls, path) -> "Polyline":
        rows = {}
        with open(path, newline="") as fh:
            r = csv.DictReader(fh)
            required = {"component", "vertex", "x", "y"}
            if r.fieldnames is None or set(r.fieldnames) != required:
                raise ConfigurationError(f"polyline CSV must have columns {sorted(required)}")
            for rec in r:
                rows.setdefault(int(rec["component"]), []).append(
                    (int(rec["vertex"]), float(rec["x"]), float(rec["y"]))
                )
        comps = []
        for ci in sorted(rows):
            verts = sorted(rows[ci])
            comps.append(np.array([[x, y] for _, x, y in verts]))
        return cls(tuple(comps))


def favard_measure(shape: Polyline, n_lines: int, seed: int) -> tuple:
    """Length of a planar polyline by random line counting.

    Samples a Haar direction, offsets the normal line uniformly over the
    projection of the shape's bounding box, counts crossings (a vertex touch
    counts once, by the half-open segment convention), and rescales by
    c_{2,1} and the offset window length.  Returns (estimate, standard error).
    """
    if not isinstance(shape, Polyline):
        raise ConfigurationError("shape must be a Polyline")
    n_lines = int(n_lines)
    if n_lines < 1000:
        raise ConfigurationError("need at least 10^3 lines")
    if shape.length == 0.0:
        return 0.0, 0.0

    verts = np.vstack(shape.components)
    # pair (i, i+1) is a real segment iff both endpoints are in one component
    valid = np.ones(verts.shape[0] - 1, dtype=bool)
    off = 0
    for c in shape.components:
        if off > 0:
            valid[off - 1] = False
        off += c.shape[0]

    lo_corner, hi_corner = shape.bounding_box()
    corners = np.array(
        [
            [lo_corner[0], lo_corner[1]],
            [lo_corner[0], hi_corner[1]],
            [hi_corner[0], lo_corner[1]],
            [hi_corner[0], hi_corner[1]],
        ]
    )

    c21 = _crofton_c(2, 1)
    rng = stream(seed, "favard-lines")
    estimates = np.empty(n_lines)
    chunk = max(1, _chunk_lines(verts.shape[0]))
    for lo in range(0, n_lines, chunk):
        hi = min(lo + chunk, n_lines)
        k = hi - lo
        normals = rng.standard_normal((k, 2))
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        proj_corners = corners @ normals.T  # (4, k)
        wlo, whi = proj_corners.min(axis=0), proj_corners.max(axis=0)
        window = whi - wlo
        y = wlo + window * rng.random(k)
        s = verts @ normals.T - y[None, :]  # (V, k)
        neg = s < 0.0
        crossings = np.sum((neg[:-1] != neg[1:]) & valid[:, None], axis=0)
        estimates[lo:hi] = c21 * window * crossings
    est = float(np.mean(estimates))
    se = float(np.std(estimates, ddof=1)) / math.sqrt(n_lines)
    return est, se


def _chunk_lines(n_vertices: int) -> int:
    return max(1, 8_000_000 // max(n_vertices, 1))
