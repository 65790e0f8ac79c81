"""Shared test helpers: independent oracles and synthetic data builders.

The oracles here are deliberately written with explicit Python loops and
plain scalar arithmetic. They know nothing about the library internals, so
agreement between the two is evidence, not tautology.
"""

from __future__ import annotations

import math

import numpy as np


# ---------------------------------------------------------------------------
# Brute-force metric oracles


def oracle_nearest_sq(query, ref):
    """Per-query minimum squared Euclidean distance, exhaustive O(n*m)."""
    mins = []
    for qx, qy, qz in np.asarray(query, dtype=float):
        best = math.inf
        for rx, ry, rz in np.asarray(ref, dtype=float):
            dx = qx - rx
            dy = qy - ry
            dz = qz - rz
            d = dx * dx + dy * dy + dz * dz
            if d < best:
                best = d
        mins.append(best)
    return np.array(mins)


def oracle_chamfer(a, b):
    return float(np.mean(oracle_nearest_sq(a, b)) + np.mean(oracle_nearest_sq(b, a)))


def oracle_hausdorff_unidirectional(a, b):
    return float(np.sqrt(oracle_nearest_sq(a, b).max()))


def oracle_covariance(points):
    """Sample covariance (n-1 normalization) via explicit accumulation."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    mean = [sum(pts[:, k]) / n for k in range(3)]
    cov = np.zeros((3, 3))
    for p in pts:
        d = [p[k] - mean[k] for k in range(3)]
        for i in range(3):
            for j in range(3):
                cov[i, j] += d[i] * d[j]
    return cov / (n - 1) if n > 1 else np.zeros((3, 3))


# ---------------------------------------------------------------------------
# Rasterized rectangle-overlap oracle


def _inside_rect(px, py, rect):
    cu, cv = rect.center
    ca, sa = math.cos(rect.angle), math.sin(rect.angle)
    du = px - cu
    dv = py - cv
    along = du * ca + dv * sa
    across = -du * sa + dv * ca
    return (np.abs(along) <= rect.width / 2.0) & (np.abs(across) <= rect.height / 2.0)


def oracle_raster_iou(rect_a, rect_b, grid=512):
    """Pixel-counting IoU on a grid covering both rectangles."""
    corners = np.vstack([rect_a.corners(), rect_b.corners()])
    lo = corners.min(axis=0)
    hi = corners.max(axis=0)
    span = float(max(hi - lo)) or 1.0
    margin = 0.02 * span
    lo = lo - margin
    hi_ext = lo + (span + 2 * margin)
    xs = np.linspace(lo[0], hi_ext[0], grid, endpoint=False) + (span + 2 * margin) / (2 * grid)
    ys = np.linspace(lo[1], hi_ext[1], grid, endpoint=False) + (span + 2 * margin) / (2 * grid)
    px, py = np.meshgrid(xs, ys)
    in_a = _inside_rect(px, py, rect_a)
    in_b = _inside_rect(px, py, rect_b)
    inter = np.count_nonzero(in_a & in_b)
    union = np.count_nonzero(in_a | in_b)
    return inter / union if union else 0.0


# ---------------------------------------------------------------------------
# Synthetic cloud builders


def box_grid_cloud(nx=4, ny=3, nz=2, spacing=1.0):
    """Regular grid filling a box, handy for hand-checkable covariance."""
    xs, ys, zs = np.meshgrid(
        np.arange(nx) * spacing, np.arange(ny) * spacing, np.arange(nz) * spacing
    )
    return np.column_stack([xs.ravel(), ys.ravel(), zs.ravel()]).astype(float)


def anisotropic_blob(rng, n=300, scales=(4.0, 2.0, 1.0)):
    """Random Gaussian blob with distinct per-axis spread. Generic draws
    have no reflective symmetry, which the sign-search tests rely on."""
    return rng.standard_normal((n, 3)) * np.asarray(scales)


def random_rotation(rng):
    """Uniform-ish random proper rotation from a QR decomposition."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def rotation_about(axis, angle):
    """Rodrigues rotation about a (not necessarily unit) axis."""
    k = np.asarray(axis, dtype=float)
    k = k / np.linalg.norm(k)
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + math.sin(angle) * kx + (1 - math.cos(angle)) * (kx @ kx)
