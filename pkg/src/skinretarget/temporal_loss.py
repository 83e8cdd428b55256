"""
Trajectory self-normalization, motion matrices and temporal losses.

The consistency loss compares, for every joint, the displacement vectors
between all ordered frame pairs of the two self-normalized trajectories.
With ``d_t = c^B_t - c^A_t`` the all-pairs mean collapses to

    (1/T²) Σ_ij ‖d_j - d_i‖² = (2/T) Σ_t ‖d_t‖² - (2/T²) ‖Σ_t d_t‖²

so the T×T matrices never need to be materialized.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import ContractError, NumericError, ShapeError
from .skeleton import joint_positions
from .validation import check_motion, check_same_shape

DEGENERATE_EXTENT = 1e-9


@dataclass
class NormalizedTrajectory:
    """Trajectories ``(T, K, 3)`` inside the unit cube."""

    coords: np.ndarray
    scale: np.ndarray
    offset: np.ndarray
    degenerate: np.ndarray


def _as_tk3(positions):
    p = np.asarray(positions, dtype=np.float64)
    if p.ndim == 2:
        p = p[:, None, :]
    if p.ndim != 3 or p.shape[-1] != 3:
        raise ShapeError(f"trajectory must be (T, 3) or (T, K, 3), got {p.shape}")
    return p


def normalize_trajectory(positions):
    """
    Translate each joint trajectory to start at the per-axis minimum and
    divide by its largest axis extent. Static joints map to zeros with scale 1.
    """
    p = _as_tk3(positions)
    if p.shape[0] < 2:
        raise ContractError("trajectory needs at least 2 frames")
    if not np.all(np.isfinite(p)):
        raise NumericError("trajectory contains non-finite values")
    lo = p.min(axis=0)
    extent = (p.max(axis=0) - lo).max(axis=-1)
    degenerate = extent < DEGENERATE_EXTENT
    scale = np.where(degenerate, 1.0, extent)
    coords = np.where(degenerate[None, :, None], 0.0, (p - lo) / scale[None, :, None])
    return NormalizedTrajectory(coords, scale, lo, degenerate)


def motion_matrix(trajectory):
    """Pairwise displacements ``m[k, i, j] = c_j - c_i``, shape ``(K, T, T, 3)``."""
    c = trajectory.coords if isinstance(trajectory, NormalizedTrajectory) else _as_tk3(trajectory)
    c = np.swapaxes(c, 0, 1)
    return c[:, None, :, :] - c[:, :, None, :]


def consistency_from_coords(coords_a, coords_b):
    """Mean over joints of the all-pairs mean squared motion-matrix difference."""
    d = coords_b - coords_a
    t = d.shape[0]
    per_joint = (2.0 / t) * (d * d).sum(axis=(0, 2)) - (2.0 / t**2) * (d.sum(axis=0) ** 2).sum(axis=-1)
    return float(np.maximum(per_joint, 0.0).mean())


def consistency_vjp(coords_a, coords_b):
    """Gradient of :func:`consistency_from_coords` with respect to ``coords_b``."""
    d = coords_b - coords_a
    t, k = d.shape[:2]
    return (4.0 / (t * k)) * (d - d.sum(axis=0, keepdims=True) / t)


def normalize_vjp(positions, norm, g_coords):
    """Pull a gradient on normalized coordinates back onto raw positions."""
    p = positions
    g = np.where(norm.degenerate[None, :, None], 0.0, g_coords)
    s = norm.scale
    gp = g / s[None, :, None]
    t, k = p.shape[:2]
    kk = np.arange(k)
    amin = p.argmin(axis=0)
    amax = p.argmax(axis=0)
    g_lo = -g.sum(axis=0) / s[:, None]
    for a in range(3):
        np.add.at(gp, (amin[:, a], kk, a), g_lo[:, a])
    axis = (p.max(axis=0) - p.min(axis=0)).argmax(axis=-1)
    g_s = -(g * norm.coords).sum(axis=(0, 2)) / s
    g_s = np.where(norm.degenerate, 0.0, g_s)
    np.add.at(gp, (amax[kk, axis], kk, axis), g_s)
    np.add.at(gp, (amin[kk, axis], kk, axis), -g_s)
    return gp


def temporal_consistency_loss(source_motion, source_skeleton, target_motion, target_skeleton):
    """Temporal consistency between two motions on possibly different skeletons."""
    check_motion(source_motion, source_skeleton, min_frames=2)
    check_motion(target_motion, target_skeleton, min_frames=2)
    check_same_shape(source_motion, target_motion)
    ca = normalize_trajectory(joint_positions(source_skeleton, source_motion)).coords
    cb = normalize_trajectory(joint_positions(target_skeleton, target_motion)).coords
    return consistency_from_coords(ca, cb)


def basic_smoothness_loss(motion, skeleton):
    """Mean squared displacement of joints between consecutive frames."""
    if motion.n_frames < 2:
        raise ContractError("smoothness loss needs at least 2 frames")
    p = joint_positions(skeleton, motion)
    return float((np.diff(p, axis=0) ** 2).sum(axis=-1).mean())
