"""Input validation helpers in the spirit of ``sklearn.utils.validation``."""

import numpy as np

from .exceptions import ContractError, NumericError, ShapeError


def check_array(x, name, shape=None, dtype=np.float64, finite=True):
    """
    Convert ``x`` to a float64 array and check it.

    ``shape`` is a tuple whose entries are ints or None (wildcard).
    """
    arr = np.asarray(x, dtype=dtype)
    if shape is not None:
        if arr.ndim != len(shape) or any(
            s is not None and s != a for s, a in zip(shape, arr.shape)
        ):
            want = tuple("*" if s is None else s for s in shape)
            raise ShapeError(f"{name} has shape {arr.shape}, expected {want}")
    if finite and not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains non-finite values")
    return arr


def check_motion(motion, skeleton=None, min_frames=1):
    """Check a Motion against an optional skeleton and a minimum length."""
    if motion.n_frames < min_frames:
        raise ContractError(
            f"motion has {motion.n_frames} frames, at least {min_frames} required"
        )
    if skeleton is not None and motion.n_joints != skeleton.n_joints:
        raise ShapeError(
            f"motion has {motion.n_joints} joints but skeleton has {skeleton.n_joints}"
        )
    return motion


def check_same_shape(a, b, what="motions"):
    if a.rotations.shape != b.rotations.shape:
        raise ShapeError(
            f"{what} differ in shape: {a.rotations.shape[:2]} vs {b.rotations.shape[:2]}"
        )


def check_positive(value, name):
    value = float(value)
    if not np.isfinite(value) or value <= 0.0:
        raise ContractError(f"{name} must be positive, got {value!r}")
    return value
