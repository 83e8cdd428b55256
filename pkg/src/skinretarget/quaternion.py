"""
Quaternion arithmetic on batched numpy arrays.

Quaternions are stored scalar-first as ``(..., 4)`` arrays ``(w, x, y, z)``
using the Hamilton product. Vectors are ``(..., 3)`` arrays. Frames are
right-handed with y up. All kernels run in float64.
"""

import numpy as np

from .exceptions import ContractError, DegenerateError

UNIT_TOL = 1e-6
_ZERO_NORM = 1e-12


def identity(shape=()):
    """Identity quaternions of the given batch shape."""
    shape = (shape,) if isinstance(shape, (int, np.integer)) else tuple(shape)
    q = np.zeros(shape + (4,))
    q[..., 0] = 1.0
    return q


def _hamilton(a, b):
    # raw product, no renormalization; also used by gradient code
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_multiply(a, b):
    """
    Hamilton product ``a ⊗ b`` (apply ``b`` first, then ``a``).

    When both operands are unit quaternions the result is renormalized to
    remove rounding drift; otherwise the raw product is returned.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    out = _hamilton(a, b)
    unit_a = np.abs(np.linalg.norm(a, axis=-1) - 1.0) <= UNIT_TOL
    unit_b = np.abs(np.linalg.norm(b, axis=-1) - 1.0) <= UNIT_TOL
    both = np.logical_and(unit_a, unit_b)
    if np.any(both):
        n = np.linalg.norm(out, axis=-1, keepdims=True)
        out = np.where(both[..., None], out / np.where(n > 0, n, 1.0), out)
    return out


def quat_conjugate(q):
    q = np.asarray(q, dtype=np.float64)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_canonicalize(q):
    """Flip sign so that ``w >= 0``. Entries with ``w == 0`` are left alone."""
    q = np.asarray(q, dtype=np.float64)
    return np.where(q[..., :1] < 0.0, -q, q)


def quat_normalize(q):
    """Unit quaternion with the same direction, sign-canonicalized to ``w >= 0``."""
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(~np.isfinite(q)) or np.any(n <= _ZERO_NORM):
        raise DegenerateError("cannot normalize a zero-norm or non-finite quaternion")
    return quat_canonicalize(q / n)


def check_unit(q, tol=UNIT_TOL):
    n = np.linalg.norm(q, axis=-1)
    if not np.all(np.abs(n - 1.0) <= tol):
        worst = float(np.max(np.abs(n - 1.0)))
        raise ContractError(f"quaternion is not unit (norm deviation {worst:.3g} > {tol:g})")


def quat_rotate(q, v):
    """Rotate vectors ``v`` by unit quaternions ``q`` (broadcasting over batch dims)."""
    q = np.asarray(q, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    check_unit(q)
    w = q[..., :1]
    u = q[..., 1:]
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def quat_to_matrix(q):
    """Rotation matrices ``(..., 3, 3)`` for unit quaternions."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    m = np.empty(q.shape[:-1] + (3, 3))
    m[..., 0, 0] = 1.0 - 2.0 * (yy + zz)
    m[..., 0, 1] = 2.0 * (xy - wz)
    m[..., 0, 2] = 2.0 * (xz + wy)
    m[..., 1, 0] = 2.0 * (xy + wz)
    m[..., 1, 1] = 1.0 - 2.0 * (xx + zz)
    m[..., 1, 2] = 2.0 * (yz - wx)
    m[..., 2, 0] = 2.0 * (xz - wy)
    m[..., 2, 1] = 2.0 * (yz + wx)
    m[..., 2, 2] = 1.0 - 2.0 * (xx + yy)
    return m


def quat_to_matrix_vjp(q, g):
    """Pull a gradient ``g`` on ``quat_to_matrix(q)`` back onto ``q``."""
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    g00, g01, g02 = g[..., 0, 0], g[..., 0, 1], g[..., 0, 2]
    g10, g11, g12 = g[..., 1, 0], g[..., 1, 1], g[..., 1, 2]
    g20, g21, g22 = g[..., 2, 0], g[..., 2, 1], g[..., 2, 2]
    gw = -z * g01 + y * g02 + z * g10 - x * g12 - y * g20 + x * g21
    gx = y * g01 + z * g02 + y * g10 - 2 * x * g11 - w * g12 + z * g20 + w * g21 - 2 * x * g22
    gy = -2 * y * g00 + x * g01 + w * g02 + x * g10 + z * g12 - w * g20 + z * g21 - 2 * y * g22
    gz = -2 * z * g00 - w * g01 + x * g02 + w * g10 - 2 * z * g11 + y * g12 + x * g20 + y * g21
    return 2.0 * np.stack([gw, gx, gy, gz], axis=-1)


def quat_from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=np.float64)
    angle = np.asarray(angle, dtype=np.float64)
    n = np.linalg.norm(axis, axis=-1, keepdims=True)
    if np.any(n <= _ZERO_NORM):
        raise DegenerateError("rotation axis has zero length")
    half = 0.5 * angle[..., None]
    return np.concatenate([np.cos(half), np.sin(half) * axis / n], axis=-1)


def quat_from_matrix(m):
    """Unit quaternions (``w >= 0``) from rotation matrices."""
    from scipy.spatial.transform import Rotation

    m = np.asarray(m, dtype=np.float64)
    xyzw = Rotation.from_matrix(m.reshape(-1, 3, 3)).as_quat()
    q = xyzw[:, [3, 0, 1, 2]].reshape(m.shape[:-2] + (4,))
    return quat_canonicalize(q)
