"""
Joint hierarchies, motions and forward kinematics.

Local rotations compose parent-then-local: the world rotation of joint k is
``world[parent(k)] ⊗ local[k]`` and its position is the parent position plus
the parent world rotation applied to the T-pose offset. The root sits at the
frame's global translation.
"""

from dataclasses import dataclass, field

import numpy as np

from . import quaternion as quat
from .exceptions import ContractError, DegenerateError, ShapeError
from .validation import check_array, check_motion

# 22-joint humanoid layout used by the bundled synthetic characters
MIXAMO22 = (
    "Hips", "Spine", "Spine1", "Spine2", "Neck", "Head",
    "LeftShoulder", "LeftArm", "LeftForeArm", "LeftHand",
    "RightShoulder", "RightArm", "RightForeArm", "RightHand",
    "LeftUpLeg", "LeftLeg", "LeftFoot", "LeftToeBase",
    "RightUpLeg", "RightLeg", "RightFoot", "RightToeBase",
)


@dataclass(eq=False)
class Skeleton:
    """Topologically sorted joint tree with T-pose offsets."""

    names: tuple
    parents: np.ndarray
    offsets: np.ndarray
    end_offsets: dict = field(default_factory=dict)

    def __post_init__(self):
        self.names = tuple(str(n) for n in self.names)
        self.parents = np.asarray(self.parents, dtype=np.int64)
        k = len(self.names)
        self.offsets = check_array(self.offsets, "offsets", (k, 3))
        if self.parents.shape != (k,):
            raise ShapeError(f"parents has shape {self.parents.shape}, expected ({k},)")
        if k == 0:
            raise ShapeError("skeleton has no joints")
        if self.parents[0] != -1 or np.any(self.parents[1:] < 0):
            raise ShapeError("skeleton must have exactly one root, at index 0")
        if np.any(self.parents[1:] >= np.arange(1, k)):
            raise ShapeError("joints are not topologically sorted (parent index >= child index)")
        if len(set(self.names)) != k:
            raise ShapeError("joint names are not unique")
        self.end_offsets = {int(j): np.asarray(o, dtype=np.float64) for j, o in self.end_offsets.items()}

    @property
    def n_joints(self):
        return len(self.names)

    def index(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"no joint named {name!r}") from None

    def indices(self, names):
        return [self.index(n) for n in names]

    def scaled(self, factor):
        return Skeleton(
            self.names,
            self.parents.copy(),
            self.offsets * factor,
            {j: o * factor for j, o in self.end_offsets.items()},
        )

    def same_as(self, other):
        return (
            self.names == other.names
            and np.array_equal(self.parents, other.parents)
            and np.array_equal(self.offsets, other.offsets)
        )


@dataclass(eq=False)
class Motion:
    """
    Local joint rotations ``(T, K, 4)`` plus a global channel ``(T, 4)``.

    The first three global columns are the root's world position. The fourth
    column is carried through I/O but has no kinematic meaning.
    """

    rotations: np.ndarray
    globals: np.ndarray
    frame_rate: float = 30.0

    def __post_init__(self):
        self.rotations = check_array(self.rotations, "rotations", (None, None, 4))
        t = self.rotations.shape[0]
        self.globals = check_array(self.globals, "globals", (t, 4))
        quat.check_unit(self.rotations)
        self.frame_rate = float(self.frame_rate)

    @property
    def n_frames(self):
        return self.rotations.shape[0]

    @property
    def n_joints(self):
        return self.rotations.shape[1]

    @property
    def translations(self):
        return self.globals[:, :3]

    def replace(self, rotations=None, globals=None):
        return Motion(
            self.rotations if rotations is None else rotations,
            self.globals if globals is None else globals,
            self.frame_rate,
        )

    def translated(self, shift):
        g = self.globals.copy()
        g[:, :3] += np.asarray(shift, dtype=np.float64)
        return self.replace(globals=g)

    def pinned(self):
        """Same rotations with the global channel zeroed (root at the origin)."""
        return self.replace(globals=np.zeros_like(self.globals))

    @classmethod
    def rest(cls, skeleton, n_frames, frame_rate=30.0):
        """Identity rotations with the root held at its T-pose offset."""
        g = np.zeros((n_frames, 4))
        g[:, :3] = skeleton.offsets[0]
        return cls(quat.identity((n_frames, skeleton.n_joints)), g, frame_rate)


@dataclass
class Pose:
    joint_positions: np.ndarray
    joint_rotations_world: np.ndarray


def fk_matrices(parents, offsets, local, root):
    """
    Batched FK on rotation matrices.

    ``local`` is ``(T, K, 3, 3)``, ``root`` is ``(T, 3)``. Returns world
    rotations ``(T, K, 3, 3)`` and positions ``(T, K, 3)``.
    """
    world = np.empty_like(local)
    pos = np.empty(local.shape[:-2] + (3,))
    world[:, 0] = local[:, 0]
    pos[:, 0] = root
    for k in range(1, len(parents)):
        p = parents[k]
        world[:, k] = world[:, p] @ local[:, k]
        pos[:, k] = pos[:, p] + world[:, p] @ offsets[k]
    return world, pos


def fk_matrices_vjp(parents, offsets, local, world, g_world, g_pos):
    """Reverse pass of :func:`fk_matrices`; returns gradients on ``local`` and ``root``."""
    g_world = g_world.copy()
    g_pos = g_pos.copy()
    g_local = np.empty_like(local)
    for k in range(len(parents) - 1, 0, -1):
        p = parents[k]
        g_pos[:, p] += g_pos[:, k]
        g_world[:, p] += g_pos[:, k][:, :, None] * offsets[k][None, None, :]
        g_world[:, p] += g_world[:, k] @ np.swapaxes(local[:, k], -1, -2)
        g_local[:, k] = np.swapaxes(world[:, p], -1, -2) @ g_world[:, k]
    g_local[:, 0] = g_world[:, 0]
    return g_local, g_pos[:, 0]


def world_transforms(skeleton, motion):
    """World rotation matrices and joint positions for every frame."""
    check_motion(motion, skeleton)
    return fk_matrices(
        skeleton.parents, skeleton.offsets, quat.quat_to_matrix(motion.rotations), motion.translations
    )


def joint_positions(skeleton, motion):
    """World joint positions ``(T, K, 3)``."""
    return world_transforms(skeleton, motion)[1]


def world_rotations(skeleton, motion):
    """World joint quaternions ``(T, K, 4)``."""
    check_motion(motion, skeleton)
    out = np.empty_like(motion.rotations)
    out[:, 0] = motion.rotations[:, 0]
    for k in range(1, skeleton.n_joints):
        out[:, k] = quat.quat_multiply(out[:, skeleton.parents[k]], motion.rotations[:, k])
    return out


def forward_kinematics(skeleton, motion, frame):
    """World pose of one frame."""
    check_motion(motion, skeleton)
    if not -motion.n_frames <= frame < motion.n_frames:
        raise IndexError(f"frame {frame} out of range for {motion.n_frames}-frame motion")
    one = Motion(motion.rotations[frame : frame + 1], motion.globals[frame : frame + 1])
    pos = joint_positions(skeleton, one)[0]
    rot = world_rotations(skeleton, one)[0]
    return Pose(pos, rot)


def rest_positions(skeleton):
    """T-pose joint positions, root at its own offset."""
    return joint_positions(skeleton, Motion.rest(skeleton, 1))[0]


def character_height(skeleton):
    """Vertical extent of the T-pose joint cloud."""
    y = rest_positions(skeleton)[:, 1]
    h = float(y.max() - y.min())
    if not h > 1e-12:
        raise DegenerateError("skeleton has zero vertical extent")
    return h


def default_orientation_field(n_joints):
    """One local +z unit vector per joint."""
    f = np.zeros((n_joints, 3))
    f[:, 2] = 1.0
    return f


def propagate_orientation_field(skeleton, motion, field=None):
    """Rotate each joint's bound unit vector by its world rotation, ``(T, K, 3)``."""
    if field is None:
        field = default_orientation_field(skeleton.n_joints)
    field = check_array(field, "orientation field", (skeleton.n_joints, 3))
    if not np.allclose(np.linalg.norm(field, axis=-1), 1.0, atol=1e-9):
        raise ContractError("orientation field vectors must be unit length")
    world, _ = world_transforms(skeleton, motion)
    return np.einsum("tkij,kj->tki", world, field)
