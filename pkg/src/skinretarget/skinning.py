"""
Skinned meshes: linear blend skinning, limb segmentation and vertex sampling.

The mesh is authored in the skeleton's rest pose (identity local rotations,
root at its own offset). Every joint therefore has an identity bind rotation
and a bind translation equal to its rest position.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import SamplingError, SegmentationError, ShapeError, WeightError
from .skeleton import rest_positions, world_transforms
from .validation import check_array, check_motion

MAX_INFLUENCES = 4

DEFAULT_LIMB_JOINTS = {
    "right_arm": ("RightForeArm", "RightHand"),
    "left_arm": ("LeftForeArm", "LeftHand"),
    "right_leg": ("RightLeg", "RightFoot", "RightToeBase"),
    "left_leg": ("LeftLeg", "LeftFoot", "LeftToeBase"),
}
DEFAULT_EXCLUDED_JOINTS = (
    "RightShoulder", "RightArm", "LeftShoulder", "LeftArm", "RightUpLeg", "LeftUpLeg",
)
DEFAULT_QUERY_COUNT = 400
DEFAULT_REFERENCE_COUNT = 4000
SHAPE_SAMPLE_COUNT = 1024


@dataclass(eq=False)
class SkinnedCharacter:
    vertices: np.ndarray
    normals: np.ndarray
    faces: np.ndarray
    weights: np.ndarray
    skeleton: object

    def __post_init__(self):
        self.vertices = check_array(self.vertices, "vertices", (None, 3))
        v = len(self.vertices)
        self.normals = check_array(self.normals, "normals", (v, 3))
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= v):
            raise ShapeError("face index out of range")
        self.weights = check_array(self.weights, "weights", (v, self.skeleton.n_joints))
        check_weights(self.weights)
        n = np.linalg.norm(self.normals, axis=1)
        if not np.all(np.abs(n - 1.0) <= 1e-6):
            raise ShapeError("normals must be unit length")
        self.bind_positions = rest_positions(self.skeleton)

    @property
    def n_vertices(self):
        return len(self.vertices)

    def dominant_joints(self):
        return np.argmax(self.weights, axis=1)


def check_weights(weights, tol=1e-6):
    if np.any(weights < 0):
        raise WeightError("skinning weights must be nonnegative")
    sums = weights.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > tol)
    if bad.size:
        raise WeightError(f"weights of vertex {bad[0]} sum to {sums[bad[0]]:.9g}, not 1")
    if np.any(np.count_nonzero(weights, axis=1) > MAX_INFLUENCES):
        raise WeightError(f"a vertex has more than {MAX_INFLUENCES} joint influences")


def skinning_matrices(bind_positions, world, pos):
    """Per-joint affine maps ``(T, K, 3, 4)`` from rest space to posed space."""
    a = np.empty(world.shape[:-2] + (3, 4))
    a[..., :3] = world
    a[..., 3] = pos - np.einsum("tkij,kj->tki", world, bind_positions)
    return a


def blend(weights, affine):
    """Per-vertex blended affine maps ``(T, V, 3, 4)``."""
    t, k = affine.shape[:2]
    return (weights @ affine.reshape(t, k, 12)).reshape(t, -1, 3, 4)


def apply_blend(blended, rest_vertices, rest_normals):
    verts = np.einsum("tvij,vj->tvi", blended[..., :3], rest_vertices) + blended[..., 3]
    raw = np.einsum("tvij,vj->tvi", blended[..., :3], rest_normals)
    norms = np.linalg.norm(raw, axis=-1, keepdims=True)
    return verts, raw / norms, raw, norms


def lbs_deform_all(character, motion, indices=None):
    """Deformed vertices and normals ``(T, V, 3)`` for all frames."""
    check_motion(motion, character.skeleton)
    world, pos = world_transforms(character.skeleton, motion)
    affine = skinning_matrices(character.bind_positions, world, pos)
    sel = slice(None) if indices is None else np.asarray(indices)
    m = blend(character.weights[sel], affine)
    verts, normals, _, _ = apply_blend(m, character.vertices[sel], character.normals[sel])
    return verts, normals


def lbs_deform(character, motion, frame):
    """Deformed vertices and normals of one frame."""
    if not -motion.n_frames <= frame < motion.n_frames:
        raise IndexError(f"frame {frame} out of range for {motion.n_frames}-frame motion")
    one = motion.replace(
        rotations=motion.rotations[frame : frame + 1], globals=motion.globals[frame : frame + 1]
    )
    verts, normals = lbs_deform_all(character, one)
    return verts[0], normals[0]


@dataclass
class LimbSegmentation:
    """Per-limb query sets, their reference sets, and the excluded band."""

    limbs: dict
    references: dict
    excluded: np.ndarray

    @property
    def limb_names(self):
        return tuple(self.limbs)


def _joint_ids(skeleton, joints):
    return [j if isinstance(j, (int, np.integer)) else skeleton.index(j) for j in joints]


def segment_limbs(character, limb_joints=None, excluded_joints=None):
    """
    Assign each vertex to the limb owning its dominant (max-weight) joint.

    A limb's reference set is every vertex that is neither excluded nor part
    of that limb, so other limbs count as obstacles.
    """
    sk = character.skeleton
    if limb_joints is None:
        limb_joints = DEFAULT_LIMB_JOINTS
    if excluded_joints is None:
        excluded_joints = DEFAULT_EXCLUDED_JOINTS
    limb_ids = {name: set(_joint_ids(sk, js)) for name, js in limb_joints.items()}
    excl_ids = set(_joint_ids(sk, excluded_joints))
    seen = set()
    for name, ids in limb_ids.items():
        if ids & seen:
            raise SegmentationError(f"limb {name!r} shares joints with another limb")
        if ids & excl_ids:
            raise SegmentationError(f"limb {name!r} overlaps the excluded joints")
        seen |= ids

    dom = character.dominant_joints()
    excluded = np.flatnonzero(np.isin(dom, sorted(excl_ids)))
    keep = ~np.isin(dom, sorted(excl_ids))
    limbs, refs = {}, {}
    for name, ids in limb_ids.items():
        member = np.isin(dom, sorted(ids))
        idx = np.flatnonzero(member)
        if idx.size == 0:
            raise SegmentationError(f"limb {name!r} has no vertices")
        ref = np.flatnonzero(keep & ~member)
        if ref.size == 0:
            raise SegmentationError(f"limb {name!r} has no reference vertices")
        limbs[name] = idx
        refs[name] = ref
    return LimbSegmentation(limbs, refs, excluded)


@dataclass
class PointSample:
    """Sampled query and reference vertex indices per limb."""

    queries: dict
    references: dict
    seed: int
    with_replacement: list = field(default_factory=list)

    def all_indices(self):
        parts = list(self.queries.values()) + list(self.references.values())
        return np.unique(np.concatenate(parts))


def sample_subset(pool, n, rng):
    """
    Uniformly sample ``n`` entries of ``pool`` without replacement.

    Returns ``(indices, replaced)``. ``n == len(pool)`` returns the pool in
    order; ``n > len(pool)`` falls back to sampling with replacement.
    """
    pool = np.asarray(pool)
    if pool.size == 0:
        raise SamplingError("cannot sample from an empty set")
    if n <= 0:
        raise SamplingError(f"sample size must be positive, got {n}")
    if n == pool.size:
        return np.sort(pool), False
    replace = n > pool.size
    return np.sort(rng.choice(pool, size=n, replace=replace)), replace


def _counts_for(counts, key, limb, default):
    if counts is None:
        return default
    c = counts.get(key, default)
    return c[limb] if isinstance(c, dict) else int(c)


def sample_points(character, segmentation, counts=None, seed=0):
    """
    Draw per-limb query and reference samples.

    ``counts`` maps ``"query"`` and ``"reference"`` to an int or a per-limb
    dict. Defaults are 400 queries and 4000 references per limb.
    """
    rng = np.random.default_rng(seed)
    queries, refs, replaced = {}, {}, []
    for limb in segmentation.limb_names:
        nq = _counts_for(counts, "query", limb, DEFAULT_QUERY_COUNT)
        nr = _counts_for(counts, "reference", limb, DEFAULT_REFERENCE_COUNT)
        queries[limb], rq = sample_subset(segmentation.limbs[limb], nq, rng)
        refs[limb], rr = sample_subset(segmentation.references[limb], nr, rng)
        if rq:
            replaced.append(f"{limb}/query")
        if rr:
            replaced.append(f"{limb}/reference")
    return PointSample(queries, refs, seed, replaced)


def full_sample(segmentation):
    """A PointSample holding every limb and reference vertex."""
    return PointSample(dict(segmentation.limbs), dict(segmentation.references), seed=-1)


@dataclass
class ShapeSample:
    indices: np.ndarray
    positions: np.ndarray
    normals: np.ndarray
    seed: int


def sample_shape(character, n=SHAPE_SAMPLE_COUNT, seed=0):
    """Uniform vertex subset of the rest-pose mesh."""
    idx, _ = sample_subset(np.arange(character.n_vertices), n, np.random.default_rng(seed))
    return ShapeSample(idx, character.vertices[idx], character.normals[idx], seed)
