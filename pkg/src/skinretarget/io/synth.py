"""
Synthetic skinned humanoids and motions used as test and benchmark assets.

Characters are built from capsules and spheres on the 22-joint humanoid
layout. Each primitive is rigidly bound to one joint. The torso is a sphere
centred on ``Spine1``.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..exceptions import ContractError
from ..quaternion import identity, quat_from_axis_angle
from ..skeleton import MIXAMO22, Motion, Skeleton, rest_positions
from ..skinning import SkinnedCharacter

SCENES = ("arm_sweep", "slim_to_fat")

_PARENT = {
    "Hips": None, "Spine": "Hips", "Spine1": "Spine", "Spine2": "Spine1", "Neck": "Spine2",
    "Head": "Neck", "LeftShoulder": "Spine2", "LeftArm": "LeftShoulder",
    "LeftForeArm": "LeftArm", "LeftHand": "LeftForeArm", "RightShoulder": "Spine2",
    "RightArm": "RightShoulder", "RightForeArm": "RightArm", "RightHand": "RightForeArm",
    "LeftUpLeg": "Hips", "LeftLeg": "LeftUpLeg", "LeftFoot": "LeftLeg", "LeftToeBase": "LeftFoot",
    "RightUpLeg": "Hips", "RightLeg": "RightUpLeg", "RightFoot": "RightLeg",
    "RightToeBase": "RightFoot",
}
_OFFSET = {
    "Hips": (0.0, 0.95, 0.0), "Spine": (0.0, 0.10, 0.0), "Spine1": (0.0, 0.12, 0.0),
    "Spine2": (0.0, 0.12, 0.0), "Neck": (0.0, 0.16, 0.0), "Head": (0.0, 0.10, 0.0),
    "LeftShoulder": (0.04, 0.10, 0.0), "LeftArm": (0.14, 0.0, 0.0),
    "LeftForeArm": (0.27, 0.0, 0.0), "LeftHand": (0.25, 0.0, 0.0),
    "LeftUpLeg": (0.10, -0.05, 0.0), "LeftLeg": (0.0, -0.42, 0.0),
    "LeftFoot": (0.0, -0.40, 0.0), "LeftToeBase": (0.0, -0.05, 0.12),
}
_END = {"Head": (0.0, 0.15, 0.0), "LeftHand": (0.15, 0.0, 0.0), "LeftToeBase": (0.0, 0.0, 0.06)}


def _mirror(name):
    if name.startswith("Left"):
        return "Right" + name[4:]
    if name.startswith("Right"):
        return "Left" + name[5:]
    return name


def humanoid_skeleton(scale=1.0):
    offsets, ends = [], {}
    for i, name in enumerate(MIXAMO22):
        src = name if name in _OFFSET else _mirror(name)
        off = np.array(_OFFSET[src]) * scale
        if src != name:
            off[0] = -off[0]
        offsets.append(off)
        if src in _END:
            e = np.array(_END[src]) * scale
            if src != name:
                e[0] = -e[0]
            ends[i] = e
    parents = [-1 if _PARENT[n] is None else MIXAMO22.index(_PARENT[n]) for n in MIXAMO22]
    return Skeleton(MIXAMO22, parents, np.array(offsets), ends)


@dataclass
class SceneSpec:
    """
    Synthetic scene parameters.

    ``torso_radius`` in (0.05, 0.4]; ``target_scale`` in [1, 3];
    ``sweep_min``/``sweep_max`` are arm-lowering angles in degrees within
    [0, 120]; ``n_frames`` >= 3; ``resolution`` in [1, 16].
    """

    scene_id: str = "slim_to_fat"
    torso_radius: float = None
    target_scale: float = None
    limb_radius: float = 0.04
    sweep_min: float = 0.0
    sweep_max: float = None
    n_frames: int = 60
    seed: int = 0
    resolution: int = 1
    frame_rate: float = 30.0

    def __post_init__(self):
        if self.scene_id not in SCENES:
            raise ContractError(f"unknown scene {self.scene_id!r}; choose from {SCENES}")
        fat = self.scene_id == "slim_to_fat"
        if self.torso_radius is None:
            self.torso_radius = 0.17 if fat else 0.24
        if self.target_scale is None:
            self.target_scale = 1.5 if fat else 1.0
        if self.sweep_max is None:
            self.sweep_max = 80.0
        checks = [
            (0.05 < self.torso_radius <= 0.4, "torso_radius must be in (0.05, 0.4]"),
            (1.0 <= self.target_scale <= 3.0, "target_scale must be in [1, 3]"),
            (0.005 <= self.limb_radius <= 0.1, "limb_radius must be in [0.005, 0.1]"),
            (0.0 <= self.sweep_min <= self.sweep_max <= 120.0, "need 0 <= sweep_min <= sweep_max <= 120"),
            (int(self.n_frames) >= 3, "n_frames must be >= 3"),
            (1 <= int(self.resolution) <= 16, "resolution must be in [1, 16]"),
            (self.frame_rate > 0, "frame_rate must be positive"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ContractError(msg)
        self.n_frames = int(self.n_frames)
        self.resolution = int(self.resolution)

    def as_dict(self):
        return asdict(self)


def _revolve(profile, n_seg):
    """
    Surface of revolution about +y. ``profile`` rows are
    ``(y, radius, normal_y, normal_radial)``; zero-radius rows become poles.
    """
    verts, norms, rings = [], [], []
    for y, r, ny, nr in profile:
        if r == 0.0:
            rings.append([len(verts)])
            verts.append((0.0, y, 0.0))
            norms.append((0.0, math.copysign(1.0, ny), 0.0))
            continue
        ring = []
        for s in range(n_seg):
            a = 2.0 * math.pi * s / n_seg
            c, sn = math.cos(a), math.sin(a)
            ring.append(len(verts))
            verts.append((r * c, y, r * sn))
            norms.append((nr * c, ny, nr * sn))
        rings.append(ring)
    faces = []
    for lo, hi in zip(rings[:-1], rings[1:]):
        if len(lo) == 1 and len(hi) == 1:
            continue
        if len(lo) == 1:
            for s in range(n_seg):
                faces.append((lo[0], hi[(s + 1) % n_seg], hi[s]))
        elif len(hi) == 1:
            for s in range(n_seg):
                faces.append((lo[s], lo[(s + 1) % n_seg], hi[0]))
        else:
            for s in range(n_seg):
                a, b = lo[s], lo[(s + 1) % n_seg]
                c, d = hi[(s + 1) % n_seg], hi[s]
                faces.append((a, b, c))
                faces.append((a, c, d))
    v = np.array(verts)
    n = np.array(norms)
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    return v, n, np.array(faces, dtype=np.int64)


def capsule(length, radius, n_seg, n_cap, n_body):
    """Capsule from y=0 to y=length with hemispherical caps."""
    prof = []
    for i in range(n_cap + 1):
        th = -0.5 * math.pi + 0.5 * math.pi * i / n_cap
        prof.append((radius * math.sin(th), radius * math.cos(th), math.sin(th), math.cos(th)))
    for i in range(1, n_body):
        prof.append((length * i / n_body, radius, 0.0, 1.0))
    for i in range(1 if length == 0.0 else 0, n_cap + 1):
        th = 0.5 * math.pi * i / n_cap
        prof.append((length + radius * math.sin(th), radius * math.cos(th), math.sin(th), math.cos(th)))
    prof = [(y, 0.0 if r < 1e-12 else r, ny, nr) for y, r, ny, nr in prof]
    return _revolve(prof, n_seg)


def _align(v, n, start, end):
    """Map the local +y axis onto the segment ``start -> end``."""
    d = np.asarray(end, dtype=np.float64) - np.asarray(start, dtype=np.float64)
    d /= np.linalg.norm(d)
    y = np.array([0.0, 1.0, 0.0])
    axis = np.cross(y, d)
    s, c = np.linalg.norm(axis), float(y @ d)
    if s < 1e-12:
        rot = np.eye(3) if c > 0 else np.diag([1.0, -1.0, -1.0])
    else:
        k = axis / s
        kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
        rot = np.eye(3) + s * kx + (1 - c) * kx @ kx
    return v @ rot.T + start, n @ rot.T


def build_character(torso_radius, limb_radius=0.04, resolution=1, skeleton=None):
    """Capsule humanoid rigidly skinned to the 22-joint skeleton."""
    sk = skeleton or humanoid_skeleton()
    rest = rest_positions(sk)
    res = int(resolution)
    seg = 12 * res
    parts = []

    def add(joint, v, n, f):
        parts.append((sk.index(joint), v, n, f))

    def sphere(joint, center, radius, rings):
        v, n, f = capsule(0.0, radius, seg, rings, 1)
        add(joint, v + center, n, f)

    def bone(joint, start, end, radius):
        length = float(np.linalg.norm(np.asarray(end) - np.asarray(start)))
        v, n, f = capsule(length, radius, seg, 3 * res, max(2, int(round(length / 0.03)) * res))
        v, n = _align(v, n, start, end)
        add(joint, v, n, f)

    p = {name: rest[i] for i, name in enumerate(sk.names)}
    sphere("Spine1", p["Spine1"], torso_radius, 8 * res)
    sphere("Hips", p["Hips"], 0.12, 5 * res)
    sphere("Head", p["Head"] + np.array([0.0, 0.07, 0.0]), 0.10, 5 * res)
    for side in ("Left", "Right"):
        hand_end = p[f"{side}Hand"] + sk.end_offsets[sk.index(f"{side}Hand")]
        toe_end = p[f"{side}ToeBase"] + sk.end_offsets[sk.index(f"{side}ToeBase")]
        bone(f"{side}Arm", p[f"{side}Arm"], p[f"{side}ForeArm"], limb_radius)
        bone(f"{side}ForeArm", p[f"{side}ForeArm"], p[f"{side}Hand"], 0.9 * limb_radius)
        bone(f"{side}Hand", p[f"{side}Hand"], hand_end, 0.8 * limb_radius)
        bone(f"{side}UpLeg", p[f"{side}UpLeg"], p[f"{side}Leg"], 1.5 * limb_radius)
        bone(f"{side}Leg", p[f"{side}Leg"], p[f"{side}Foot"], 1.2 * limb_radius)
        bone(f"{side}Foot", p[f"{side}Foot"], p[f"{side}ToeBase"], limb_radius)
        bone(f"{side}ToeBase", p[f"{side}ToeBase"], toe_end, 0.8 * limb_radius)

    verts, norms, faces, weights = [], [], [], []
    base = 0
    for j, v, n, f in parts:
        verts.append(v)
        norms.append(n)
        faces.append(f + base)
        w = np.zeros((len(v), sk.n_joints))
        w[:, j] = 1.0
        weights.append(w)
        base += len(v)
    return SkinnedCharacter(
        np.concatenate(verts), np.concatenate(norms), np.concatenate(faces),
        np.concatenate(weights), sk,
    )


def arm_angle(spec, t):
    """Arm-lowering angle in radians at frame ``t``; sweeps min -> max -> min."""
    phase = 0.5 - 0.5 * math.cos(2.0 * math.pi * t / (spec.n_frames - 1))
    return math.radians(spec.sweep_min + (spec.sweep_max - spec.sweep_min) * phase)


def scene_motion(spec, skeleton):
    """Arms lower and rise while the legs swing and the root walks forward."""
    rng = np.random.default_rng(spec.seed)
    leg_amp = math.radians(20.0 + 5.0 * rng.random())
    leg_phase = 2.0 * math.pi * rng.random()
    bob = 0.01 + 0.01 * rng.random()
    t_n = spec.n_frames
    rot = identity((t_n, skeleton.n_joints))
    glob = np.zeros((t_n, 4))
    z = np.array([0.0, 0.0, 1.0])
    x = np.array([1.0, 0.0, 0.0])
    for t in range(t_n):
        th = arm_angle(spec, t)
        rot[t, skeleton.index("LeftArm")] = quat_from_axis_angle(z, -th)
        rot[t, skeleton.index("RightArm")] = quat_from_axis_angle(z, th)
        w = 2.0 * math.pi * t / (t_n - 1) + leg_phase
        swing = leg_amp * math.sin(w)
        knee = 0.5 * leg_amp * (1.0 - math.cos(w))
        rot[t, skeleton.index("LeftUpLeg")] = quat_from_axis_angle(x, swing)
        rot[t, skeleton.index("RightUpLeg")] = quat_from_axis_angle(x, -swing)
        rot[t, skeleton.index("LeftLeg")] = quat_from_axis_angle(x, knee)
        rot[t, skeleton.index("RightLeg")] = quat_from_axis_angle(x, knee)
        glob[t, :3] = skeleton.offsets[0] + (0.0, bob * math.sin(2.0 * w), 0.6 * t / t_n)
    return Motion(rot, glob, spec.frame_rate)


def generate_scene(spec):
    """``(source_character, source_motion, target_character)`` for a scene spec."""
    if not isinstance(spec, SceneSpec):
        spec = SceneSpec(**spec)
    sk = humanoid_skeleton()
    src = build_character(spec.torso_radius, spec.limb_radius, spec.resolution, sk)
    motion = scene_motion(spec, sk)
    if spec.target_scale == 1.0:
        return src, motion, src
    tgt = build_character(spec.torso_radius * spec.target_scale, spec.limb_radius, spec.resolution, sk)
    return src, motion, tgt


def torso_geometry(character, motion, spec_radius):
    """World centre of the torso sphere per frame, and its radius."""
    from ..skeleton import joint_positions

    return joint_positions(character.skeleton, motion)[:, character.skeleton.index("Spine1")], spec_radius
