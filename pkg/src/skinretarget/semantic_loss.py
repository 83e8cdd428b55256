"""Reconstruction, constraint and joint-orientation losses, and the weighted total."""

from dataclasses import asdict, dataclass, field

import numpy as np

from . import quaternion as quat
from .exceptions import ContractError
from .skeleton import default_orientation_field, joint_positions, propagate_orientation_field
from .spatial_loss import limb_penetration_loss
from .temporal_loss import temporal_consistency_loss
from .validation import check_motion, check_same_shape

TERMS = ("rec", "con", "lp", "tc", "j")


@dataclass
class LossWeights:
    rec: float = 0.1
    con: float = 0.1
    lp: float = 5.0
    tc: float = 1.0
    j: float = 1.0

    def __post_init__(self):
        for name in TERMS:
            v = float(getattr(self, name))
            if not np.isfinite(v) or v < 0:
                raise ContractError(f"loss weight {name} must be finite and >= 0, got {v!r}")
            setattr(self, name, v)

    def as_dict(self):
        return asdict(self)

    def scaled(self, **factors):
        d = self.as_dict()
        for k, f in factors.items():
            d[k] *= f
        return LossWeights(**d)


PRESETS = {
    "final": LossWeights(),
    "curv": LossWeights().scaled(tc=2.0, lp=0.5),
}


@dataclass
class LossReport:
    """Per-term values (None when skipped), the weighted total, and the weights."""

    terms: dict
    total: float
    weights: LossWeights
    differentiable: dict = field(default_factory=dict)

    def as_dict(self):
        return {"total": self.total, **{k: v for k, v in self.terms.items()}}


def rotation_penalty(q_a, q_b):
    d = quat.quat_canonicalize(q_a) - quat.quat_canonicalize(q_b)
    return float((d * d).sum(axis=-1).mean())


def position_penalty(p_a, p_b):
    d = p_a - p_b
    return float((d * d).sum(axis=-1).mean())


def reconstruction_loss(original, reconstructed, skeleton):
    """Rotation plus FK position error of a reconstruction on its own skeleton."""
    check_same_shape(original, reconstructed)
    check_motion(original, skeleton)
    return rotation_penalty(original.rotations, reconstructed.rotations) + position_penalty(
        joint_positions(skeleton, original), joint_positions(skeleton, reconstructed)
    )


def constraint_loss(source, retargeted, target_skeleton):
    """
    Rotation plus FK position deviation from copying the source rotations,
    with both motions posed on the target skeleton at the retargeted root.
    """
    check_same_shape(source, retargeted)
    check_motion(retargeted, target_skeleton)
    copied = retargeted.replace(rotations=source.rotations)
    return rotation_penalty(source.rotations, retargeted.rotations) + position_penalty(
        joint_positions(target_skeleton, copied), joint_positions(target_skeleton, retargeted)
    )


def joint_orientation_loss(source, retargeted, skeleton_src, skeleton_tgt, field=None):
    """Mean squared difference of the joint-bound orientation vectors."""
    check_same_shape(source, retargeted)
    if field is None:
        field = default_orientation_field(skeleton_src.n_joints)
    fa = propagate_orientation_field(skeleton_src, source, field)
    fb = propagate_orientation_field(skeleton_tgt, retargeted, field)
    return position_penalty(fa, fb)


@dataclass
class RetargetScene:
    """Everything the objective needs besides the retargeted motion itself."""

    source_motion: object
    source_skeleton: object
    target_character: object
    segmentation: object
    sample: object
    field: np.ndarray = None
    reconstruction: bool = False
    margin: float = 0.0
    method: str = "tree"
    workers: int = 1

    def __post_init__(self):
        if self.field is None:
            self.field = default_orientation_field(self.source_skeleton.n_joints)

    @property
    def target_skeleton(self):
        return self.target_character.skeleton


def total_loss(scene, retargeted, weights):
    """
    Weighted sum of all terms. Zero-weight terms are not evaluated and are
    reported as None; the reconstruction term only exists for self-retargeting.
    """
    src = scene.source_motion
    tgt_sk = scene.target_skeleton
    w = weights
    terms = dict.fromkeys(TERMS)
    if w.rec > 0 and scene.reconstruction:
        terms["rec"] = reconstruction_loss(src, retargeted, scene.source_skeleton)
    if w.con > 0:
        terms["con"] = constraint_loss(src, retargeted, tgt_sk)
    if w.lp > 0:
        terms["lp"] = limb_penetration_loss(
            scene.target_character, scene.segmentation, scene.sample, retargeted,
            method=scene.method, margin=scene.margin, workers=scene.workers,
        ).total
    if w.tc > 0:
        terms["tc"] = temporal_consistency_loss(src, scene.source_skeleton, retargeted, tgt_sk)
    if w.j > 0:
        terms["j"] = joint_orientation_loss(src, retargeted, scene.source_skeleton, tgt_sk, scene.field)
    total = 0.0
    for k in TERMS:
        if terms[k] is not None:
            total += getattr(w, k) * terms[k]
    return LossReport(terms, total, w, {k: terms[k] is not None for k in TERMS})
