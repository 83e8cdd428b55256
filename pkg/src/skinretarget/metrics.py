"""Evaluation metrics: joint MSE, local MSE, penetration rate and curvature."""

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ContractError
from .skeleton import character_height, joint_positions
from .skinning import DEFAULT_LIMB_JOINTS, DEFAULT_EXCLUDED_JOINTS, lbs_deform_all
from .spatial_loss import find_correspondences, query_depths
from .validation import check_motion, check_same_shape

CSV_COLUMNS = ("sequence", "mse", "mse_local", "pen_rate", "curvature", "wall_ms")


def default_curvature_joints(skeleton):
    """Joints of the four limb chains: shoulders/hips outward, where present."""
    names = set(DEFAULT_EXCLUDED_JOINTS)
    for js in DEFAULT_LIMB_JOINTS.values():
        names.update(js)
    idx = [i for i, n in enumerate(skeleton.names) if n in names]
    return idx or list(range(skeleton.n_joints))


def mse(predicted, ground_truth, skeleton):
    """Mean squared FK joint error divided by the character height."""
    check_same_shape(predicted, ground_truth)
    check_motion(predicted, skeleton)
    d = joint_positions(skeleton, predicted) - joint_positions(skeleton, ground_truth)
    return float((d * d).sum(axis=-1).mean()) / character_height(skeleton)


def local_mse(predicted, ground_truth, skeleton):
    """MSE with both roots pinned at the origin."""
    return mse(predicted.pinned(), ground_truth.pinned(), skeleton)


def penetration_rate(character, segmentation, motion, threshold=0.0, method="tree", workers=1):
    """Percentage of limb vertices, over all frames, with signed depth above ``threshold``."""
    check_motion(motion, character.skeleton)
    verts, normals = lbs_deform_all(character, motion)
    corr = find_correspondences(verts, segmentation.limbs, segmentation.references, method, workers)
    depths = query_depths(verts, normals, segmentation.limbs, corr)
    hit = sum(int(np.count_nonzero(d > threshold)) for d in depths.values())
    count = sum(d.size for d in depths.values())
    if count == 0:
        raise ContractError("no limb vertices to evaluate")
    return 100.0 * hit / count


def curvature(motion, skeleton, joints=None, per_joint=False):
    """
    Mean squared central second difference of limb-joint trajectories
    (unit frame spacing), averaged over interior frames and joints.
    """
    if motion.n_frames < 3:
        raise ContractError("curvature needs at least 3 frames")
    if joints is None:
        joints = default_curvature_joints(skeleton)
    p = joint_positions(skeleton, motion)[:, joints]
    acc = p[2:] - 2.0 * p[1:-1] + p[:-2]
    per = (acc * acc).sum(axis=-1).mean(axis=0)
    if per_joint:
        return float(per.mean()), per
    return float(per.mean())


@dataclass
class MetricsReport:
    mse: float
    mse_local: float
    pen_rate: float
    curvature: float
    per_joint_curvature: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "mse": self.mse,
            "mse_local": self.mse_local,
            "pen_rate": self.pen_rate,
            "curvature": self.curvature,
            "per_joint_curvature": dict(self.per_joint_curvature),
        }

    def to_record(self):
        """Flat ``key=value`` lines."""
        lines = [f"{k}={getattr(self, k)!r}" for k in ("mse", "mse_local", "pen_rate", "curvature")]
        lines += [f"curvature.{k}={v!r}" for k, v in self.per_joint_curvature.items()]
        return "\n".join(lines) + "\n"


def evaluate_metrics(predicted, ground_truth, character=None, segmentation=None, skeleton=None):
    """
    All metrics of ``predicted`` against ``ground_truth``. The penetration
    rate is NaN when no character is given.
    """
    if skeleton is None:
        skeleton = character.skeleton
    joints = default_curvature_joints(skeleton)
    curv, per = curvature(predicted, skeleton, joints, per_joint=True)
    pen = float("nan")
    if character is not None:
        if segmentation is None:
            from .skinning import segment_limbs

            segmentation = segment_limbs(character)
        pen = penetration_rate(character, segmentation, predicted)
    return MetricsReport(
        mse=mse(predicted, ground_truth, skeleton),
        mse_local=local_mse(predicted, ground_truth, skeleton),
        pen_rate=pen,
        curvature=curv,
        per_joint_curvature={skeleton.names[j]: float(v) for j, v in zip(joints, per)},
    )


def append_csv(path, sequence, report, wall_ms=0.0):
    """Append one results row, writing the header when the file is new."""
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        if new:
            w.writerow(CSV_COLUMNS)
        w.writerow([sequence, report.mse, report.mse_local, report.pen_rate, report.curvature, wall_ms])
