import csv

import numpy as np
import pytest

from conftest import chain_skeleton, random_unit_quats
from skinretarget import quaternion as quat
from skinretarget.exceptions import ContractError, ShapeError
from skinretarget.io.synth import SceneSpec, generate_scene, humanoid_skeleton, torso_geometry
from skinretarget.metrics import (
    CSV_COLUMNS,
    append_csv,
    curvature,
    default_curvature_joints,
    evaluate_metrics,
    local_mse,
    mse,
    penetration_rate,
)
from skinretarget.skeleton import Motion, Skeleton, character_height
from skinretarget.skinning import SkinnedCharacter, lbs_deform_all, segment_limbs
from test_proximity import fibonacci_sphere


def random_motion(rng, t=8, k=22):
    return Motion(random_unit_quats(rng, (t, k)), rng.normal(size=(t, 4)))


def line_motion(points):
    sk = chain_skeleton(2)
    g = np.zeros((len(points), 4))
    g[:, :3] = points
    return sk, Motion(quat.identity((len(points), 2)), g)


def test_mse_examples(rng):
    sk = humanoid_skeleton()
    m = random_motion(rng)
    assert mse(m, m, sk) == 0.0
    delta = 0.37
    shifted = m.translated([0.0, 0.0, delta])
    assert abs(mse(shifted, m, sk) - delta**2 / character_height(sk)) <= 1e-12
    other = random_motion(rng)
    perm = rng.permutation(m.n_frames)
    a = Motion(m.rotations[perm], m.globals[perm])
    b = Motion(other.rotations[perm], other.globals[perm])
    assert np.isclose(mse(a, b, sk), mse(m, other, sk), rtol=1e-13)


def test_local_mse_examples(rng):
    sk = humanoid_skeleton()
    m = random_motion(rng)
    assert local_mse(m, m.translated([1.0, 2.0, 3.0]), sk) == 0.0
    other = m.replace(rotations=random_unit_quats(rng, (8, 22)))
    assert np.isclose(local_mse(other, m, sk), mse(other, m, sk), rtol=1e-12)
    # hand case: a unit 2-joint chain whose root turns 90° about z
    chain = chain_skeleton(2)
    rot = quat.identity((1, 2))
    rot[0, 0] = quat.quat_from_axis_angle([0, 0, 1], np.pi / 2)
    turned = Motion(rot, np.array([[4.0, 0, 0, 0]]))
    rest = Motion(quat.identity((1, 2)), np.zeros((1, 4)))
    # child moves (0,1,0) -> (-1,0,0): squared distance 2 over 2 joints, height 1
    assert abs(local_mse(turned, rest, chain) - 1.0) <= 1e-12


def test_mse_shape_mismatch(rng):
    sk = humanoid_skeleton()
    with pytest.raises(ShapeError):
        mse(random_motion(rng, t=5), random_motion(rng, t=6), sk)


def test_curvature_closed_forms():
    sk, m = line_motion([[0.2 * t, -0.1 * t, 0.3 * t] for t in range(7)])
    assert curvature(m, sk, joints=[0, 1]) == pytest.approx(0.0, abs=1e-28)
    sk, m = line_motion([[0.0, 0, 0], [0.0, 0, 0], [1.0, 0, 0]])
    assert curvature(m, sk, joints=[0]) == 1.0


def test_curvature_symmetries(rng):
    sk = humanoid_skeleton()
    m = random_motion(rng, t=12)
    c = curvature(m, sk)
    rev = Motion(m.rotations[::-1], m.globals[::-1])
    assert np.isclose(curvature(rev, sk), c, rtol=1e-12)
    assert np.isclose(curvature(m.translated([3.0, -4.0, 5.0]), sk), c, rtol=1e-9)
    assert c >= 0


@pytest.mark.parametrize("seed", range(5))
def test_adjacent_frame_averaging_does_not_raise_curvature(seed):
    r = np.random.default_rng(seed)
    pts = np.cumsum(r.normal(size=(30, 3)), axis=0)
    sk, m = line_motion(pts)
    _, smooth = line_motion(0.5 * (pts[1:] + pts[:-1]))
    assert curvature(smooth, sk, joints=[0]) <= curvature(m, sk, joints=[0])


def test_curvature_needs_three_frames():
    sk, m = line_motion([[0.0, 0, 0], [1.0, 0, 0]])
    with pytest.raises(ContractError):
        curvature(m, sk)


def test_default_curvature_joints_are_limb_chains():
    sk = humanoid_skeleton()
    names = {sk.names[j] for j in default_curvature_joints(sk)}
    assert "Hips" not in names and "Head" not in names and "Spine1" not in names
    assert {"LeftArm", "LeftHand", "RightUpLeg", "RightToeBase"} <= names


def arm_with_known_inside_count(n_inside=30, n_arm=200):
    sphere = fibonacci_sphere(4000)
    r = np.random.default_rng(0)
    x = np.r_[np.linspace(0.7, 0.9, n_inside), np.linspace(1.1, 1.6, n_arm - n_inside)]
    ang = r.uniform(0, 2 * np.pi, n_arm)
    arm = np.stack([x, 0.05 * np.cos(ang), 0.05 * np.sin(ang)], 1)
    arm_n = np.stack([np.zeros(n_arm), np.cos(ang), np.sin(ang)], 1)
    w = np.zeros((4000 + n_arm, 2))
    w[:4000, 0] = 1.0
    w[4000:, 1] = 1.0
    sk = Skeleton(["torso", "arm"], [-1, 0], [[0, 0, 0], [1.0, 0, 0]])
    ch = SkinnedCharacter(np.r_[sphere, arm], np.r_[sphere, arm_n], np.zeros((0, 3)), w, sk)
    return ch, segment_limbs(ch, {"arm": ["arm"]}, [])


def test_penetration_rate_hand_count():
    ch, seg = arm_with_known_inside_count()
    assert penetration_rate(ch, seg, Motion.rest(ch.skeleton, 1)) == 15.0


def test_penetration_rate_monotone_in_threshold(arm_sweep_scene):
    _, m, ch = arm_sweep_scene
    seg = segment_limbs(ch)
    rates = [penetration_rate(ch, seg, m, threshold=e) for e in (-0.01, 0.0, 0.005, 0.02, 1.0)]
    assert all(a >= b for a, b in zip(rates, rates[1:]))
    assert rates[-1] == 0.0


def test_penetration_rate_tree_equals_brute(arm_sweep_scene):
    _, m, ch = arm_sweep_scene
    seg = segment_limbs(ch)
    assert penetration_rate(ch, seg, m, method="tree") == penetration_rate(ch, seg, m, method="brute")


def test_penetration_rate_zero_in_rest_pose(slim_to_fat_scene):
    _, _, ch = slim_to_fat_scene
    assert penetration_rate(ch, segment_limbs(ch), Motion.rest(ch.skeleton, 2)) == 0.0


def test_penetration_rate_matches_sphere_membership():
    spec = SceneSpec("arm_sweep", n_frames=20)
    _, m, ch = generate_scene(spec)
    seg = segment_limbs(ch)
    rate = penetration_rate(ch, seg, m)
    c, radius = torso_geometry(ch, m, spec.torso_radius)
    v, _ = lbs_deform_all(ch, m)
    inside = sum(int((np.linalg.norm(v[:, i] - c[:, None], axis=-1) < radius).sum()) for i in seg.limbs.values())
    total = sum(len(i) for i in seg.limbs.values()) * m.n_frames
    analytic = 100.0 * inside / total
    assert analytic > 0
    # faceted torso mesh vs. the ideal sphere: agreement to a tenth of a percentage point
    assert abs(rate - analytic) < 0.1


def test_evaluate_metrics_and_exports(tmp_path, arm_sweep_scene):
    _, m, ch = arm_sweep_scene
    rep = evaluate_metrics(m, m, ch)
    assert rep.mse == 0.0 and rep.mse_local == 0.0
    assert 0.0 < rep.pen_rate <= 100.0 and rep.curvature > 0
    assert set(rep.per_joint_curvature) == {ch.skeleton.names[j] for j in default_curvature_joints(ch.skeleton)}
    record = rep.to_record()
    assert record.startswith("mse=0.0\n") and "curvature.LeftHand=" in record
    skel_only = evaluate_metrics(m, m, skeleton=ch.skeleton)
    assert np.isnan(skel_only.pen_rate)
    path = tmp_path / "results.csv"
    append_csv(path, "seq1", rep, 12.5)
    append_csv(path, "seq2", rep, 13.0)
    rows = list(csv.reader(open(path)))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert [r[0] for r in rows[1:]] == ["seq1", "seq2"]
    assert float(rows[1][3]) == rep.pen_rate
