"""
Acceptance gates, one test per criterion, each with its runtime budget.

Every test prints and records a ``C<n> PASS|FAIL`` line; the lines are
repeated in the terminal summary.
"""

import time
from contextlib import contextmanager

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from fuzz import fuzz
from gradcheck import directional_check
from skinretarget import quaternion as quat
from skinretarget.cli import run_bench
from skinretarget.io import WeightsSidecar, dump_weights, parse_bvh, parse_weights, write_bvh
from skinretarget.io.synth import SceneSpec, generate_scene
from skinretarget.metrics import curvature, mse
from skinretarget.optimizer import OptimizerConfig, build_scene, compose_motion, optimize_sequence
from skinretarget.proximity import ProximityIndex, brute_force_nearest, build_index, signed_depth
from skinretarget.semantic_loss import LossWeights, total_loss
from skinretarget.skeleton import Motion, Skeleton, character_height, forward_kinematics
from skinretarget.skinning import SkinnedCharacter, full_sample, lbs_deform, lbs_deform_all, segment_limbs
from skinretarget.spatial_loss import limb_penetration_loss
from skinretarget.temporal_loss import temporal_consistency_loss
from test_proximity import fibonacci_sphere
from test_spatial_loss import all_pairs_oracle


@contextmanager
def criterion(n, title, budget_s, prior_s=0.0):
    """``prior_s`` counts work already done for this criterion in a fixture."""
    start = time.perf_counter() - prior_s
    status, detail = "FAIL", ""
    try:
        yield
        elapsed = time.perf_counter() - start
        if elapsed >= budget_s:
            detail = f" (over budget {budget_s:g}s)"
            raise AssertionError(f"criterion {n} took {elapsed:.1f}s, budget {budget_s}s")
        status = "PASS"
    finally:
        elapsed = time.perf_counter() - start
        line = f"C{n} {status} {title} [{elapsed:.2f}s]{detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)


def rz(deg):
    a = np.radians(deg)
    return np.array([[np.cos(a), -np.sin(a), 0], [np.sin(a), np.cos(a), 0], [0, 0, 1.0]])


def rx(deg):
    a = np.radians(deg)
    return np.array([[1.0, 0, 0], [0, np.cos(a), -np.sin(a)], [0, np.sin(a), np.cos(a)]])


def test_c1_kinematics_oracle():
    with criterion(1, "FK hand chain and LBS exactness", 1.0):
        sk = Skeleton(["a", "b"], [-1, 0], [[0.0, 0.4, 0.0], [0.3, 1.2, -0.5]])
        root = np.array([0.3, -0.2, 0.5])
        rot = np.stack([quat.quat_from_axis_angle([0, 0, 1], np.radians(30)),
                        quat.quat_from_axis_angle([1, 0, 0], np.radians(-70))])
        pose = forward_kinematics(sk, Motion(rot[None], np.r_[root, 0.0][None]), 0)
        ra, rb = rz(30), rx(-70)
        assert np.abs(pose.joint_positions[0] - root).max() <= 1e-9
        assert np.abs(pose.joint_positions[1] - (root + ra @ sk.offsets[1])).max() <= 1e-9
        assert np.abs(quat.quat_to_matrix(pose.joint_rotations_world[1]) - ra @ rb).max() <= 1e-9

        src, _, _ = generate_scene(SceneSpec("slim_to_fat", n_frames=3))
        v, _ = lbs_deform(src, Motion.rest(src.skeleton, 1), 0)
        assert np.array_equal(v, src.vertices)

        # a vertex bound rigidly to joint b follows it exactly under half turns
        sk2 = Skeleton(["a", "b"], [-1, 0], [[0.0, 0, 0], [1.0, 0, 0]])
        ch = SkinnedCharacter(np.array([[2.0, 0, 0]]), np.array([[0.0, 1, 0]]), np.zeros((0, 3)),
                              np.array([[0.0, 1.0]]), sk2)
        half = Motion(np.array([[[0.0, 0, 1, 0], [0.0, 0, 0, 1]]]), np.array([[0.5, -1.0, 2.0, 0.0]]))
        v, n = lbs_deform(ch, half, 0)
        assert np.array_equal(v[0], [0.5, -1.0, 2.0]) and np.array_equal(n[0], [0.0, -1.0, 0.0])


def test_c2_proximity_exactness():
    with criterion(2, "tree NNS equals brute force on 100 instances", 30.0):
        rng = np.random.default_rng(2)
        for i in range(100):
            n_ref = int(rng.integers(1, 10_001))
            n_q = int(rng.integers(1, 1_001))
            if i % 3 == 0:
                # coarse lattice coordinates force many exact ties
                pts = rng.integers(0, 8, size=(n_ref, 3)) / 2.0
                qs = rng.integers(0, 16, size=(n_q, 3)) / 4.0
            else:
                pts = rng.normal(size=(n_ref, 3))
                qs = rng.normal(size=(n_q, 3)) * 1.5
            ti, td = ProximityIndex(pts).nearest(qs)
            bi, bd = brute_force_nearest(pts, qs)
            assert np.array_equal(ti, bi), f"instance {i}"
            assert np.array_equal(td, bd), f"instance {i}"


def test_c3_signed_depth_oracle():
    with criterion(3, "sphere signed depth within 0.02 and sign >= 99%", 10.0):
        rng = np.random.default_rng(3)
        pts = fibonacci_sphere(10_000)
        index = build_index(pts, pts)
        dirs = rng.normal(size=(10_000, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        radii = np.where(rng.random(10_000) < 0.5, rng.uniform(0.3, 0.7, 10_000), rng.uniform(1.3, 2.0, 10_000))
        phi = signed_depth(index, dirs * radii[:, None]).depth
        assert np.abs(phi - (1.0 - radii)).max() <= 0.02
        qs = rng.uniform(-2.0, 2.0, size=(10_000, 3))
        r = np.linalg.norm(qs, axis=1)
        phi = signed_depth(index, qs).depth
        correct = np.mean(np.sign(phi) == np.sign(1.0 - r))
        print(f"sign agreement {correct:.4f}")
        assert correct >= 0.99


def test_c4_loss_definitions():
    with criterion(4, "loss definitions against oracles", 10.0):
        _, m, ch = generate_scene(SceneSpec("arm_sweep", n_frames=12))
        seg = segment_limbs(ch)
        got = limb_penetration_loss(ch, seg, full_sample(seg), m)
        v, n = lbs_deform_all(ch, m)
        oracle = np.mean([all_pairs_oracle(ch, seg, v[t], n[t]) for t in range(m.n_frames)])
        assert got.total > 0 and abs(got.total - oracle) <= 1e-9

        one = Skeleton(["root"], [-1], [[0.0, 0.0, 0.0]])

        def line(xs):
            g = np.zeros((3, 4))
            g[:, 0] = xs
            return Motion(quat.identity((3, 1)), g)

        assert abs(temporal_consistency_loss(line([0, 1, 2]), one, line([0, 2, 1]), one) - 1.0 / 3.0) <= 1e-12

        src, motion, tgt = generate_scene(SceneSpec("slim_to_fat", n_frames=12))
        rng = np.random.default_rng(4)
        q = motion.replace(rotations=quat.quat_normalize(motion.rotations + 0.1 * rng.normal(size=motion.rotations.shape)))
        base = temporal_consistency_loss(motion, src.skeleton, q, tgt.skeleton)
        assert base > 0
        moved = temporal_consistency_loss(motion, src.skeleton, q.translated([3.0, -1.0, 2.0]), tgt.skeleton)
        g = q.globals.copy()
        g[:, :3] *= 2.5
        scaled = temporal_consistency_loss(motion, src.skeleton, q.replace(globals=g), tgt.skeleton.scaled(2.5))
        assert abs(moved - base) <= 1e-9 and abs(scaled - base) <= 1e-9

        self_scene = build_scene(motion, src, src, OptimizerConfig(n_query=60, n_reference=400))
        rep = total_loss(self_scene, motion, LossWeights())
        assert rep.total == 0.0 and all(val == 0.0 for val in rep.terms.values())


def test_c5_gradient_correctness():
    with criterion(5, "20 directional derivatives vs central differences", 120.0):
        worst = 0.0
        for seed in range(20):
            rel, analytic, fd, _ = directional_check(seed, LossWeights(), self_retarget=seed % 4 == 3, step=1e-5)
            worst = max(worst, rel)
            assert rel <= 1e-3, f"seed {seed}: analytic {analytic} vs fd {fd}"
        print(f"worst relative error {worst:.2e}")


def test_c6_self_retarget_regression():
    with criterion(6, "self-retarget reaches MSE_lc <= 1e-4 h", 120.0):
        src, motion, _ = generate_scene(SceneSpec("slim_to_fat", n_frames=60))
        rng = np.random.default_rng(1)
        init = quat.quat_normalize(quat.identity(motion.rotations.shape[:2]) + 0.05 * rng.normal(size=motion.rotations.shape))
        cfg = OptimizerConfig(n_query=50, n_reference=500, n_iter=500, refresh_every=5, learning_rate=0.01)
        report = optimize_sequence(motion, src, src, cfg, init=init)
        h = character_height(src.skeleton)
        got = report.metrics_after["mse_local"]
        print(f"MSE_lc {got:.3e} (limit {1e-4 * h:.3e}), {len(report.trace)} iterations")
        assert len(report.trace) <= 500
        assert got <= 1e-4 * h
        # the start is far from the goal, so the gate measures real progress
        assert mse(compose_motion(init, motion).pinned(), motion.pinned(), src.skeleton) > 1e-4 * h


@pytest.fixture(scope="module")
def preset_runs():
    src, motion, tgt = generate_scene(SceneSpec("slim_to_fat", n_frames=60))
    out = {}
    for preset in ("final", "curv"):
        start = time.perf_counter()
        cfg = OptimizerConfig(n_query=200, n_reference=1000, weights=preset)
        out[preset] = (optimize_sequence(motion, src, tgt, cfg), cfg, time.perf_counter() - start)
    return out


def test_c7_penetration_reduction(preset_runs):
    report, cfg, elapsed = preset_runs["final"]
    with criterion(7, "final preset halves Pen% within curvature and constraint bounds", 300.0, elapsed):
        b, a = report.metrics_before, report.metrics_after
        con = a["loss_terms"]["con"]
        print(f"Pen% {b['pen_rate']:.4f} -> {a['pen_rate']:.4f}; curvature {a['curvature']:.3e} "
              f"(source {a['source_curvature']:.3e}); L_con {con:.3e} (bound {cfg.con_bound}); run {elapsed:.1f}s")
        assert b["pen_rate"] > 0
        assert a["pen_rate"] <= 0.5 * b["pen_rate"]
        assert a["curvature"] <= 2.0 * a["source_curvature"]
        assert con < cfg.con_bound


def test_c8_preset_trade_off(preset_runs):
    total = sum(run[2] for run in preset_runs.values())
    with criterion(8, "curv preset is smoother and penetrates at least as much", 600.0, total):
        final, curv = preset_runs["final"][0].metrics_after, preset_runs["curv"][0].metrics_after
        print(f"curvature final {final['curvature']:.3e} curv {curv['curvature']:.3e}; "
              f"Pen% final {final['pen_rate']:.4f} curv {curv['pen_rate']:.4f}; runs {total:.1f}s")
        assert curv["curvature"] <= final["curvature"]
        assert curv["pen_rate"] >= final["pen_rate"]


def test_c9_benchmark_sanity():
    with criterion(9, "tree beats brute force at 400x4000 with equal loss", 120.0):
        rows = run_bench("arm_sweep", [(400, 4000)], repeats=3, resolution=2)
        (brute,) = [r for r in rows if r[0] == "brute"]
        (tree,) = [r for r in rows if r[0] == "tree"]
        print(f"brute {brute[3]:.4f}s tree {tree[3]:.4f}s speedup {tree[4]:.2f}x")
        assert tree[3] < brute[3]
        assert tree[5] == brute[5]


def test_c10_format_robustness():
    with criterion(10, "round trips to 1e-6 and 1e5 fuzz inputs diagnosed", 120.0):
        src, motion, _ = generate_scene(SceneSpec("slim_to_fat", n_frames=20))
        sk2, m2 = parse_bvh(write_bvh(src.skeleton, motion))
        assert np.abs(sk2.offsets - src.skeleton.offsets).max() <= 1e-6
        assert np.abs(m2.globals - motion.globals).max() <= 1e-6
        # compare rotations as matrices, which removes the quaternion sign
        diff = quat.quat_to_matrix(m2.rotations) - quat.quat_to_matrix(motion.rotations)
        assert np.abs(diff).max() <= 1e-6
        side = WeightsSidecar.from_dense(src.skeleton, src.weights, {}, [])
        back = parse_weights(dump_weights(side)).dense(src.skeleton)
        assert np.abs(back - src.weights).max() <= 1e-6
        accepted, diagnosed = fuzz(100_000, seed=10)
        print(f"fuzz: {accepted} accepted, {diagnosed} diagnosed, 0 crashes")
        assert accepted + diagnosed == 100_000


def test_c11_metric_closed_forms():
    with criterion(11, "curvature and MSE closed forms", 1.0):
        chain = Skeleton(["j0", "j1"], [-1, 0], [[0.0, 0, 0], [0.0, 1.0, 0]])

        def moving(points):
            g = np.zeros((len(points), 4))
            g[:, :3] = points
            return Motion(quat.identity((len(points), 2)), g)

        assert curvature(moving([[0.2 * t, -0.1 * t, 0.3 * t] for t in range(7)]), chain, joints=[0, 1]) <= 1e-28
        assert curvature(moving([[0.0, 0, 0], [0.0, 0, 0], [1.0, 0, 0]]), chain, joints=[0]) == 1.0
        src, motion, _ = generate_scene(SceneSpec("slim_to_fat", n_frames=5))
        delta = np.array([0.0, 0.0, 0.37])
        expect = delta @ delta / character_height(src.skeleton)
        assert abs(mse(motion.translated(delta), motion, src.skeleton) - expect) <= 1e-12
