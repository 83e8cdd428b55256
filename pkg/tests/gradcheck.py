"""Central finite-difference check of the analytic objective gradient."""

import numpy as np

from skinretarget.io.synth import SceneSpec, generate_scene
from skinretarget.optimizer import Objective, OptimizerConfig, build_scene, normalize_global
from skinretarget.semantic_loss import LossWeights
from skinretarget.skeleton import character_height

WEIGHT_SETS = (
    LossWeights(),
    LossWeights(rec=0, con=1, lp=0, tc=0, j=0),
    LossWeights(rec=0, con=0, lp=1, tc=0, j=0),
    LossWeights(rec=0, con=0, lp=0, tc=1, j=0),
    LossWeights(rec=0, con=0, lp=0, tc=0, j=1),
)


def directional_check(seed, weights, self_retarget=False, step=1e-5, n_frames=6):
    """
    Relative error between the analytic directional derivative and a
    central difference, with penetration matches frozen at the base point.
    """
    rng = np.random.default_rng(seed)
    spec = SceneSpec(
        "slim_to_fat",
        n_frames=n_frames,
        seed=seed,
        sweep_min=float(rng.uniform(40, 60)),
        sweep_max=float(rng.uniform(75, 90)),
    )
    src, motion, tgt = generate_scene(spec)
    if self_retarget:
        tgt = src
    scene = build_scene(motion, src, tgt, OptimizerConfig(n_query=60, n_reference=300, seed=seed))
    d_b = normalize_global(motion.globals, character_height(src.skeleton), character_height(tgt.skeleton))
    obj = Objective(scene, weights, d_b)
    x = np.tile([1.0, 0.0, 0.0, 0.0], motion.rotations.shape[:2] + (1,))
    x = x + 0.1 * rng.standard_normal(x.shape)
    report, grad, corr = obj(x)
    d = rng.standard_normal(x.shape)
    f_plus = obj(x + step * d, corr, need_grad=False)[0].total
    f_minus = obj(x - step * d, corr, need_grad=False)[0].total
    fd = (f_plus - f_minus) / (2 * step)
    analytic = float((grad * d).sum())
    return abs(analytic - fd) / max(abs(fd), 1e-12), analytic, fd, report
