"""
Per-sequence retargeting by gradient descent on residual rotations.

The retargeted rotations are ``Q_B = canon(normalize(normalize(X) ⊗ Q_A))``
where ``X`` holds one unconstrained 4-vector per frame and joint. The
objective and its exact gradient with respect to ``X`` are evaluated by a
hand-written reverse pass through quaternion composition, forward
kinematics, skinning and every loss term. Nearest-neighbour matches of the
penetration term are held fixed inside one evaluation and refreshed between
optimizer steps.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import quaternion as quat
from .exceptions import ContractError, DivergenceError, NumericError, ShapeError
from .semantic_loss import PRESETS, TERMS, LossReport, LossWeights, RetargetScene
from .skeleton import Motion, character_height, fk_matrices, fk_matrices_vjp
from .skinning import apply_blend, blend, sample_points, segment_limbs, skinning_matrices
from .spatial_loss import find_correspondences, query_depths, reduce_depths
from .temporal_loss import (
    consistency_from_coords,
    consistency_vjp,
    normalize_trajectory,
    normalize_vjp,
)
from .validation import check_array, check_motion, check_positive


def normalize_global(globals_, source_height, target_height):
    """Scale root translations by the target/source height ratio."""
    hs = check_positive(source_height, "source height")
    ht = check_positive(target_height, "target height")
    out = np.array(globals_, dtype=np.float64, copy=True)
    out[:, :3] *= ht / hs
    return out


def compose_rotations(residual, rotations):
    """``canon(normalize(normalize(residual) ⊗ rotations))`` entrywise."""
    residual = np.asarray(residual, dtype=np.float64)
    if residual.shape != rotations.shape:
        raise ShapeError(f"residual shape {residual.shape} does not match motion {rotations.shape}")
    u = residual / np.linalg.norm(residual, axis=-1, keepdims=True)
    p = quat._hamilton(u, rotations)
    return quat.quat_canonicalize(p / np.linalg.norm(p, axis=-1, keepdims=True))


def compose_motion(residual, source, source_height=None, target_height=None):
    """Apply a residual to a source motion; rescale the root if heights are given."""
    rot = compose_rotations(residual, source.rotations)
    g = source.globals
    if source_height is not None or target_height is not None:
        g = normalize_global(g, source_height, target_height)
    return Motion(rot, g, source.frame_rate)


class Objective:
    """
    Total loss of a :class:`RetargetScene` as a function of the residual.

    ``target_globals`` is the global channel used for the retargeted motion
    (already height-normalized).
    """

    def __init__(self, scene, weights, target_globals):
        self.scene = scene
        self.weights = weights
        src = scene.source_motion
        sk_a, sk_b = scene.source_skeleton, scene.target_skeleton
        check_motion(src, sk_a, min_frames=2)
        if sk_a.n_joints != sk_b.n_joints:
            raise ShapeError("source and target skeletons differ in joint count")
        self.shape = src.rotations.shape
        self.q_src = quat.quat_canonicalize(src.rotations)
        self.root_src = src.translations.copy()
        self.root_tgt = np.asarray(target_globals, dtype=np.float64)[:, :3].copy()
        self.target_globals = np.asarray(target_globals, dtype=np.float64)
        self.frame_rate = src.frame_rate
        self.sk_a, self.sk_b = sk_a, sk_b

        local_src = quat.quat_to_matrix(self.q_src)
        world_a, pos_a = fk_matrices(sk_a.parents, sk_a.offsets, local_src, self.root_src)
        _, self.pos_copy = fk_matrices(sk_b.parents, sk_b.offsets, local_src, self.root_tgt)
        self.pos_src = pos_a
        self.field_src = np.einsum("tkij,kj->tki", world_a, scene.field)
        self.coords_src = normalize_trajectory(pos_a).coords
        self._prepare_skinning(scene.sample)

    def _prepare_skinning(self, sample):
        ch = self.scene.target_character
        used = sample.all_indices()
        remap = np.full(ch.n_vertices, -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        limbs = self.scene.segmentation.limb_names
        self.sample = sample
        self.queries = {l: remap[sample.queries[l]] for l in limbs}
        self.references = {l: remap[sample.references[l]] for l in limbs}
        self.n_queries = sum(len(q) for q in self.queries.values())
        self.rest_v = ch.vertices[used]
        self.rest_n = ch.normals[used]
        self.skin_w = ch.weights[used]
        self.bind = ch.bind_positions

    def set_sample(self, sample):
        self._prepare_skinning(sample)

    def motion(self, x):
        return Motion(compose_rotations(x, self.q_src), self.target_globals, self.frame_rate)

    def _skin(self, world, pos):
        m = blend(self.skin_w, skinning_matrices(self.bind, world, pos))
        return apply_blend(m, self.rest_v, self.rest_n)

    def correspondences(self, x):
        q = compose_rotations(x, self.q_src)
        world, pos = fk_matrices(self.sk_b.parents, self.sk_b.offsets, quat.quat_to_matrix(q), self.root_tgt)
        verts = self._skin(world, pos)[0]
        return find_correspondences(verts, self.queries, self.references, self.scene.method, self.scene.workers)

    def __call__(self, x, correspondences=None, need_grad=True):
        """
        Evaluate the weighted loss at ``x``.

        Returns ``(report, gradient, correspondences)``; ``gradient`` is None
        when ``need_grad`` is False. Fresh matches are computed when
        ``correspondences`` is None.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.shape:
            raise ShapeError(f"residual shape {x.shape} does not match {self.shape}")
        w = self.weights
        sc = self.scene
        n_t, n_k = self.shape[:2]
        tk = n_t * n_k
        sk_a, sk_b = self.sk_a, self.sk_b

        xn = np.linalg.norm(x, axis=-1, keepdims=True)
        u = x / xn
        p = quat._hamilton(u, self.q_src)
        pn = np.linalg.norm(p, axis=-1, keepdims=True)
        n = p / pn
        sign = np.where(n[..., :1] < 0.0, -1.0, 1.0)
        q = sign * n
        local = quat.quat_to_matrix(q)
        world, pos = fk_matrices(sk_b.parents, sk_b.offsets, local, self.root_tgt)

        g_q = np.zeros_like(q)
        g_world = np.zeros_like(world)
        g_pos = np.zeros_like(pos)
        g_local_extra = None
        terms = dict.fromkeys(TERMS)
        contrib = {}

        if w.con > 0:
            dq = q - self.q_src
            dp = pos - self.pos_copy
            terms["con"] = float((dq * dq).sum() / tk + (dp * dp).sum() / tk)
            contrib["con"] = (w.con * 2.0 * dq / tk, None, w.con * 2.0 * dp / tk)

        if w.rec > 0 and sc.reconstruction:
            world_r, pos_r = fk_matrices(sk_a.parents, sk_a.offsets, local, self.root_tgt)
            dq = q - self.q_src
            dp = pos_r - self.pos_src
            terms["rec"] = float((dq * dq).sum() / tk + (dp * dp).sum() / tk)
            if need_grad:
                g_local_extra = fk_matrices_vjp(
                    sk_a.parents, sk_a.offsets, local, world_r,
                    np.zeros_like(world_r), w.rec * 2.0 * dp / tk,
                )[0]
            contrib["rec"] = (w.rec * 2.0 * dq / tk, None, None)

        if w.j > 0:
            f = np.einsum("tkij,kj->tki", world, sc.field)
            d = f - self.field_src
            terms["j"] = float((d * d).sum() / tk)
            gw = np.einsum("tki,kj->tkij", w.j * 2.0 * d / tk, sc.field)
            contrib["j"] = (None, gw, None)

        if w.tc > 0:
            norm_b = normalize_trajectory(pos)
            terms["tc"] = consistency_from_coords(self.coords_src, norm_b.coords)
            if need_grad:
                gc = consistency_vjp(self.coords_src, norm_b.coords)
                contrib["tc"] = (None, None, w.tc * normalize_vjp(pos, norm_b, gc))

        if w.lp > 0:
            verts, normals, _, nlen = self._skin(world, pos)
            if not np.all(np.isfinite(verts)):
                raise NumericError("skinning produced non-finite vertices (term lp)")
            if correspondences is None:
                correspondences = find_correspondences(
                    verts, self.queries, self.references, sc.method, sc.workers
                )
            depths = query_depths(verts, normals, self.queries, correspondences)
            terms["lp"] = reduce_depths(depths, sc.margin).total
            if need_grad:
                contrib["lp"] = self._penetration_vjp(
                    world, verts, normals, nlen, depths, correspondences, w.lp
                )

        total = 0.0
        for k in TERMS:
            if terms[k] is not None:
                total += getattr(w, k) * terms[k]
        report = LossReport(terms, total, w, {k: terms[k] is not None for k in TERMS})
        if not need_grad:
            return report, None, correspondences

        for name, (gq_t, gw_t, gp_t) in contrib.items():
            for part in (gq_t, gw_t, gp_t):
                if part is not None and not np.all(np.isfinite(part)):
                    raise NumericError(f"non-finite gradient from term {name}")
            if gq_t is not None:
                g_q += gq_t
            if gw_t is not None:
                g_world += gw_t
            if gp_t is not None:
                g_pos += gp_t
        if g_local_extra is not None and not np.all(np.isfinite(g_local_extra)):
            raise NumericError("non-finite gradient from term rec")

        g_local, _ = fk_matrices_vjp(sk_b.parents, sk_b.offsets, local, world, g_world, g_pos)
        if g_local_extra is not None:
            g_local += g_local_extra
        g_q += quat.quat_to_matrix_vjp(q, g_local)
        g_n = sign * g_q
        g_p = (g_n - n * (n * g_n).sum(axis=-1, keepdims=True)) / pn
        g_u = quat._hamilton(g_p, quat.quat_conjugate(self.q_src))
        g_x = (g_u - u * (u * g_u).sum(axis=-1, keepdims=True)) / xn
        if not np.all(np.isfinite(g_x)):
            raise NumericError("non-finite gradient in rotation composition")
        return report, g_x, correspondences

    def _penetration_vjp(self, world, verts, normals, nlen, depths, corr, weight):
        n_t = verts.shape[0]
        scale = weight / (self.n_queries * n_t)
        g_v = np.zeros_like(verts)
        g_nrm = np.zeros_like(normals)
        t_idx = np.arange(n_t)[:, None]
        for limb, q_idx in self.queries.items():
            c = corr[limb]
            active = ((depths[limb] + self.scene.margin) > 0.0) * scale
            if not np.any(active):
                continue
            e = verts[:, q_idx]
            er = verts[t_idx, c]
            nr = normals[t_idx, c]
            a = active[..., None]
            tq = np.broadcast_to(t_idx, c.shape)
            qq = np.broadcast_to(q_idx, c.shape)
            np.add.at(g_v, (tq, qq), -nr * a)
            np.add.at(g_v, (tq, c), nr * a)
            np.add.at(g_nrm, (tq, c), -(e - er) * a)
        g_raw = (g_nrm - normals * (normals * g_nrm).sum(axis=-1, keepdims=True)) / nlen
        g_m = np.empty(verts.shape[:2] + (3, 4))
        g_m[..., :3] = g_v[..., :, None] * self.rest_v[None, :, None, :]
        g_m[..., :3] += g_raw[..., :, None] * self.rest_n[None, :, None, :]
        g_m[..., 3] = g_v
        n_k = world.shape[1]
        g_a = (self.skin_w.T @ g_m.reshape(n_t, -1, 12)).reshape(n_t, n_k, 3, 4)
        g_world = g_a[..., :3] - np.einsum("tki,kj->tkij", g_a[..., 3], self.bind)
        return None, g_world, g_a[..., 3].copy()


def loss_gradient(residual, scene, weights, target_globals=None, correspondences=None):
    """
    Gradient of the weighted loss with respect to the unconstrained residual,
    with penetration matches frozen at ``residual`` (or as given).
    """
    if target_globals is None:
        target_globals = scene.source_motion.globals
    obj = Objective(scene, weights, target_globals)
    _, g, _ = obj(residual, correspondences)
    return g


class Adam:
    """Adaptive-moment update applied in place to one array."""

    def __init__(self, lr=5e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = None
        self.v = None
        self.t = 0

    def step(self, param, grad):
        if self.m is None:
            self.m = np.zeros_like(param)
            self.v = np.zeros_like(param)
        self.t += 1
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        param -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class OptimizerConfig:
    learning_rate: float = 5e-3
    n_iter: int = 300
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    tol: float = 1e-9
    refresh_every: int = 1
    resample_every: int = 0
    seed: int = 0
    n_query: int = 400
    n_reference: int = 4000
    margin: float = 0.0
    divergence_factor: float = 10.0
    # Adam jitters at the learning-rate scale around an exact optimum, so
    # losses below this absolute level never count as divergence
    divergence_floor: float = 1e-2
    con_bound: float = 0.05
    method: str = "tree"
    workers: int = 1
    weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        if isinstance(self.weights, str):
            self.weights = PRESETS[self.weights]
        elif isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)
        if not self.learning_rate > 0:
            raise ContractError("learning_rate must be positive")
        if int(self.n_iter) < 1:
            raise ContractError("n_iter must be at least 1")
        if int(self.refresh_every) < 1:
            raise ContractError("refresh_every must be at least 1")
        if self.method not in ("tree", "brute"):
            raise ContractError(f"unknown search method {self.method!r}")


@dataclass
class RetargetReport:
    motion: Motion
    residual: np.ndarray
    trace: list
    metrics_before: dict
    metrics_after: dict
    wall_time: float
    converged: bool
    non_convergence: bool
    best_iteration: int
    sample_with_replacement: list

    def summary(self):
        return {
            "iterations": len(self.trace),
            "best_iteration": self.best_iteration,
            "converged": self.converged,
            "non_convergence": self.non_convergence,
            "initial_loss": self.trace[0]["total"] if self.trace else None,
            "final_loss": self.trace[self.best_iteration]["total"] if self.trace else None,
            "wall_time_s": self.wall_time,
            "sample_with_replacement": list(self.sample_with_replacement),
            "metrics_before": self.metrics_before,
            "metrics_after": self.metrics_after,
        }


def _is_self_retarget(a, b):
    return a is b or (
        a.skeleton.same_as(b.skeleton)
        and np.array_equal(a.vertices, b.vertices)
        and np.array_equal(a.weights, b.weights)
    )


def _trace_entry(it, report, best):
    e = {"iteration": it, "total": report.total, "best": best}
    e.update({k: v for k, v in report.terms.items()})
    return e


def build_scene(source, source_char, target_char, config, segmentation=None, field=None):
    if segmentation is None:
        segmentation = segment_limbs(target_char)
    sample = sample_points(
        target_char, segmentation,
        {"query": config.n_query, "reference": config.n_reference}, seed=config.seed,
    )
    return RetargetScene(
        source, source_char.skeleton, target_char, segmentation, sample, field,
        reconstruction=_is_self_retarget(source_char, target_char),
        margin=config.margin, method=config.method, workers=config.workers,
    )


def optimize_sequence(
    source, source_char, target_char, config=None, segmentation=None, field=None, init=None
):
    """
    Retarget ``source`` from ``source_char`` onto ``target_char``.

    Starts from ``init`` (a ``(T, K, 4)`` residual; default identity, which
    is the plain motion copy) and runs Adam on
    the weighted loss until the iteration budget is spent or the relative
    loss change drops below ``config.tol``. Returns the best iterate.
    """
    from .metrics import evaluate_metrics

    config = config or OptimizerConfig()
    check_motion(source, source_char.skeleton, min_frames=2)
    if source_char.skeleton.n_joints != target_char.skeleton.n_joints:
        raise ShapeError("source and target characters differ in joint count")
    start = time.perf_counter()
    scene = build_scene(source, source_char, target_char, config, segmentation, field)
    h_a = character_height(source_char.skeleton)
    h_b = character_height(target_char.skeleton)
    d_b = normalize_global(source.globals, h_a, h_b)
    obj = Objective(scene, config.weights, d_b)

    copy_motion = obj.motion(quat.identity(source.rotations.shape[:2]))
    if init is None:
        x = quat.identity(source.rotations.shape[:2])
    else:
        x = check_array(init, "init", source.rotations.shape).copy()
    adam = Adam(config.learning_rate, config.beta1, config.beta2, config.eps)
    trace = []
    best_x, best_loss, best_it = x.copy(), np.inf, 0
    corr = None
    prev = None
    converged = False
    initial = None
    for it in range(int(config.n_iter)):
        if config.resample_every and it > 0 and it % config.resample_every == 0:
            obj.set_sample(
                sample_points(
                    target_char, scene.segmentation,
                    {"query": config.n_query, "reference": config.n_reference},
                    seed=config.seed + it,
                )
            )
            corr = None
        if it % config.refresh_every == 0:
            corr = None
        report, grad, corr = obj(x, corr)
        loss = report.total
        if initial is None:
            initial = loss
        if loss < best_loss:
            best_x, best_loss, best_it = x.copy(), loss, it
        trace.append(_trace_entry(it, report, best_loss))
        if loss > config.divergence_factor * max(initial, config.divergence_floor):
            partial = _finish(obj, best_x, trace, best_it, copy_motion, scene, start, False, evaluate_metrics)
            raise DivergenceError(
                f"loss {loss:.6g} exceeded {config.divergence_factor}x the initial {initial:.6g} at iteration {it}",
                partial,
            )
        if not np.any(grad):
            converged = True
            break
        if prev is not None and abs(loss - prev) <= config.tol * max(abs(prev), 1e-300):
            converged = True
            break
        prev = loss
        adam.step(x, grad)
    return _finish(obj, best_x, trace, best_it, copy_motion, scene, start, converged, evaluate_metrics)


def _finish(obj, best_x, trace, best_it, copy_motion, scene, start, converged, evaluate_metrics):
    final = obj.motion(best_x)
    ch = scene.target_character
    src_metrics = evaluate_metrics(scene.source_motion, scene.source_motion, None, None, scene.source_skeleton)
    before = evaluate_metrics(copy_motion, copy_motion, ch, scene.segmentation).as_dict()
    after = evaluate_metrics(final, copy_motion, ch, scene.segmentation).as_dict()
    before["source_curvature"] = after["source_curvature"] = src_metrics.curvature
    final_report, _, _ = obj(best_x, need_grad=False)
    after["loss_terms"] = final_report.as_dict()
    before["loss_terms"] = trace[0] if trace else None
    return RetargetReport(
        motion=final,
        residual=best_x,
        trace=trace,
        metrics_before=before,
        metrics_after=after,
        wall_time=time.perf_counter() - start,
        converged=converged,
        non_convergence=bool(trace and trace[best_it]["total"] > trace[0]["total"]),
        best_iteration=best_it,
        sample_with_replacement=list(scene.sample.with_replacement),
    )
