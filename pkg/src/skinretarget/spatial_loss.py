"""Limb penetration loss over a skinned motion sequence."""

from dataclasses import dataclass

import numpy as np

from .exceptions import NumericError, SamplingError
from .proximity import ProximityIndex, brute_force_nearest, depth_from
from .skinning import lbs_deform_all


@dataclass
class PenetrationBreakdown:
    per_limb: dict
    total: float
    n_penetrating: int
    per_frame: np.ndarray


def find_correspondences(verts, queries, references, method="tree", workers=1):
    """
    Nearest reference vertex for every query vertex, per frame and limb.

    ``verts`` is ``(T, V, 3)``; ``queries`` and ``references`` map limb names
    to index arrays into ``V``. Returns limb -> ``(T, N_l)`` indices into ``V``.
    """
    out = {}
    for limb, q_idx in queries.items():
        r_idx = np.asarray(references[limb])
        # repeated vertices (sampling with replacement) only create exact ties;
        # keeping first occurrences in order preserves the lowest-index rule
        _, first = np.unique(r_idx, return_index=True)
        if len(first) < len(r_idx):
            r_idx = r_idx[np.sort(first)]
        corr = np.empty((len(verts), len(q_idx)), dtype=np.int64)
        for t in range(len(verts)):
            ref_pts = verts[t, r_idx]
            qry = verts[t, q_idx]
            if method == "tree":
                local, _ = ProximityIndex(ref_pts, workers=workers).nearest(qry)
            elif method == "brute":
                local, _ = brute_force_nearest(ref_pts, qry)
            else:
                raise ValueError(f"unknown search method {method!r}")
            corr[t] = r_idx[local]
        out[limb] = corr
    return out


def query_depths(verts, normals, queries, correspondences):
    """Signed depth ``(T, N_l)`` of each limb's queries against frozen matches."""
    depths = {}
    for limb, q_idx in queries.items():
        corr = correspondences[limb]
        e = verts[:, q_idx]
        er = np.take_along_axis(verts, corr[..., None], axis=1)
        nr = np.take_along_axis(normals, corr[..., None], axis=1)
        depths[limb] = depth_from(e - er, nr)
    return depths


def reduce_depths(depths, margin=0.0):
    """Positive-part depths averaged over all queries, then over frames."""
    total_q = sum(d.shape[1] for d in depths.values())
    n_frames = next(iter(depths.values())).shape[0]
    per_frame = np.zeros(n_frames)
    per_limb = {}
    n_pen = 0
    for limb, d in depths.items():
        pos = np.maximum(d + margin, 0.0)
        s = pos.sum(axis=1)
        per_limb[limb] = s / d.shape[1]
        per_frame += s
        n_pen += int(np.count_nonzero(d > 0.0))
    per_frame /= total_q
    return PenetrationBreakdown(per_limb, float(per_frame.mean()), n_pen, per_frame)


def limb_penetration_loss(character, segmentation, sample, motion, method="tree", margin=0.0, workers=1):
    """
    Mean positive signed depth of sampled limb vertices against each limb's
    reference set, recomputing nearest matches on every frame.
    """
    for limb in segmentation.limb_names:
        if len(sample.queries.get(limb, ())) == 0 or len(sample.references.get(limb, ())) == 0:
            raise SamplingError(f"limb {limb!r} has an empty sample")
    used = sample.all_indices()
    verts, normals = lbs_deform_all(character, motion, used)
    if not (np.all(np.isfinite(verts)) and np.all(np.isfinite(normals))):
        raise NumericError("skinning produced non-finite vertices")
    remap = np.full(character.n_vertices, -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    queries = {l: remap[sample.queries[l]] for l in segmentation.limb_names}
    refs = {l: remap[sample.references[l]] for l in segmentation.limb_names}
    corr = find_correspondences(verts, queries, refs, method=method, workers=workers)
    return reduce_depths(query_depths(verts, normals, queries, corr), margin)
