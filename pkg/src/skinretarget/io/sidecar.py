"""JSON skinning-weight sidecars and run configuration files."""

import json
import math
from dataclasses import dataclass, field, fields

import numpy as np

from ..exceptions import ParseError
from ..optimizer import OptimizerConfig
from ..semantic_loss import PRESETS, LossWeights

_SIDECAR_KEYS = {"joints", "weights", "limbs", "excluded"}


@dataclass
class WeightsSidecar:
    """Sparse per-vertex ``(joint index, weight)`` pairs plus limb configuration."""

    joints: list
    weights: list
    limbs: dict = field(default_factory=dict)
    excluded: list = field(default_factory=list)

    def dense(self, skeleton):
        """``(V, K)`` weight matrix in the skeleton's joint order."""
        try:
            remap = [skeleton.index(name) for name in self.joints]
        except KeyError as exc:
            raise ParseError(f"weights reference a joint missing from the skeleton: {exc}") from None
        out = np.zeros((len(self.weights), skeleton.n_joints))
        for v, row in enumerate(self.weights):
            for j, w in row:
                out[v, remap[j]] += w
        return out

    @classmethod
    def from_dense(cls, skeleton, weights, limbs=None, excluded=None):
        rows = []
        for row in np.asarray(weights):
            nz = np.flatnonzero(row)
            rows.append([[int(j), float(row[j])] for j in nz])
        return cls(list(skeleton.names), rows, dict(limbs or {}), list(excluded or []))


def dump_weights(sidecar):
    doc = {
        "joints": list(sidecar.joints),
        "weights": sidecar.weights,
        "limbs": {k: list(v) for k, v in sidecar.limbs.items()},
        "excluded": list(sidecar.excluded),
    }
    return json.dumps(doc, separators=(",", ":")) + "\n"


def _strict_json(text):
    def bad_constant(name):
        raise ValueError(f"non-finite constant {name}")

    try:
        return json.loads(text, parse_constant=bad_constant)
    except (ValueError, RecursionError) as exc:
        line = getattr(exc, "lineno", None)
        msg = getattr(exc, "msg", str(exc))
        raise ParseError(f"invalid JSON: {msg}", line) from None


def parse_weights(text):
    """Parse and validate a weights sidecar."""
    if not isinstance(text, str):
        raise ParseError("weights input must be text")
    doc = _strict_json(text)
    if not isinstance(doc, dict):
        raise ParseError("weights sidecar must be a JSON object")
    unknown = set(doc) - _SIDECAR_KEYS
    if unknown:
        raise ParseError(f"unknown sidecar keys: {sorted(unknown)}")
    joints = doc.get("joints")
    rows = doc.get("weights")
    if not isinstance(joints, list) or not all(isinstance(j, str) for j in joints):
        raise ParseError("'joints' must be a list of names")
    if len(set(joints)) != len(joints):
        raise ParseError("'joints' contains duplicates")
    if not isinstance(rows, list):
        raise ParseError("'weights' must be a list of per-vertex lists")
    clean = []
    for v, row in enumerate(rows):
        if not isinstance(row, list):
            raise ParseError(f"weights of vertex {v} must be a list")
        pairs = []
        for pair in row:
            if (
                not isinstance(pair, list)
                or len(pair) != 2
                or isinstance(pair[0], bool)
                or not isinstance(pair[0], int)
                or isinstance(pair[1], bool)
                or not isinstance(pair[1], (int, float))
            ):
                raise ParseError(f"vertex {v}: entries must be [joint, weight]")
            j, w = pair
            if not 0 <= j < len(joints):
                raise ParseError(f"vertex {v}: joint index {j} out of range")
            if not math.isfinite(w) or w < 0:
                raise ParseError(f"vertex {v}: weight {w!r} must be finite and >= 0")
            pairs.append([j, float(w)])
        s = sum(w for _, w in pairs)
        if abs(s - 1.0) > 1e-6:
            raise ParseError(f"vertex {v}: weights sum to {s:.9g}, not 1")
        clean.append(pairs)
    limbs = doc.get("limbs", {})
    excluded = doc.get("excluded", [])
    if not isinstance(limbs, dict) or not all(
        isinstance(v, list) and all(isinstance(n, str) and n in joints for n in v)
        for v in limbs.values()
    ):
        raise ParseError("'limbs' must map limb names to lists of known joint names")
    if not isinstance(excluded, list) or not all(isinstance(n, str) and n in joints for n in excluded):
        raise ParseError("'excluded' must be a list of known joint names")
    return WeightsSidecar(joints, clean, limbs, excluded)


def read_weights(path):
    with open(path, encoding="utf-8", errors="replace") as f:
        return parse_weights(f.read())


def save_weights(path, sidecar):
    with open(path, "w", newline="\n") as f:
        f.write(dump_weights(sidecar))


_CONFIG_SECTIONS = {"preset", "weights", "optimizer", "samples", "scene"}
_OPT_KEYS = {f.name for f in fields(OptimizerConfig)} - {"weights", "n_query", "n_reference"}


def _check_keys(section, doc, allowed):
    if not isinstance(doc, dict):
        raise ParseError(f"config section {section!r} must be an object")
    unknown = set(doc) - set(allowed)
    if unknown:
        raise ParseError(f"unknown keys in {section!r}: {sorted(unknown)}")


def parse_config(text, preset=None):
    """
    Parse a run configuration into ``(OptimizerConfig, scene_params)``.

    Top-level sections are ``preset``, ``weights``, ``optimizer``,
    ``samples`` and ``scene``; any other key is an error. An explicit
    ``preset`` argument overrides the file's.
    """
    doc = _strict_json(text) if text else {}
    _check_keys("config", doc, _CONFIG_SECTIONS)
    name = preset or doc.get("preset", "final")
    if name not in PRESETS:
        raise ParseError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    wdoc = doc.get("weights", {})
    _check_keys("weights", wdoc, LossWeights().as_dict())
    wd = PRESETS[name].as_dict()
    wd.update(wdoc)
    odoc = doc.get("optimizer", {})
    _check_keys("optimizer", odoc, _OPT_KEYS)
    sdoc = doc.get("samples", {})
    _check_keys("samples", sdoc, {"query", "reference"})
    scene = doc.get("scene", {})
    _check_keys("scene", scene, {
        "scene_id", "torso_radius", "target_scale", "limb_radius", "sweep_min", "sweep_max",
        "n_frames", "seed", "resolution", "frame_rate",
    })
    try:
        cfg = OptimizerConfig(
            weights=LossWeights(**wd),
            n_query=int(sdoc.get("query", OptimizerConfig.n_query)),
            n_reference=int(sdoc.get("reference", OptimizerConfig.n_reference)),
            **odoc,
        )
    except (TypeError, ValueError) as exc:
        raise ParseError(f"invalid config value: {exc}") from None
    return cfg, scene


def read_config(path, preset=None):
    with open(path, encoding="utf-8", errors="replace") as f:
        return parse_config(f.read(), preset)
