"""File formats: BVH, OBJ, JSON sidecars and synthetic scenes."""

from .bvh import parse_bvh, read_bvh, save_bvh, write_bvh
from .obj import parse_obj, read_obj, save_obj, write_obj
from .sidecar import (
    WeightsSidecar,
    dump_weights,
    parse_config,
    parse_weights,
    read_config,
    read_weights,
    save_weights,
)
from .synth import SceneSpec, build_character, generate_scene, humanoid_skeleton
