"""Random-byte and mutation fuzzing of the text parsers."""

import numpy as np

from skinretarget.exceptions import ParseError
from skinretarget.io.bvh import parse_bvh
from skinretarget.io.obj import parse_obj
from skinretarget.io.sidecar import parse_config, parse_weights

SEED_BVH = """HIERARCHY
ROOT Hips
{
\tOFFSET 0.0 1.0 0.0
\tCHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation
\tJOINT Spine
\t{
\t\tOFFSET 0.0 0.2 0.0
\t\tCHANNELS 3 Zrotation Xrotation Yrotation
\t\tEnd Site
\t\t{
\t\t\tOFFSET 0.0 0.1 0.0
\t\t}
\t}
}
MOTION
Frames: 2
Frame Time: 0.033333
0 0 0 10 20 30 1 2 3
0.1 0 0 15 25 35 4 5 6
"""

SEED_OBJ = """v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
vn 0 0 1
vt 0 0
f 1//1 2//1 3//1 4//1
f 1/1/1 3/1/1 4/1/1
"""

SEED_WEIGHTS = '{"joints":["Hips","Spine"],"weights":[[[0,1.0]],[[0,0.25],[1,0.75]]],"limbs":{"a":["Spine"]},"excluded":[]}'

SEED_CONFIG = '{"preset":"curv","weights":{"lp":2.0},"optimizer":{"n_iter":5},"samples":{"query":10}}'

PARSERS = (
    (parse_bvh, SEED_BVH),
    (parse_obj, SEED_OBJ),
    (parse_weights, SEED_WEIGHTS),
    (parse_config, SEED_CONFIG),
)
_TOKENS = [b"{", b"}", b"[", b"]", b" ", b"\n", b"-", b".", b"e", b"nan", b"inf", b"1e400", b"0", b"9",
           b"JOINT", b"End", b"Site", b"OFFSET", b"CHANNELS", b"f", b"v", b"vn", b"/", b'"', b":", b","]


def mutate(seed_text, rng):
    data = bytearray(seed_text.encode())
    for _ in range(int(rng.integers(1, 6))):
        op = rng.integers(0, 4)
        pos = int(rng.integers(0, len(data) + 1))
        if op == 0 and data:
            del data[pos : pos + int(rng.integers(1, 8))]
        elif op == 1:
            data[pos:pos] = _TOKENS[int(rng.integers(len(_TOKENS)))]
        elif op == 2 and data:
            data[min(pos, len(data) - 1)] = int(rng.integers(0, 256))
        else:
            data[pos:pos] = rng.bytes(int(rng.integers(1, 12)))
    return bytes(data)


def fuzz(n_inputs, seed=0):
    """
    Feed ``n_inputs`` byte strings (half pure noise, half mutated seeds) to
    every parser. Returns ``(accepted, diagnosed)``; anything other than a
    clean parse or a ParseError propagates.
    """
    rng = np.random.default_rng(seed)
    accepted = diagnosed = 0
    for i in range(n_inputs):
        parser, seed_text = PARSERS[i % len(PARSERS)]
        if i % 2:
            raw = rng.bytes(int(rng.integers(0, 200)))
        else:
            raw = mutate(seed_text, rng)
        text = raw.decode("utf-8", errors="replace")
        try:
            parser(text)
            accepted += 1
        except ParseError as exc:
            assert str(exc)
            diagnosed += 1
    return accepted, diagnosed
