"""
BVH reader and writer.

Rotation channels are intrinsic Euler angles in degrees applied in the
declared order, so ``Zrotation Xrotation Yrotation`` means ``Rz @ Rx @ Ry``.
The root's world position (offset plus positional channels) becomes the
motion's global translation. Positional channels on non-root joints are
read and discarded.
"""

import math

import numpy as np
from scipy.spatial.transform import Rotation

from ..exceptions import ParseError
from ..quaternion import quat_canonicalize
from ..skeleton import Motion, Skeleton

_ROT = {"Xrotation": "X", "Yrotation": "Y", "Zrotation": "Z"}
_POS = {"Xposition": 0, "Yposition": 1, "Zposition": 2}
WRITE_ORDER = "ZXY"


def _float(tok, line):
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(f"expected a number, got {tok[:40]!r}", line) from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite number {tok[:40]!r}", line)
    return v


def euler_to_quat(angles_deg, order):
    """Quaternions ``(N, 4)`` from intrinsic Euler angles in degrees."""
    xyzw = Rotation.from_euler(order.upper(), angles_deg, degrees=True).as_quat()
    return quat_canonicalize(np.asarray(xyzw)[..., [3, 0, 1, 2]])


def quat_to_euler(q, order=WRITE_ORDER):
    """Intrinsic Euler angles in degrees from quaternions ``(N, 4)``."""
    q = np.asarray(q, dtype=np.float64)
    return Rotation.from_quat(q[..., [1, 2, 3, 0]]).as_euler(order.upper(), degrees=True)


class _Tokens:
    def __init__(self, text):
        self.items = []
        for n, raw in enumerate(text.splitlines(), start=1):
            for tok in raw.split():
                self.items.append((tok, n))
        self.pos = 0

    def peek(self):
        return self.items[self.pos][0] if self.pos < len(self.items) else None

    def line(self):
        if self.pos < len(self.items):
            return self.items[self.pos][1]
        return self.items[-1][1] if self.items else 1

    def next(self, what="token"):
        if self.pos >= len(self.items):
            raise ParseError(f"unexpected end of file, expected {what}", self.line())
        tok = self.items[self.pos]
        self.pos += 1
        return tok

    def expect(self, word):
        tok, n = self.next(repr(word))
        if tok != word:
            raise ParseError(f"expected {word!r}, got {tok[:40]!r}", n)
        return n


def parse_bvh(text):
    """Parse BVH text into ``(Skeleton, Motion)``."""
    if not isinstance(text, str):
        raise ParseError("BVH input must be text")
    tk = _Tokens(text)
    tk.expect("HIERARCHY")
    names, parents, offsets, channels, end_offsets = [], [], [], [], {}
    tok, n = tk.next("ROOT")
    if tok != "ROOT":
        raise ParseError(f"expected 'ROOT', got {tok[:40]!r}", n)
    # stack entries: joint index, or -2 for an End Site block
    stack = []
    pending = ("joint", -1)
    while True:
        kind, parent = pending
        if kind == "joint":
            name, n = tk.next("joint name")
            if name in ("{", "}"):
                raise ParseError("missing joint name", n)
            tk.expect("{")
            idx = len(names)
            names.append(name)
            parents.append(parent)
            tk.expect("OFFSET")
            offsets.append([_float(tk.next("offset")[0], tk.line()) for _ in range(3)])
            tok, n = tk.next("CHANNELS")
            if tok != "CHANNELS":
                raise ParseError(f"expected 'CHANNELS', got {tok[:40]!r}", n)
            cnt_tok, n = tk.next("channel count")
            if not cnt_tok.isdigit() or int(cnt_tok) > 6:
                raise ParseError(f"bad channel count {cnt_tok[:40]!r}", n)
            chans = []
            for _ in range(int(cnt_tok)):
                c, n = tk.next("channel name")
                if c not in _ROT and c not in _POS:
                    raise ParseError(f"unknown channel {c[:40]!r}", n)
                chans.append(c)
            rots = [c for c in chans if c in _ROT]
            if len(rots) not in (0, 3) or len(set(rots)) != len(rots):
                raise ParseError("rotation channels must name X, Y and Z exactly once", n)
            channels.append(chans)
            stack.append(idx)
        else:
            tk.expect("{")
            tk.expect("OFFSET")
            off = [_float(tk.next("offset")[0], tk.line()) for _ in range(3)]
            end_offsets[parent] = off
            stack.append(-2)
        # children or close
        while True:
            tok, n = tk.next("JOINT, End or '}'")
            if tok == "JOINT":
                if stack[-1] == -2:
                    raise ParseError("End Site cannot have children", n)
                pending = ("joint", stack[-1])
                break
            if tok == "End":
                tk.expect("Site")
                if stack[-1] == -2:
                    raise ParseError("End Site cannot have children", n)
                pending = ("end", stack[-1])
                break
            if tok == "}":
                stack.pop()
                if not stack:
                    pending = None
                    break
                continue
            raise ParseError(f"unexpected token {tok[:40]!r} in hierarchy", n)
        if pending is None:
            break

    tk.expect("MOTION")
    tk.expect("Frames:")
    tok, n = tk.next("frame count")
    if not tok.isdigit():
        raise ParseError(f"bad frame count {tok[:40]!r}", n)
    n_frames = int(tok)
    tk.expect("Frame")
    tk.expect("Time:")
    frame_time = _float(tk.next("frame time")[0], tk.line())
    if frame_time <= 0:
        raise ParseError("frame time must be positive", tk.line())
    n_chan = sum(len(c) for c in channels)
    remaining = len(tk.items) - tk.pos
    if remaining != n_frames * n_chan:
        raise ParseError(
            f"expected {n_frames} frames x {n_chan} channels = {n_frames * n_chan} values, found {remaining}",
            tk.line(),
        )
    if n_frames == 0:
        raise ParseError("motion has no frames", tk.line())
    data = np.empty(n_frames * n_chan)
    for i in range(len(data)):
        tok, n = tk.items[tk.pos + i]
        data[i] = _float(tok, n)
    data = data.reshape(n_frames, n_chan)

    k = len(names)
    try:
        skeleton = Skeleton(names, parents, np.array(offsets), end_offsets)
    except ValueError as exc:
        raise ParseError(f"invalid hierarchy: {exc}") from None
    rotations = np.empty((n_frames, k, 4))
    globals_ = np.zeros((n_frames, 4))
    globals_[:, :3] = skeleton.offsets[0]
    col = 0
    for j, chans in enumerate(channels):
        block = data[:, col : col + len(chans)]
        col += len(chans)
        rot_cols = [i for i, c in enumerate(chans) if c in _ROT]
        if rot_cols:
            order = "".join(_ROT[chans[i]] for i in rot_cols)
            rotations[:, j] = euler_to_quat(block[:, rot_cols], order)
        else:
            rotations[:, j] = (1.0, 0.0, 0.0, 0.0)
        if j == 0:
            for i, c in enumerate(chans):
                if c in _POS:
                    globals_[:, _POS[c]] += block[:, i]
    return skeleton, Motion(rotations, globals_, 1.0 / frame_time)


def write_bvh(skeleton, motion):
    """
    BVH text for a skeleton and motion. Joints are written with
    ``Zrotation Xrotation Yrotation`` channels and 6-decimal values.
    """
    if motion.n_frames == 0:
        raise ValueError("cannot write a motion with no frames")
    if motion.n_joints != skeleton.n_joints:
        raise ValueError("motion and skeleton differ in joint count")
    children = [[] for _ in range(skeleton.n_joints)]
    for j in range(1, skeleton.n_joints):
        children[skeleton.parents[j]].append(j)
    rot_chan = "Zrotation Xrotation Yrotation"
    lines = ["HIERARCHY"]

    def fmt(v):
        return " ".join(f"{x:.6f}" for x in v)

    # iterative depth-first emission keeps deep chains off the call stack
    order = []
    todo = [(0, 0, "open")]
    while todo:
        j, depth, what = todo.pop()
        pad = "\t" * depth
        if what == "close":
            lines.append(f"{pad}}}")
            continue
        order.append(j)
        head = "ROOT" if j == 0 else "JOINT"
        lines.append(f"{pad}{head} {skeleton.names[j]}")
        lines.append(f"{pad}{{")
        lines.append(f"{pad}\tOFFSET {fmt(skeleton.offsets[j])}")
        if j == 0:
            lines.append(f"{pad}\tCHANNELS 6 Xposition Yposition Zposition {rot_chan}")
        else:
            lines.append(f"{pad}\tCHANNELS 3 {rot_chan}")
        todo.append((j, depth, "close"))
        if not children[j]:
            end = skeleton.end_offsets.get(j, np.zeros(3))
            lines.append(f"{pad}\tEnd Site")
            lines.append(f"{pad}\t{{")
            lines.append(f"{pad}\t\tOFFSET {fmt(end)}")
            lines.append(f"{pad}\t}}")
        for c in reversed(children[j]):
            todo.append((c, depth + 1, "open"))

    lines.append("MOTION")
    lines.append(f"Frames: {motion.n_frames}")
    lines.append(f"Frame Time: {1.0 / motion.frame_rate:.9f}")
    euler = quat_to_euler(motion.rotations.reshape(-1, 4)).reshape(motion.n_frames, -1, 3)
    root_chan = motion.globals[:, :3] - skeleton.offsets[0]
    for t in range(motion.n_frames):
        vals = list(root_chan[t])
        for j in order:
            vals.extend(euler[t, j])
        lines.append(fmt(vals))
    return "\n".join(lines) + "\n"


def read_bvh(path):
    with open(path, encoding="utf-8", errors="replace") as f:
        return parse_bvh(f.read())


def save_bvh(path, skeleton, motion):
    with open(path, "w", newline="\n") as f:
        f.write(write_bvh(skeleton, motion))
