"""Minimal Wavefront OBJ support: ``v``, ``vn`` and ``f`` records."""

import math

import numpy as np

from ..exceptions import ParseError

_IGNORED = {"vt", "vp", "o", "g", "s", "usemtl", "mtllib", "l", "p"}


def _floats(parts, n, line):
    if len(parts) < n:
        raise ParseError(f"expected {n} numbers", line)
    out = []
    for tok in parts[:n]:
        try:
            v = float(tok)
        except ValueError:
            raise ParseError(f"expected a number, got {tok[:40]!r}", line) from None
        if not math.isfinite(v):
            raise ParseError(f"non-finite number {tok[:40]!r}", line)
        out.append(v)
    return out


def _index(tok, count, line, what):
    try:
        i = int(tok)
    except ValueError:
        raise ParseError(f"bad {what} index {tok[:40]!r}", line) from None
    if i < 0:
        i = count + i
    else:
        i -= 1
    if not 0 <= i < count:
        raise ParseError(f"{what} index {tok[:40]} out of range", line)
    return i


def face_normals_area_weighted(vertices, faces):
    """Per-vertex normals accumulated from area-weighted face normals."""
    acc = np.zeros_like(vertices)
    if len(faces):
        a, b, c = (vertices[faces[:, i]] for i in range(3))
        fn = np.cross(b - a, c - a)  # length = twice the area
        for i in range(3):
            np.add.at(acc, faces[:, i], fn)
    n = np.linalg.norm(acc, axis=1, keepdims=True)
    out = np.zeros_like(acc)
    ok = n[:, 0] > 0
    out[ok] = acc[ok] / n[ok]
    out[~ok] = (0.0, 1.0, 0.0)
    return out


def parse_obj(text):
    """
    Parse OBJ text into ``(vertices, normals, faces)``.

    Polygons are fan-triangulated. Normals referenced by ``f`` records are
    assigned to their positions (averaged where a position gets several);
    positions without any are given area-weighted face normals.
    """
    if not isinstance(text, str):
        raise ParseError("OBJ input must be text")
    verts, vnorms, faces, corner_normals = [], [], [], []
    for n, raw in enumerate(text.splitlines(), start=1):
        parts = raw.split("#", 1)[0].split()
        if not parts:
            continue
        tag, rest = parts[0], parts[1:]
        if tag == "v":
            verts.append(_floats(rest, 3, n))
        elif tag == "vn":
            vnorms.append(_floats(rest, 3, n))
        elif tag == "f":
            if len(rest) < 3:
                raise ParseError("face needs at least 3 vertices", n)
            idx, nidx = [], []
            for ent in rest:
                fields = ent.split("/")
                if len(fields) > 3 or fields[0] == "":
                    raise ParseError(f"bad face entry {ent[:40]!r}", n)
                idx.append(_index(fields[0], len(verts), n, "vertex"))
                if len(fields) == 3 and fields[2] != "":
                    nidx.append(_index(fields[2], len(vnorms), n, "normal"))
                else:
                    nidx.append(None)
            for i in range(1, len(idx) - 1):
                faces.append((idx[0], idx[i], idx[i + 1]))
            corner_normals.extend(zip(idx, nidx))
        elif tag in _IGNORED:
            continue
        else:
            raise ParseError(f"unknown record {tag[:40]!r}", n)
    if not verts:
        raise ParseError("no vertices")
    v = np.array(verts, dtype=np.float64)
    f = np.array(faces, dtype=np.int64).reshape(-1, 3)
    normals = face_normals_area_weighted(v, f)
    if vnorms:
        vn = np.array(vnorms, dtype=np.float64)
        acc = np.zeros_like(v)
        has = np.zeros(len(v), dtype=bool)
        for vi, ni in corner_normals:
            if ni is not None:
                acc[vi] += vn[ni]
                has[vi] = True
        lens = np.linalg.norm(acc, axis=1)
        ok = has & (lens > 0)
        normals[ok] = acc[ok] / lens[ok, None]
    return v, normals, f


def write_obj(vertices, normals, faces):
    lines = [f"v {x:.6f} {y:.6f} {z:.6f}" for x, y, z in vertices]
    lines += [f"vn {x:.6f} {y:.6f} {z:.6f}" for x, y, z in normals]
    lines += [f"f {a + 1}//{a + 1} {b + 1}//{b + 1} {c + 1}//{c + 1}" for a, b, c in faces]
    return "\n".join(lines) + "\n"


def read_obj(path):
    with open(path, encoding="utf-8", errors="replace") as f:
        return parse_obj(f.read())


def save_obj(path, vertices, normals, faces):
    with open(path, "w", newline="\n") as f:
        f.write(write_obj(vertices, normals, faces))
