#!/usr/bin/env python3
"""Generate the shipped offset-circles meshes (node/element text format).

Domain: unit disc minus the disc of radius 0.1 centred at (0.5, 0).
Points: equispaced on both circles, interior rings graded away from the
inner circle, Delaunay-triangulated with a few Laplacian smoothing sweeps.
Output is deterministic (no randomness).

Usage: gen_offset_circles.py OUTER INNER GROWTH PREFIX
"""
import math
import sys

import numpy as np
from scipy.spatial import Delaunay

R1, R2, CX, CY = 1.0, 0.1, 0.5, 0.0


def build(n_outer, n_inner, growth, smooth_sweeps=8):
    h_out = 2 * math.pi * R1 / n_outer
    h_in = 2 * math.pi * R2 / n_inner
    outer = [(R1 * math.cos(2 * math.pi * i / n_outer),
              R1 * math.sin(2 * math.pi * i / n_outer)) for i in range(n_outer)]
    inner = [(CX + R2 * math.cos(2 * math.pi * i / n_inner),
              CY + R2 * math.sin(2 * math.pi * i / n_inner)) for i in range(n_inner)]

    def size(p):
        d = math.hypot(p[0] - CX, p[1] - CY) - R2
        return min(h_out, h_in + growth * max(d, 0.0))

    interior = []
    r = R2
    ring = 0
    while r < 2 * R1:
        h = min(h_out, h_in + growth * (r - R2))
        r += h * math.sqrt(3) / 2
        ring += 1
        h = min(h_out, h_in + growth * (r - R2))
        m = max(6, int(round(2 * math.pi * r / h)))
        phase = 0.5 * (ring % 2) * 2 * math.pi / m
        for j in range(m):
            th = phase + 2 * math.pi * j / m
            p = (CX + r * math.cos(th), CY + r * math.sin(th))
            rho = math.hypot(*p)
            if rho < R1 - 0.7 * size(p):
                interior.append(p)

    fixed = np.array(outer + inner)
    free = np.array(interior)
    nfix = len(fixed)

    def triangulate(pts):
        tri = Delaunay(pts).simplices
        keep = []
        for t in tri:
            c = pts[t].mean(axis=0)
            if math.hypot(c[0] - CX, c[1] - CY) > R2 and math.hypot(*c) < R1:
                keep.append(t)
        return np.array(keep)

    pts = np.vstack([fixed, free])
    for _ in range(smooth_sweeps):
        tris = triangulate(pts)
        acc = np.zeros_like(pts)
        cnt = np.zeros(len(pts))
        for t in tris:
            for a in range(3):
                for b in range(3):
                    if a != b:
                        acc[t[a]] += pts[t[b]]
                        cnt[t[a]] += 1
        mov = cnt[nfix:] > 0
        newfree = pts[nfix:].copy()
        newfree[mov] = acc[nfix:][mov] / cnt[nfix:][mov, None]
        pts = np.vstack([fixed, newfree])
    tris = triangulate(pts)
    markers = [1] * n_outer + [2] * n_inner + [0] * len(free)
    # orient counter-clockwise
    out = []
    for t in tris:
        a, b, c = pts[t]
        area = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        out.append((t[0], t[1], t[2]) if area > 0 else (t[0], t[2], t[1]))
    return pts, markers, out


def write(prefix, pts, markers, tris):
    with open(prefix + ".node", "w", newline="\n") as f:
        f.write(f"{len(pts)} 2\n")
        for i, (p, m) in enumerate(zip(pts, markers)):
            f.write(f"{i + 1} {p[0]:.17g} {p[1]:.17g} {m}\n")
    with open(prefix + ".ele", "w", newline="\n") as f:
        f.write(f"{len(tris)} 3\n")
        for i, t in enumerate(tris):
            f.write(f"{i + 1} {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


def main():
    n_outer, n_inner, growth, prefix = int(sys.argv[1]), int(sys.argv[2]), float(sys.argv[3]), sys.argv[4]
    pts, markers, tris = build(n_outer, n_inner, growth)
    write(prefix, pts, markers, tris)
    edges = {}
    for t in tris:
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            key = (min(a, b), max(a, b))
            edges[key] = edges.get(key, 0) + 1
    lens = [np.linalg.norm(pts[a] - pts[b]) for a, b in edges]
    nv, ne = len(pts), len(edges)
    print(f"vertices={nv} triangles={len(tris)} edges={ne} "
          f"boundary_edges={sum(1 for c in edges.values() if c == 1)} "
          f"bad={sum(1 for c in edges.values() if c > 2)} "
          f"min_edge={min(lens):.6g} max_edge={max(lens):.6g} "
          f"dofs={2 * (nv + ne) + nv}")


if __name__ == "__main__":
    main()
