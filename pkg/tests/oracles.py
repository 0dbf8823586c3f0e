"""Brute-force reference implementations used by the tests.

Everything here is deliberately naive: plain Python loops over pixels or
exhaustive enumeration, sharing no code with the package.
"""
from __future__ import annotations

import functools
import itertools
import math

import numpy as np

RING = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)]


def _pixel(img, y, x):
    h, w = len(img), len(img[0])
    return img[y][x] if 0 <= y < h and 0 <= x < w else 0


def flood_components(img, value=1, eight=True) -> list[set]:
    """Connected components of pixels equal to ``value`` by iterative flood fill."""
    img = np.asarray(img).tolist()
    h, w = len(img), len(img[0])
    steps = RING if eight else [(-1, 0), (0, 1), (1, 0), (0, -1)]
    seen, comps = set(), []
    for y in range(h):
        for x in range(w):
            if img[y][x] != value or (y, x) in seen:
                continue
            comp, stack = set(), [(y, x)]
            seen.add((y, x))
            while stack:
                cy, cx = stack.pop()
                comp.add((cy, cx))
                for dy, dx in steps:
                    ny, nx = cy + dy, cx + dx
                    if 0 <= ny < h and 0 <= nx < w and img[ny][nx] == value and (ny, nx) not in seen:
                        seen.add((ny, nx))
                        stack.append((ny, nx))
            comps.append(comp)
    return comps


def holes(img) -> int:
    """Background 4-components that do not touch the image border."""
    arr = np.asarray(img)
    h, w = arr.shape
    return sum(1 for c in flood_components(arr, value=0, eight=False)
               if not any(y in (0, h - 1) or x in (0, w - 1) for y, x in c))


def neighbour_count(img, y, x) -> int:
    return sum(_pixel(img, y + dy, x + dx) for dy, dx in RING)


def crossing_number(img, y, x) -> int:
    vals = [_pixel(img, y + dy, x + dx) for dy, dx in RING]
    return sum(1 for k in range(8) if vals[k] == 0 and vals[(k + 1) % 8] == 1)


def scan_skeleton(skel) -> dict[str, int]:
    """Endpoints, junctions and isolated pixels by a per-pixel 3x3 scan."""
    s = np.asarray(skel).tolist()
    out = {"ends": 0, "junctions": 0, "isolated": 0}
    for y in range(len(s)):
        for x in range(len(s[0])):
            if not s[y][x]:
                continue
            n = neighbour_count(s, y, x)
            out["ends"] += n == 1
            out["isolated"] += n == 0
            out["junctions"] += crossing_number(s, y, x) >= 3
    return out


def best_max_leaf(buckets, stable, labels, features) -> int:
    """Smallest achievable largest-leaf size over every tree that splits only
    on ``features``, where a node may split on a feature only if it is stable
    for all labels at that node."""

    @functools.lru_cache(maxsize=None)
    def best(group):
        out = len(group)
        for f in features:
            if not all(f in stable[lab] for lab in group):
                continue
            parts = {}
            for lab in group:
                parts.setdefault(buckets[lab][f], []).append(lab)
            if len(parts) > 1:
                out = min(out, max(best(tuple(p)) for p in parts.values()))
        return out

    return best(tuple(sorted(labels)))


def best_two_partition(points) -> tuple[float, tuple[int, ...]]:
    """Minimum within-cluster sum of squares over all 2-partitions."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    best = (math.inf, ())
    for mask in range(1, 2 ** (n - 1)):
        lab = tuple((mask >> i) & 1 for i in range(n))
        cost = 0.0
        for k in (0, 1):
            grp = pts[[i for i in range(n) if lab[i] == k]]
            cost += float(((grp - grp.mean(axis=0)) ** 2).sum())
        if cost < best[0]:
            best = (cost, lab)
    return best


def best_matching_accuracy(assignments, truth) -> float:
    """Maximum agreement over every injective cluster -> label mapping."""
    clusters = sorted(set(assignments), key=str)
    labels = sorted(set(truth), key=str)
    n = len(truth)
    best = 0
    slots = labels + [None] * max(0, len(clusters) - len(labels))
    for perm in itertools.permutations(slots, len(clusters)):
        m = dict(zip(clusters, perm))
        best = max(best, sum(1 for a, t in zip(assignments, truth) if m[a] == t))
    return best / n


def levenshtein(a, b) -> int:
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]
