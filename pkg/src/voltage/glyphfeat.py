"""Hand-crafted glyph features F1..F32 for a single symbol image."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import ndimage

from .raster import as_binary, tight_crop
from .segmentation import skeletonize


class FeatureId(enum.IntEnum):
    F1 = 1; F2 = 2; F3 = 3; F4 = 4; F5 = 5; F6 = 6; F7 = 7; F8 = 8  # noqa: E702
    F9 = 9; F10 = 10; F11 = 11; F12 = 12; F13 = 13; F14 = 14; F15 = 15; F16 = 16  # noqa: E702
    F17 = 17; F18 = 18; F19 = 19; F20 = 20; F21 = 21; F22 = 22; F23 = 23; F24 = 24  # noqa: E702
    F25 = 25; F26 = 26; F27 = 27; F28 = 28; F29 = 29; F30 = 30; F31 = 31; F32 = 32  # noqa: E702


class Kind(enum.Enum):
    BOOLEAN = "boolean"
    COUNT = "count"
    RANGE = "range"


BOOLEAN_FEATURES = frozenset(FeatureId(i) for i in (1, 4, 5, 13, 14))
COUNT_FEATURES = frozenset(FeatureId(i) for i in (2, 3, 6, 7, 8, 9, 10, 11, 15, 16, 17))
RANGE_FEATURES = frozenset(FeatureId(i) for i in [12, *range(18, 33)])

N_FEATURES = 32


def kind_of(fid: FeatureId) -> Kind:
    if fid in BOOLEAN_FEATURES:
        return Kind.BOOLEAN
    if fid in COUNT_FEATURES:
        return Kind.COUNT
    return Kind.RANGE


_EIGHT = np.ones((3, 3), dtype=int)
_FOUR = ndimage.generate_binary_structure(2, 1)


def longest_run(vec, tolerance: int = 0) -> int:
    """Longest stretch of ink, bridging background gaps of at most ``tolerance``."""
    idx = np.flatnonzero(np.asarray(vec))
    if idx.size == 0:
        return 0
    start, best = idx[0], 1
    for prev, cur in zip(idx[:-1], idx[1:]):
        if cur - prev - 1 > tolerance:
            start = cur
        best = max(best, cur - start + 1)
    return int(best)


def count_runs(vec) -> int:
    v = np.asarray(vec).astype(np.int8)
    return int(v[0] + np.count_nonzero(np.diff(v) == 1)) if v.size else 0


def neighbour_counts(bits: np.ndarray) -> np.ndarray:
    k = np.ones((3, 3), dtype=int)
    k[1, 1] = 0
    return ndimage.convolve(bits.astype(int), k, mode="constant", cval=0)


def crossing_numbers(bits: np.ndarray) -> np.ndarray:
    """0->1 transitions around each pixel's 8-neighbourhood (P2..P9, P2)."""
    p = np.pad(bits.astype(np.int8), 1)
    h, w = bits.shape
    order = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0)]
    ring = [p[1 + dy:1 + dy + h, 1 + dx:1 + dx + w] for dy, dx in order]
    return sum(((ring[k] == 0) & (ring[k + 1] == 1)).astype(int) for k in range(8))


def skeleton_graph(skel: np.ndarray) -> dict[tuple[int, int], list[tuple[int, int]]]:
    """8-adjacency graph of skeleton pixels without corner-cutting diagonals.

    A diagonal edge is dropped when the two pixels share an inked 4-neighbour,
    which keeps degrees meaningful on staircase and L-shaped strokes.
    """
    nodes = list(zip(*map(lambda a: a.tolist(), np.nonzero(skel))))
    ink = set(nodes)
    graph = {}
    for y, x in nodes:
        nbrs = []
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if (dy, dx) == (0, 0) or (y + dy, x + dx) not in ink:
                    continue
                if dy and dx and ((y + dy, x) in ink or (y, x + dx) in ink):
                    continue
                nbrs.append((y + dy, x + dx))
        graph[(y, x)] = nbrs
    return graph


def _turn(prev, cur, nxt) -> int:
    """+1 clockwise 90-degree turn, -1 anticlockwise, 0 otherwise (screen coords, y down)."""
    v1 = (cur[1] - prev[1], cur[0] - prev[0])
    v2 = (nxt[1] - cur[1], nxt[0] - cur[0])
    dot = v1[0] * v2[0] + v1[1] * v2[1]
    cross = v1[0] * v2[1] - v1[1] * v2[0]
    if dot != 0 or cross == 0:
        return 0
    return 1 if cross > 0 else -1


def bend_points(skel: np.ndarray) -> tuple[int, int]:
    """(clockwise, anticlockwise) 90-degree bends along traced skeleton chains.

    Open chains are walked from their raster-first end; closed loops start at
    their top-left pixel heading right, i.e. clockwise on screen.
    """
    graph = skeleton_graph(skel)
    used = set()
    cw = acw = 0

    def edge(a, b):
        return (a, b) if a < b else (b, a)

    def score(path, closed):
        nonlocal cw, acw
        n = len(path)
        rng = range(n) if closed else range(1, n - 1)
        for i in rng:
            cur = path[i]
            if len(graph[cur]) != 2:
                continue
            t = _turn(path[i - 1], cur, path[(i + 1) % n])
            cw += t == 1
            acw += t == -1

    for start in sorted(graph):
        if len(graph[start]) == 2:
            continue
        for nb in graph[start]:
            if edge(start, nb) in used:
                continue
            path = [start, nb]
            used.add(edge(start, nb))
            while len(graph[path[-1]]) == 2:
                nxt = [q for q in graph[path[-1]] if edge(path[-1], q) not in used]
                if not nxt:
                    break
                used.add(edge(path[-1], nxt[0]))
                path.append(nxt[0])
            score(path, closed=False)
    for start in sorted(graph):
        if len(graph[start]) != 2 or all(edge(start, q) in used for q in graph[start]):
            continue
        first = max(graph[start], key=lambda q: (q[1], -q[0]))
        path = [start]
        cur = first
        used.add(edge(start, first))
        while cur != start:
            path.append(cur)
            nxt = [q for q in graph[cur] if edge(cur, q) not in used]
            if not nxt:
                break
            used.add(edge(cur, nxt[0]))
            cur = nxt[0]
        score(path, closed=cur == start)
    return cw, acw


@dataclass
class FeatureContext:
    raw: np.ndarray
    skeleton: np.ndarray
    symmetry_threshold: float = 0.8
    line_straightness_tolerance: int = 0
    headline_band: float = 0.25
    sidebar_band: float = 0.15
    line_cover: float = 0.8
    # top/bottom depths normalised by height rather than width
    vertical_depths_by_height: bool = True

    def __post_init__(self):
        if self.raw.shape != self.skeleton.shape:
            raise ValueError("raw and skeleton must share dimensions")
        if not 0 <= self.symmetry_threshold <= 1:
            raise ValueError("symmetry_threshold outside [0, 1]")

    @classmethod
    def from_image(cls, img, **kw) -> "FeatureContext":
        raw, box = tight_crop(as_binary(img))
        if box is None:
            raise ValueError("symbol image has no ink")
        return cls(raw, skeletonize(raw), **kw)

    @property
    def height(self) -> int:
        return self.raw.shape[0]

    @property
    def width(self) -> int:
        return self.raw.shape[1]

    @cached_property
    def headline_rows(self) -> list[int]:
        band = max(1, math.ceil(self.headline_band * self.height))
        need = self.line_cover * self.width
        return [r for r in range(band) if longest_run(self.raw[r], self.line_straightness_tolerance) >= need]

    @cached_property
    def holes(self) -> list[np.ndarray]:
        bg = self.raw == 0
        labels, n = ndimage.label(bg, structure=_FOUR)
        border = set(np.unique(np.concatenate([labels[0], labels[-1], labels[:, 0], labels[:, -1]]))) - {0}
        return [labels == k for k in range(1, n + 1) if k not in border]

    @cached_property
    def skeleton_neighbours(self) -> np.ndarray:
        return neighbour_counts(self.skeleton)

    @cached_property
    def junction_mask(self) -> np.ndarray:
        return (self.skeleton == 1) & (crossing_numbers(self.skeleton) >= 3)

    @cached_property
    def bends(self) -> tuple[int, int]:
        return bend_points(self.skeleton)


def _sidebar(ctx: FeatureContext, right: bool) -> float:
    band = max(1, math.ceil(ctx.sidebar_band * ctx.width))
    cols = range(ctx.width - band, ctx.width) if right else range(band)
    need = ctx.line_cover * ctx.height
    return float(any(longest_run(ctx.raw[:, c], ctx.line_straightness_tolerance) >= need for c in cols))


def _symmetric(a: np.ndarray, b: np.ndarray, threshold: float) -> float:
    union = np.count_nonzero(a | b)
    inter = np.count_nonzero(a & b)
    return float(union > 0 and inter / union >= threshold)


def _depths(raw: np.ndarray, side: str) -> np.ndarray:
    """Background run from one side to the first ink pixel, per line that has ink."""
    if side in ("top", "bottom"):
        raw = raw.T
    if side in ("right", "bottom"):
        raw = raw[:, ::-1]
    has = raw.any(axis=1)
    return np.argmax(raw[has] == 1, axis=1)


def _depth_feature(ctx: FeatureContext, side: str, fn) -> float:
    d = _depths(ctx.raw, side)
    scale = ctx.width
    if side in ("top", "bottom") and ctx.vertical_depths_by_height:
        scale = ctx.height
    return 100.0 * float(fn(d)) / scale


def _epicentre(ctx: FeatureContext, axis: int) -> float:
    ys, xs = np.nonzero(ctx.raw)
    coord = ys if axis == 0 else xs
    extent = ctx.raw.shape[axis]
    offset = coord.mean() - (extent - 1) / 2.0
    return float(np.clip(50.0 + 50.0 * offset / (extent / 2.0), 0.0, 100.0))


def compute_feature(fid: FeatureId | int, ctx: FeatureContext) -> float:
    fid = FeatureId(fid)
    raw, skel = ctx.raw, ctx.skeleton
    h, w = raw.shape
    if fid == FeatureId.F1:
        return float(bool(ctx.headline_rows))
    if fid == FeatureId.F2:
        return float(len(ctx.holes))
    if fid == FeatureId.F3:
        rows = set(ctx.headline_rows)
        if not rows:
            return 0.0
        return float(sum(any((r - 1) in rows for r in np.nonzero(hole)[0]) for hole in ctx.holes))
    if fid == FeatureId.F4:
        return _sidebar(ctx, right=False)
    if fid == FeatureId.F5:
        return _sidebar(ctx, right=True)
    if fid == FeatureId.F6:
        return float(ndimage.label(raw, structure=_EIGHT)[1])
    if fid == FeatureId.F7:
        return float(np.count_nonzero((skel == 1) & (ctx.skeleton_neighbours == 1)))
    if fid == FeatureId.F8:
        return float(np.count_nonzero(ctx.junction_mask))
    if fid == FeatureId.F9:
        rows = ctx.headline_rows
        if not rows:
            return 0.0
        jy = np.nonzero(ctx.junction_mask)[0]
        return float(np.count_nonzero((jy >= min(rows) - 1) & (jy <= max(rows) + 1)))
    if fid == FeatureId.F10:
        return float(ctx.bends[0])
    if fid == FeatureId.F11:
        return float(ctx.bends[1])
    if fid == FeatureId.F12:
        return 100.0 * min(h, w) / max(h, w)
    if fid == FeatureId.F13:
        return _symmetric(raw == 1, raw[:, ::-1] == 1, ctx.symmetry_threshold)
    if fid == FeatureId.F14:
        return _symmetric(raw == 1, raw[::-1, :] == 1, ctx.symmetry_threshold)
    if fid == FeatureId.F15:
        return float(np.count_nonzero((skel == 1) & (ctx.skeleton_neighbours == 0)))
    if fid == FeatureId.F16:
        return float(max(count_runs(row) for row in raw))
    if fid == FeatureId.F17:
        return float(max(count_runs(col) for col in raw.T))
    if fid == FeatureId.F18:
        return 100.0 * raw.sum(axis=0).min() / h
    if fid == FeatureId.F19:
        return 100.0 * raw.sum(axis=1).min() / w
    if fid == FeatureId.F20:
        return 100.0 * raw.sum(axis=0).max() / h
    if fid == FeatureId.F21:
        return 100.0 * raw.sum(axis=1).max() / w
    sides = {22: "left", 23: "right", 24: "top", 25: "bottom", 26: "left", 27: "right", 28: "top", 29: "bottom"}
    if int(fid) in sides:
        return _depth_feature(ctx, sides[int(fid)], np.max if fid <= 25 else np.min)
    if fid == FeatureId.F30:
        return 100.0 * np.count_nonzero(raw) / (h * w)
    if fid == FeatureId.F31:
        return _epicentre(ctx, 0)
    return _epicentre(ctx, 1)


def compute_feature_vector(ctx: FeatureContext) -> np.ndarray:
    return np.array([compute_feature(f, ctx) for f in FeatureId], dtype=float)


def features_of(img, **kw) -> np.ndarray:
    """Feature vector of a (not necessarily cropped) symbol image."""
    return compute_feature_vector(FeatureContext.from_image(img, **kw))


def check_ranges(vec) -> list[FeatureId]:
    """Features whose values violate their declared type/range."""
    bad = []
    for fid in FeatureId:
        v = vec[fid - 1]
        kind = kind_of(fid)
        if kind == Kind.BOOLEAN and v not in (0.0, 1.0):
            bad.append(fid)
        elif kind == Kind.COUNT and (v < 0 or v != int(v)):
            bad.append(fid)
        elif kind == Kind.RANGE and not 0.0 <= v <= 100.0:
            bad.append(fid)
    return bad


def write_feature_table(path, rows) -> None:
    """``rows``: iterable of (symbol id, 32-vector). Tab-separated with a header."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("#voltage-features\t1\n")
        fh.write("\t".join(["symbol"] + [f.name for f in FeatureId]) + "\n")
        for sid, vec in rows:
            fh.write("\t".join([sid] + [repr(float(v)) for v in vec]) + "\n")


def read_feature_table(path) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        head = fh.readline().rstrip("\n").split("\t")
        if head != ["#voltage-features", "1"]:
            raise ValueError(f"{path}: not a v1 feature table")
        fh.readline()
        ids, vecs = [], []
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            ids.append(parts[0])
            vecs.append([float(v) for v in parts[1:]])
    return ids, np.array(vecs, dtype=float).reshape(len(ids), N_FEATURES)
