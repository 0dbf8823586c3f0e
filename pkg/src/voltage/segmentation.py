"""Page -> lines -> words -> characters -> zoned symbols."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from .raster import Rect, as_binary, col_projection, enhanced_col_projection, row_projection


class Zone(str, enum.Enum):
    UPPER = "upper"
    MIDDLE = "middle"
    BOTTOM = "bottom"


ZONE_ORDER = {Zone.MIDDLE: 0, Zone.UPPER: 1, Zone.BOTTOM: 2}


class ScriptClass(str, enum.Enum):
    ABUGIDA = "abugida"
    ALPHABET = "alphabet"


@dataclass(frozen=True)
class SegmentationConfig:
    # word/character valleys: fraction of the profile max
    valley_threshold_fraction: float = 0.1
    # line valleys; lower because the page max dwarfs short trailing lines
    line_threshold_fraction: float = 0.01
    # minimum blank run between lines
    min_gap_px: int = 4
    # bands thinner than this fraction of the median band height are stray
    # zone rows split off a line and get merged into the nearest band
    min_line_height_fraction: float = 0.5
    word_gap_fraction: float = 0.5
    char_gap_fraction: float = 0.1
    # explicit overrides of the fraction-of-line-height gaps
    word_min_gap: int | None = None
    char_min_gap: int | None = None
    penalty_weight: float = 1.0
    script_class: ScriptClass = ScriptClass.ABUGIDA
    middle_mass_fraction: float = 0.7
    # components smaller than this are treated as specks and dropped
    min_component_px: int = 3

    def __post_init__(self):
        for name in ("valley_threshold_fraction", "line_threshold_fraction", "middle_mass_fraction",
                     "min_line_height_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.penalty_weight < 0:
            raise ValueError("penalty_weight must be nonnegative")
        if self.min_gap_px < 1:
            raise ValueError("min_gap_px must be >= 1")

    def gaps_for_height(self, line_height: float) -> "SegmentationConfig":
        """Fix word/char gaps from a (median) line height unless already set."""
        word = self.word_min_gap or max(1, int(round(self.word_gap_fraction * line_height)))
        char = self.char_min_gap or max(1, int(round(self.char_gap_fraction * line_height)))
        return replace(self, word_min_gap=word, char_min_gap=char)


@dataclass(frozen=True)
class Valley:
    start: int
    end: int  # inclusive
    cut: int


@dataclass(frozen=True)
class LineBand:
    y_start: int
    y_end: int  # exclusive
    upper_boundary: int  # first middle-zone row
    lower_boundary: int  # one past the last middle-zone row

    @property
    def height(self) -> int:
        return self.y_end - self.y_start


@dataclass
class SymbolRecord:
    image: np.ndarray
    zone: Zone
    box: Rect
    provenance: tuple[int, int, int, int, int] = (0, 0, 0, 0, 0)
    label: str | None = None

    @property
    def symbol_id(self) -> str:
        p, l, w, c, s = self.provenance
        return f"p{p:03d}_l{l:02d}_w{w:02d}_c{c:02d}_s{s}"


@dataclass(frozen=True)
class Component:
    rect: Rect
    mask: np.ndarray = field(repr=False)  # rect-sized, 1 where the component's ink is
    size: int = 0
    centroid: tuple[float, float] = (0.0, 0.0)  # (row, col) in image coords


# --- profiles -------------------------------------------------------------

def find_valleys(profile: Sequence[float], threshold_fraction: float = 0.1, min_gap: int = 1) -> list[Valley]:
    prof = np.asarray(profile, dtype=float)
    if prof.size == 0:
        raise ValueError("empty profile")
    limit = threshold_fraction * prof.max()
    low = prof <= limit
    valleys = []
    i, n = 0, prof.size
    while i < n:
        if not low[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and low[j + 1]:
            j += 1
        if j - i + 1 >= min_gap:
            valleys.append(Valley(i, j, (i + j) // 2))
        i = j + 1
    return valleys


def profile_spans(profile: Sequence[float], threshold_fraction: float, min_gap: int) -> list[tuple[int, int]]:
    """Half-open index spans between interior valley cuts, trimmed to nonzero values.

    Valleys touching either end are margins, not cuts.
    """
    prof = np.asarray(profile, dtype=float)
    n = prof.size
    if n == 0 or prof.max() <= 0:
        return []
    cuts = [v.cut for v in find_valleys(prof, threshold_fraction, min_gap) if v.start > 0 and v.end < n - 1]
    bounds = [0, *cuts, n]
    spans = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        nz = np.flatnonzero(prof[a:b] > 0)
        if nz.size:
            spans.append((a + int(nz[0]), a + int(nz[-1]) + 1))
    return spans


def _span_rects(img: np.ndarray, spans) -> list[Rect]:
    rects = []
    for a, b in spans:
        rows = np.flatnonzero(img[:, a:b].any(axis=1))
        rects.append(Rect(a, int(rows[0]), b - a, int(rows[-1] - rows[0] + 1)))
    return rects


def middle_band(profile: Sequence[float], mass_fraction: float = 0.7) -> tuple[int, int]:
    """Smallest half-open row interval holding at least ``mass_fraction`` of the ink."""
    prof = np.asarray(profile, dtype=float)
    total = prof.sum()
    if total <= 0:
        return 0, len(prof)
    need = mass_fraction * total
    csum = np.concatenate([[0.0], np.cumsum(prof)])
    best = None
    j = 0
    for i in range(len(prof)):
        j = max(j, i + 1)
        while j < len(prof) and csum[j] - csum[i] < need - 1e-9:
            j += 1
        if csum[j] - csum[i] < need - 1e-9:
            break
        key = (j - i, -(csum[j] - csum[i]))
        if best is None or key < best[0]:
            best = (key, i, j)
    _, a, b = best
    return a, b


# --- hierarchy ------------------------------------------------------------

def _merge_thin(spans: list[tuple[int, int]], fraction: float) -> list[tuple[int, int]]:
    spans = list(spans)
    while len(spans) > 1:
        limit = fraction * float(np.median([b - a for a, b in spans]))
        thin = [i for i, (a, b) in enumerate(spans) if b - a < limit]
        if not thin:
            break
        i = min(thin, key=lambda k: (spans[k][1] - spans[k][0], k))
        gap_prev = spans[i][0] - spans[i - 1][1] if i > 0 else None
        gap_next = spans[i + 1][0] - spans[i][1] if i + 1 < len(spans) else None
        j = i - 1 if gap_next is None or (gap_prev is not None and gap_prev <= gap_next) else i + 1
        lo, hi = min(i, j), max(i, j)
        spans[lo:hi + 1] = [(spans[lo][0], spans[hi][1])]
    return spans


def segment_lines(page: np.ndarray, cfg: SegmentationConfig = SegmentationConfig()) -> list[LineBand]:
    bits = as_binary(page)
    prof = row_projection(bits)
    n = len(prof)
    if prof.max() <= 0:
        return []
    valleys = find_valleys(prof, cfg.line_threshold_fraction, cfg.min_gap_px)
    cuts = [v.cut for v in valleys if v.start > 0 and v.end < n - 1]
    bounds = [0, *cuts, n]
    spans = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        nz = np.flatnonzero(prof[a:b] > 0)
        if nz.size:
            spans.append((a + int(nz[0]), a + int(nz[-1]) + 1))
    bands = []
    for y0, y1 in _merge_thin(spans, cfg.min_line_height_fraction):
        lo, hi = middle_band(prof[y0:y1], cfg.middle_mass_fraction)
        bands.append(LineBand(y0, y1, y0 + lo, y0 + hi))
    return bands


def segment_words(line: np.ndarray, cfg: SegmentationConfig = SegmentationConfig()) -> list[Rect]:
    bits = as_binary(line)
    gap = cfg.word_min_gap or max(1, int(round(cfg.word_gap_fraction * bits.shape[0])))
    spans = profile_spans(col_projection(bits), cfg.valley_threshold_fraction, gap)
    return _span_rects(bits, spans)


def character_profile(word: np.ndarray, cfg: SegmentationConfig) -> np.ndarray:
    if cfg.script_class == ScriptClass.ABUGIDA:
        return enhanced_col_projection(word, cfg.penalty_weight)
    return col_projection(word).astype(float)


def segment_characters(word: np.ndarray, cfg: SegmentationConfig = SegmentationConfig()) -> list[Rect]:
    bits = as_binary(word)
    gap = cfg.char_min_gap or max(1, int(round(cfg.char_gap_fraction * bits.shape[0])))
    spans = profile_spans(character_profile(bits, cfg), cfg.valley_threshold_fraction, gap)
    return _span_rects(bits, spans)


# --- thinning ---------------------------------------------------------------

# neighbour offsets P2..P9, clockwise from north
_NEIGHBOURS = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)]


def _simple_table() -> np.ndarray:
    """Lookup over 8-neighbourhood codes: True when deleting the centre keeps topology.

    Simple point = ink neighbours form one 8-component and the background
    neighbours 4-adjacent to the centre form one 4-component.
    """
    table = np.zeros(256, dtype=bool)
    pos = [(dy + 1, dx + 1) for dy, dx in _NEIGHBOURS]
    for code in range(256):
        on = {pos[k] for k in range(8) if code >> k & 1}
        off = {pos[k] for k in range(8) if not code >> k & 1}
        if not on or not any(p in off for p in [(0, 1), (1, 2), (2, 1), (1, 0)]):
            continue

        def count(cells, adjacent, seeds):
            seen, comps = set(), 0
            for s in cells:
                if s in seen or (seeds is not None and s not in seeds):
                    continue
                comps += 1
                stack = [s]
                seen.add(s)
                while stack:
                    cy, cx = stack.pop()
                    for q in cells:
                        if q not in seen and adjacent(q, (cy, cx)):
                            seen.add(q)
                            stack.append(q)
            return comps

        adj8 = lambda a, b: max(abs(a[0] - b[0]), abs(a[1] - b[1])) == 1
        adj4 = lambda a, b: abs(a[0] - b[0]) + abs(a[1] - b[1]) == 1
        four = {(0, 1), (1, 2), (2, 1), (1, 0)}
        if count(on, adj8, None) == 1 and count(off, adj4, four & off) == 1:
            table[code] = True
    return table


_SIMPLE = _simple_table()


def _code_at(img: np.ndarray, y: int, x: int) -> int:
    code = 0
    for k, (dy, dx) in enumerate(_NEIGHBOURS):
        if img[y + dy, x + dx]:
            code |= 1 << k
    return code


def skeletonize(img: np.ndarray) -> np.ndarray:
    """Zhang-Suen thinning to a fixpoint.

    Candidates come from the usual two sub-iterations; each is then removed
    sequentially only while it is still a simple point with two or more ink
    neighbours, so 8-connectivity and holes survive (a plain Zhang-Suen pass
    erases 2x2 blocks).
    """
    p = np.pad(as_binary(img), 1).astype(np.uint8)
    h, w = p.shape
    changed = True
    while changed:
        changed = False
        for step in (0, 1):
            n = [p[1 + dy:h - 1 + dy, 1 + dx:w - 1 + dx] for dy, dx in _NEIGHBOURS]
            core = p[1:-1, 1:-1]
            b = sum(x.astype(int) for x in n)
            seq = n + [n[0]]
            a = sum(((seq[k] == 0) & (seq[k + 1] == 1)).astype(int) for k in range(8))
            P2, P4, P6, P8 = n[0], n[2], n[4], n[6]
            if step == 0:
                c1, c2 = P2 * P4 * P6, P4 * P6 * P8
            else:
                c1, c2 = P2 * P4 * P8, P2 * P6 * P8
            cand = (core == 1) & (b >= 2) & (b <= 6) & (a == 1) & (c1 == 0) & (c2 == 0)
            for y, x in zip(*np.nonzero(cand)):
                y, x = y + 1, x + 1
                code = _code_at(p, y, x)
                if bin(code).count("1") >= 2 and _SIMPLE[code]:
                    p[y, x] = 0
                    changed = True
    return p[1:-1, 1:-1].copy()


# --- components and zones ----------------------------------------------------

_EIGHT = np.ones((3, 3), dtype=int)


def connected_components(img: np.ndarray) -> list[Component]:
    """8-connected ink components ordered by their first pixel in raster order."""
    bits = as_binary(img)
    labels, n = ndimage.label(bits, structure=_EIGHT)
    comps = []
    for idx, sl in enumerate(ndimage.find_objects(labels), start=1):
        mask = (labels[sl] == idx).astype(np.uint8)
        ys, xs = np.nonzero(mask)
        rect = Rect(sl[1].start, sl[0].start, sl[1].stop - sl[1].start, sl[0].stop - sl[0].start)
        comps.append(Component(rect, mask, int(len(ys)), (float(ys.mean() + rect.y), float(xs.mean() + rect.x))))
    first = lambda c: (c.rect.y, int(np.argmax(c.mask[0])) + c.rect.x)
    comps.sort(key=first)
    return comps


def drop_specks(img: np.ndarray, min_px: int) -> np.ndarray:
    """Copy of ``img`` without 8-connected components smaller than ``min_px``."""
    bits = as_binary(img)
    if min_px <= 1:
        return bits.copy()
    labels, n = ndimage.label(bits, structure=_EIGHT)
    sizes = np.bincount(labels.ravel(), minlength=n + 1)
    keep = sizes >= min_px
    keep[0] = False
    return keep[labels].astype(np.uint8)


def zone_of(centroid_row: float, band: LineBand) -> Zone:
    if centroid_row < band.upper_boundary:
        return Zone.UPPER
    if centroid_row >= band.lower_boundary:
        return Zone.BOTTOM
    return Zone.MIDDLE


ZoneExceptions = Callable[[list[Component], list[Zone]], list[Zone]]


def classify_zones(
    char_img: np.ndarray,
    band: LineBand,
    cfg: SegmentationConfig = SegmentationConfig(),
    origin: tuple[int, int] = (0, 0),
    exceptions: ZoneExceptions | None = None,
) -> list[SymbolRecord]:
    """Split one character into zoned symbols.

    ``origin`` is the page (x, y) of ``char_img``'s top-left pixel; ``band``
    is in page coordinates.
    """
    bits = as_binary(char_img)
    ox, oy = origin
    comps = [c for c in connected_components(bits) if c.size >= cfg.min_component_px]
    if not comps:
        return []
    if cfg.script_class == ScriptClass.ALPHABET:
        keep = np.zeros_like(bits)
        for c in comps:
            keep[c.rect.y:c.rect.y2, c.rect.x:c.rect.x2] |= c.mask
        box = comps[0].rect
        for c in comps[1:]:
            box = box.union(c.rect)
        return [SymbolRecord(keep[box.y:box.y2, box.x:box.x2].copy(), Zone.MIDDLE, box.shift(ox, oy))]
    zones = [zone_of(c.centroid[0] + oy, band) for c in comps]
    if exceptions is not None:
        zones = exceptions(comps, zones)
    return [SymbolRecord(c.mask.copy(), z, c.rect.shift(ox, oy)) for c, z in zip(comps, zones)]


def assign_to_spans(comps: list[Component], spans: list[Rect]) -> list[int]:
    """Character index for each component: the span holding its centroid column, else the nearest."""
    out = []
    for c in comps:
        col = c.centroid[1]
        dist = [0.0 if s.x <= col < s.x2 else min(abs(col - s.x), abs(col - (s.x2 - 1))) for s in spans]
        out.append(int(np.argmin(dist)))
    return out


def extract_symbols(
    page: np.ndarray,
    cfg: SegmentationConfig = SegmentationConfig(),
    page_index: int = 0,
    exceptions: ZoneExceptions | None = None,
) -> list[SymbolRecord]:
    """Full extraction of one binarized page into provenance-tagged symbols."""
    # specks would otherwise fill the blank rows and columns that projections cut at
    bits = drop_specks(page, cfg.min_component_px)
    bands = segment_lines(bits, cfg)
    if not bands:
        return []
    cfg = cfg.gaps_for_height(float(np.median([b.height for b in bands])))
    out = []
    for li, band in enumerate(bands):
        line = bits[band.y_start:band.y_end]
        for wi, wrect in enumerate(segment_words(line, cfg)):
            word = line[:, wrect.x:wrect.x2]
            spans = segment_characters(word, cfg)
            comps = [c for c in connected_components(word) if c.size >= cfg.min_component_px]
            if not spans or not comps:
                continue
            owner = assign_to_spans(comps, spans)
            ci = 0
            for si in range(len(spans)):
                mine = [c for c, o in zip(comps, owner) if o == si]
                if not mine:
                    continue
                box = mine[0].rect
                for c in mine[1:]:
                    box = box.union(c.rect)
                char_img = np.zeros((box.h, box.w), dtype=np.uint8)
                for c in mine:
                    r = c.rect.shift(-box.x, -box.y)
                    char_img[r.y:r.y2, r.x:r.x2] |= c.mask
                origin = (wrect.x + box.x, band.y_start + box.y)
                syms = classify_zones(char_img, band, cfg, origin, exceptions)
                for k, s in enumerate(syms):
                    s.provenance = (page_index, li, wi, ci, k)
                    out.append(s)
                ci += 1
    return out
