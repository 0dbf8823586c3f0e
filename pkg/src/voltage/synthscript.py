"""Procedural abugida-like test script: charset, page rendering, ground truth.

Glyph bodies are built from thick bars and diagonals on a fixed grid so
feature values are predictable; modifiers sit in the upper or bottom zone.
Every glyph renders as a single 8-connected component.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gfrs import quantize_vector
from .glyphfeat import features_of
from .raster import Rect, to_gray
from .segmentation import Zone, connected_components

STROKE = 2
# features every glyph must keep under positional jitter; glyphs are also
# pairwise distinct on these alone so a partition tree can always split
CORE_FEATURES = (1, 2, 3, 4, 5, 7, 8, 12, 16, 17, 18, 20)


@dataclass(frozen=True)
class Layout:
    body_h: int = 16
    upper_h: int = 6
    bottom_h: int = 6
    zone_gap: int = 2
    char_gap: int = 5
    word_gap: int = 24
    line_gap: int = 12
    margin: int = 16
    upper_mod_w: int = 11
    # upper-modifier decorations stay within its first columns so only the
    # headbar can overhang the next character
    upper_deco_cols: int = 5

    @property
    def body_top(self) -> int:
        return self.upper_h + self.zone_gap

    @property
    def bottom_top(self) -> int:
        return self.body_top + self.body_h + self.zone_gap

    @property
    def line_h(self) -> int:
        return self.bottom_top + self.bottom_h


LAYOUT = Layout()


@dataclass(frozen=True)
class Glyph:
    label: str
    cls: str  # consonant | vowel | modifier | number
    zone: Zone
    w: int
    h: int
    program: tuple


@dataclass
class SynthCharset:
    seed: int
    counts: tuple[int, int, int, int]
    glyphs: dict[str, Glyph]
    layout: Layout = LAYOUT

    def labels(self, cls: str | None = None, zone: Zone | None = None) -> list[str]:
        return [g.label for g in self.glyphs.values()
                if (cls is None or g.cls == cls) and (zone is None or g.zone == zone)]

    @property
    def panchamkshar(self) -> list[str]:
        cons = self.labels("consonant")
        return cons[-2:] if len(cons) >= 3 else []


# --- stroke programs ---------------------------------------------------------

def _line(img, r0, c0, r1, c1):
    n = max(abs(r1 - r0), abs(c1 - c0)) * 2 + 1
    h, w = img.shape
    for t in np.linspace(0.0, 1.0, n):
        r = int(round(r0 + t * (r1 - r0)))
        c = int(round(c0 + t * (c1 - c0)))
        for dc in range(STROKE):
            if 0 <= r < h and 0 <= c + dc < w:
                img[r, c + dc] = 1


def _jit(rng, j, lo, hi, v):
    if rng is None or j == 0:
        return v
    return int(np.clip(v + rng.integers(-j, j + 1), lo, hi))


def render_glyph(g: Glyph, rng: np.random.Generator | None = None, jitter: int = 0) -> np.ndarray:
    """Bitmap of a glyph; ``jitter`` nudges stroke positions by up to that many px."""
    h, w = g.h, g.w
    img = np.zeros((h, w), dtype=np.uint8)
    for prim in g.program:
        kind = prim[0]
        if kind == "V":  # full-height bar at column x
            x = prim[1]
            # edge bars may only move inward, so bars never merge
            if x == 0:
                x = _jit(rng, jitter, 0, 1, x)
            elif x == w - STROKE:
                x = _jit(rng, jitter, w - STROKE - 1, w - STROKE, x)
            else:
                x = _jit(rng, jitter, 1, w - STROKE - 1, x)
            img[:, x:x + STROKE] = 1
        elif kind == "H":  # full-width bar at row y
            y = prim[1]
            if 0 < y < h - STROKE:
                y = _jit(rng, jitter, 1, h - STROKE - 1, y)
            img[y:y + STROKE, :] = 1
        elif kind == "v":  # half-height bar: column x, rows r0..r1
            _, x, r0, r1 = prim
            r1 = _jit(rng, jitter, r0 + 3, h - 1, r1) if r1 < h - 1 else r1
            img[r0:r1 + 1, x:x + STROKE] = 1
        elif kind == "D":  # diagonal between two corners
            _, r0, c0, r1, c1 = prim
            c0 = _jit(rng, jitter, 0, w - STROKE, c0)
            c1 = _jit(rng, jitter, 0, w - STROKE, c1)
            _line(img, r0, c0, r1, c1)
        elif kind == "h":  # partial bar: row y, cols c0..c1
            _, y, c0, c1 = prim
            c1 = _jit(rng, jitter, max(c0 + 2, c1 - 1), c1, c1) if c1 == w - 1 else c1
            img[y:y + STROKE, c0:c1 + 1] = 1
        elif kind == "O":  # ring outline in a sub-box
            _, r0, c0, r1, c1 = prim
            img[r0:r0 + STROKE, c0:c1 + 1] = 1
            img[r1 - STROKE + 1:r1 + 1, c0:c1 + 1] = 1
            img[r0:r1 + 1, c0:c0 + STROKE] = 1
            img[r0:r1 + 1, c1 - STROKE + 1:c1 + 1] = 1
        else:
            raise ValueError(f"unknown primitive {kind}")
    return img


def _body_programs(w: int, h: int, rng: np.random.Generator):
    """Random body program: >=1 full vertical and >=2 full horizontal bars."""
    vpos = [0, w - STROKE] if w <= 8 else [0, w // 2 - 1, w - STROKE]
    hpos = [0, h // 2 - 1, h - STROKE]
    while True:
        vs = [x for x in vpos if rng.random() < 0.5]
        hs = [y for y in hpos if rng.random() < 0.6]
        if not vs or len(hs) < 2:
            continue
        prog = [("V", x) for x in vs] + [("H", y) for y in hs]
        r = rng.random()
        if r < 0.2:
            prog.append(("D", h - 1, 0, 0, w - STROKE))
        elif r < 0.4:
            prog.append(("D", 0, 0, h - 1, w - STROKE))
        elif r < 0.55:
            x = [p for p in vpos if p not in vs]
            if x:
                prog.append(("v", x[int(rng.integers(len(x)))], 0, h // 2))
        elif r < 0.7:
            x = [p for p in vpos if p not in vs]
            if x:
                prog.append(("v", x[int(rng.integers(len(x)))], h // 2 - 1, h - 1))
        return tuple(prog)


def _upper_programs(layout: Layout, rng):
    w, h, d = layout.upper_mod_w, layout.upper_h, layout.upper_deco_cols
    decos = [
        ("v", 0, 0, h - 1),
        ("v", d - STROKE, 0, h - 1),
        ("O", 0, 0, h - 1, d - 1),
        ("D", 0, 0, h - 1, d - STROKE),
        ("h", h - STROKE, 0, d - 1),
        ("D", h - 1, 0, 0, d - STROKE),
    ]
    k = 1 + int(rng.random() < 0.5)
    pick = sorted(rng.choice(len(decos), size=k, replace=False).tolist())
    return w, h, tuple([("h", 0, 0, w - 1)] + [decos[i] for i in pick])


def _bottom_programs(layout: Layout, rng):
    h = layout.bottom_h
    w = int(rng.choice([6, 8, 10]))
    decos = [
        ("v", 0, 0, h - 1),
        ("v", w - STROKE, 0, h - 1),
        ("v", w // 2 - 1, 0, h - 1),
        ("O", 0, 0, h - 1, min(w, 6) - 1),
        ("D", 0, 0, h - 1, w - STROKE),
    ]
    k = 1 + int(rng.random() < 0.4)
    pick = sorted(rng.choice(len(decos), size=k, replace=False).tolist())
    return w, h, tuple([("h", h - STROKE, 0, w - 1)] + [decos[i] for i in pick])


def _jitter_stable(g: Glyph, key, rng, n: int = 12) -> bool:
    for _ in range(n):
        img = render_glyph(g, rng, 1)
        if len(connected_components(img)) != 1:
            return False
        q = quantize_vector(features_of(img))
        if tuple(q[f - 1] for f in CORE_FEATURES) != key:
            return False
    return True


def gen_charset(seed: int = 1, counts: tuple[int, int, int, int] = (33, 11, 10, 10),
                layout: Layout = LAYOUT, max_tries: int = 20000) -> SynthCharset:
    """Charset with pairwise-distinct quantized feature vectors.

    ``counts`` = (consonants, vowels, modifiers, numbers); 60% of modifiers
    (rounded up) live in the upper zone, the rest below.
    """
    if any(c < 1 for c in counts):
        raise ValueError("every glyph class needs at least one member")
    n_cons, n_vow, n_mod, n_num = counts
    n_upper = math.ceil(0.6 * n_mod)
    rng = np.random.default_rng(seed)
    jrng = np.random.default_rng([seed, 7])
    seen: set = set()
    glyphs: dict[str, Glyph] = {}
    tries = 0

    def draw(label, cls, zone, make):
        nonlocal tries
        while True:
            tries += 1
            if tries > max_tries:
                raise ValueError(f"could not make {sum(counts)} feature-distinct glyphs; request fewer")
            w, h, prog = make()
            g = Glyph(label, cls, zone, w, h, prog)
            img = render_glyph(g)
            if len(connected_components(img)) != 1:
                continue
            q = quantize_vector(features_of(img))
            key = tuple(q[f - 1] for f in CORE_FEATURES)
            if key in seen:
                continue
            if not _jitter_stable(g, key, jrng):
                continue
            seen.add(key)
            glyphs[label] = g
            return

    body_h = layout.body_h
    for i in range(n_cons):
        draw(f"k{i:02d}", "consonant", Zone.MIDDLE,
             lambda: (w := int(rng.choice([12, 14])), body_h, _body_programs(w, body_h, rng)))
    for i in range(n_vow):
        draw(f"a{i:02d}", "vowel", Zone.MIDDLE,
             lambda: (w := int(rng.choice([12, 14])), body_h, _body_programs(w, body_h, rng)))
    for i in range(n_mod):
        zone = Zone.UPPER if i < n_upper else Zone.BOTTOM
        make = (lambda: _upper_programs(layout, rng)) if zone == Zone.UPPER else (lambda: _bottom_programs(layout, rng))
        draw(f"m{i:02d}", "modifier", zone, make)
    for i in range(n_num):
        draw(f"n{i}", "number", Zone.MIDDLE, lambda: (8, body_h, _body_programs(8, body_h, rng)))
    return SynthCharset(seed, tuple(counts), glyphs, layout)


def prototypes(charset: SynthCharset, n: int = 5, jitter: int = 1, seed: int = 0,
               labels=None) -> dict[str, np.ndarray]:
    """Feature prototypes per label: one clean rendering plus ``n - 1`` jittered ones."""
    rng = np.random.default_rng(seed)
    out = {}
    for lab in labels or charset.glyphs:
        g = charset.glyphs[lab]
        imgs = [render_glyph(g)] + [render_glyph(g, rng, jitter) for _ in range(n - 1)]
        out[lab] = np.array([features_of(i) for i in imgs])
    return out


# --- text and pages ------------------------------------------------------------

@dataclass(frozen=True)
class Char:
    root: str
    mod: str | None = None


Word = tuple  # tuple[Char, ...]


def word_labels(word) -> list[str]:
    out = []
    for ch in word:
        out.append(ch.root)
        if ch.mod:
            out.append(ch.mod)
    return out


def word_text(word) -> str:
    return "-".join(word_labels(word))


def random_word(charset: SynthCharset, rng: np.random.Generator, mod_rate: float = 0.35) -> Word:
    """A word obeying the built-in post-processing rules (vowels only at the
    ends, one modifier per consonant, numbers on their own, no final nasal)."""
    if rng.random() < 0.1:
        nums = charset.labels("number")
        return tuple(Char(str(rng.choice(nums))) for _ in range(int(rng.integers(1, 4))))
    cons = charset.labels("consonant")
    vows = charset.labels("vowel")
    ups = charset.labels("modifier", Zone.UPPER)
    bots = charset.labels("modifier", Zone.BOTTOM)
    nasal = set(charset.panchamkshar)
    n = int(rng.integers(2, 6))
    chars = []
    for i in range(n):
        if (i == 0 or i == n - 1) and rng.random() < 0.2:
            chars.append(Char(str(rng.choice(vows))))
            continue
        pool = [c for c in cons if c not in nasal] if i == n - 1 else cons
        root = str(rng.choice(pool))
        mod = None
        if rng.random() < mod_rate:
            if rng.random() < 0.6 or not bots:
                mod = str(rng.choice(ups)) if ups else None
            else:
                mod = str(rng.choice(bots))
        chars.append(Char(root, mod))
    return tuple(chars)


@dataclass
class TruthSymbol:
    label: str
    zone: Zone
    box: Rect
    provenance: tuple[int, int, int, int, int]


@dataclass
class SynthPage:
    image: np.ndarray  # gray
    lines: list[list[Word]]
    line_boxes: list[Rect] = field(default_factory=list)
    word_boxes: list[list[Rect]] = field(default_factory=list)
    char_boxes: list[list[list[Rect]]] = field(default_factory=list)
    symbols: list[TruthSymbol] = field(default_factory=list)

    @property
    def transcript(self) -> str:
        return "\n".join(" ".join(word_text(w) for w in line) for line in self.lines)

    @property
    def n_words(self) -> int:
        return sum(len(line) for line in self.lines)


def _char_width(charset, ch: Char) -> int:
    return charset.glyphs[ch.root].w


def _paste(page, glyph_img, x, y):
    h, w = glyph_img.shape
    x0, y0 = max(0, x), max(0, y)
    sub = glyph_img[y0 - y:, x0 - x:]
    page[y0:y0 + sub.shape[0], x0:x0 + sub.shape[1]] |= sub[:page.shape[0] - y0, :page.shape[1] - x0]


def render_page(
    charset: SynthCharset,
    text=0,
    words_per_line: int = 9,
    noise: float = 0.0,
    overlap: float = 0.0,
    jitter: int = 0,
    seed: int | tuple[int, ...] = 0,
    page_index: int = 0,
) -> SynthPage:
    """Render words (a word count or a list of lines of words) onto one page.

    ``overlap`` is the probability that an upper modifier is pushed right so
    its headbar bridges the gap to the next character (only when that
    character has no upper modifier of its own). ``noise`` is the
    salt-and-pepper rate; ground truth always describes the clean render.
    """
    rng = np.random.default_rng(seed)
    lay = charset.layout
    if isinstance(text, int):
        words = [random_word(charset, rng) for _ in range(text)]
        lines = [words[i:i + words_per_line] for i in range(0, len(words), words_per_line)]
    else:
        lines = [list(line) for line in text]
    lines = [line for line in lines if line]
    if not lines:
        blank = np.full((2 * lay.margin + lay.line_h, 2 * lay.margin + 64), 255, dtype=np.uint8)
        return SynthPage(blank, [])

    def wwidth(word):
        return sum(_char_width(charset, c) for c in word) + lay.char_gap * (len(word) - 1)

    width = 2 * lay.margin + max(sum(wwidth(w) for w in line) + lay.word_gap * (len(line) - 1) for line in lines)
    pitch = lay.line_h + lay.line_gap
    height = 2 * lay.margin + len(lines) * pitch - lay.line_gap
    bits = np.zeros((height, width), dtype=np.uint8)
    page = SynthPage(bits, lines)
    for li, line in enumerate(lines):
        top = lay.margin + li * pitch
        x = lay.margin
        wboxes, cboxes_line = [], []
        for wi, word in enumerate(line):
            cboxes = []
            for ci, ch in enumerate(word):
                g = charset.glyphs[ch.root]
                cw = g.w
                parts = []
                body = render_glyph(g, rng, jitter)
                parts.append((g, body, x, top + lay.body_top))
                if ch.mod:
                    mg = charset.glyphs[ch.mod]
                    mimg = render_glyph(mg, rng, jitter)
                    if mg.zone == Zone.UPPER:
                        nxt = word[ci + 1] if ci + 1 < len(word) else None
                        up_next = nxt is not None and nxt.mod and charset.glyphs[nxt.mod].zone == Zone.UPPER
                        if nxt is not None and not up_next and rng.random() < overlap:
                            mx = x + cw + lay.char_gap - mg.w + 1
                        else:
                            mx = x + (cw - mg.w) // 2
                        parts.append((mg, mimg, mx, top))
                    else:
                        parts.append((mg, mimg, x + (cw - mg.w) // 2, top + lay.bottom_top))
                boxes = []
                for gg, img, gx, gy in parts:
                    _paste(bits, img, gx, gy)
                    ys, xs = np.nonzero(img)
                    boxes.append((gg, Rect(gx + int(xs.min()), gy + int(ys.min()),
                                           int(xs.max() - xs.min() + 1), int(ys.max() - ys.min() + 1))))
                boxes.sort(key=lambda t: (t[1].y, t[1].x))
                cbox = boxes[0][1]
                for _, b in boxes[1:]:
                    cbox = cbox.union(b)
                for si, (gg, b) in enumerate(boxes):
                    page.symbols.append(TruthSymbol(gg.label, gg.zone, b, (page_index, li, wi, ci, si)))
                cboxes.append(cbox)
                x += cw + (lay.char_gap if ci + 1 < len(word) else 0)
            wbox = cboxes[0]
            for b in cboxes[1:]:
                wbox = wbox.union(b)
            wboxes.append(wbox)
            cboxes_line.append(cboxes)
            x += lay.word_gap
        lbox = wboxes[0]
        for b in wboxes[1:]:
            lbox = lbox.union(b)
        page.line_boxes.append(lbox)
        page.word_boxes.append(wboxes)
        page.char_boxes.append(cboxes_line)
    if noise > 0:
        flip = rng.random(bits.shape) < noise
        bits[flip] = (rng.random(int(flip.sum())) < 0.5).astype(np.uint8)
    page.image = to_gray(bits)
    return page


def overlap_fixture(charset: SynthCharset, n_words: int = 24, seed: int = 0, overlap: float = 1.0):
    """Words where upper modifiers overhang the following character.

    Returns (word image cropped to the full line height, true gaps) pairs;
    a gap is the half-open column interval between consecutive character
    bodies, so a correct cut lands inside it.
    """
    rng = np.random.default_rng(seed)
    cons = [c for c in charset.labels("consonant") if charset.glyphs[c].w >= 12]
    ups = charset.labels("modifier", Zone.UPPER)
    words = []
    for _ in range(n_words):
        n = int(rng.integers(2, 5))
        chars = []
        for i in range(n):
            mod = str(rng.choice(ups)) if i % 2 == 0 and i + 1 < n else None
            chars.append(Char(str(rng.choice(cons)), mod))
        words.append(tuple(chars))
    page = render_page(charset, [words[i:i + 4] for i in range(0, len(words), 4)], overlap=overlap, seed=seed)
    bits = (page.image < 128).astype(np.uint8)
    lay = charset.layout
    bodies = {s.provenance[1:4]: s.box for s in page.symbols if s.zone == Zone.MIDDLE}
    out = []
    for li, line in enumerate(page.lines):
        top = lay.margin + li * (lay.line_h + lay.line_gap)
        for wi, word in enumerate(line):
            wb = page.word_boxes[li][wi]
            img = bits[top:top + lay.line_h, wb.x:wb.x2]
            xs = [bodies[(li, wi, ci)] for ci in range(len(word))]
            gaps = [(a.x2 - wb.x, b.x - wb.x) for a, b in zip(xs, xs[1:])]
            out.append((img, gaps))
    return out


def boundaries_recovered(rects, gaps) -> int:
    """How many true gaps hold a cut between consecutive segmented spans."""
    cuts = [(a.x2 + b.x) // 2 for a, b in zip(rects, rects[1:])]
    return sum(any(g0 <= c < g1 for c in cuts) for g0, g1 in gaps)


def all_quantized_distinct(charset: SynthCharset, features=None) -> bool:
    feats = features or range(1, 33)
    keys = [tuple(quantize_vector(features_of(render_glyph(g)))[f - 1] for f in feats)
            for g in charset.glyphs.values()]
    return len(set(keys)) == len(keys)


def script_model_text(charset: SynthCharset) -> str:
    """Post-processing script model (INI) describing the charset's classes."""
    lines = ["[classes]"]
    for g in charset.glyphs.values():
        lines.append(f"{g.label} = {g.cls}")
    lines += ["", "[panchamkshar]", "labels = " + " ".join(charset.panchamkshar), "",
              "[composition]", "", "[reorder]", ""]
    return "\n".join(lines)
