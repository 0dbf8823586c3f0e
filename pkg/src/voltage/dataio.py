"""Image files and the tab-separated workspace tables."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .raster import Rect
from .segmentation import Zone

IMAGE_SUFFIXES = (".png", ".pgm")


class SchemaError(ValueError):
    pass


def read_gray(path) -> np.ndarray:
    """8-bit gray image from PNG or PGM; colour images are converted."""
    try:
        with Image.open(path) as im:
            im.load()
            return np.asarray(im.convert("L"), dtype=np.uint8).copy()
    except (OSError, UnidentifiedImageError) as exc:
        raise OSError(f"cannot read image {path}: {exc}") from exc


def write_gray(path, gray: np.ndarray) -> None:
    Image.fromarray(np.asarray(gray, dtype=np.uint8), mode="L").save(path, format="PNG")


def write_bits(path, bits: np.ndarray) -> None:
    write_gray(path, np.where(np.asarray(bits) != 0, 0, 255).astype(np.uint8))


def read_bits(path) -> np.ndarray:
    return (read_gray(path) < 128).astype(np.uint8)


def list_images(directory) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"not a directory: {d}")
    return sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def write_table(path, header: str, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"#{header}\t1\n")
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([str(v) for v in r])


def read_table(path, header: str, columns: Sequence[str] | None = None) -> list[dict[str, str]]:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"missing {p}")
    with open(p, encoding="utf-8", newline="") as fh:
        first = fh.readline().rstrip("\n")
        if first != f"#{header}\t1":
            raise SchemaError(f"{p}: expected a v1 {header} table, found {first!r}")
        rd = csv.reader(fh, delimiter="\t")
        cols = next(rd, None)
        if cols is None or (columns is not None and list(cols) != list(columns)):
            raise SchemaError(f"{p}: unexpected columns {cols}")
        return [dict(zip(cols, row)) for row in rd if row]


MANIFEST = "voltage-manifest"
MANIFEST_COLUMNS = ("symbol", "page", "source", "line", "word", "char", "sym", "zone", "x", "y", "w", "h")
GROUNDTRUTH = "voltage-groundtruth"
GT_COLUMNS = ("page", "line", "word", "char", "sym", "zone", "label", "x", "y", "w", "h")
CHARSET = "voltage-charset"
CHARSET_COLUMNS = ("label", "class", "zone", "images")


@dataclass(frozen=True)
class ManifestRow:
    symbol: str
    page: int
    source: str  # page file stem
    line: int
    word: int
    char: int
    sym: int
    zone: Zone
    box: Rect

    def as_row(self):
        b = self.box
        return (self.symbol, self.page, self.source, self.line, self.word, self.char, self.sym,
                self.zone.value, b.x, b.y, b.w, b.h)

    @classmethod
    def parse(cls, d: dict[str, str]) -> "ManifestRow":
        return cls(d["symbol"], int(d["page"]), d["source"], int(d["line"]), int(d["word"]),
                   int(d["char"]), int(d["sym"]), Zone(d["zone"]),
                   Rect(int(d["x"]), int(d["y"]), int(d["w"]), int(d["h"])))


def write_manifest(path, rows: Iterable[ManifestRow]) -> None:
    write_table(path, MANIFEST, MANIFEST_COLUMNS, (r.as_row() for r in rows))


def read_manifest(path) -> list[ManifestRow]:
    return [ManifestRow.parse(d) for d in read_table(path, MANIFEST, MANIFEST_COLUMNS)]


@dataclass(frozen=True)
class TruthRow:
    page: str  # page file stem
    line: int
    word: int
    char: int
    sym: int
    zone: Zone
    label: str
    box: Rect

    def as_row(self):
        b = self.box
        return (self.page, self.line, self.word, self.char, self.sym, self.zone.value, self.label, b.x, b.y, b.w, b.h)

    @classmethod
    def parse(cls, d):
        return cls(d["page"], int(d["line"]), int(d["word"]), int(d["char"]), int(d["sym"]), Zone(d["zone"]),
                   d["label"], Rect(int(d["x"]), int(d["y"]), int(d["w"]), int(d["h"])))


def write_groundtruth(path, rows: Iterable[TruthRow]) -> None:
    write_table(path, GROUNDTRUTH, GT_COLUMNS, (r.as_row() for r in rows))


def read_groundtruth(path) -> list[TruthRow]:
    return [TruthRow.parse(d) for d in read_table(path, GROUNDTRUTH, GT_COLUMNS)]


def truth_words(rows: Sequence[TruthRow]) -> list[str]:
    """Ground-truth words in reading order, symbols joined by '-'."""
    from .segmentation import ZONE_ORDER

    words: dict[tuple, list[TruthRow]] = {}
    for r in rows:
        words.setdefault((r.page, r.line, r.word), []).append(r)
    out = []
    for key in sorted(words):
        syms = sorted(words[key], key=lambda r: (r.char, ZONE_ORDER[r.zone], r.sym))
        out.append("-".join(r.label for r in syms))
    return out


@dataclass(frozen=True)
class CharsetEntry:
    label: str
    cls: str
    zone: Zone
    images: tuple[str, ...]


def read_charset(directory) -> list[CharsetEntry]:
    d = Path(directory)
    rows = read_table(d / "charset.tsv", CHARSET, CHARSET_COLUMNS)
    return [CharsetEntry(r["label"], r["class"], Zone(r["zone"]), tuple(r["images"].split())) for r in rows]


def write_charset(directory, entries: Iterable[CharsetEntry]) -> None:
    write_table(Path(directory) / "charset.tsv", CHARSET, CHARSET_COLUMNS,
                ((e.label, e.cls, e.zone.value, " ".join(e.images)) for e in entries))
