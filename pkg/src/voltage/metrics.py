"""CER / WER / E2E error rates and the over-segmentation vs mis-classification
taxonomy."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Sequence

from .raster import Rect

OVER_SEGMENTATION = "over-segmentation"
MISCLASSIFICATION = "mis-classification"


class UndefinedRate(ZeroDivisionError):
    pass


@dataclass(frozen=True)
class BoxedSymbol:
    box: Rect
    label: str
    zone: str = "middle"
    word: Hashable = None  # key of the word the symbol belongs to


@dataclass(frozen=True)
class ErrorRecord:
    kind: str
    truth: str
    recognized: tuple[str, ...]
    where: Hashable = None


@dataclass
class EvaluationReport:
    n_s: int = 0  # correctly segmented symbols
    n_s_err: int = 0  # ... of which mis-recognised
    n_w: int = 0  # correctly segmented words
    n_w_err: int = 0
    n_truth_symbols: int = 0
    n_truth_words: int = 0
    segmentation: dict[str, int] = field(default_factory=dict)
    zones: dict[str, tuple[int, int]] = field(default_factory=dict)  # zone -> (correct, segmented)
    errors: list[ErrorRecord] = field(default_factory=list)
    e2e: float | None = None

    def __post_init__(self):
        if not (0 <= self.n_s_err <= self.n_s and 0 <= self.n_w_err <= self.n_w):
            raise ValueError("error counts must lie between 0 and their totals")

    def merge(self, other: "EvaluationReport") -> "EvaluationReport":
        seg = Counter(self.segmentation) + Counter(other.segmentation)
        zones = dict(self.zones)
        for z, (c, t) in other.zones.items():
            c0, t0 = zones.get(z, (0, 0))
            zones[z] = (c0 + c, t0 + t)
        return EvaluationReport(self.n_s + other.n_s, self.n_s_err + other.n_s_err,
                                self.n_w + other.n_w, self.n_w_err + other.n_w_err,
                                self.n_truth_symbols + other.n_truth_symbols,
                                self.n_truth_words + other.n_truth_words,
                                dict(seg), zones, self.errors + other.errors)

    def summary(self) -> str:
        lines = [
            f"symbols  segmented {self.n_s}/{self.n_truth_symbols}  mis-recognised {self.n_s_err}",
            f"words    segmented {self.n_w}/{self.n_truth_words}  mis-recognised {self.n_w_err}",
            f"CER {_fmt(cer, self)}  WER {_fmt(wer, self)}  E2E "
            + ("n/a" if self.e2e is None else f"{self.e2e:.4f}"),
        ]
        for z in sorted(self.zones):
            c, t = self.zones[z]
            lines.append(f"zone {z:<7} accuracy " + (f"{c / t:.4f}" if t else "n/a") + f" ({c}/{t})")
        tax = taxonomy_report(self.errors)
        lines.append(f"taxonomy over-segmentation {tax[OVER_SEGMENTATION]}  mis-classification {tax[MISCLASSIFICATION]}")
        for k in sorted(self.segmentation):
            lines.append(f"segmentation {k} {self.segmentation[k]}")
        return "\n".join(lines) + "\n"

    def rows(self) -> list[tuple[str, str]]:
        out = [("n_s", str(self.n_s)), ("n_s_err", str(self.n_s_err)), ("n_w", str(self.n_w)),
               ("n_w_err", str(self.n_w_err)), ("truth_symbols", str(self.n_truth_symbols)),
               ("truth_words", str(self.n_truth_words)), ("cer", _fmt(cer, self)), ("wer", _fmt(wer, self)),
               ("e2e", "" if self.e2e is None else repr(self.e2e))]
        for z in sorted(self.zones):
            out.append((f"zone_{z}", "%d/%d" % self.zones[z]))
        tax = taxonomy_report(self.errors)
        out += [(OVER_SEGMENTATION, str(tax[OVER_SEGMENTATION])), (MISCLASSIFICATION, str(tax[MISCLASSIFICATION]))]
        out += [(f"seg_{k}", str(v)) for k, v in sorted(self.segmentation.items())]
        return out


def _fmt(fn, report):
    try:
        return f"{fn(report):.4f}"
    except UndefinedRate:
        return "n/a"


def rate(errors: int, total: int) -> float:
    if total <= 0:
        raise UndefinedRate("rate undefined with no correctly segmented items")
    if not 0 <= errors <= total:
        raise ValueError(f"{errors} errors out of {total}")
    return errors / total


def cer(report: EvaluationReport) -> float:
    """Mis-recognised symbols over correctly segmented symbols."""
    return rate(report.n_s_err, report.n_s)


def wer(report: EvaluationReport) -> float:
    return rate(report.n_w_err, report.n_w)


def align_words(truth: Sequence[str], recognized: Sequence[str]) -> list[tuple[int | None, int | None]]:
    """Minimal edit-distance alignment; among equal-cost alignments the one
    with the most exact matches. Pairs are (truth index, recognized index)."""
    n, m = len(truth), len(recognized)
    # cost = (edits, -matches), compared lexicographically
    dp = [[(0, 0)] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        dp[i][0] = (i, 0)
    for j in range(1, m + 1):
        dp[0][j] = (j, 0)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            same = truth[i - 1] == recognized[j - 1]
            e, mt = dp[i - 1][j - 1]
            diag = (e, mt - 1) if same else (e + 1, mt)
            up = (dp[i - 1][j][0] + 1, dp[i - 1][j][1])
            left = (dp[i][j - 1][0] + 1, dp[i][j - 1][1])
            dp[i][j] = min(diag, up, left)
    pairs = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            same = truth[i - 1] == recognized[j - 1]
            e, mt = dp[i - 1][j - 1]
            if dp[i][j] == ((e, mt - 1) if same else (e + 1, mt)):
                pairs.append((i - 1, j - 1))
                i, j = i - 1, j - 1
                continue
        if i > 0 and dp[i][j] == (dp[i - 1][j][0] + 1, dp[i - 1][j][1]):
            pairs.append((i - 1, None))
            i -= 1
        else:
            pairs.append((None, j - 1))
            j -= 1
    return pairs[::-1]


def e2e_error(truth: Sequence[str], recognized: Sequence[str]) -> float:
    """Fraction of ground-truth words not reproduced exactly, after alignment."""
    if len(truth) == 0:
        raise UndefinedRate("empty ground truth")
    pairs = align_words(truth, recognized)
    matched = sum(1 for i, j in pairs if i is not None and j is not None and truth[i] == recognized[j])
    return (len(truth) - matched) / len(truth)


def taxonomy_report(errors: Sequence[ErrorRecord]) -> Counter:
    counts = Counter({OVER_SEGMENTATION: 0, MISCLASSIFICATION: 0})
    counts.update(e.kind for e in errors)
    return counts


def _contained(inner: Rect, outer: Rect, frac: float = 0.5) -> bool:
    inter = inner.intersect(outer)
    return inter is not None and inter.area >= frac * inner.area


def evaluate_symbols(truth: Sequence[BoxedSymbol], recognized: Sequence[BoxedSymbol],
                     iou_threshold: float = 0.5) -> EvaluationReport:
    """Match symbols by box overlap and count segmentation and recognition errors.

    A truth symbol is correctly segmented when exactly one recognized symbol
    overlaps it with IoU >= threshold and that symbol matches nothing else.
    A truth symbol covering two or more recognized symbols (each mostly
    inside it) is an over-segmentation. A word is correctly segmented when
    all its symbols are.
    """
    cand: dict[int, list[int]] = {}
    back: dict[int, list[int]] = {}
    for ti, t in enumerate(truth):
        for ri, r in enumerate(recognized):
            if t.box.iou(r.box) >= iou_threshold:
                cand.setdefault(ti, []).append(ri)
                back.setdefault(ri, []).append(ti)
    rep = EvaluationReport(n_truth_symbols=len(truth))
    seg = Counter()
    word_ok: dict[Hashable, bool] = {}
    word_wrong: dict[Hashable, bool] = {}
    zones: dict[str, list[int]] = {}
    used = set()
    for ti, t in enumerate(truth):
        rs = cand.get(ti, [])
        ok = len(rs) == 1 and len(back[rs[0]]) == 1
        word_ok.setdefault(t.word, True)
        word_wrong.setdefault(t.word, False)
        if not ok:
            word_ok[t.word] = False
            parts = [ri for ri, r in enumerate(recognized) if _contained(r.box, t.box)]
            if len(parts) >= 2:
                seg["over"] += 1
                rep.errors.append(ErrorRecord(OVER_SEGMENTATION, t.label,
                                              tuple(recognized[ri].label for ri in parts), t.word))
                used.update(parts)
            else:
                seg["missed" if not rs else "ambiguous"] += 1
            continue
        r = recognized[rs[0]]
        used.add(rs[0])
        rep.n_s += 1
        z = zones.setdefault(t.zone, [0, 0])
        z[1] += 1
        if r.label == t.label:
            z[0] += 1
        else:
            rep.n_s_err += 1
            word_wrong[t.word] = True
            rep.errors.append(ErrorRecord(MISCLASSIFICATION, t.label, (r.label,), t.word))
    seg["spurious"] = len(recognized) - len(used | {ri for ri in back})
    rep.segmentation = {k: v for k, v in seg.items() if v}
    rep.zones = {k: (v[0], v[1]) for k, v in zones.items()}
    rep.n_truth_words = len(word_ok)
    rep.n_w = sum(word_ok.values())
    rep.n_w_err = sum(1 for w, ok in word_ok.items() if ok and word_wrong[w])
    return rep
