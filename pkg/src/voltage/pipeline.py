"""Pipeline stages over a workspace directory.

Each stage reads the previous stage's files, validates their schema and
writes its own; nothing time-dependent is written, so reruns with the same
config and seed are byte-identical.
"""
from __future__ import annotations

import logging
import shutil
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dataio
from .annotate import LabelMap, Space, cluster_symbols, clustering_accuracy, majority_labels, medoid
from .augment import augment_dataset
from .config import PipelineConfig
from .dataio import CharsetEntry, ManifestRow, TruthRow
from .gfrs import FeatureTree, recommend
from .glyphfeat import features_of, write_feature_table
from .metrics import BoxedSymbol, EvaluationReport, e2e_error, evaluate_symbols
from .postrules import RecognizedWord, RecSymbol, ScriptModel, apply_corrections, attach_dictionary, load_dictionary
from .raster import Rect, binarize
from .segmentation import ZONE_ORDER, SegmentationConfig, Zone, extract_symbols
from .supcon import TrainedRecognizer, classify_batch, to_canvas, train
from .synthscript import gen_charset, render_glyph, render_page, script_model_text

log = logging.getLogger(__name__)

IGNORE = "-"  # label-map entry excluding a cluster from training


class StageError(RuntimeError):
    pass


@dataclass(frozen=True)
class Workspace:
    root: Path

    def __post_init__(self):
        object.__setattr__(self, "root", Path(self.root))

    manifest = property(lambda s: s.root / "manifest.tsv")
    symbols = property(lambda s: s.root / "symbols")
    features = property(lambda s: s.root / "features.tsv")
    tree = property(lambda s: s.root / "tree.txt")
    clusters = property(lambda s: s.root / "clusters.tsv")
    labelmap = property(lambda s: s.root / "labelmap.tsv")
    review = property(lambda s: s.root / "review")
    augmented = property(lambda s: s.root / "augmented")
    model = property(lambda s: s.root / "model.vtg")
    loss_log = property(lambda s: s.root / "loss.log")
    recognized = property(lambda s: s.root / "recognized")
    report = property(lambda s: s.root / "report.txt")
    report_tsv = property(lambda s: s.root / "report.tsv")

    def require(self, path: Path, stage: str) -> Path:
        if not path.exists():
            raise StageError(f"{path.name} not found in {self.root}; run '{stage}' first")
        return path


def _fresh_dir(path: Path) -> Path:
    if path.exists():
        shutil.rmtree(path)
    path.mkdir(parents=True)
    return path


# --- synthetic corpus ------------------------------------------------------------

def gen_synthetic(out, cfg: PipelineConfig) -> dict:
    """Render a labelled corpus: pages/, groundtruth.tsv, transcript.txt,
    charset/ (reference glyph images) and script.ini."""
    sc = cfg.synthetic
    out = Path(out)
    charset = gen_charset(sc.charset_seed, tuple(sc.counts))
    pages_dir = _fresh_dir(out / "pages")
    cs_dir = _fresh_dir(out / "charset")
    truth, transcript = [], []
    for p in range(sc.pages):
        page = render_page(charset, sc.lines * sc.words_per_line, sc.words_per_line, sc.noise,
                           sc.overlap, sc.jitter, seed=(cfg.seed, p), page_index=p)
        stem = f"page_{p:03d}"
        dataio.write_gray(pages_dir / f"{stem}.png", page.image)
        for s in page.symbols:
            _, li, wi, ci, si = s.provenance
            truth.append(TruthRow(stem, li, wi, ci, si, s.zone, s.label, s.box))
        transcript += [f"{stem}\t{line}" for line in page.transcript.splitlines()]
    dataio.write_groundtruth(out / "groundtruth.tsv", truth)
    (out / "transcript.txt").write_text("\n".join(transcript) + ("\n" if transcript else ""), encoding="utf-8")
    rng = np.random.default_rng(sc.charset_seed)
    entries = []
    for g in charset.glyphs.values():
        names = []
        for i in range(sc.prototypes_per_label):
            img = render_glyph(g) if i == 0 else render_glyph(g, rng, 1)
            name = f"{g.label}_{i}.png"
            dataio.write_bits(cs_dir / name, img)
            names.append(name)
        entries.append(CharsetEntry(g.label, g.cls, g.zone, tuple(names)))
    dataio.write_charset(cs_dir, entries)
    (out / "script.ini").write_text(script_model_text(charset), encoding="utf-8")
    return {"pages": sc.pages, "symbols": len(truth), "words": len(dataio.truth_words(truth))}


# --- extraction --------------------------------------------------------------------

def _extract_page(args):
    index, path, seg = args
    try:
        gray = dataio.read_gray(path)
    except OSError as exc:
        return index, path, None, str(exc)
    return index, path, extract_symbols(binarize(gray), seg, page_index=index), None


def _map(fn, items, jobs):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def extract_pages(pages_dir, seg: SegmentationConfig, jobs: int = 1):
    """(page stem, symbols) per page in file order; unreadable pages raise."""
    paths = dataio.list_images(pages_dir)
    results = _map(_extract_page, [(i, p, seg) for i, p in enumerate(paths)], jobs)
    bad = [f"{Path(p).name}: {err}" for _, p, _, err in results if err]
    if bad:
        raise StageError("unreadable input images:\n  " + "\n  ".join(bad))
    return [(Path(p).stem, syms) for _, p, syms, _ in results]


def extract(ws: Workspace, pages_dir, cfg: PipelineConfig) -> int:
    pages = extract_pages(pages_dir, cfg.segmentation, cfg.jobs)
    ws.root.mkdir(parents=True, exist_ok=True)
    sym_dir = _fresh_dir(ws.symbols)
    rows = []
    for stem, syms in pages:
        for s in syms:
            p, li, wi, ci, si = s.provenance
            rows.append(ManifestRow(s.symbol_id, p, stem, li, wi, ci, si, s.zone, s.box))
            dataio.write_bits(sym_dir / f"{s.symbol_id}.png", s.image)
    dataio.write_manifest(ws.manifest, rows)
    return len(rows)


# --- annotation --------------------------------------------------------------------

def _load_symbols(ws: Workspace):
    rows = dataio.read_manifest(ws.require(ws.manifest, "extract"))
    imgs = [dataio.read_bits(ws.symbols / f"{r.symbol}.png") for r in rows]
    return rows, imgs


def charset_prototypes(charset_dir, zone: Zone | None = Zone.MIDDLE):
    entries = dataio.read_charset(charset_dir)
    protos = {}
    for e in entries:
        if zone is None or e.zone == zone:
            protos[e.label] = np.array([features_of(dataio.read_bits(Path(charset_dir) / n)) for n in e.images])
    return entries, protos


def match_truth(rows: list[ManifestRow], truth: list[TruthRow], threshold: float = 0.5) -> list[str | None]:
    """Ground-truth label of each extracted symbol (best IoU >= threshold on the same page)."""
    by_page: dict[str, list[TruthRow]] = {}
    for t in truth:
        by_page.setdefault(t.page, []).append(t)
    out = []
    for r in rows:
        best, lab = threshold, None
        for t in by_page.get(r.source, ()):
            iou = r.box.iou(t.box)
            if iou >= best:
                best, lab = iou, t.label
        out.append(lab)
    return out


@dataclass
class AnnotateResult:
    n_symbols: int
    n_clusters: int
    accuracy: dict[str, float]
    tree: FeatureTree
    labelled: bool


def annotate(ws: Workspace, charset_dir, cfg: PipelineConfig, ground_truth=None) -> AnnotateResult:
    rows, imgs = _load_symbols(ws)
    feats = np.array([features_of(im) for im in imgs]).reshape(len(imgs), 32)
    write_feature_table(ws.features, [(r.symbol, f) for r, f in zip(rows, feats)])
    entries, protos = charset_prototypes(charset_dir)
    if not protos:
        raise StageError(f"charset {charset_dir} has no middle-zone labels")
    tree = recommend(protos, cfg.gfrs)
    ws.tree.write_text(tree.to_text(), encoding="utf-8")
    zone_labels = {z: [e.label for e in entries if e.zone == z] for z in Zone}
    zones = [r.zone for r in rows]
    if cfg.clustering.space == Space.PIXELS:
        points = np.array([to_canvas(im).ravel() for im in imgs], dtype=float).reshape(len(imgs), -1)
    else:
        points = feats
    if rows:
        parts, ids = cluster_symbols(zones, points, zone_labels, tree, cfg.clustering, group_features=feats)
    else:
        parts, ids = [], []
    dataio.write_table(ws.clusters, "voltage-clusters", ("symbol", "cluster"),
                       ((r.symbol, c) for r, c in zip(rows, ids)))
    all_clusters = sorted({p.cluster_id(j) for p in parts for j in range(p.k)})
    acc: dict[str, float] = {}
    if ground_truth is not None:
        truth = match_truth(rows, dataio.read_groundtruth(ground_truth))
        keep = [i for i, t in enumerate(truth) if t is not None]
        lm = majority_labels([ids[i] for i in keep], [truth[i] for i in keep])
        for c in all_clusters:
            lm.setdefault(c, IGNORE)
        if keep:
            acc["all"] = clustering_accuracy([ids[i] for i in keep], [truth[i] for i in keep])
            for z in Zone:
                zi = [i for i in keep if rows[i].zone == z]
                if zi:
                    acc[z.value] = clustering_accuracy([ids[i] for i in zi], [truth[i] for i in zi])
        if ws.review.exists():
            shutil.rmtree(ws.review)
    else:
        lm = LabelMap({c: "" for c in all_clusters})
        rev = _fresh_dir(ws.review)
        for p in parts:
            for j in range(p.k):
                members = [i for i, a in zip(p.indices, p.model.assignments) if a == j]
                if not members:
                    continue
                m = members[medoid(points[members])]
                dataio.write_bits(rev / (p.cluster_id(j).replace("/", "_") + ".png"), imgs[m])
    lm.write(ws.labelmap)
    return AnnotateResult(len(rows), len(all_clusters), acc, tree, ground_truth is not None)


def labelled_symbols(ws: Workspace):
    """(manifest rows, images, labels) for symbols whose cluster has a label."""
    rows, imgs = _load_symbols(ws)
    clusters = dataio.read_table(ws.require(ws.clusters, "annotate"), "voltage-clusters", ("symbol", "cluster"))
    lm = LabelMap.read(ws.require(ws.labelmap, "annotate"))
    cid = {d["symbol"]: d["cluster"] for d in clusters}
    labels = lm.lookup([cid[r.symbol] for r in rows])
    keep = [i for i, lab in enumerate(labels) if lab != IGNORE]
    return [rows[i] for i in keep], [imgs[i] for i in keep], [labels[i] for i in keep]


# --- augmentation and training ----------------------------------------------------

AUG_COLUMNS = ("index", "source", "label", "zone", "rotation", "shear", "brightness")


def augment(ws: Workspace, cfg: PipelineConfig) -> int:
    rows, imgs, labels = labelled_symbols(ws)
    canvases = [to_canvas(im) for im in imgs]
    aug = augment_dataset(canvases, labels, cfg.augment)
    d = _fresh_dir(ws.augmented)
    stack = np.array([a.image for a in aug], dtype=np.uint8).reshape(len(aug), 32, 32)
    np.save(d / "images.npy", stack, allow_pickle=False)
    dataio.write_table(d / "manifest.tsv", "voltage-augmented", AUG_COLUMNS, (
        (i, rows[a.source].symbol, a.label, rows[a.source].zone.value, repr(a.params.rotation_deg),
         repr(a.params.shear), repr(a.params.brightness)) for i, a in enumerate(aug)))
    return len(aug)


def train_stage(ws: Workspace, cfg: PipelineConfig) -> TrainedRecognizer:
    d = ws.require(ws.augmented, "augment")
    meta = dataio.read_table(d / "manifest.tsv", "voltage-augmented", AUG_COLUMNS)
    stack = np.load(d / "images.npy", allow_pickle=False)
    if len(stack) != len(meta):
        raise StageError("augmented images and manifest disagree; rerun 'augment'")
    labels = [m["label"] for m in meta]
    votes: dict[str, Counter] = {}
    for m in meta:
        votes.setdefault(m["label"], Counter())[m["zone"]] += 1
    zones = {lab: min(v, key=lambda z: (-v[z], z)) for lab, v in votes.items()}
    if len(set(labels)) < 2:
        raise StageError("training needs at least two labels")
    # originals come first, one per source symbol
    n_orig = len({m["source"] for m in meta})
    losses = []
    rec = train(list(stack), labels, cfg.augment, cfg.training, zones,
                on_epoch=lambda e, loss: losses.append(loss),
                prototype_canvases=list(stack[:n_orig]), prototype_labels=labels[:n_orig])
    ws.model.write_bytes(rec.to_bytes())
    ws.loss_log.write_text("".join(f"{i}\t{v!r}\n" for i, v in enumerate(losses)), encoding="utf-8")
    return rec


# --- recognition -------------------------------------------------------------------

RESULT_COLUMNS = ("page", "line", "word", "pos", "label", "zone", "score", "x", "y", "w", "h", "flags")


def load_script(path, dictionary: str = "") -> ScriptModel:
    script = ScriptModel.load(path)
    if dictionary:
        script = attach_dictionary(script, load_dictionary(dictionary))
    return script


def recognize(ws: Workspace, pages_dir, cfg: PipelineConfig, script: ScriptModel) -> list[str]:
    """Classify every symbol on the pages, apply post-rules; returns words."""
    rec = TrainedRecognizer.from_bytes(ws.require(ws.model, "train").read_bytes())
    missing = [lab for lab in rec.labels if lab not in script.classes]
    if missing:
        raise StageError("labels missing from script model: " + " ".join(missing))
    pages = extract_pages(pages_dir, cfg.segmentation, cfg.jobs)
    by_zone = {z: [lab for lab, lz in zip(rec.labels, rec.zones) if lz == z.value] for z in Zone}
    out_rows, transcript, words_out = [], [], []
    n_alt = cfg.postrules.alternatives
    for stem, syms in pages:
        cands = [by_zone[s.zone] or None for s in syms]
        results = classify_batch(rec, [to_canvas(s.image) for s in syms], cands)
        words: dict[tuple, list] = {}
        for s, r in zip(syms, results):
            _, li, wi, ci, _ = s.provenance
            words.setdefault((li, wi), []).append((ci, ZONE_ORDER[s.zone], s.provenance[4], s, r))
        lines: dict[int, list[str]] = {}
        for (li, wi) in sorted(words):
            items = sorted(words[(li, wi)], key=lambda t: t[:3])
            rw = RecognizedWord(tuple(
                RecSymbol(r.label, s.zone.value, r.score, tuple(lab for lab, _ in r.ranked[1:1 + n_alt]), s.box)
                for *_, s, r in items))
            fixed = apply_corrections(rw, None, script, cfg.postrules.enabled)
            flags = {}
            for rule, pos in fixed.flags:
                flags.setdefault(pos, []).append(rule)
            for pos, sym in enumerate(fixed.symbols):
                b = sym.box
                out_rows.append((stem, li, wi, pos, sym.label, sym.zone, f"{sym.score:.6f}",
                                 b.x, b.y, b.w, b.h, ",".join(flags.get(pos, []))))
            text = fixed.text("-")
            lines.setdefault(li, []).append(text)
            words_out.append(text)
        transcript += [f"{stem}\t{' '.join(lines[li])}" for li in sorted(lines)]
    d = _fresh_dir(ws.recognized)
    dataio.write_table(d / "results.tsv", "voltage-results", RESULT_COLUMNS, out_rows)
    (d / "transcript.txt").write_text("\n".join(transcript) + ("\n" if transcript else ""), encoding="utf-8")
    return words_out


# --- evaluation --------------------------------------------------------------------

def evaluate(ws: Workspace, ground_truth) -> EvaluationReport:
    truth = dataio.read_groundtruth(ground_truth)
    if not truth:
        raise StageError(f"ground truth {ground_truth} is empty")
    res = dataio.read_table(ws.require(ws.recognized / "results.tsv", "recognize"), "voltage-results", RESULT_COLUMNS)
    rec_by_page: dict[str, list[BoxedSymbol]] = {}
    rec_words: dict[tuple, list[tuple[int, str]]] = {}
    for d in res:
        key = (d["page"], int(d["line"]), int(d["word"]))
        rec_by_page.setdefault(d["page"], []).append(BoxedSymbol(
            Rect(int(d["x"]), int(d["y"]), int(d["w"]), int(d["h"])), d["label"], d["zone"], key))
        rec_words.setdefault(key, []).append((int(d["pos"]), d["label"]))
    truth_by_page: dict[str, list[BoxedSymbol]] = {}
    for t in truth:
        truth_by_page.setdefault(t.page, []).append(
            BoxedSymbol(t.box, t.label, t.zone.value, (t.page, t.line, t.word)))
    report = EvaluationReport()
    for page in sorted(set(truth_by_page) | set(rec_by_page)):
        report = report.merge(evaluate_symbols(truth_by_page.get(page, []), rec_by_page.get(page, [])))
    recognized = ["-".join(lab for _, lab in sorted(rec_words[k])) for k in sorted(rec_words)]
    report.e2e = e2e_error(dataio.truth_words(truth), recognized)
    ws.report.write_text(report.summary(), encoding="utf-8")
    dataio.write_table(ws.report_tsv, "voltage-report", ("metric", "value"), report.rows())
    return report
