"""Unsupervised labelling: k-means per zone and feature group, cluster-to-label
mapping and clustering accuracy."""
from __future__ import annotations

import csv
import enum
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .gfrs import FeatureTree, assign_group
from .segmentation import ZONE_ORDER, Zone


class Space(str, enum.Enum):
    FEATURES = "features"
    PIXELS = "pixels"


@dataclass(frozen=True)
class ClusteringConfig:
    k: int = 1
    max_iterations: int = 300
    restarts: int = 8
    seed: int = 0
    space: Space = Space.FEATURES
    # standardised features are clipped to +-this many deviations so a few
    # noise-damaged symbols cannot claim clusters of their own; 0 disables
    zscore_clip: float = 2.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.zscore_clip < 0:
            raise ValueError("zscore_clip must be >= 0")
        if self.max_iterations < 1 or self.restarts < 1:
            raise ValueError("max_iterations and restarts must be positive")


@dataclass(frozen=True)
class ClusterModel:
    centroids: np.ndarray
    assignments: np.ndarray
    inertia: float
    history: tuple[float, ...] = ()  # inertia after each Lloyd step of the winning restart


def _sqdist(points, centroids):
    return ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def _plus_plus(points, k, rng):
    n = len(points)
    centres = [points[int(rng.integers(n))]]
    for _ in range(1, k):
        d2 = _sqdist(points, np.array(centres)).min(axis=1)
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centres.append(points[idx])
    return np.array(centres, dtype=float)


def _lloyd(points, centroids, max_iter):
    history = []
    assign = None
    for _ in range(max_iter):
        d2 = _sqdist(points, centroids)
        new = d2.argmin(axis=1)
        history.append(float(d2[np.arange(len(points)), new].sum()))
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        for j in range(len(centroids)):
            members = points[assign == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
            else:
                # re-seed an empty cluster at the point farthest from its centroid
                far = int(d2[np.arange(len(points)), assign].argmax())
                centroids[j] = points[far]
                assign[far] = j
    d2 = _sqdist(points, centroids)
    assign = d2.argmin(axis=1)
    inertia = float(d2[np.arange(len(points)), assign].sum())
    history.append(inertia)
    return centroids, assign, inertia, history


def kmeans(points, cfg: ClusteringConfig) -> ClusterModel:
    """Lloyd's algorithm with k-means++ seeding; best of ``cfg.restarts`` by inertia."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if len(pts) < cfg.k:
        raise ValueError(f"{len(pts)} points cannot form {cfg.k} clusters")
    rng = np.random.default_rng(cfg.seed)
    best = None
    for _ in range(cfg.restarts):
        c0 = _plus_plus(pts, cfg.k, rng)
        centroids, assign, inertia, hist = _lloyd(pts, c0, cfg.max_iterations)
        if best is None or inertia < best.inertia:
            best = ClusterModel(centroids, assign, inertia, tuple(hist))
    return best


def zscore(x: np.ndarray, clip: float = 0.0) -> np.ndarray:
    """Per-column standardisation, optionally clipped to [-clip, clip]."""
    x = np.asarray(x, dtype=float)
    sd = x.std(axis=0)
    sd[sd == 0] = 1.0
    z = (x - x.mean(axis=0)) / sd
    return np.clip(z, -clip, clip) if clip > 0 else z


def contingency(assignments, truth) -> tuple[np.ndarray, list, list]:
    a = list(assignments)
    t = list(truth)
    if len(a) != len(t):
        raise ValueError(f"{len(a)} assignments vs {len(t)} ground-truth labels")
    clusters = sorted(set(a), key=str)
    labels = sorted(set(t), key=str)
    ci = {c: i for i, c in enumerate(clusters)}
    li = {lab: i for i, lab in enumerate(labels)}
    table = np.zeros((len(clusters), len(labels)), dtype=np.int64)
    for c, lab in zip(a, t):
        table[ci[c], li[lab]] += 1
    return table, clusters, labels


def clustering_accuracy(assignments, truth) -> float:
    """Best one-to-one cluster/label matching, as a fraction of symbols."""
    table, _, _ = contingency(assignments, truth)
    if table.sum() == 0:
        raise ValueError("no symbols")
    rows, cols = linear_sum_assignment(-table)
    return float(table[rows, cols].sum() / table.sum())


# --- per-zone / per-group clustering ----------------------------------------

@dataclass
class Partition:
    key: str  # "upper", "middle/g03", ...
    zone: Zone
    indices: list[int]
    k: int
    model: ClusterModel | None = None

    def cluster_id(self, j: int) -> str:
        return f"{self.key}/c{j:02d}"


def partition_symbols(zones: Sequence[Zone], features: np.ndarray,
                      tree: FeatureTree | None = None) -> dict[str, tuple[Zone, list[int]]]:
    """Group symbol indices by zone, and middle-zone symbols by tree leaf."""
    out: dict[str, tuple[Zone, list[int]]] = {}
    for i, z in enumerate(zones):
        z = Zone(z)
        key = z.value
        if z == Zone.MIDDLE and tree is not None:
            key = f"{z.value}/{assign_group(tree, features[i]).group}"
        out.setdefault(key, (z, []))[1].append(i)
    return dict(sorted(out.items(), key=lambda kv: (ZONE_ORDER[kv[1][0]], kv[0])))


def expected_k(key: str, zone: Zone, zone_labels: Mapping[Zone, Sequence[str]],
               tree: FeatureTree | None) -> int:
    if zone == Zone.MIDDLE and tree is not None and "/" in key:
        return len(tree.groups()[key.split("/", 1)[1]])
    return len(zone_labels[zone])


def cluster_symbols(
    zones: Sequence[Zone],
    points: np.ndarray,
    zone_labels: Mapping[Zone, Sequence[str]],
    tree: FeatureTree | None = None,
    cfg: ClusteringConfig = ClusteringConfig(),
    group_features: np.ndarray | None = None,
) -> tuple[list[Partition], list[str]]:
    """Cluster each (zone, group) partition; returns partitions and a cluster id per symbol.

    ``points`` is the clustering space (z-scored per partition); tree routing
    uses ``group_features`` (raw glyph features, default ``points``). ``k``
    per partition is its expected label count, capped by the number of
    distinct points.
    """
    pts = np.asarray(points, dtype=float)
    gf = pts if group_features is None else np.asarray(group_features, dtype=float)
    parts = []
    ids = [""] * len(zones)
    for n, (key, (zone, idx)) in enumerate(partition_symbols(zones, gf, tree).items()):
        sub = zscore(pts[idx], cfg.zscore_clip)
        distinct = len(np.unique(sub, axis=0))
        k = max(1, min(expected_k(key, zone, zone_labels, tree), distinct))
        model = kmeans(sub, replace(cfg, k=k, seed=cfg.seed + n))
        part = Partition(key, zone, list(idx), k, model)
        for i, a in zip(idx, model.assignments):
            ids[i] = part.cluster_id(int(a))
        parts.append(part)
    return parts, ids


# --- label maps ------------------------------------------------------------------

class LabelMap(dict):
    """cluster id -> label, stored as a two-column TSV."""

    HEADER = "#voltage-labelmap\t1"

    def lookup(self, cluster_ids: Sequence[str]) -> list[str]:
        missing = sorted({c for c in cluster_ids if not self.get(c)})
        if missing:
            raise KeyError("unmapped clusters: " + ", ".join(missing))
        return [self[c] for c in cluster_ids]

    def write(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.HEADER + "\n")
            w = csv.writer(fh, delimiter="\t", lineterminator="\n")
            w.writerow(["cluster", "label"])
            for c in sorted(self):
                w.writerow([c, self[c]])

    @classmethod
    def read(cls, path) -> "LabelMap":
        lines = Path(path).read_text().splitlines()
        if not lines or lines[0] != cls.HEADER:
            raise ValueError(f"{path}: not a v1 label map")
        out = cls()
        for row in csv.reader(lines[2:], delimiter="\t"):
            if row:
                out[row[0]] = row[1].strip() if len(row) > 1 else ""
        return out


def majority_labels(cluster_ids: Sequence[str], truth: Sequence[str]) -> LabelMap:
    """Each cluster takes its most frequent true label (ties: label order)."""
    votes: dict[str, Counter] = {}
    for c, t in zip(cluster_ids, truth, strict=True):
        votes.setdefault(c, Counter())[t] += 1
    return LabelMap({c: min(v, key=lambda lab: (-v[lab], lab)) for c, v in votes.items()})


def medoid(points: np.ndarray) -> int:
    """Index of the member with least total distance to the others."""
    pts = np.asarray(points, dtype=float)
    d = np.sqrt(_sqdist(pts, pts))
    return int(d.sum(axis=1).argmin())
