"""Glyph feature recommendation: choose glyph features and a partition tree
that splits a charset into groups no larger than ``max_group_size``."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .glyphfeat import FeatureId, Kind, kind_of

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GfrsConfig:
    max_group_size: int = 6
    bins_per_range_feature: int = 4
    # fraction of a label's prototypes that must share a bucket
    stability_margin: float = 1.0
    count_cap: int = 4
    max_depth: int | None = None
    candidates: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.max_group_size < 1:
            raise ValueError("max_group_size must be >= 1")
        if self.bins_per_range_feature < 1:
            raise ValueError("bins_per_range_feature must be >= 1")


def quantize_feature(fid: FeatureId | int, value: float, cfg: GfrsConfig = GfrsConfig()) -> int:
    """Discrete bucket of a feature value; counts at or above the cap share one bucket."""
    fid = FeatureId(fid)
    kind = kind_of(fid)
    if kind == Kind.BOOLEAN:
        if value not in (0, 1):
            raise ValueError(f"{fid.name}={value} is not boolean")
        return int(value)
    if kind == Kind.COUNT:
        if value < 0 or value != int(value):
            raise ValueError(f"{fid.name}={value} is not a count")
        return min(int(value), cfg.count_cap)
    if not 0 <= value <= 100:
        raise ValueError(f"{fid.name}={value} outside [0, 100]")
    return min(int(value * cfg.bins_per_range_feature / 100.0), cfg.bins_per_range_feature - 1)


def quantize_vector(vec, cfg: GfrsConfig = GfrsConfig()) -> tuple[int, ...]:
    return tuple(quantize_feature(f, vec[f - 1], cfg) for f in FeatureId)


def _modal_bucket(fid, prototypes, cfg) -> tuple[int, float]:
    buckets = [quantize_feature(fid, p[fid - 1], cfg) for p in prototypes]
    values, counts = np.unique(buckets, return_counts=True)
    k = int(np.argmax(counts))
    return int(values[k]), counts[k] / len(buckets)


def feature_stability(fid: FeatureId | int, prototypes, cfg: GfrsConfig = GfrsConfig()) -> bool:
    protos = np.atleast_2d(np.asarray(prototypes, dtype=float))
    if len(protos) == 0:
        raise ValueError("need at least one prototype")
    return _modal_bucket(FeatureId(fid), protos, cfg)[1] >= cfg.stability_margin


@dataclass
class Node:
    feature: FeatureId | None = None
    children: dict[int, "Node"] = field(default_factory=dict)
    labels: tuple[str, ...] = ()
    oversized: bool = False

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


@dataclass
class FeatureTree:
    root: Node
    recommended_features: frozenset[FeatureId]
    max_group_size: int = 6
    bins_per_range_feature: int = 4
    count_cap: int = 4

    def leaves(self) -> list[tuple[str, Node]]:
        """(leaf id, node) in depth-first bucket order; ids are ``g00``, ``g01``..."""
        out = []

        def walk(node):
            if node.is_leaf:
                out.append((f"g{len(out):02d}", node))
                return
            for b in sorted(node.children):
                walk(node.children[b])

        walk(self.root)
        return out

    def groups(self) -> dict[str, tuple[str, ...]]:
        return {gid: node.labels for gid, node in self.leaves()}

    @property
    def max_leaf_size(self) -> int:
        return max(len(n.labels) for _, n in self.leaves())

    @property
    def oversized(self) -> list[str]:
        return [gid for gid, n in self.leaves() if n.oversized]

    def config(self) -> GfrsConfig:
        return GfrsConfig(self.max_group_size, self.bins_per_range_feature, count_cap=self.count_cap)

    def to_text(self) -> str:
        lines = [
            "#voltage-feature-tree\t1",
            f"max_group_size {self.max_group_size}",
            f"bins {self.bins_per_range_feature}",
            f"count_cap {self.count_cap}",
            "recommended " + " ".join(f.name for f in sorted(self.recommended_features)),
        ]

        def walk(node, indent, prefix):
            pad = "  " * indent
            if node.is_leaf:
                tag = "leaf!" if node.oversized else "leaf"
                lines.append(f"{pad}{prefix}{tag} " + " ".join(node.labels))
                return
            lines.append(f"{pad}{prefix}split {node.feature.name}")
            for b in sorted(node.children):
                walk(node.children[b], indent + 1, f"= {b} ")

        walk(self.root, 0, "")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "FeatureTree":
        rows = text.splitlines()
        if not rows or rows[0] != "#voltage-feature-tree\t1":
            raise ValueError("not a v1 feature tree")
        meta = {}
        for r in rows[1:5]:
            key, _, val = r.partition(" ")
            meta[key] = val
        body = [r for r in rows[5:] if r.strip()]
        pos = 0

        def parse(indent):
            nonlocal pos
            line = body[pos]
            pos += 1
            content = line[2 * indent:]
            if content.startswith("= "):
                content = content.split(" ", 2)[2]
            kind, _, rest = content.partition(" ")
            if kind in ("leaf", "leaf!"):
                return Node(labels=tuple(rest.split()), oversized=kind == "leaf!")
            node = Node(feature=FeatureId[rest.strip()])
            while pos < len(body) and body[pos].startswith("  " * (indent + 1) + "= "):
                bucket = int(body[pos][2 * (indent + 1):].split(" ")[1])
                node.children[bucket] = parse(indent + 1)
            return node

        root = parse(0)
        rec = frozenset(FeatureId[n] for n in meta["recommended"].split())
        return cls(root, rec, int(meta["max_group_size"]), int(meta["bins"]), int(meta["count_cap"]))


def _features_used(node: Node) -> set[FeatureId]:
    if node.is_leaf:
        return set()
    out = {node.feature}
    for child in node.children.values():
        out |= _features_used(child)
    return out


def _build(labels, buckets, stable, allowed, cfg, depth, warn) -> Node:
    if len(labels) <= cfg.max_group_size or (cfg.max_depth is not None and depth >= cfg.max_depth):
        node = Node(labels=tuple(labels), oversized=len(labels) > cfg.max_group_size)
        if node.oversized and warn:
            log.warning("group of %d labels exceeds bound %d at depth limit: %s",
                        len(labels), cfg.max_group_size, " ".join(labels))
        return node
    best = None
    for f in sorted(allowed):
        if not all(f in stable[lab] for lab in labels):
            continue
        parts: dict[int, list[str]] = {}
        for lab in labels:
            parts.setdefault(buckets[lab][f], []).append(lab)
        if len(parts) < 2:
            continue
        sizes = [len(p) for p in parts.values()]
        key = (max(sizes), sum(s * s for s in sizes), int(f))
        if best is None or key < best[0]:
            best = (key, f, parts)
    if best is None:
        if warn:
            log.warning("no stable feature separates %d labels (bound %d): %s",
                        len(labels), cfg.max_group_size, " ".join(labels))
        return Node(labels=tuple(labels), oversized=True)
    _, f, parts = best
    node = Node(feature=f)
    for b in sorted(parts):
        node.children[b] = _build(parts[b], buckets, stable, allowed, cfg, depth + 1, warn)
    return node


def recommend(charset: Mapping[str, np.ndarray], cfg: GfrsConfig = GfrsConfig()) -> FeatureTree:
    """Greedy partition tree over a charset's prototype feature vectors.

    Each node splits on the stable feature minimising the largest child
    (ties: smaller sum of squared child sizes, then lower feature id). The
    feature set is then pruned: any feature whose removal still meets the
    bound (or the best achievable leaf size) is dropped and the tree rebuilt.
    """
    if not charset:
        raise ValueError("empty charset")
    labels = sorted(charset)
    protos = {lab: np.atleast_2d(np.asarray(charset[lab], dtype=float)) for lab in labels}
    for lab, p in protos.items():
        if len(p) == 0:
            raise ValueError(f"label {lab!r} has no prototypes")
    allowed = set(FeatureId) if cfg.candidates is None else {FeatureId(f) for f in cfg.candidates}
    buckets, stable = {}, {}
    for lab in labels:
        buckets[lab], stable[lab] = {}, set()
        for f in allowed:
            b, agree = _modal_bucket(f, protos[lab], cfg)
            buckets[lab][f] = b
            if agree >= cfg.stability_margin:
                stable[lab].add(f)

    def build(feats, warn=False):
        return _build(labels, buckets, stable, feats, cfg, 0, warn)

    def worst(node):
        sizes = []

        def walk(n):
            if n.is_leaf:
                sizes.append(len(n.labels))
            for c in n.children.values():
                walk(c)

        walk(node)
        return max(sizes)

    tree = build(allowed)
    target = max(cfg.max_group_size, worst(tree))
    used = _features_used(tree)
    pruned = True
    while pruned:
        pruned = False
        for f in sorted(used, reverse=True):
            cand = build(used - {f})
            if worst(cand) <= target:
                used = _features_used(cand)
                pruned = True
                break
    root = build(used, warn=True)
    return FeatureTree(root, frozenset(_features_used(root)), cfg.max_group_size,
                       cfg.bins_per_range_feature, cfg.count_cap)


@dataclass(frozen=True)
class GroupAssignment:
    group: str
    flagged: bool  # an unseen bucket was mapped to its nearest neighbour


def assign_group(tree: FeatureTree, vec) -> GroupAssignment:
    cfg = tree.config()
    ids = {id(node): gid for gid, node in tree.leaves()}
    node, flagged = tree.root, False
    while not node.is_leaf:
        v = float(np.clip(vec[node.feature - 1], 0, None))
        if kind_of(node.feature) == Kind.RANGE:
            v = min(v, 100.0)
        elif kind_of(node.feature) == Kind.BOOLEAN:
            v = float(v >= 0.5)
        else:
            v = float(round(v))
        b = quantize_feature(node.feature, v, cfg)
        if b not in node.children:
            b = min(node.children, key=lambda k: (abs(k - b), k))
            flagged = True
        node = node.children[b]
    return GroupAssignment(ids[id(node)], flagged)
