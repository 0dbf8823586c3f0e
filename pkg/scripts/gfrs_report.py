"""Feature recommendation per charset profile and its effect on clustering.

For each profile: the recommended features, group sizes, and middle-zone
clustering accuracy with and without feature grouping.
"""
import argparse

import numpy as np

from voltage.annotate import ClusteringConfig, cluster_symbols, clustering_accuracy
from voltage.gfrs import GfrsConfig, recommend
from voltage.glyphfeat import features_of
from voltage.segmentation import Zone
from voltage.synthscript import gen_charset, prototypes, render_glyph

PROFILES = {"default-64": (33, 11, 10, 10), "takri-59": (33, 11, 9, 6), "small-24": (12, 6, 3, 3)}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--per-label", type=int, default=20)
    ap.add_argument("--bound", type=int, default=6)
    ap.add_argument("--charset-seed", type=int, default=1)
    a = ap.parse_args()
    for name, counts in PROFILES.items():
        cs = gen_charset(a.charset_seed, counts)
        mids = cs.labels(zone=Zone.MIDDLE)
        protos = prototypes(cs, n=5, jitter=1, labels=mids)
        tree = recommend(protos, GfrsConfig(max_group_size=a.bound))
        sizes = sorted((len(v) for v in tree.groups().values()), reverse=True)
        rng = np.random.default_rng(0)
        feats, truth = [], []
        for lab in mids:
            for _ in range(a.per_label):
                feats.append(features_of(render_glyph(cs.glyphs[lab], rng, 1)))
                truth.append(lab)
        feats = np.array(feats)
        zones = [Zone.MIDDLE] * len(feats)
        _, flat = cluster_symbols(zones, feats, {Zone.MIDDLE: mids}, None, ClusteringConfig())
        _, grouped = cluster_symbols(zones, feats, {Zone.MIDDLE: mids}, tree, ClusteringConfig())
        print(f"{name}: {len(mids)} middle-zone labels")
        print("  features " + " ".join(f.name for f in sorted(tree.recommended_features)))
        print(f"  {len(sizes)} groups, sizes {sizes}")
        print(f"  clustering flat {clustering_accuracy(flat, truth):.3f}  grouped {clustering_accuracy(grouped, truth):.3f}")


if __name__ == "__main__":
    main()
