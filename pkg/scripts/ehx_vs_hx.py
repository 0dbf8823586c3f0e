"""Character boundaries recovered by HX and EHX as overlap and penalty weight vary."""
import argparse

from voltage.segmentation import ScriptClass, SegmentationConfig, segment_characters
from voltage.synthscript import boundaries_recovered, gen_charset, overlap_fixture


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--words", type=int, default=48)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--weights", type=float, nargs="+", default=[0.25, 0.5, 1.0, 2.0])
    a = ap.parse_args()
    charset = gen_charset(1)
    hx = SegmentationConfig(script_class=ScriptClass.ALPHABET)
    print("overlap  gaps  HX   " + "  ".join(f"EHX w={w:<4}" for w in a.weights))
    for overlap in (0.0, 0.25, 0.5, 0.75, 1.0):
        words = overlap_fixture(charset, a.words, seed=a.seed, overlap=overlap)
        total = sum(len(g) for _, g in words)
        h = sum(boundaries_recovered(segment_characters(img, hx), g) for img, g in words)
        row = []
        for w in a.weights:
            cfg = SegmentationConfig(script_class=ScriptClass.ABUGIDA, penalty_weight=w)
            row.append(sum(boundaries_recovered(segment_characters(img, cfg), g) for img, g in words))
        print(f"{overlap:7.2f}  {total:4d}  {h:3d}  " + "  ".join(f"{e:10d}" for e in row))


if __name__ == "__main__":
    main()
