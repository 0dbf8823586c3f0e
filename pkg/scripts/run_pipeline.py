"""Run the whole CLI pipeline on a synthetic corpus and print the report.

    python scripts/run_pipeline.py --out runs/clean
    python scripts/run_pipeline.py --out runs/noisy --preset paper-like --heldout-seed 1
"""
import argparse
import time
from pathlib import Path

from voltage.cli import main


def stage(argv):
    t0 = time.perf_counter()
    if main(argv) != 0:
        raise SystemExit(f"stage failed: {' '.join(argv)}")
    print(f"  [{argv[0]} {time.perf_counter() - t0:.1f}s]")


def run(out: Path, seed: int, pages: int, preset: str | None, heldout_seed: int | None, config: Path | None):
    extra = ["--preset", preset] if preset else []
    train_dir = out / "corpus"
    stage(["gen-synthetic", "--out", str(train_dir), "--pages", str(pages), "--seed", str(seed)] + extra)
    test_dir = train_dir
    if heldout_seed is not None:
        test_dir = out / "heldout"
        stage(["gen-synthetic", "--out", str(test_dir), "--pages", str(pages), "--seed", str(heldout_seed)] + extra)
    common = ["--workspace", str(out / "ws"), "--seed", str(seed)]
    if config:
        common += ["--config", str(config)]
    stage(["extract", "--pages", str(train_dir / "pages")] + common)
    stage(["annotate", "--charset", str(train_dir / "charset"), "--ground-truth"] + common)
    stage(["augment"] + common)
    stage(["train"] + common)
    stage(["recognize", "--pages", str(test_dir / "pages"), "--charset", str(test_dir / "charset")] + common)
    stage(["evaluate", "--ground-truth", str(test_dir / "groundtruth.tsv")] + common)


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--pages", type=int, default=5)
    ap.add_argument("--preset", choices=["clean", "paper-like"])
    ap.add_argument("--heldout-seed", type=int, help="recognize a second corpus made with this seed")
    ap.add_argument("--config", type=Path)
    a = ap.parse_args()
    run(a.out, a.seed, a.pages, a.preset, a.heldout_seed, a.config)
