"""Command line: ``voltage <stage> [options]``.

Stages run against a workspace directory (``--workspace`` or the
VOLTAGE_WORKSPACE environment variable, default ``./workspace``).
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

from . import pipeline
from .config import PRESETS, PipelineConfig, emit_default, from_ini, to_ini
from .metrics import UndefinedRate
from .pipeline import StageError, Workspace
from .postrules import ConfigError
from .dataio import SchemaError

AUTO = "auto"


def _common(default) -> argparse.ArgumentParser:
    # accepted before or after the subcommand; subparsers use SUPPRESS so
    # they do not overwrite values given before the subcommand
    common = argparse.ArgumentParser(add_help=False, argument_default=default)
    common.add_argument("--config", type=Path, help="INI config file (see 'config --emit-default')")
    common.add_argument("--seed", type=int, help="seed for every stochastic stage")
    common.add_argument("--workspace", type=Path, help="workspace directory [$VOLTAGE_WORKSPACE or ./workspace]")
    common.add_argument("--jobs", type=int, help="worker processes for per-page work")
    common.add_argument("-v", "--verbose", action="store_true", default=default if default else False)
    return common


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="voltage", description=__doc__.splitlines()[0], parents=[_common(None)])
    common = _common(argparse.SUPPRESS)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-synthetic", parents=[common], help="render a labelled synthetic corpus")
    g.add_argument("--out", type=Path, required=True)
    g.add_argument("--pages", type=int)
    g.add_argument("--lines", type=int)
    g.add_argument("--words-per-line", type=int)
    g.add_argument("--noise", type=float)
    g.add_argument("--overlap", type=float)
    g.add_argument("--jitter", type=int)
    g.add_argument("--charset-seed", type=int)
    g.add_argument("--preset", choices=sorted(PRESETS))

    e = sub.add_parser("extract", parents=[common], help="segment pages into zoned symbols")
    e.add_argument("--pages", type=Path, help="directory of page images (PNG/PGM)")

    a = sub.add_parser("annotate", parents=[common], help="features, feature tree, clustering, label map")
    a.add_argument("--charset", type=Path, help="charset directory with charset.tsv")
    a.add_argument("--ground-truth", nargs="?", const=AUTO, default=None, metavar="PATH",
                   help="fill the label map from ground truth [default PATH: <charset>/../groundtruth.tsv]")

    sub.add_parser("augment", parents=[common], help="augment labelled symbols")
    sub.add_parser("train", parents=[common], help="train the contrastive recognizer")

    r = sub.add_parser("recognize", parents=[common], help="recognize pages and apply post-rules")
    r.add_argument("--pages", type=Path)
    r.add_argument("--script", type=Path, help="script model INI [default: <charset>/../script.ini]")
    r.add_argument("--charset", type=Path, help="charset directory (locates the default script model)")
    r.add_argument("--dictionary", type=Path, help="newline-delimited word list")

    v = sub.add_parser("evaluate", parents=[common], help="CER / WER / E2E against ground truth")
    v.add_argument("--ground-truth", type=Path, required=True, metavar="PATH")

    c = sub.add_parser("config", parents=[common], help="show configuration")
    c.add_argument("--emit-default", action="store_true", help="print every default")
    return ap


def _load_config(args) -> PipelineConfig:
    cfg = PipelineConfig()
    if args.config is not None:
        if not args.config.exists():
            raise StageError(f"config file {args.config} not found")
        cfg = from_ini(args.config.read_text(encoding="utf-8"))
    if args.seed is not None:
        cfg = cfg.seeded(args.seed)
    if args.jobs is not None:
        cfg = dataclasses.replace(cfg, jobs=max(1, args.jobs))
    paths = {}
    for name in ("pages", "charset", "script", "dictionary"):
        val = getattr(args, name, None)
        if val is not None and not (name == "pages" and args.command == "gen-synthetic"):
            paths[name] = str(val)
    if paths:
        cfg = dataclasses.replace(cfg, paths=dataclasses.replace(cfg.paths, **paths))
    if args.command == "gen-synthetic":
        synth = {}
        if args.preset:
            synth.update(PRESETS[args.preset])
        for name in ("pages", "lines", "words_per_line", "noise", "overlap", "jitter", "charset_seed"):
            val = getattr(args, name)
            if val is not None:
                synth[name] = val
        cfg = dataclasses.replace(cfg, synthetic=dataclasses.replace(cfg.synthetic, **synth))
    return cfg


def _workspace(args) -> Workspace:
    root = args.workspace or os.environ.get("VOLTAGE_WORKSPACE") or "workspace"
    return Workspace(Path(root))


def _need(path: str, what: str) -> Path:
    if not path:
        raise StageError(f"no {what} given (flag or [paths] config)")
    p = Path(path)
    if not p.exists():
        raise StageError(f"{what} {p} does not exist")
    return p


def run(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = _load_config(args)
    ws = _workspace(args)
    cmd = args.command
    if cmd == "config":
        sys.stdout.write(emit_default() if args.emit_default else to_ini(cfg))
    elif cmd == "gen-synthetic":
        info = pipeline.gen_synthetic(args.out, cfg)
        print(f"wrote {info['pages']} pages, {info['words']} words, {info['symbols']} symbols to {args.out}")
    elif cmd == "extract":
        n = pipeline.extract(ws, _need(cfg.paths.pages, "pages directory"), cfg)
        print(f"extracted {n} symbols into {ws.root}")
    elif cmd == "annotate":
        charset = _need(cfg.paths.charset, "charset directory")
        gt = args.ground_truth
        if gt == AUTO:
            gt = charset.parent / "groundtruth.tsv"
        if gt is not None:
            gt = _need(str(gt), "ground truth")
        res = pipeline.annotate(ws, charset, cfg, gt)
        groups = len(res.tree.leaves())
        print(f"{res.n_symbols} symbols, {res.n_clusters} clusters, {groups} feature groups "
              f"(max {res.tree.max_leaf_size} labels), features "
              + " ".join(f.name for f in sorted(res.tree.recommended_features)))
        if res.labelled:
            for k, v in res.accuracy.items():
                print(f"clustering accuracy {k}: {v:.4f}")
        else:
            print(f"fill in the label column of {ws.labelmap} using the images in {ws.review}, "
                  f"then run 'voltage augment'")
    elif cmd == "augment":
        print(f"{pipeline.augment(ws, cfg)} training images in {ws.augmented}")
    elif cmd == "train":
        rec = pipeline.train_stage(ws, cfg)
        last = f"{rec.loss_history[-1]:.4f}" if rec.loss_history else "n/a"
        print(f"trained on {len(rec.labels)} labels, final loss {last}; model {ws.model}")
    elif cmd == "recognize":
        charset_script = Path(cfg.paths.charset).parent / "script.ini" if cfg.paths.charset else None
        script_path = cfg.paths.script or (str(charset_script) if charset_script else "")
        script = pipeline.load_script(_need(script_path, "script model"), cfg.paths.dictionary)
        words = pipeline.recognize(ws, _need(cfg.paths.pages, "pages directory"), cfg, script)
        print(f"recognized {len(words)} words; transcript {ws.recognized / 'transcript.txt'}")
    elif cmd == "evaluate":
        rep = pipeline.evaluate(ws, _need(str(args.ground_truth), "ground truth"))
        sys.stdout.write(rep.summary())
    return 0


def main(argv=None) -> int:
    try:
        return run(argv)
    except (StageError, SchemaError, ConfigError, FileNotFoundError, KeyError, UndefinedRate, ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"voltage: error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

