import filecmp

import pytest

from voltage import dataio
from voltage.cli import main
from voltage.config import PipelineConfig, from_ini


def small_corpus(out, seed=0, pages=1):
    return main(["gen-synthetic", "--out", str(out), "--pages", str(pages), "--lines", "2",
                 "--words-per-line", "3", "--seed", str(seed)])


def same_tree(a, b):
    cmp = filecmp.dircmp(a, b)
    if cmp.left_only or cmp.right_only or cmp.funny_files:
        return False
    _, mismatch, errors = filecmp.cmpfiles(a, b, cmp.common_files, shallow=False)
    return not mismatch and not errors and all(same_tree(a / d, b / d) for d in cmp.common_dirs)


def test_gen_synthetic_repeat_identical(tmp_path):
    assert small_corpus(tmp_path / "a", 3) == 0
    assert small_corpus(tmp_path / "b", 3) == 0
    assert same_tree(tmp_path / "a", tmp_path / "b")
    assert small_corpus(tmp_path / "c", 4) == 0
    assert not same_tree(tmp_path / "a", tmp_path / "c")


def test_gen_synthetic_zero_pages(tmp_path):
    assert main(["gen-synthetic", "--out", str(tmp_path / "z"), "--pages", "0"]) == 0
    assert list((tmp_path / "z" / "pages").iterdir()) == []
    assert dataio.read_groundtruth(tmp_path / "z" / "groundtruth.tsv") == []


def test_fig_shaped_corpus(tmp_path):
    out = tmp_path / "fig"
    assert main(["gen-synthetic", "--out", str(out), "--pages", "1", "--lines", "18", "--words-per-line", "9"]) == 0
    assert len(dataio.truth_words(dataio.read_groundtruth(out / "groundtruth.tsv"))) == 162


def test_extract_round_trip_counts(tmp_path):
    small_corpus(tmp_path / "c")
    ws = tmp_path / "ws"
    assert main(["extract", "--workspace", str(ws), "--pages", str(tmp_path / "c" / "pages")]) == 0
    rows = dataio.read_manifest(ws / "manifest.tsv")
    assert len(rows) == len(dataio.read_groundtruth(tmp_path / "c" / "groundtruth.tsv"))


def test_extract_empty_dir(tmp_path):
    (tmp_path / "empty").mkdir()
    ws = tmp_path / "ws"
    assert main(["extract", "--workspace", str(ws), "--pages", str(tmp_path / "empty")]) == 0
    assert dataio.read_manifest(ws / "manifest.tsv") == []


def test_extract_corrupt_image(tmp_path, capsys):
    pages = tmp_path / "pages"
    pages.mkdir()
    (pages / "broken.png").write_bytes(b"not an image")
    assert main(["extract", "--workspace", str(tmp_path / "ws"), "--pages", str(pages)]) != 0
    assert "broken.png" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [["annotate", "--charset", "."], ["augment"], ["train"], ["recognize"]])
def test_missing_stage(tmp_path, argv, capsys):
    script = tmp_path / "script.ini"
    script.write_text("[classes]\nka = consonant\n")
    if argv == ["recognize"]:
        argv = argv + ["--pages", str(tmp_path), "--script", str(script)]
    assert main(argv + ["--workspace", str(tmp_path / "nothing")]) != 0
    assert "first" in capsys.readouterr().err


def test_malformed_script_model(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[classes\nka = consonant\n")
    assert main(["recognize", "--workspace", str(tmp_path), "--pages", str(tmp_path), "--script", str(bad)]) != 0
    assert "malformed" in capsys.readouterr().err


def test_evaluate_empty_ground_truth(tmp_path, capsys):
    gt = tmp_path / "gt.tsv"
    dataio.write_groundtruth(gt, [])
    assert main(["evaluate", "--workspace", str(tmp_path), "--ground-truth", str(gt)]) != 0
    assert "empty" in capsys.readouterr().err


def test_schema_mismatch(tmp_path, capsys):
    ws = tmp_path / "ws"
    ws.mkdir()
    (ws / "manifest.tsv").write_text("#voltage-manifest\t9\n")
    assert main(["annotate", "--workspace", str(ws), "--charset", str(tmp_path)]) != 0
    assert "v1" in capsys.readouterr().err


def test_config_flags_either_side(tmp_path, capsys):
    ini = tmp_path / "c.ini"
    ini.write_text("[training]\nepochs = 2\n")
    for argv in (["--config", str(ini), "config"], ["config", "--config", str(ini)]):
        assert main(argv) == 0
        assert from_ini(capsys.readouterr().out).training.epochs == 2
    assert main(["config", "--emit-default"]) == 0
    assert from_ini(capsys.readouterr().out) == PipelineConfig()
    assert main(["config", "--config", str(tmp_path / "missing.ini")]) != 0


def test_workspace_env(tmp_path, monkeypatch):
    (tmp_path / "empty").mkdir()
    monkeypatch.setenv("VOLTAGE_WORKSPACE", str(tmp_path / "envws"))
    assert main(["extract", "--pages", str(tmp_path / "empty")]) == 0
    assert (tmp_path / "envws" / "manifest.tsv").exists()
