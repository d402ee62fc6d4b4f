import os
import subprocess
import sys

import numpy as np
import pytest

from protectkit import cli
from protectkit import imageio as I


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    assert run("synth", "--n", 3, "--size", 32, "--seed", 1, "--out", out) == 0
    return out / "images"


def read(path):
    return path.read_bytes()


def manifest(out):
    return dict(line.split(" = ", 1) for line in (out / "manifest.txt").read_text().splitlines())


def test_blob_hash_matches_git():
    # `printf 'hello\n' | git hash-object --stdin`
    assert cli.blob_sha1(b"hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a"


def test_synth_manifest(corpus):
    m = manifest(corpus.parent)
    assert m["command"] == "synth"
    assert m["seed"] == "1"
    assert "input.clean/img_0000.ppm" not in m
    assert m["output.images/img_0000.ppm"] == cli.blob_sha1(read(corpus / "img_0000.ppm"))


def test_config_file_and_validation(tmp_path, corpus, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\neps = 0.02\nsteps = 3\n", encoding="utf-8")
    assert run("attack", "ifgsm", "--images", corpus, "--config", cfg, "--steps", 2, "--out", tmp_path / "a") == 0
    m = manifest(tmp_path / "a")
    assert m["config.eps"] == "0.02"
    assert m["config.steps"] == "2"
    protected, _ = I.load_corpus(tmp_path / "a" / "images")
    clean, _ = I.load_corpus(corpus)
    assert np.abs(protected - clean).max() <= 0.02 + 0.5 / 255

    for text, msg in [
        ("eps = 0\n", "eps must be > 0"),
        ("eps = -0.1\n", "eps must be > 0"),
        ("quality = 100\n", "quality must be in [1, 99]"),
        ("quality = 0\n", "quality must be in [1, 99]"),
        ("steps = -1\n", "steps must be >= 0"),
        ("colour = red\n", "unknown config key 'colour'"),
        ("eps = lots\n", "bad value for eps"),
        ("just words\n", "expected 'key = value'"),
    ]:
        cfg.write_text(text, encoding="utf-8")
        assert run("attack", "ipgd", "--images", corpus, "--config", cfg, "--out", tmp_path / "b") == 2
        assert msg in capsys.readouterr().err


def test_unknown_command_and_flag(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run("frobnicate")
    assert exc.value.code != 0
    with pytest.raises(SystemExit) as exc:
        run("synth", "--out", tmp_path, "--colour", "red")
    assert exc.value.code != 0


def test_attack_zero_steps_is_identity(tmp_path, corpus):
    assert run("attack", "ipgd", "--images", corpus, "--steps", 0, "--out", tmp_path) == 0
    for p in sorted(corpus.glob("*.ppm")):
        assert read(tmp_path / "images" / p.name) == read(p)


def test_jpeg_roundtrip_constant_image(tmp_path, capsys):
    img = np.empty((3, 16, 16))
    img[0], img[1], img[2] = 0.8, 0.1, 0.45
    I.save_image(img, tmp_path / "flat.ppm")
    assert run("jpeg", "roundtrip", "--images", tmp_path / "flat.ppm", "--quality", 99, "--mode", "true", "--out", tmp_path / "o") == 0
    mse = float(capsys.readouterr().out.split("=")[1])
    assert mse <= 1.0


def test_pipeline_and_determinism(tmp_path, corpus):
    def pipeline(root):
        steps = [
            ("optimize-global", "--task", f"toy_recon:{corpus}", "--steps", 15, "--lam", 1, "--out", root / "g"),
            ("train-generator", "--task", f"toy_recon:{corpus}", "--delta-g", root / "g", "--steps", 6,
             "--base-width", 8, "--jpeg", "random", "--out", root / "gen"),
            ("protect", "--generator", root / "gen", "--images", corpus, "--out", root / "p"),
            ("evaluate", "robustness", "--clean", corpus, "--protected", root / "p" / "images", "--levels", 2, "--out", root / "r"),
            ("evaluate", "distribution", "--clean", corpus, "--protected", root / "p" / "images", "--out", root / "d"),
            ("evaluate", "sweep", "--method", "ipgd", "--task", f"toy_recon:{corpus}", "--test", corpus,
             "--steps", 3, "--grid", "0.01,0.02,0.04", "--out", root / "s"),
        ]
        for argv in steps:
            assert run(*argv) == 0, argv
        return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}

    a = pipeline(tmp_path / "a")
    b = pipeline(tmp_path / "b")
    assert a.keys() == b.keys()
    for k in a:
        assert a[k] == b[k], k
    rob = (tmp_path / "a" / "r" / "robustness.csv").read_text().splitlines()
    assert rob[0] == "method,quality,output_mse,output_psnr"
    assert [r.split(",")[1] for r in rob[1:]] == ["none", "80", "30", "30+80"]
    m = manifest(tmp_path / "a" / "r")
    assert m["input.clean/img_0000.ppm"] == cli.blob_sha1(read(corpus / "img_0000.ppm"))
    prot = tmp_path / "a" / "p" / "images" / "img_0000.ppm"
    assert m["input.protected/img_0000.ppm"] == cli.blob_sha1(read(prot))
    log = (tmp_path / "a" / "gen" / "log.jsonl").read_text().splitlines()
    assert len(log) == 6


def test_parallel_attack_matches_serial(tmp_path, corpus):
    assert run("attack", "ifgsm", "--images", corpus, "--steps", 4, "--out", tmp_path / "s") == 0
    assert run("attack", "ifgsm", "--images", corpus, "--steps", 4, "--jobs", 2, "--out", tmp_path / "p") == 0
    for p in sorted(corpus.glob("*.ppm")):
        assert read(tmp_path / "s" / "images" / p.name) == read(tmp_path / "p" / "images" / p.name)


def test_generator_requires_conditioning(tmp_path, corpus, capsys):
    assert run("train-generator", "--task", f"toy_recon:{corpus}", "--steps", 1, "--out", tmp_path) == 2
    assert "--delta-g" in capsys.readouterr().err
    assert run("optimize-global", "--task", f"toy_blend:{corpus}", "--steps", 1, "--out", tmp_path) == 2


def test_bench_command(tmp_path, corpus):
    assert run("train-generator", "--task", f"toy_recon:{corpus}", "--image-only", "--steps", 1,
               "--base-width", 8, "--out", tmp_path / "gen") == 0
    assert run("evaluate", "bench", "--generator", tmp_path / "gen", "--images", corpus,
               "--repeats", 1, "--steps", 2, "--out", tmp_path / "b") == 0
    rows = (tmp_path / "b" / "bench.csv").read_text().splitlines()
    assert [r.split(",")[0] for r in rows[1:]] == ["ifgsm", "ipgd", "generator"]


def test_module_entry_point(tmp_path):
    env = dict(os.environ, OPENBLAS_NUM_THREADS="1")
    argv = [sys.executable, "-m", "protectkit", "synth", "--n", "1", "--size", "16", "--out", str(tmp_path)]
    res = subprocess.run(argv, capture_output=True, text=True, env=env)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "images" / "img_0000.ppm").exists()
