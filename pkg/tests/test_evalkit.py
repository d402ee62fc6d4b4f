import math

import numpy as np
import pytest

from protectkit import attacks as A
from protectkit import evalkit as E
from protectkit import models as M
from protectkit.imageio import synth_corpus_arrays


@pytest.fixture(scope="module")
def corpus():
    return synth_corpus_arrays(4, 32, seed=2)


def test_psnr_values():
    a = np.zeros((3, 4, 4))
    assert E.psnr(a, a) == math.inf
    assert E.psnr(a, a + 1.0) == pytest.approx(0.0)
    # 20 log10(255)
    assert E.psnr(a, a + 1.0, max_val=255.0) == pytest.approx(48.1308, abs=1e-3)
    with pytest.raises(ValueError):
        E.mse(a, np.zeros((3, 4, 5)))


def test_records_agree_with_psnr_formula(corpus):
    spec = M.toy_recon_model(0)
    prot = np.clip(corpus + 0.01, 0, 1)
    for r in E.evaluate("x", spec, corpus, prot):
        assert r.perturb_psnr == pytest.approx(10 * math.log10(1 / r.perturb_mse))
        assert r.output_psnr == pytest.approx(10 * math.log10(1 / r.output_mse))
    clean = E.evaluate("x", spec, corpus, corpus)
    assert all(r.perturb_psnr == math.inf for r in clean)


def test_no_compression_row_equals_plain_evaluation(corpus):
    spec = M.toy_recon_model(0)
    prot = np.clip(corpus - 0.02, 0, 1)
    rows = E.robustness_eval("x", spec, corpus, prot, qualities=(80, 30), levels=2)
    assert [r.quality for r in rows] == ["none", "80", "30", "30+80"]
    plain = E.summarize(E.evaluate("x", spec, corpus, prot))
    assert rows[0].output_mse == plain["output_mse"]
    with pytest.raises(ValueError):
        E.robustness_eval("x", spec, corpus, prot, levels=3)


def test_compress_uses_real_jpeg(corpus):
    once = E.compress(corpus, (30,))
    assert once.shape == corpus.shape
    assert np.abs(once - corpus).max() > 0
    twice = E.compress(corpus, (30, 80))
    assert not np.array_equal(once, twice)
    assert E.compress(corpus, None) is corpus


def test_constant_method_has_zero_variance():
    spec = M.identity_model()
    clean = np.full((5, 3, 8, 8), 0.4, dtype=np.float32)
    rep = E.distribution_report("const", spec, clean, clean)
    assert rep.variance == 0.0
    assert rep.max_mean_ratio == pytest.approx(1.0)


def curve(*pairs):
    return [E.CurvePoint("m", i, p, 0.0, o, 0.0) for i, (p, o) in enumerate(pairs)]


def test_interpolation_in_log_perturbation():
    c = curve((1e-4, 0.3), (1e-2, 0.1))
    assert E.interpolate(c, 1e-3) == pytest.approx(0.2)
    assert E.interpolate(c, 1e-6) == pytest.approx(0.3)
    assert E.shared_range(c, curve((1e-3, 0.2), (1e-1, 0.0), (2e-1, 0.0))) == (1e-3, 1e-2)


def test_monotone_violations():
    assert E.monotone_violations(curve((1, 0.3), (2, 0.2), (3, 0.25), (4, 0.1))) == 1


def test_sweep_identity_ifgsm(corpus):
    spec = M.identity_model()
    tasks = [A.Task(spec, corpus)]
    pts = E.sweep_curve("ifgsm", tasks, corpus, [0.01, 0.02, 0.04], A.AttackConfig(steps=12))
    assert [p.param for p in pts] == [0.01, 0.02, 0.04]
    assert E.monotone_violations(pts) == 0
    with pytest.raises(ValueError):
        E.sweep_curve("ifgsm", tasks, corpus, [0.01, 0.02], A.AttackConfig())
    with pytest.raises(ValueError):
        E.sweep_curve("ifgsm", tasks, corpus[:0], [0.01, 0.02, 0.03], A.AttackConfig())


def test_sweep_learned_method_writes_table(corpus, tmp_path):
    spec = M.toy_recon_model(0)
    pts = E.sweep_curve("global", [A.Task(spec, corpus)], corpus, [0.1, 10.0, 1000.0], A.AttackConfig(steps=30))
    # a larger perturbation weight never buys a larger perturbation
    by_lam = sorted(pts, key=lambda p: p.param)
    assert by_lam[0].perturb_mse >= by_lam[-1].perturb_mse
    path = E.write_table(pts, tmp_path / "curve.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "method,param,perturb_mse,perturb_psnr,output_mse,output_psnr"
    assert len(lines) == 4


def test_unknown_method(corpus):
    with pytest.raises(ValueError):
        E.build_protector("dither", [A.Task(M.identity_model(), corpus)], A.AttackConfig())


def test_bench_stats():
    res = E.runtime_bench({"noop": lambda: None}, repeats=1)
    assert res[0].std_ms == 0.0 and res[0].repeats == 1
    with pytest.raises(ValueError):
        E.runtime_bench({"noop": lambda: None}, repeats=0)


def test_write_summary(tmp_path):
    p = E.write_summary({"a": 1, "b": math.inf, "c": 0.5}, tmp_path / "s.txt")
    assert p.read_text() == "a = 1\nb = inf\nc = 0.5\n"
    with pytest.raises(ValueError):
        E.write_table([], tmp_path / "t.csv")
