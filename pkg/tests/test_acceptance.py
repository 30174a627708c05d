"""Acceptance criteria 1-9.

Each test records one pass/fail line; the lines are repeated in the
terminal summary.  Run alone with ``pytest tests/test_acceptance.py -s``.
"""
import json
import math
import time

import numpy as np
import pytest

from msc import cli
from msc.dictionary import Dictionary, ModalityBlock
from msc.evaluation import RankedList, average_precision, logistic_loss_grad, psnr
from msc.experiments import DenoiseConfig, SynthConfig, paired_margin, run_denoise, sweep
from msc.learning import Method, TrainConfig, train_ksvd
from msc.multimodal import JointModel, decomposition_terms
from msc.preprocessing import apply_whitening, fit_whitening
from msc.solvers import (kkt_violation, lasso, lasso_encode, lasso_objective, omp_config,
                         omp_encode)
from msc.tensor import save_matrix

from conftest import record, unit_dictionary
from oracles import hungarian_match, lasso_enumerate, precision_at_k_ap

pytestmark = pytest.mark.acceptance


def test_criterion_1_lasso_kkt_and_oracle():
    rng = np.random.default_rng(2024)
    worst_kkt = 0.0
    worst_gap = 0.0
    compared = 0
    elapsed = 0.0
    for i in range(200):
        N = int(rng.integers(8, 65))
        # half the instances are small enough for the exhaustive oracle
        K = int(rng.integers(2, 15)) if i % 2 == 0 else int(rng.integers(1, 2 * N + 1))
        D = unit_dictionary(rng, N, K)
        x = rng.standard_normal(N)
        lam = float(rng.uniform(0.05, 0.9) * 2 * np.abs(D.T @ x).max())
        t = time.perf_counter()
        y = lasso_encode(x, D, lasso(lam)).dense()
        elapsed += time.perf_counter() - t
        worst_kkt = max(worst_kkt, kkt_violation(x, D, y, lam))
        if K <= 14:
            best, _, certified = lasso_enumerate(x, D, lam)
            assert certified
            worst_gap = max(worst_gap, abs(lasso_objective(x, D, y, lam) - best))
            compared += 1
    ok = worst_kkt <= 1e-7 and worst_gap <= 1e-6 and elapsed < 60
    record(1, ok, f"max KKT {worst_kkt:.1e}, max oracle gap {worst_gap:.1e} on {compared} "
                  f"instances, solver time {elapsed:.2f} s")
    assert ok


def test_criterion_2_omp_exact_support():
    rng = np.random.default_rng(7)
    t = time.perf_counter()
    hits = 0
    for _ in range(100):
        D = unit_dictionary(rng, 64, 128)
        support = np.sort(rng.choice(128, 5, replace=False))
        y = np.zeros(128)
        y[support] = rng.uniform(1, 2, 5) * rng.choice([-1.0, 1.0], 5)
        code = omp_encode(D @ y, D, omp_config(5))
        hits += int(np.array_equal(code.indices, support))
    elapsed = time.perf_counter() - t
    ok = hits >= 95 and elapsed < 30
    record(2, ok, f"{hits}/100 exact supports in {elapsed:.2f} s")
    assert ok


def test_criterion_3_ksvd_orthogonal_recovery():
    rng = np.random.default_rng(3)
    Q, _ = np.linalg.qr(rng.standard_normal((40, 40)))
    labels = np.repeat(np.arange(40), 10)
    X = Q[:, labels] * rng.uniform(0.5, 2.0, labels.size) * rng.choice([-1, 1], labels.size)
    t = time.perf_counter()
    res = train_ksvd(X, TrainConfig(40, omp_config(1), method=Method.KSVD, epochs=50))
    elapsed = time.perf_counter() - t
    corr = hungarian_match(np.abs(res.dictionary.atoms.T @ Q))
    matched = int((corr > 0.99).sum())
    ok = matched >= 38 and elapsed < 120
    record(3, ok, f"{matched}/40 atoms with |corr| > 0.99 after 50 epochs, {elapsed:.2f} s")
    assert ok


def test_criterion_4_decomposition_identity():
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(50):
        na, nb, k = (int(v) for v in rng.integers(2, 64, 3))
        atoms = unit_dictionary(rng, na + nb, k) * rng.uniform(0.3, 1.0, k)
        blocks = [ModalityBlock("a", 0, na, 1 / math.sqrt(na)),
                  ModalityBlock("b", na, na + nb, 1 / math.sqrt(nb))]
        m = JointModel(Dictionary(atoms, blocks), (1 / na + 1 / nb) * 0.1, 0.1)
        xa, xb, y = rng.standard_normal(na), rng.standard_normal(nb), rng.standard_normal(k)
        # both sides written out directly
        x = np.concatenate([xa / math.sqrt(na), xb / math.sqrt(nb)])
        lhs = float(np.sum((x - atoms @ y) ** 2))
        Da, Db = atoms[:na] * math.sqrt(na), atoms[na:] * math.sqrt(nb)
        rhs = float(np.sum((xa - Da @ y) ** 2)) / na + float(np.sum((xb - Db @ y) ** 2)) / nb
        joint, per = decomposition_terms([xa, xb], m, y)
        worst = max(worst, abs(lhs - rhs), abs(joint - sum(per)), abs(joint - lhs))
    ok = worst <= 1e-10
    record(4, ok, f"max deviation {worst:.1e} over 50 models")
    assert ok


@pytest.mark.slow
def test_criterion_5_denoising():
    cfg = DenoiseConfig()
    t = time.perf_counter()
    rep = run_denoise(cfg)
    elapsed = time.perf_counter() - t
    res = rep["results"]
    noisy_dev = {s: abs(r["mean_noisy_psnr"] - r["reference_noisy_psnr"]) for s, r in res.items()}
    gains = {s: res[s]["mean_gain_db"] for s in ("0.005", "0.01")}
    ok = max(noisy_dev.values()) <= 0.5 and min(gains.values()) >= 2.0 and elapsed < 600
    summary = ", ".join(f"sigma {s}: noisy {r['mean_noisy_psnr']:.2f} dB, denoised "
                        f"{r['mean_denoised_psnr']:.2f} dB" for s, r in res.items())
    record(5, ok, f"{summary}; {elapsed:.0f} s")
    assert ok


SEEDS = range(5)


@pytest.mark.slow
@pytest.mark.xfail(strict=False, reason="ordinal scheme claims do not hold on the synthetic "
                                        "benchmark; see the decisions ledger")
def test_criterion_6_ordinal_scheme_claims():
    shallow = sweep(SynthConfig(), SEEDS)
    checks = [("joint", "uni-union"), ("multi-union", "joint"), ("cross-a", "uni-a")]
    parts = []
    ok = True
    for hi, lo in checks:
        d, se = paired_margin(shallow.accuracies(hi), shallow.accuracies(lo))
        # every claim needs a paired margin of at least one standard error
        ok &= d > 0 and d >= se
        parts.append(f"{hi}-{lo} {d:+.3f} (SE {se:.3f})")
    deep = sweep(SynthConfig(nonlinearity="square", schemes=("joint", "deep-3a", "deep-3b")),
                 SEEDS)
    joint = np.mean(deep.accuracies("joint"))
    gaps = {s: float(np.mean(deep.accuracies(s)) - joint) for s in ("deep-3a", "deep-3b")}
    ok &= max(gaps.values()) >= 0.02
    parts.append(f"deep-3a-joint {gaps['deep-3a']:+.3f}, deep-3b-joint {gaps['deep-3b']:+.3f}")
    record(6, ok, "; ".join(parts))
    assert ok


def test_criterion_7_whitening():
    rng = np.random.default_rng(8)
    d = 20
    A = rng.standard_normal((d, d))
    X = A @ rng.standard_normal((d, 100 * d)) + rng.standard_normal(d)[:, None]
    W = apply_whitening(fit_whitening(X, epsilon=0.0), X)
    cov = np.cov(W)
    err = float(np.linalg.norm(cov - np.eye(d)) / np.linalg.norm(np.eye(d)))
    ok = err <= 0.01
    record(7, ok, f"relative Frobenius error {err:.1e} at d={d}, n={100 * d}")
    assert ok


def test_criterion_8_metric_oracles():
    rng = np.random.default_rng(9)
    ap_err = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 60))
        pos = rng.random(n) < rng.uniform(0.05, 0.9)
        pos[rng.integers(n)] = True
        scores = rng.standard_normal(n)
        r = RankedList.from_scores(scores, pos)
        order = np.argsort(-scores, kind="stable")
        ap_err = max(ap_err, abs(average_precision(r) - precision_at_k_ap(pos[order])))
    F, n, C = 6, 30, 3
    X = rng.standard_normal((F, n))
    idx = rng.integers(0, C, n)
    p = rng.standard_normal(C * (F + 1))
    _, g = logistic_loss_grad(p, X, idx, C, 0.1)
    h = 1e-6
    fd = np.array([(logistic_loss_grad(p + h * e, X, idx, C, 0.1)[0]
                    - logistic_loss_grad(p - h * e, X, idx, C, 0.1)[0]) / (2 * h)
                   for e in np.eye(p.size)])
    grad_err = float(np.linalg.norm(fd - g) / np.linalg.norm(g))
    clean = np.zeros(100)
    spot = psnr(clean, clean + 0.1)
    ok = ap_err <= 1e-12 and grad_err < 1e-5 and spot == pytest.approx(20.0, abs=1e-12)
    record(8, ok, f"AP max error {ap_err:.1e}, gradient rel-err {grad_err:.1e}, "
                  f"PSNR at MSE 0.01 = {spot:.12f} dB")
    assert ok


def test_criterion_9_cli_determinism(tmp_path):
    rng = np.random.default_rng(10)
    save_matrix(rng.standard_normal((6, 60)), tmp_path / "a.msc")
    save_matrix(rng.standard_normal((4, 60)), tmp_path / "b.msc")
    a, b = f"a={tmp_path / 'a.msc'}", f"b={tmp_path / 'b.msc'}"
    (tmp_path / "den.json").write_text(json.dumps(
        {"n_train": 30, "n_test": 6, "num_atoms": 24, "train_patches": 80, "val_patches": 20,
         "epochs": 1, "repetitions": 1}))
    (tmp_path / "syn.json").write_text(json.dumps(
        {"n_examples": 40, "n_unlabeled": 40, "frames": 8, "epochs": 2, "num_atoms": 12,
         "deep_atoms": [12, 12, 12], "svm_c_grid": [1.0], "svm_epochs": 5}))
    commands = {
        "train-dict": (["train-dict", "--modality", a, "--k", 8, "--epochs", 3, "--seed", 2],
                       ["dictionary.msc", "dictionary.json", "report.json"]),
        "train-dict joint": (["train-dict", "--modality", a, "--modality", b, "--k", 8,
                              "--epochs", 2, "--seed", 2],
                             ["joint.msc", "joint.json", "report.json"]),
        "denoise": (["denoise", "--config", tmp_path / "den.json", "--sigma", "0.01",
                     "--seed", 2], ["report.json"]),
        "synth-classify": (["synth-classify", "--config", tmp_path / "syn.json", "--schemes",
                            "uni-a,joint,multi-union,deep-3b", "--seed", 2], ["report.json"]),
    }
    same = {}
    for name, (argv, files) in commands.items():
        outs = []
        for run in range(2):
            out = tmp_path / f"{name.replace(' ', '_')}{run}"
            assert cli.main([str(v) for v in argv] + ["--out", str(out)]) == 0
            outs.append(out)
        same[name] = all((outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
                         for f in files)
    dpath = tmp_path / "train-dict0" / "dictionary.msc"
    for run in range(2):
        assert cli.main(["encode", "--dictionary", str(dpath), "--modality", a,
                         "--out", str(tmp_path / f"enc{run}")]) == 0
    same["encode"] = all((tmp_path / "enc0" / f).read_bytes() == (tmp_path / "enc1" / f)
                         .read_bytes() for f in ("codes.msc", "report.json"))
    ok = all(same.values())
    record(9, ok, ", ".join(f"{k} {'identical' if v else 'DIFFERS'}" for k, v in same.items()))
    assert ok
