import math

import numpy as np
import pytest

from msc.dictionary import Dictionary, ModalityBlock
from msc.errors import ArgumentError, ShapeError
from msc.learning import TrainConfig
from msc.multimodal import (JointModel, ModalitySpec, concat_input, coupling, cross_encode,
                            cross_encode_dense, cross_reconstruct, decomposition_terms,
                            feature_union, joint_encode, load_joint, save_joint, train_joint)
from msc.solvers import L1, SparseCode, kkt_violation, lasso

from conftest import unit_dictionary


def random_model(rng, na, nb, k, lam_cross=0.1):
    atoms = unit_dictionary(rng, na + nb, k) * rng.uniform(0.3, 1.0, k)
    blocks = [ModalityBlock("a", 0, na, 1 / math.sqrt(na)),
              ModalityBlock("b", na, na + nb, 1 / math.sqrt(nb))]
    lam_joint = (1 / na + 1 / nb) * lam_cross
    return JointModel(Dictionary(atoms, blocks), lam_joint, lam_cross)


# ------------------------------------------------------------ concat_input

def test_concat_symmetric_and_zero(rng):
    xa, xb = rng.standard_normal(9), rng.standard_normal(9)
    x = concat_input([xa, xb])
    np.testing.assert_allclose(x, np.concatenate([xa, xb]) / 3.0, rtol=1e-15)
    z = concat_input([np.zeros(9), xb])
    assert np.all(z[:9] == 0)
    np.testing.assert_allclose(z[9:], xb / 3.0, rtol=1e-15)


def test_concat_norm_identity(rng):
    xa, xb = rng.standard_normal(32), rng.standard_normal(128)
    x = concat_input([xa, xb], [ModalitySpec("a", 32), ModalitySpec("b", 128)])
    assert x @ x == pytest.approx(xa @ xa / 32 + xb @ xb / 128, abs=1e-12)


def test_concat_checks(rng):
    with pytest.raises(ShapeError):
        concat_input([np.ones(3), np.ones(4)], [ModalitySpec("a", 3), ModalitySpec("b", 5)])
    with pytest.raises(ArgumentError):
        concat_input([np.ones((3, 2)), np.ones((4, 3))])
    assert ModalitySpec("a", 16).weight == 0.25


# ------------------------------------------------------------------ model

def test_coupling_rule_enforced(rng):
    m = random_model(rng, 16, 16, 20, lam_cross=0.8)
    assert m.lambda_joint == pytest.approx(0.1)
    assert coupling([16, 16]) == 0.125
    with pytest.raises(ArgumentError):
        JointModel(m.dictionary, 0.2, 0.8)
    # uncoupled: lambdas are independent
    JointModel(m.dictionary, 0.2, 0.8, coupled=False)


def test_decomposition_identity(rng):
    for _ in range(20):
        na, nb, k = (int(v) for v in rng.integers(2, 40, 3))
        m = random_model(rng, na, nb, k)
        xa, xb, y = rng.standard_normal(na), rng.standard_normal(nb), rng.standard_normal(k)
        joint, per = decomposition_terms([xa, xb], m, y)
        assert joint == pytest.approx(sum(per), abs=1e-10)


def test_penalty_coupling_identity(rng):
    m = random_model(rng, 12, 20, 15, lam_cross=0.37)
    y = rng.standard_normal(15)
    l1 = np.abs(y).sum()
    assert m.lambda_joint * l1 == pytest.approx((1 / 12 + 1 / 20) * m.lambda_cross * l1,
                                                rel=1e-12)


def test_sub_dictionary_unscaled(rng):
    m = random_model(rng, 4, 9, 6)
    np.testing.assert_allclose(m.sub_dictionary("a"), m.dictionary.atoms[:4] * 2.0)
    np.testing.assert_allclose(m.sub_dictionary("b"), m.dictionary.atoms[4:] * 3.0)
    # joint atoms bounded, blocks need not be
    assert np.all(m.dictionary.atom_norms() <= 1 + 1e-12)


# ----------------------------------------------------------- cross coding

def test_cross_encode_single_atom_and_threshold(rng):
    m = random_model(rng, 16, 16, 20)
    Da = m.sub_dictionary("a")
    code = cross_encode(Da[:, 5], m, "a", lam=1e-6)
    dense = code.dense()
    assert np.argmax(np.abs(dense)) == 5
    assert np.abs(np.delete(dense, 5)).max() < 1e-3 * abs(dense[5])
    x = rng.standard_normal(16)
    lam0 = 2 * np.abs(Da.T @ x).max()
    assert cross_encode(x, m, "a", lam=lam0).nnz == 0


def test_cross_encode_kkt_and_default_lambda(rng):
    m = random_model(rng, 8, 12, 20, lam_cross=0.3)
    x = rng.standard_normal(12)
    code = cross_encode(x, m, "b")
    assert code.regularizer == L1(0.3)
    assert kkt_violation(x, m.sub_dictionary("b"), code.dense(), 0.3) <= 1e-7
    X = rng.standard_normal((12, 4))
    Y = cross_encode_dense(X, m, "b")
    np.testing.assert_array_equal(Y[:, 1], cross_encode(X[:, 1], m, "b").dense())


def test_cross_errors(rng):
    m = random_model(rng, 8, 12, 20)
    with pytest.raises(ArgumentError):
        cross_encode(np.ones(8), m, "c")
    with pytest.raises(ShapeError):
        cross_encode(np.ones(9), m, "a")


def test_cross_reconstruct_zero_and_columns(rng):
    m = random_model(rng, 8, 12, 20)
    np.testing.assert_array_equal(cross_reconstruct(np.zeros(8), m, "a", "b"), np.zeros(12))
    X = rng.standard_normal((8, 3))
    R = cross_reconstruct(X, m, "a", "b")
    np.testing.assert_allclose(R[:, 2], cross_reconstruct(X[:, 2], m, "a", "b"), atol=1e-12)


def test_duplicate_modality_cross_equals_self(rng):
    X = rng.standard_normal((6, 120))
    cfg = TrainConfig(12, lasso(0.05), epochs=5, batch_size=40)
    m, trace = train_joint({"a": X, "b": X.copy()}, cfg)
    for j in range(5):
        x = X[:, j]
        cross = cross_reconstruct(x, m, "a", "b")
        self_rec = cross_reconstruct(x, m, "a", "a")
        assert np.linalg.norm(x - cross) == pytest.approx(np.linalg.norm(x - self_rec), abs=1e-9)


# ---------------------------------------------------------------- training

def test_train_joint_blocks_and_lambdas(rng):
    Xa, Xb = rng.standard_normal((16, 150)), rng.standard_normal((16, 150))
    m, trace = train_joint({"a": Xa, "b": Xb}, TrainConfig(30, lasso(0.05), epochs=4))
    assert m.names == ("a", "b")
    assert m.lambda_cross == pytest.approx(8 * 0.05)
    assert [b.weight for b in m.dictionary.modality_blocks] == [0.25, 0.25]
    assert len(trace) == 4
    Y = joint_encode([Xa[:, :3], Xb[:, :3]], m)
    assert Y.shape == (30, 3)
    m2, _ = train_joint({"a": Xa, "b": Xb}, TrainConfig(30, lasso(0.05), epochs=1),
                        lambda_cross=1.0)
    assert not m2.coupled and m2.lambda_cross == 1.0


def test_train_joint_rejects_unpaired(rng):
    with pytest.raises(ArgumentError):
        train_joint({"a": np.ones((3, 5)), "b": np.ones((3, 6))}, TrainConfig(2, lasso(0.1)))
    with pytest.raises(ArgumentError):
        train_joint({"a": np.ones((3, 5))}, TrainConfig(2, lasso(0.1)))


def test_joint_roundtrip(rng, tmp_path):
    m = random_model(rng, 5, 7, 9, lam_cross=0.25)
    save_joint(m, tmp_path / "j.msc")
    back = load_joint(tmp_path / "j.msc")
    np.testing.assert_array_equal(back.dictionary.atoms, m.dictionary.atoms)
    assert (back.lambda_joint, back.lambda_cross, back.names) == \
        (m.lambda_joint, m.lambda_cross, m.names)


# ------------------------------------------------------------------ union

def test_feature_union():
    a = SparseCode(3, [1], [2.0], L1(0.1))
    b = SparseCode(2, [0], [-1.0], L1(0.1))
    np.testing.assert_array_equal(feature_union([a]), [0, 2, 0])
    np.testing.assert_array_equal(feature_union([a, b]), [0, 2, 0, -1, 0])
    np.testing.assert_array_equal(feature_union([b, a]), [-1, 0, 0, 2, 0])
    big = [SparseCode(512, [0], [1.0], L1(0.1))] * 2
    assert feature_union(big).shape == (1024,)
    M = feature_union([np.ones((3, 4)), np.zeros((2, 4))])
    assert M.shape == (5, 4)
