import numpy as np
import pytest

from msc.deep import (LayerConfig, PoolingConfig, PoolKind, StackConfig, forward, forward_batch,
                      load_model, pool, pool_groups, save_model, train_stack)
from msc.errors import ArgumentError, ConfigError, ShapeError
from msc.learning import Method, TrainConfig, train_dictionary
from msc.solvers import SparseCode, encode_dense, lasso, L1

MAX, AVG = PoolKind.MAX, PoolKind.AVERAGE


# ----------------------------------------------------------------- pooling

def test_pool_factor_one_is_identity(rng):
    Y = rng.standard_normal((5, 7))
    np.testing.assert_array_equal(pool(Y, PoolingConfig(MAX, 1)), Y)
    np.testing.assert_array_equal(pool(Y, PoolingConfig(AVG, 1)), Y)


def test_max_pool_keeps_sign():
    out = pool([np.array([1.0, -3.0]), np.array([2.0, 1.0])], PoolingConfig(MAX, 2))
    assert len(out) == 1
    np.testing.assert_array_equal(out[0], [2.0, -3.0])


def test_max_pool_sparse_codes():
    reg = L1(0.1)
    a = SparseCode.from_dense(np.array([0.0, -2.0, 0.0]), reg)
    b = SparseCode.from_dense(np.array([0.5, 1.0, 0.0]), reg)
    np.testing.assert_array_equal(pool([a, b], PoolingConfig(MAX, 2))[0], [0.5, -2.0, 0.0])


def test_short_last_window(rng):
    Y = rng.standard_normal((3, 7))
    P = pool(Y, PoolingConfig(AVG, 3))
    assert P.shape == (3, 3)
    np.testing.assert_allclose(P[:, 2], Y[:, 6])
    # a sequence shorter than the factor gives one short window
    np.testing.assert_allclose(pool(Y[:, :2], PoolingConfig(AVG, 5))[:, 0], Y[:, :2].mean(axis=1))


def test_average_pool_composes(rng):
    Y = rng.standard_normal((4, 12))
    twice = pool(pool(Y, PoolingConfig(AVG, 2)), PoolingConfig(AVG, 3))
    np.testing.assert_allclose(twice, pool(Y, PoolingConfig(AVG, 6)), atol=1e-15)


def test_max_pool_matches_naive(rng):
    Y = rng.standard_normal((6, 10))
    P = pool(Y, PoolingConfig(MAX, 4))
    for j, a in enumerate(range(0, 10, 4)):
        for i in range(6):
            w = Y[i, a:a + 4]
            assert P[i, j] == w[np.argmax(np.abs(w))]


def test_overlapping_stride(rng):
    Y = rng.standard_normal((2, 6))
    P = pool(Y, PoolingConfig(AVG, 3, stride=2))
    # windows [0,3) [2,5) [4,6)
    assert P.shape == (2, 3)
    np.testing.assert_allclose(P[:, 1], Y[:, 2:5].mean(axis=1))


def test_pool_groups_never_straddle(rng):
    Y = rng.standard_normal((3, 7))
    P, L = pool_groups(Y, [3, 4], PoolingConfig(MAX, 2))
    assert L.tolist() == [2, 2]
    np.testing.assert_array_equal(P[:, 1], Y[:, 2])
    with pytest.raises(ShapeError):
        pool_groups(Y, [3, 3], PoolingConfig(MAX, 2))


def test_pool_config_validation():
    with pytest.raises(ArgumentError):
        PoolingConfig(MAX, 0)


# ------------------------------------------------------------------- stack

def _data(rng, n=30, T=4, Na=6, Nb=5):
    Xa = rng.standard_normal((Na, n * T))
    Xb = rng.standard_normal((Nb, n * T))
    L = [T] * n
    return {"a": (Xa, L), "b": (Xb, L)}


def _layer(K, lam=0.3, M=1, kind=MAX, seed=0):
    return LayerConfig(TrainConfig(K, lasso(lam), epochs=3, batch_size=32, seed=seed,
                                   method=Method.ONLINE), PoolingConfig(kind, M))


def _cfg(joint=1, M=2):
    per = {"a": [_layer(8, M=M)], "b": [_layer(8, M=M, seed=1)]}
    return StackConfig(per, [_layer(10, seed=2) for _ in range(joint)])


def test_stack_config_topology():
    assert _cfg(1).topology == "3a"
    assert _cfg(2).topology == "3b"
    with pytest.raises(ConfigError):
        StackConfig({"a": [_layer(4)]}, [])


def test_trivial_stack_is_shallow_joint_on_codes(rng):
    data = _data(rng)
    cfg = StackConfig({"a": [_layer(8)], "b": [_layer(8, seed=1)]}, [_layer(10, seed=2)])
    model = train_stack(data, cfg)
    ya = encode_dense(data["a"][0], model.modality_dicts["a"][0], lasso(0.3))
    yb = encode_dense(data["b"][0], model.modality_dicts["b"][0], lasso(0.3))
    d, _ = train_dictionary(np.vstack([ya, yb]), cfg.joint_layers[0].train)
    np.testing.assert_array_equal(d.atoms, model.joint_dicts[0].atoms)


def test_forward_shapes_and_determinism(rng):
    data = _data(rng)
    for joint in (1, 2):
        m = train_stack(data, _cfg(joint))
        F = forward_batch(data, m)
        assert F.shape == (10, 30)
        np.testing.assert_array_equal(F, forward_batch(data, m))
        one = forward({"a": data["a"][0][:, :4], "b": data["b"][0][:, :4]}, m)
        np.testing.assert_allclose(one, F[:, 0], atol=1e-12)


def test_forward_zero_input_gives_zero(rng):
    m = train_stack(_data(rng), _cfg(2))
    out = forward({"a": np.zeros((6, 4)), "b": np.zeros((5, 4))}, m)
    np.testing.assert_array_equal(out, 0.0)


def test_forward_permutation_equivariant(rng):
    data = _data(rng, n=12)
    m = train_stack(data, _cfg(1))
    F = forward_batch(data, m)
    perm = rng.permutation(12)
    cols = np.concatenate([np.arange(4 * p, 4 * p + 4) for p in perm])
    shuffled = {k: (X[:, cols], L) for k, (X, L) in data.items()}
    np.testing.assert_allclose(forward_batch(shuffled, m), F[:, perm], atol=1e-12)


def test_factor_larger_than_every_example(rng):
    with pytest.raises(ConfigError):
        train_stack(_data(rng), _cfg(1, M=5))


def test_mismatched_pooled_lengths(rng):
    data = _data(rng)
    cfg = StackConfig({"a": [_layer(8, M=2)], "b": [_layer(8, M=1)]}, [_layer(10)])
    with pytest.raises(ConfigError):
        train_stack(data, cfg)


def test_wrong_modalities(rng):
    data = _data(rng)
    with pytest.raises(ArgumentError):
        train_stack({"a": data["a"]}, _cfg(1))


def test_save_load_roundtrip(rng, tmp_path):
    data = _data(rng)
    m = train_stack(data, _cfg(2))
    save_model(m, tmp_path / "stack")
    back = load_model(tmp_path / "stack")
    assert back.topology == "3b"
    assert back.config == m.config
    np.testing.assert_array_equal(forward_batch(data, back), forward_batch(data, m))
