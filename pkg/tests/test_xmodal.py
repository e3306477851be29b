import math

import numpy as np
import pytest

from perceived_personality.errors import NumericError, ValidationError
from perceived_personality.xmodal import (
    EPS_DEN,
    HyperConfig,
    ModalitySequence,
    cross_modal_block,
    forward,
    forward_scores,
    grad_check,
    init_params,
    linear_attention,
    load_params,
    mse_loss,
    save_params,
    train,
)
from perceived_personality.xmodal.attention import BLOCK_KEYS, LN_EPS
from perceived_personality.xmodal.serialize import dumps, loads

DIMS = {"acoustic": 6, "textual": 10, "visual": 4}
SMALL = HyperConfig(d=8, heads=2, epochs=5, seed=1)


def phi(x):
    return np.where(x > 0, x + 1.0, np.exp(np.minimum(x, 0.0)))


def quadratic_attention(Q, K, V):
    """Materialized Tq x Tk kernel weights; the normalizer carries eps per key."""
    W = phi(Q) @ phi(K).T
    return (W @ V) / (W.sum(axis=1, keepdims=True) + EPS_DEN * K.shape[0])


def rel_err(a, b):
    return np.abs(a - b).max() / np.abs(b).max()


def ln(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + LN_EPS) * g + b


def reference_block(target, source, w, heads):
    """Straight-line block: loops over heads and query rows, explicit weights."""
    d = target.shape[1]
    dh = d // heads
    Q, K, V = target @ w["wq"], source @ w["wk"], source @ w["wv"]
    att = np.zeros_like(target)
    for h in range(heads):
        sl = slice(h * dh, (h + 1) * dh)
        for i in range(target.shape[0]):
            weights = np.array([phi(Q[i, sl]) @ phi(K[j, sl]) for j in range(source.shape[0])])
            num = sum(weights[j] * V[j, sl] for j in range(source.shape[0]))
            att[i, sl] = num / (weights.sum() + EPS_DEN * source.shape[0])
    h1 = ln(target + att @ w["wo"] + w["bo"], w["ln_gain"], w["ln_bias"])
    return h1 + np.maximum(h1 @ w["ff_w1"] + w["ff_b1"], 0.0) @ w["ff_w2"] + w["ff_b2"]


def random_block(d, rng, ff=None):
    ff = ff or 2 * d
    shapes = {
        "wq": (d, d), "wk": (d, d), "wv": (d, d), "wo": (d, d), "bo": (d,),
        "ln_gain": (d,), "ln_bias": (d,), "ff_w1": (d, ff), "ff_b1": (ff,), "ff_w2": (ff, d), "ff_b2": (d,),
    }
    return {k: rng.normal(0, 1 / math.sqrt(s[0]), s) for k, s in shapes.items()}


def random_inputs(rng, lengths=(5, 4, 6), scale=1.0):
    return [rng.normal(0, scale, (t, DIMS[m])) for t, m in zip(lengths, DIMS)]


# linear attention


@pytest.mark.parametrize("d", [8, 32])
@pytest.mark.parametrize("T", [1, 2, 5, 17, 64])
def test_streaming_matches_quadratic(T, d):
    rng = np.random.default_rng(T * 100 + d)
    Q, K, V = rng.normal(size=(T, d)), rng.normal(size=(T, d)), rng.normal(size=(T, d))
    assert rel_err(linear_attention(Q, K, V), quadratic_attention(Q, K, V)) < 1e-10


def test_single_key_returns_value():
    rng = np.random.default_rng(0)
    Q, K, V = rng.normal(size=(7, 8)), rng.normal(size=(1, 8)), rng.normal(size=(1, 8))
    out = linear_attention(Q, K, V)
    np.testing.assert_allclose(out, np.repeat(V, 7, axis=0), rtol=1e-5)


def test_identical_keys_average_values():
    rng = np.random.default_rng(1)
    Q = rng.normal(size=(4, 8))
    K = np.repeat(rng.normal(size=(1, 8)), 6, axis=0)
    V = rng.normal(size=(6, 8))
    np.testing.assert_allclose(linear_attention(Q, K, V), np.repeat(V.mean(axis=0, keepdims=True), 4, axis=0), rtol=1e-5)


def test_attention_shape_validation():
    with pytest.raises(ValidationError):
        linear_attention(np.zeros((2, 3)), np.zeros((2, 4)), np.zeros((2, 4)))
    with pytest.raises(ValidationError):
        linear_attention(np.zeros((2, 3)), np.zeros((2, 3)), np.zeros((3, 3)))


# cross-modal block


def test_block_matches_straight_line_reference():
    rng = np.random.default_rng(42)
    d = 8
    target, source = rng.normal(size=(3, d)), rng.normal(size=(4, d))
    w = random_block(d, rng)
    w["ln_gain"] = 1 + 0.1 * rng.normal(size=d)
    w["bo"] = 0.1 * rng.normal(size=d)
    got = cross_modal_block(target, source, w, heads=2)
    assert got.shape == (3, d)
    assert rel_err(got, reference_block(target, source, w, 2)) < 1e-8


def test_block_zero_paths_reduce_to_layer_norm():
    rng = np.random.default_rng(3)
    d = 8
    target, source = rng.normal(size=(5, d)), rng.normal(size=(2, d))
    w = random_block(d, rng)
    for k in ("wo", "bo", "ff_w1", "ff_b1", "ff_w2", "ff_b2"):
        w[k] = np.zeros_like(w[k])
    got = cross_modal_block(target, source, w, heads=4)
    np.testing.assert_allclose(got, ln(target, w["ln_gain"], w["ln_bias"]), rtol=1e-12, atol=1e-12)


def test_block_self_attention_shape():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(6, 8))
    w = random_block(8, rng)
    for k in ("wq", "wk", "wv", "wo"):
        w[k] = np.eye(8)
    out = cross_modal_block(x, x, w, heads=2)
    assert out.shape == (6, 8) and np.all(np.isfinite(out))


def test_block_validation():
    rng = np.random.default_rng(5)
    w = random_block(8, rng)
    with pytest.raises(ValidationError):
        cross_modal_block(np.zeros((2, 8)), np.zeros((2, 6)), w)
    with pytest.raises(ValidationError):
        cross_modal_block(np.zeros((2, 8)), np.zeros((2, 8)), {k: w[k] for k in BLOCK_KEYS[:-1]})
    with pytest.raises(ValidationError):
        cross_modal_block(np.zeros((2, 8)), np.zeros((2, 8)), w, heads=3)


# model


def test_inventory_has_six_cross_blocks():
    params = init_params(DIMS, HyperConfig(d=8, heads=2, layers=2))
    inv = params.inventory()
    assert len(inv["cross"]) == 6
    assert set(inv["cross"]) == {f"{s}->{t}" for s in DIMS for t in DIMS if s != t}
    assert inv["fuse"] == sorted(DIMS)
    per_block = {name: [k for k in params.tensors if k.startswith(f"cross.{name}.")] for name in inv["cross"]}
    assert all(len(v) == 2 * len(BLOCK_KEYS) for v in per_block.values())
    assert params.tensors["head.weight"].shape == (24, 5)


def test_forward_output_in_unit_interval():
    rng = np.random.default_rng(0)
    params = init_params(DIMS, SMALL)
    for scale in (0.1, 1.0, 10.0):
        for _ in range(20):
            lengths = rng.integers(1, 8, size=3)
            s = forward_scores(*random_inputs(rng, lengths, scale), params)
            assert s.shape == (5,) and np.all((s > 0) & (s < 1))
    assert 0 < forward(*random_inputs(rng), params).openness < 1


@pytest.mark.parametrize("modality", [0, 1, 2])
def test_forward_invariant_to_timestep_order(modality):
    rng = np.random.default_rng(7)
    params = init_params(DIMS, SMALL)
    inputs = random_inputs(rng, (5, 6, 7))
    base = forward_scores(*inputs, params)
    shuffled = list(inputs)
    shuffled[modality] = inputs[modality][rng.permutation(len(inputs[modality]))]
    np.testing.assert_allclose(forward_scores(*shuffled, params), base, rtol=1e-9, atol=0)


def test_forward_invariant_to_timestep_duplication():
    rng = np.random.default_rng(8)
    params = init_params(DIMS, SMALL)
    inputs = random_inputs(rng, (5, 6, 7))
    base = forward_scores(*inputs, params)
    doubled = [np.repeat(inputs[0], 2, axis=0), inputs[1], inputs[2]]
    np.testing.assert_allclose(forward_scores(*doubled, params), base, rtol=1e-9, atol=0)


def test_forward_names_failing_layer():
    params = init_params(DIMS, SMALL)
    rng = np.random.default_rng(9)
    inputs = random_inputs(rng)
    inputs[0] = np.full_like(inputs[0], 1e308)
    with pytest.raises(NumericError, match=r"non-finite activation in (proj|cross|fuse)\.\S+"):
        forward_scores(*inputs, params)


def test_forward_input_validation():
    params = init_params(DIMS, SMALL)
    rng = np.random.default_rng(10)
    inputs = random_inputs(rng)
    with pytest.raises(ValidationError):
        forward_scores(inputs[0][:, :3], inputs[1], inputs[2], params)
    with pytest.raises(ValidationError):
        ModalitySequence("acoustic", np.zeros((0, 6)))
    with pytest.raises(ValidationError):
        ModalitySequence("smell", np.zeros((1, 6)))
    with pytest.raises(ValidationError):
        HyperConfig(d=10, heads=4)


def toy_dataset(n, seed=0):
    rng = np.random.default_rng(seed)
    return [(tuple(random_inputs(rng, rng.integers(2, 6, size=3))), rng.uniform(0.2, 0.8, 5)) for _ in range(n)]


def test_training_deterministic_and_records_curve():
    data = toy_dataset(3)
    a = train(data, SMALL)
    b = train(data, SMALL)
    assert len(a.loss_curve) == SMALL.epochs + 1
    assert a.loss_curve == b.loss_curve
    for k in a.tensors:
        np.testing.assert_array_equal(a.tensors[k], b.tensors[k])
    assert a.loss_curve[-1] == pytest.approx(mse_loss(a, data), rel=1e-12)


def test_zero_learning_rate_leaves_params():
    data = toy_dataset(2)
    hyper = HyperConfig(d=8, heads=2, epochs=4, learning_rate=0.0, seed=1)
    init = init_params(DIMS, hyper)
    out = train(data, hyper, init=init)
    assert len(set(out.loss_curve)) == 1
    for k in init.tensors:
        np.testing.assert_array_equal(out.tensors[k], init.tensors[k])


def test_training_reduces_loss():
    data = toy_dataset(4)
    out = train(data, HyperConfig(d=8, heads=2, epochs=30, learning_rate=1e-2, seed=0))
    assert out.loss_curve[-1] < 0.5 * out.loss_curve[0]


def test_train_rejects_empty():
    with pytest.raises(ValidationError):
        train([], SMALL)


# gradient check


def test_grad_check_small_model():
    params = init_params(DIMS, SMALL)
    res = grad_check(params, toy_dataset(2), n_coords=60)
    assert res.passed and res.max_relative_error < 1e-4
    again = grad_check(params, toy_dataset(2), n_coords=60)
    assert again.coordinates == res.coordinates
    np.testing.assert_array_equal(again.relative_errors, res.relative_errors)


def test_grad_zero_at_exact_fit():
    params = init_params(DIMS, SMALL)
    rng = np.random.default_rng(11)
    inputs = tuple(random_inputs(rng))
    batch = [(inputs, forward_scores(*inputs, params))]
    res = grad_check(params, batch, n_coords=40)
    assert np.all(res.analytic == 0.0)


# serialization


def test_params_round_trip_bit_exact(tmp_path):
    params = train(toy_dataset(2), SMALL)
    path = tmp_path / "model.ppx"
    save_params(params, path)
    back = load_params(path)
    assert back.hyper == params.hyper and back.input_dims == params.input_dims
    assert back.loss_curve == params.loss_curve
    assert set(back.tensors) == set(params.tensors)
    for k, v in params.tensors.items():
        assert back.tensors[k].tobytes() == v.tobytes()


def test_corrupted_container_rejected():
    blob = bytearray(dumps(init_params(DIMS, SMALL)))
    with pytest.raises(ValidationError, match="magic"):
        loads(b"XXXXXXXX" + bytes(blob[8:]))
    blob[-1] ^= 0xFF
    with pytest.raises(ValidationError, match="checksum"):
        loads(bytes(blob))
