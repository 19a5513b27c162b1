import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from conftest import TOY_SPEC
from scait.dataset import DatasetSplit
from scait.nn import (
    CheckpointError,
    Model,
    ModelSpec,
    TrainConfig,
    TrainingError,
    checkpoint_bytes,
    forward,
    grad_wrt_feature_maps,
    load_checkpoint,
    loss_and_grads,
    parse_checkpoint,
    predict,
    save_checkpoint,
    softmax,
    train,
)

EPS = 1e-5


def rel_err(a, b):
    a, b = np.ravel(a), np.ravel(b)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return np.linalg.norm(a - b) / denom


def numeric_param_grad(model, images, labels, name):
    p = model.params[name]
    g = np.zeros_like(p)
    for idx in np.ndindex(p.shape):
        old = p[idx]
        p[idx] = old + EPS
        lp, _ = loss_and_grads(model, images, labels)
        p[idx] = old - EPS
        lm, _ = loss_and_grads(model, images, labels)
        p[idx] = old
        g[idx] = (lp - lm) / (2 * EPS)
    return g


def test_param_gradients_match_finite_differences(toy_model, rng):
    images = rng.uniform(0, 1, (4, 8, 8))
    labels = np.array([0, 3, 5, 1])
    _, grads = loss_and_grads(toy_model, images, labels)
    for name in toy_model.params:
        numeric = numeric_param_grad(toy_model, images, labels, name)
        assert rel_err(grads[name], numeric) < 1e-4, name


def test_feature_map_gradient_matches_finite_differences(toy_model, rng):
    for trial in range(10):
        image = rng.uniform(0, 1, (8, 8))
        cls = int(rng.integers(6))
        a = toy_model.extract(image)
        g = grad_wrt_feature_maps(toy_model, image, cls)
        assert g.shape == a.shape[1:]
        numeric = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            ap, am = a.copy(), a.copy()
            ap[idx] += EPS
            am[idx] -= EPS
            numeric[idx] = (toy_model.decode(ap)[0, cls] - toy_model.decode(am)[0, cls]) / (2 * EPS)
        assert rel_err(g, numeric[0]) < 1e-4, trial


def test_feature_map_gradient_zero_when_fc1_zero(toy_model, rng):
    toy_model.params["fc1.weight"][:] = 0
    g = grad_wrt_feature_maps(toy_model, rng.uniform(0, 1, (8, 8)), 2)
    assert np.all(g == 0)


def test_feature_map_gradient_rejects_bad_class(toy_model):
    with pytest.raises(ValueError):
        grad_wrt_feature_maps(toy_model, np.zeros((8, 8)), 6)


def test_uniform_logits_loss_is_ln6(toy_model, rng):
    toy_model.params["fc2.weight"][:] = 0
    toy_model.params["fc2.bias"][:] = 0
    loss, _ = loss_and_grads(toy_model, rng.uniform(0, 1, (3, 8, 8)), [0, 1, 2])
    assert loss == pytest.approx(np.log(6), abs=1e-12)


def test_duplicated_batch_same_loss_and_grads(toy_model, rng):
    x = rng.uniform(0, 1, (3, 8, 8))
    y = np.array([1, 4, 2])
    l1, g1 = loss_and_grads(toy_model, x, y)
    l2, g2 = loss_and_grads(toy_model, np.concatenate([x, x]), np.concatenate([y, y]))
    assert l1 == pytest.approx(l2, rel=1e-12)
    for k in g1:
        np.testing.assert_allclose(g1[k], g2[k], rtol=1e-10, atol=1e-14)


def test_forward_is_pure_and_finite(toy_model):
    a1, z1 = forward(toy_model, np.zeros((8, 8)))
    a2, z2 = forward(toy_model, np.zeros((8, 8)))
    assert a1.shape == TOY_SPEC.feature_shape
    assert z1.shape == (6,)
    assert np.all(np.isfinite(z1))
    np.testing.assert_array_equal(z1, z2)
    np.testing.assert_array_equal(a1, a2)


def test_relu_output_nonnegative(toy_model, rng):
    a, _ = forward(toy_model, rng.uniform(0, 1, (5, 8, 8)))
    assert a.min() >= 0


def test_predict_examples():
    assert predict([0.1, 2.3, -1.0, 0, 0, 0]) == 1
    assert predict([5, 5, 0, 0, 0, 0]) == 0
    with pytest.raises(ValueError):
        predict([])


@given(st.lists(st.floats(-50, 50), min_size=6, max_size=6))
def test_predict_matches_softmax_argmax(z):
    top = sorted(z)
    # near-ties can collapse after exponentiation
    assume(top[-1] - top[-2] > 1e-9)
    assert predict(z) == predict(softmax(np.array(z)))


def _tiny_split(rng, n=1):
    x = rng.uniform(0, 1, (n, 8, 8))
    y = np.arange(n) % 6
    return DatasetSplit(x, y, x, y)


def test_overfit_single_example(rng):
    model = Model.init(TOY_SPEC, seed=1)
    split = _tiny_split(rng)
    _, history = train(model, split, TrainConfig(epochs=200, batch_size=1, learning_rate=0.05, seed=0))
    assert history[-1]["loss"] < 0.01


def test_training_is_deterministic(rng):
    split = _tiny_split(rng, n=12)
    cfg = TrainConfig(epochs=3, batch_size=4, seed=5, channel_mode="analog_awgn", prune_aware=True)
    m1, _ = train(Model.init(TOY_SPEC, seed=2), split, cfg)
    m2, _ = train(Model.init(TOY_SPEC, seed=2), split, cfg)
    for k in m1.params:
        np.testing.assert_array_equal(m1.params[k], m2.params[k])


def test_training_divergence_is_reported(rng):
    split = _tiny_split(rng, n=6)
    split.train_x[2, 3, 3] = np.nan
    with pytest.raises(TrainingError, match="epoch 1"):
        train(Model.init(TOY_SPEC, seed=2), split, TrainConfig(epochs=5, batch_size=6))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0)
    with pytest.raises(ValueError):
        TrainConfig(keep_lo=0)
    with pytest.raises(ValueError):
        TrainConfig(channel_mode="digital")


def test_checkpoint_roundtrip(tmp_path, toy_model):
    path = tmp_path / "m.scnn"
    save_checkpoint(toy_model, path)
    loaded = load_checkpoint(path)
    assert loaded.spec == toy_model.spec
    for k, v in toy_model.params.items():
        np.testing.assert_array_equal(loaded.params[k], v.astype(np.float32))


def test_checkpoint_truncated(toy_model):
    data = checkpoint_bytes(toy_model)
    for cut in (0, 3, 10, len(data) // 2, len(data) - 1):
        with pytest.raises(CheckpointError):
            parse_checkpoint(data[:cut])


def test_checkpoint_wrong_magic(toy_model):
    data = b"XXXX" + checkpoint_bytes(toy_model)[4:]
    with pytest.raises(CheckpointError, match="offset 0"):
        parse_checkpoint(data)


def test_checkpoint_fuzz_roundtrip():
    """10^4 random layouts and weights round-trip bit-exactly through the checkpoint format."""
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        spec = ModelSpec(
            input_shape=(int(rng.choice([8, 12, 16])),) * 2,
            channels=tuple(int(c) for c in rng.integers(1, 5, 3)),
            hidden=int(rng.integers(1, 6)),
            num_classes=int(rng.integers(2, 7)),
        )
        params = {k: rng.normal(size=shape).astype(np.float32).astype(np.float64)
                  for k, shape in spec.param_shapes().items()}
        data = checkpoint_bytes(Model(spec, params))
        back = parse_checkpoint(data)
        assert back.spec == spec
        assert checkpoint_bytes(back) == data
