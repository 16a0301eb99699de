import numpy as np
import pytest

from strokewave import mlp
from strokewave.features import Normalizer, fit_normalizer
from strokewave.rng import RngStream


def _model(seed=7):
    return mlp.init(seed, wavelet="haar", levels=2, feature_config_id="fc-test")


def _batch(seed=0, n=8):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, 128)), rng.integers(0, 3, n)


def test_init_deterministic():
    a, b = _model(3), _model(3)
    for k in a.params():
        assert np.array_equal(a.params()[k], b.params()[k])
    c = _model(4)
    assert not np.array_equal(a.w1, c.w1)


def test_init_defaults():
    m = _model()
    assert np.all(m.b1 == 0.0) and np.all(m.b2 == 0.0) and np.all(m.b3 == 0.0)
    for bn in (m.bn1, m.bn2):
        assert np.all(bn.gamma == 1.0) and np.all(bn.beta == 0.0)
        assert np.all(bn.running_mean == 0.0) and np.all(bn.running_var == 1.0)


def test_init_weight_scale():
    m = _model(11)
    assert abs(m.w1.mean()) < 3 * 0.05 / np.sqrt(m.w1.size)
    assert abs(m.w1.std() - 0.05) < 0.002


def test_forward_zero_output_weights_uniform():
    m = _model()
    m.w3[:] = 0.0
    m.b3[:] = 0.0
    x, _ = _batch()
    probs, _ = mlp.forward(m, x, mode="infer")
    assert np.allclose(probs, 1.0 / 3.0, atol=1e-15)


def test_forward_extreme_logits_stable():
    m = _model()
    m.w1[:] = 0.0
    m.b1[:] = 0.0
    m.w2[:] = 0.0
    m.w3[:] = 0.0
    m.b3[:] = [1000.0, 1000.0, -1000.0]
    probs, _ = mlp.forward(m, np.zeros((2, 128)), mode="infer")
    assert np.all(np.isfinite(probs))
    assert probs[0, 0] == pytest.approx(0.5, abs=1e-12)
    assert probs[0, 1] == pytest.approx(0.5, abs=1e-12)


def test_forward_rows_sum_to_one():
    m = _model()
    x, _ = _batch(1, 32)
    probs, _ = mlp.forward(m, 1000.0 * x, mode="infer")
    assert np.abs(probs.sum(axis=1) - 1.0).max() < 1e-12


def test_inference_is_pure():
    m = _model()
    x, _ = _batch(2)
    before = m.bn1.running_mean.copy(), m.bn1.running_var.copy()
    p1, _ = mlp.forward(m, x, mode="infer")
    p2, _ = mlp.forward(m, x, mode="infer")
    assert np.array_equal(p1, p2)
    assert np.array_equal(m.bn1.running_mean, before[0])
    assert np.array_equal(m.bn1.running_var, before[1])


def test_train_mode_updates_running_stats():
    m = _model()
    x, _ = _batch(3)
    z1 = x @ m.w1 + m.b1
    a1 = np.maximum(z1, 0.0)
    expect_mean = 0.99 * 0.0 + 0.01 * a1.mean(axis=0)
    expect_var = 0.99 * 1.0 + 0.01 * a1.var(axis=0)
    mlp.forward(m, x, mode="train", dropout=(0.0, 0.0))
    assert np.allclose(m.bn1.running_mean, expect_mean, atol=1e-15)
    assert np.allclose(m.bn1.running_var, expect_var, atol=1e-15)


def test_train_without_dropout_matches_infer_when_stats_align():
    m = _model()
    x, _ = _batch(4)
    # put the batch statistics into the running slots, then compare modes
    _, cache = mlp.forward(m.clone(), x, mode="train", dropout=(0.0, 0.0))
    z1 = x @ m.w1 + m.b1
    a1 = np.maximum(z1, 0.0)
    m.bn1.running_mean[:] = a1.mean(axis=0)
    m.bn1.running_var[:] = a1.var(axis=0)
    h1 = m.bn1.gamma * (a1 - a1.mean(0)) / np.sqrt(a1.var(0) + 1e-5) + m.bn1.beta
    z2 = h1 @ m.w2 + m.b2
    a2 = np.maximum(z2, 0.0)
    m.bn2.running_mean[:] = a2.mean(axis=0)
    m.bn2.running_var[:] = a2.var(axis=0)
    p_tr, _ = mlp.forward(m, x, mode="train", dropout=(0.0, 0.0), update_running=False)
    p_inf, _ = mlp.forward(m, x, mode="infer")
    assert np.abs(p_tr - p_inf).max() < 1e-10


def test_forward_train_needs_two_rows():
    with pytest.raises(ValueError):
        mlp.forward(_model(), np.zeros((1, 128)), mode="train")


def test_forward_rejects_nonfinite():
    x = np.zeros((2, 128))
    x[0, 0] = np.nan
    with pytest.raises(ValueError):
        mlp.forward(_model(), x)


def test_loss_perfect_prediction():
    probs = np.eye(3)
    assert mlp.loss_ce(probs, np.array([0, 1, 2])) == 0.0


def test_loss_uniform_is_ln3():
    probs = np.full((5, 3), 1.0 / 3.0)
    assert mlp.loss_ce(probs, np.zeros(5, dtype=int)) == pytest.approx(np.log(3.0), rel=1e-12)


def test_loss_floor_keeps_finite():
    probs = np.array([[0.0, 1.0, 0.0]])
    loss = mlp.loss_ce(probs, np.array([0]))
    assert loss == pytest.approx(-np.log(1e-12), rel=1e-12)


def test_loss_rejects_bad_label():
    with pytest.raises(ValueError):
        mlp.loss_ce(np.full((2, 3), 1 / 3), np.array([0, 3]))


def test_backward_b3_zero_for_balanced_batch_zero_weights():
    m = _model()
    m.w3[:] = 0.0
    m.b3[:] = 0.0
    x, _ = _batch(5, 6)
    labels = np.array([0, 0, 1, 1, 2, 2])
    _, cache = mlp.forward(m, x, mode="train", dropout=(0.0, 0.0))
    grads = mlp.backward(m, cache, labels)
    assert np.abs(grads["b3"]).max() < 1e-15


def test_backward_duplicated_batch_same_gradients():
    m = _model()
    x, labels = _batch(6, 4)
    _, c1 = mlp.forward(m.clone(), x, mode="train", dropout=(0.0, 0.0))
    g1 = mlp.backward(m, c1, labels)
    x2 = np.vstack([x, x])
    l2 = np.concatenate([labels, labels])
    _, c2 = mlp.forward(m.clone(), x2, mode="train", dropout=(0.0, 0.0))
    g2 = mlp.backward(m, c2, l2)
    for k in g1:
        assert np.abs(g1[k] - g2[k]).max() < 1e-12


def test_backward_needs_train_cache():
    m = _model()
    x, labels = _batch(7)
    _, cache = mlp.forward(m, x, mode="infer")
    with pytest.raises(ValueError):
        mlp.backward(m, cache, labels)


def test_gradients_match_torch_autograd():
    torch = pytest.importorskip("torch")
    torch.set_default_dtype(torch.float64)
    m = _model(13)
    x, labels = _batch(21)
    _, cache = mlp.forward(m.clone(), x, mode="train", dropout=(0.0, 0.0))
    grads = mlp.backward(m, cache, labels)

    tp = {k: torch.tensor(v, requires_grad=True) for k, v in m.params().items()}
    h = torch.tensor(x)
    for i in ("1", "2"):
        z = h @ tp[f"w{i}"] + tp[f"b{i}"]
        a = torch.relu(z)
        xh = (a - a.mean(0)) / torch.sqrt(a.var(0, unbiased=False) + 1e-5)
        h = tp[f"gamma{i}"] * xh + tp[f"beta{i}"]
    logits = h @ tp["w3"] + tp["b3"]
    loss = torch.nn.functional.cross_entropy(logits, torch.tensor(labels))
    loss.backward()
    for k in grads:
        a = grads[k]
        n = tp[k].grad.numpy()
        rel = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
        assert rel.max() < 1e-9, k


def test_grad_check_passes_small():
    m = _model(7)
    x, labels = _batch(100)
    err = mlp.grad_check(m, x, labels, sample_per_tensor=60, seed=0)
    assert err < 1e-5


def test_grad_check_catches_corruption():
    m = _model(7)
    x, labels = _batch(100)
    err = mlp.grad_check(m, x, labels, sample_per_tensor=60, seed=0, corrupt="w2")
    assert err > 0.1


def test_adam_first_step_is_signed_lr():
    m = _model()
    cfg = mlp.TrainConfig()
    grads = {k: np.zeros_like(v) for k, v in m.params().items()}
    grads["b3"] = np.array([0.5, -0.25, 0.0])
    state = mlp.init_adam_state(m)
    before = m.b3.copy()
    m2, _ = mlp.adam_step(m, grads, state, 1, cfg)
    delta = m2.b3 - before
    assert delta[0] == pytest.approx(-cfg.learning_rate, rel=1e-6)
    assert delta[1] == pytest.approx(cfg.learning_rate, rel=1e-6)
    assert delta[2] == 0.0


def test_adam_zero_gradient_fixed_point():
    m = _model()
    cfg = mlp.TrainConfig()
    grads = {k: np.zeros_like(v) for k, v in m.params().items()}
    state = mlp.init_adam_state(m)
    m2, state = mlp.adam_step(m, grads, state, 1, cfg)
    m3, _ = mlp.adam_step(m2, grads, state, 2, cfg)
    for k in m.params():
        assert np.array_equal(m.params()[k], m3.params()[k])


def test_adam_step_pure():
    m = _model(1)
    cfg = mlp.TrainConfig()
    x, labels = _batch(8)
    _, cache = mlp.forward(m.clone(), x, mode="train", dropout=(0.0, 0.0))
    grads = mlp.backward(m, cache, labels)
    state = mlp.init_adam_state(m)
    snapshot = {k: v.copy() for k, v in m.params().items()}
    a1, s1 = mlp.adam_step(m, grads, state, 1, cfg)
    a2, s2 = mlp.adam_step(m, grads, state, 1, cfg)
    for k in snapshot:
        assert np.array_equal(m.params()[k], snapshot[k])  # inputs untouched
        assert np.array_equal(a1.params()[k], a2.params()[k])
        assert np.array_equal(s1[k][0], s2[k][0])


def test_adam_step_decreases_loss():
    cfg = mlp.TrainConfig(learning_rate=1e-4)
    for trial in range(20):
        m = _model(trial)
        x, labels = _batch(100 + trial, 16)
        _, cache = mlp.forward(m.clone(), x, mode="train", dropout=(0.0, 0.0))
        before = mlp.loss_ce(cache["probs"], labels)
        grads = mlp.backward(m, cache, labels)
        m2, _ = mlp.adam_step(m, grads, mlp.init_adam_state(m), 1, cfg)
        probs, _ = mlp.forward(m2, x, mode="train", dropout=(0.0, 0.0),
                               update_running=False)
        assert mlp.loss_ce(probs, labels) < before


def test_predict_tie_breaks_low_index():
    m = _model()
    m.w3[:] = 0.0
    m.b3[:] = 0.0
    m.normalizer = Normalizer(mean=np.zeros(128), std=np.ones(128))
    cls, probs = mlp.predict(m, np.random.default_rng(0).normal(size=128))
    assert cls == 0
    assert np.allclose(probs, 1.0 / 3.0, atol=1e-12)


def test_predict_consistent_and_deterministic():
    m = _model(2)
    m.normalizer = Normalizer(mean=np.zeros(128), std=np.ones(128))
    v = np.random.default_rng(1).normal(size=128)
    c1, p1 = mlp.predict(m, v)
    c2, p2 = mlp.predict(m, v)
    assert c1 == c2 == int(np.argmax(p1))
    assert np.array_equal(p1, p2)


def test_logit_shift_invariance_of_decision():
    m = _model(3)
    m.normalizer = Normalizer(mean=np.zeros(128), std=np.ones(128))
    v = np.random.default_rng(2).normal(size=128)
    c1, _ = mlp.predict(m, v)
    m.b3 += 7.25  # same constant on every class logit
    c2, _ = mlp.predict(m, v)
    assert c1 == c2


def _trained_like_model(seed=5):
    m = mlp.init(seed, wavelet="haar", levels=2, feature_config_id="fc-x")
    rows = np.random.default_rng(seed).normal(size=(10, 128))
    m.normalizer = fit_normalizer(rows)
    return m


def test_save_load_bit_exact_roundtrip(tmp_path):
    m = _trained_like_model()
    path = tmp_path / "model.json"
    mlp.save_model(m, path)
    m2 = mlp.load_model(path)
    for k, v in m.params().items():
        assert np.array_equal(v, m2.params()[k]), k
    assert np.array_equal(m.bn1.running_mean, m2.bn1.running_mean)
    assert np.array_equal(m.normalizer.mean, m2.normalizer.mean)
    assert np.array_equal(m.normalizer.std, m2.normalizer.std)
    assert (m2.wavelet, m2.levels, m2.feature_config_id) == ("haar", 2, "fc-x")


def test_save_load_predictions_bit_identical(tmp_path):
    m = _trained_like_model(9)
    path = tmp_path / "model.json"
    mlp.save_model(m, path)
    m2 = mlp.load_model(path)
    rng = np.random.default_rng(3)
    for _ in range(100):
        v = rng.normal(size=128)
        c1, p1 = mlp.predict(m, v)
        c2, p2 = mlp.predict(m2, v)
        assert c1 == c2
        assert np.array_equal(p1, p2)


def test_load_rejects_wrong_version(tmp_path):
    m = _trained_like_model()
    path = tmp_path / "model.json"
    mlp.save_model(m, path)
    doc = path.read_text().replace('"format_version": 1', '"format_version": 99')
    path.write_text(doc)
    with pytest.raises(ValueError, match="version"):
        mlp.load_model(path)


def test_load_rejects_truncated(tmp_path):
    m = _trained_like_model()
    path = tmp_path / "model.json"
    mlp.save_model(m, path)
    path.write_bytes(path.read_bytes()[: path.stat().st_size // 2])
    with pytest.raises(ValueError, match="malformed"):
        mlp.load_model(path)


def test_train_config_validation():
    with pytest.raises(ValueError):
        mlp.TrainConfig(batch_size=1)
    with pytest.raises(ValueError):
        mlp.TrainConfig(dropout=(1.0, 0.1))
    with pytest.raises(ValueError):
        mlp.TrainConfig(epochs=0)


def test_dropout_scales_survivors():
    m = _model()
    x, _ = _batch(8, 64)
    p = 0.5
    probs, cache = mlp.forward(m, x, mode="train", rng=RngStream(0),
                               dropout=(p, 0.0), update_running=False)
    mask = cache["mask1"]
    assert set(np.unique(mask)) <= {0.0, 1.0 / (1.0 - p)}
    frac = (mask > 0).mean()
    assert abs(frac - (1.0 - p)) < 0.05
