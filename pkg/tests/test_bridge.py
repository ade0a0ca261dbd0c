import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graspkit.bridge import (
    BridgeDims, FeatureBundle, LossConfig, PairBatch, TrainingInstance, awl_combine, batch_losses,
    bridge_forward, finite_difference_check, init_params, language_features, load_checkpoint, loss_embedding,
    loss_global, loss_match, param_shapes, save_checkpoint, synthetic_bundle, train_overfit, training_instance,
)
from graspkit.errors import DomainError, EmptyPairSet, RecordIOError, ShapeError

TINY = BridgeDims.tiny(width=4, inputs=6)


def _random_bundle(rng, dims, n):
    return FeatureBundle(rng.normal(size=dims.global_in), rng.normal(size=dims.lang_in),
                         rng.normal(size=(n, dims.local_in)), rng.normal(scale=0.1, size=(n, 3)))


def _random_instance(rng, dims, n=7, kp=2, kn=2):
    b = _random_bundle(rng, dims, n)
    gt = rng.random(n)
    pairs = PairBatch(rng.choice(n, size=(kp, 2)), rng.choice(n, size=(kn, 2)))
    return TrainingInstance(b, gt / gt.sum(), pairs)


def _randomize_biases(params, rng):
    return {k: (rng.normal(scale=0.3, size=np.shape(v)) if k.startswith("b") else v) for k, v in params.items()}


# ---------------------------------------------------------------------------
# forward


def test_zero_features_give_uniform_map():
    dims = BridgeDims()
    n = 50
    b = FeatureBundle(np.zeros(dims.global_in), np.zeros(dims.lang_in), np.zeros((n, dims.local_in)),
                      np.zeros((n, 3)))
    out = bridge_forward(b, init_params(dims, 0), [[0, 1]], dims)
    assert np.allclose(out.affordance_pred, 1.0 / n, rtol=0, atol=1e-15)
    assert out.pair_embedding.shape == (n, 32)
    assert out.match_prob.shape == (1,)


def test_forward_is_bit_stable():
    rng = np.random.default_rng(0)
    b = _random_bundle(rng, TINY, 9)
    a = bridge_forward(b, init_params(TINY, 3), [[0, 1], [2, 3]], TINY)
    c = bridge_forward(b, init_params(TINY, 3), [[0, 1], [2, 3]], TINY)
    for x, y in ((a.affordance_pred, c.affordance_pred), (a.pair_embedding, c.pair_embedding),
                 (a.match_prob, c.match_prob)):
        assert x.tobytes() == y.tobytes()
    assert not np.array_equal(bridge_forward(b, init_params(TINY, 4), None, TINY).affordance_pred,
                              a.affordance_pred)


def _hand_forward(bundle, P, pairs, dims):
    """Scalar-by-scalar evaluation of the network (no matrix products)."""

    def dense(W, bias, x, act=True):
        out = []
        for r in range(len(W)):
            acc = float(bias[r]) if bias is not None else 0.0
            for c in range(len(x)):
                acc += float(W[r][c]) * float(x[c])
            out.append(math.tanh(acc) if act else acc)
        return out

    g = dense(P["Wg"], P["bg"], list(bundle.global_visual))
    l = dense(P["Wl"], P["bl"], list(bundle.language))
    mix = dense(P["Wm"], P["bm"], g + l)
    scores, embeds = [], []
    for i in range(len(bundle.points)):
        loc = dense(P["Wloc"], P["bloc"], list(bundle.local_visual[i]))
        x = mix + loc + list(bundle.points[i])
        ha = dense(P["Wa1"], P["ba1"], x)
        scores.append(sum(float(w) * h for w, h in zip(P["wa2"], ha)))
        he = dense(P["We1"], P["be1"], x)
        embeds.append(dense(P["We2"], P["be2"], he, act=False))
    mx = max(scores)
    ex = [math.exp(s - mx) for s in scores]
    aff = [e / sum(ex) for e in ex]
    probs = []
    for i, j in pairs:
        hc = dense(P["Wc1"], P["bc1"], embeds[i] + embeds[j])
        z = sum(float(w) * h for w, h in zip(P["wc2"], hc)) + float(P["bc2"])
        probs.append(1.0 / (1.0 + math.exp(-z)))
    return np.array(aff), np.array(embeds), np.array(probs)


def test_tiny_net_matches_hand_trace():
    dims = BridgeDims.tiny(width=2, inputs=3)
    rng = np.random.default_rng(11)
    b = _random_bundle(rng, dims, 4)
    params = _randomize_biases(init_params(dims, 5), rng)
    pairs = [[0, 1], [2, 3], [3, 0]]
    out = bridge_forward(b, params, pairs, dims)
    aff, E, prob = _hand_forward(b, params, pairs, dims)
    assert np.max(np.abs(out.affordance_pred - aff)) <= 1e-12
    assert np.max(np.abs(out.pair_embedding - E)) <= 1e-12
    assert np.max(np.abs(out.match_prob - prob)) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 40), scale=st.floats(0.1, 50.0))
def test_affordance_output_is_normalized(seed, n, scale):
    rng = np.random.default_rng(seed)
    params = {k: v * scale for k, v in init_params(TINY, seed % 1000).items()}
    out = bridge_forward(_random_bundle(rng, TINY, n), params, None, TINY)
    assert abs(out.affordance_pred.sum() - 1.0) <= 1e-6
    assert np.all(out.affordance_pred >= 0)


def test_forward_shape_errors():
    rng = np.random.default_rng(0)
    b = _random_bundle(rng, TINY, 5)
    with pytest.raises(ShapeError):
        bridge_forward(b, init_params(TINY, 0), [[0, 5]], TINY)
    with pytest.raises(ShapeError):
        bridge_forward(b, init_params(BridgeDims.tiny(width=3), 0), None, TINY)
    with pytest.raises(ShapeError):
        bridge_forward(b, init_params(TINY, 0), None, BridgeDims())
    with pytest.raises(ShapeError):
        FeatureBundle(np.zeros(6), np.zeros(7), np.zeros((5, 5)), np.zeros((4, 3)))


# ---------------------------------------------------------------------------
# losses


def test_loss_global_examples():
    gt = np.array([0.25, 0.25, 0.5])
    assert loss_global(gt, gt) == 0.0
    assert loss_global(gt + np.array([1.0, 0.0, 0.0]), gt) == pytest.approx(1.0)
    rng = np.random.default_rng(2)
    P, G = rng.random((4, 10)), rng.random((4, 10))
    ref = sum(math.sqrt(sum((P[k, i] - G[k, i]) ** 2 for i in range(10))) for k in range(4)) / 4
    assert abs(loss_global(P, G) - ref) <= 1e-12
    with pytest.raises(ShapeError):
        loss_global(np.zeros(3), np.zeros(4))


def test_loss_embedding_examples():
    E = np.zeros((3, 4))
    cfg = LossConfig(delta_p=0.1, delta_n=1.0, lam=1.0)
    total, lp, ln = loss_embedding(E, PairBatch([[0, 1]], [[1, 2]]), cfg)
    assert lp == 0.0 and ln == 1.0 and total == 1.0


def test_loss_embedding_brute_force():
    rng = np.random.default_rng(3)
    E = rng.normal(scale=0.5, size=(12, 5))
    pos, neg = rng.choice(12, size=(6, 2)), rng.choice(12, size=(5, 2))
    cfg = LossConfig(delta_p=0.3, delta_n=1.2, lam=0.7)
    dist = lambda i, j: math.sqrt(sum((E[i, k] - E[j, k]) ** 2 for k in range(5)))
    lp = sum(max(dist(i, j) - 0.3, 0.0) ** 2 for i, j in pos) / 6
    ln = sum(max(1.2 - dist(i, j), 0.0) ** 2 for i, j in neg) / 5
    total, a, b = loss_embedding(E, PairBatch(pos, neg), cfg)
    assert abs(a - lp) <= 1e-12 and abs(b - ln) <= 1e-12 and abs(total - (0.7 * lp + ln)) <= 1e-12


def test_empty_pair_set_warns():
    E = np.zeros((3, 2))
    with pytest.warns(EmptyPairSet):
        total, lp, ln = loss_embedding(E, PairBatch(np.zeros((0, 2)), [[0, 1]]))
    assert lp == 0.0 and ln == 1.0


def test_loss_match_examples():
    K = 7
    assert loss_match(np.full(K, 0.5), np.r_[np.ones(3), np.zeros(4)]) == pytest.approx(K * math.log(2), abs=1e-9)
    perfect = loss_match([1.0, 1.0, 0.0], [1, 1, 0])
    assert 0.0 <= perfect <= 3 * math.log(1.0 / (1.0 - 1e-12)) + 1e-15
    rng = np.random.default_rng(5)
    p, y = rng.uniform(0.01, 0.99, 20), rng.integers(0, 2, 20)
    ref = -sum(math.log(pi) if yi else math.log(1 - pi) for pi, yi in zip(p, y))
    assert abs(loss_match(p, y) - ref) <= 1e-12
    with pytest.raises(DomainError):
        loss_match([1.5], [1])
    with pytest.raises(DomainError):
        loss_match([float("nan")], [1])
    with pytest.raises(ShapeError):
        loss_match([0.5, 0.5], [1])


def test_awl_examples():
    L = [0.3, 1.2, 4.0]
    assert awl_combine(L, [1, 1, 1]) == pytest.approx(0.5 * sum(L), abs=1e-15)
    s = [0.7, 1.3, 2.0]
    assert awl_combine([0.0, 1.2, 4.0], s) - awl_combine([0.0, 0.0, 0.0], [0.7, 1.0, 1.0]) == pytest.approx(
        1.2 / (2 * 1.69) + math.log(1.3) + 4.0 / 8 + math.log(2.0))
    with pytest.raises(DomainError):
        awl_combine(L, [1, 0, 1])
    with pytest.raises(ShapeError):
        awl_combine(L, [1, 1])


def test_awl_sigma_gradient_fd():
    L = np.array([0.3, 1.2, 4.0])
    s = np.array([0.7, 1.3, 1.7])
    _, _, ds = awl_combine(L, s, return_grad=True)
    h = 1e-5
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        num = (awl_combine(L, s + e) - awl_combine(L, s - e)) / (2 * h)
        assert abs(ds[i] - num) / max(abs(num), 1e-12) <= 1e-4


def test_losses_zero_at_perfect_predictions():
    gt = np.array([0.1, 0.2, 0.7])
    assert loss_global(gt, gt) == 0.0
    E = np.array([[0.0, 0.0], [0.0, 0.05], [5.0, 5.0]])
    assert loss_embedding(E, PairBatch([[0, 1]], [[0, 2]]))[0] == 0.0
    assert loss_match([1 - 1e-15, 1e-15], [1, 0]) <= 2 * 1e-12


@pytest.mark.parametrize("kwargs", [dict(delta_p=1.0, delta_n=0.5), dict(delta_p=0.0), dict(lam=0.0),
                                    dict(awl_sigmas=(1.0, -1.0, 1.0))])
def test_loss_config_domain(kwargs):
    with pytest.raises(DomainError):
        LossConfig(**kwargs)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_pair_order_does_not_change_losses(seed):
    rng = np.random.default_rng(seed)
    inst = _random_instance(rng, TINY, n=8, kp=4, kn=3)
    perm_p, perm_n = rng.permutation(4), rng.permutation(3)
    shuffled = TrainingInstance(inst.bundle, inst.gt, PairBatch(inst.pairs.positive[perm_p],
                                                                inst.pairs.negative[perm_n]))
    params = init_params(TINY, seed % 100)
    a = batch_losses([inst], params, TINY, LossConfig())
    b = batch_losses([shuffled], params, TINY, LossConfig())
    assert np.allclose(a, b, rtol=1e-12, atol=1e-14)


# ---------------------------------------------------------------------------
# gradients and training


def test_finite_difference_check_width4():
    rng = np.random.default_rng(8)
    insts = [_random_instance(rng, TINY, n=6), _random_instance(rng, TINY, n=5, kp=1, kn=3)]
    params = _randomize_biases(init_params(TINY, 1), rng)
    cfg = LossConfig(awl_sigmas=(0.8, 1.1, 1.5))
    report = finite_difference_check(insts, params, TINY, cfg, h=1e-5)
    assert set(report) == set(param_shapes(TINY)) | {"awl_sigmas"}
    assert max(report.values()) < 1e-4, report


def test_lr_zero_keeps_losses_constant():
    rng = np.random.default_rng(9)
    insts = [_random_instance(rng, TINY) for _ in range(3)]
    res = train_overfit(insts, steps=5, lr=0.0, seed=0, dims=TINY)
    first = res.history[0][1:]
    assert all(row[1:] == first for row in res.history)
    assert len(res.history) == 6


def test_training_reduces_loss():
    rng = np.random.default_rng(10)
    insts = [_random_instance(rng, TINY) for _ in range(3)]
    res = train_overfit(insts, steps=200, lr=0.05, seed=0, dims=TINY)
    assert res.history[-1][4] < res.history[0][4]
    assert np.all(res.sigmas >= 1e-2)


def test_synthetic_features_are_deterministic(small_records):
    rec = small_records[0]
    a = training_instance(rec, 64, 8, TINY, seed=0)
    b = training_instance(rec, 64, 8, TINY, seed=0)
    assert a.bundle.local_visual.tobytes() == b.bundle.local_visual.tobytes()
    assert a.gt.sum() == pytest.approx(1.0)
    assert len(a.pairs.positive) >= 1
    lf = language_features(rec.summary, 64)
    assert np.linalg.norm(lf) == pytest.approx(1.0)
    assert not np.array_equal(lf, language_features("something else entirely", 64))
    bundle = synthetic_bundle(rec.points[:10], rec.part_ids[:10], rec.summary, TINY)
    assert bundle.local_visual.shape == (10, TINY.local_in)


def test_checkpoint_roundtrip(tmp_path):
    params = init_params(TINY, 2)
    save_checkpoint(tmp_path / "c.bin", params, TINY)
    back = load_checkpoint(tmp_path / "c.bin")
    assert list(back) == list(param_shapes(TINY))
    for k in params:
        assert back[k].shape == np.shape(params[k])
        assert np.array_equal(back[k], np.asarray(params[k], dtype=np.float32).astype(np.float64))
    data = (tmp_path / "c.bin").read_bytes()
    (tmp_path / "t.bin").write_bytes(data[:-9])
    with pytest.raises(RecordIOError):
        load_checkpoint(tmp_path / "t.bin")
    (tmp_path / "m.bin").write_bytes(b"NOTACKPT" + data[8:])
    with pytest.raises(RecordIOError):
        load_checkpoint(tmp_path / "m.bin")
