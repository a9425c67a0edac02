import numpy as np
import pytest

from gnae._random import derive_rng
from gnae.dataset import Dataset
from gnae.exceptions import InvalidInputError
from gnae.graphon import AttributedGraph, induce_graphon
from gnae.model import DecoderParams, GraphonFactor, decode_weights
from gnae.training import (
    AdamState,
    TrainConfig,
    adam_step,
    backward,
    batch_loss,
    embed_graphs,
    exponentiated_payoff,
    gradient_check,
    init_model,
    log_likelihood,
    payoff_weights,
    prepare_graph,
    sample_decoded_graph,
    train,
)

from conftest import random_graph

TINY = dict(batch_size=2, samples_per_graphon=2, sample_size=4, latent_dim=3, feature_dim=4,
            cheb_order=2, sfgw_projections=5)


def half_decoder(dim=1):
    return DecoderParams([GraphonFactor(np.zeros((2, 2)), np.zeros((2, dim)))])


def tiny_setup(seed, kind="continuous", activation=None):
    r = np.random.default_rng(seed)
    graphs = []
    for i in range(4):
        n = int(r.integers(4, 8))
        g = random_graph(r, n, 0.4, label=i % 2)
        if kind == "continuous":
            g = g.with_attributes(r.standard_normal((n, 2)))
        elif kind == "categorical":
            g = g.with_attributes(np.eye(3)[r.integers(0, 3, n)])
        graphs.append(g)
    ds = Dataset(graphs, attribute_kind=kind)
    cfg = TrainConfig(seed=seed, signal_activation=activation, **TINY)
    model = init_model(ds, cfg)
    model.prior.log_stds[:] = r.normal(0, 0.3, model.prior.log_stds.shape)
    return model, [prepare_graph(g, model) for g in graphs[:2]], cfg, ds


def test_log_likelihood_single_edge_and_empty():
    dec = half_decoder()
    g = AttributedGraph(2, [(0, 1)], positions=np.array([0.2, 0.7]))
    assert log_likelihood(g, dec, [1.0]) == pytest.approx(np.log(0.5))
    g = AttributedGraph(3, [], positions=np.array([0.1, 0.5, 0.9]))
    assert log_likelihood(g, dec, [1.0]) == pytest.approx(3 * np.log(0.5))


def test_log_likelihood_exact_attributes_add_nothing():
    dec = DecoderParams([GraphonFactor(np.zeros((2, 2)), np.array([[1.0, 2.0], [-1.0, 0.5]]))])
    pos = np.array([0.2, 0.7])
    attrs = np.array([[1.0, 2.0], [-1.0, 0.5]])
    with_attr = log_likelihood(AttributedGraph(2, [(0, 1)], attrs, positions=pos), dec, [1.0])
    assert with_attr == pytest.approx(np.log(0.5))


def test_log_likelihood_needs_positions():
    with pytest.raises(InvalidInputError):
        log_likelihood(AttributedGraph(2, [(0, 1)]), half_decoder(), [1.0])


def test_log_likelihood_is_nonpositive_without_attributes(rng):
    dec = DecoderParams([GraphonFactor(np.ones((3, 3)), np.zeros((3, 1)))])
    for _ in range(10):
        g = random_graph(rng, 6)
        g = AttributedGraph(6, g.edges, positions=rng.random(6))
        assert log_likelihood(g, dec, [1.0]) <= 0


def test_sharp_decoder_reproduces_its_graph(rng):
    # logits of +-30 around a fixed graph: samples match it and the clamp dominates
    base = random_graph(rng, 5).adjacency()
    logits = np.where(base > 0, 30.0, -30.0)
    dec = DecoderParams([GraphonFactor(logits, np.zeros((5, 1)))])
    for _ in range(5):
        s = sample_decoded_graph(dec, np.ones(1), 8, 1.0, rng)
        s = AttributedGraph(8, s.edges, positions=s.positions)
        assert -log_likelihood(s, dec, [1.0]) < 28 * 2e-6


def test_exponentiated_payoff_examples():
    np.testing.assert_allclose(exponentiated_payoff([0.3, 0.3, 0.3]), 1 / 3)
    np.testing.assert_allclose(exponentiated_payoff([0.7]), [1.0])
    np.testing.assert_allclose(exponentiated_payoff([0.2, 0.4]), [0.7310585786, 0.2689414214], atol=1e-9)
    # tau floor: an exact reproduction gets all the weight without dividing by zero
    np.testing.assert_allclose(exponentiated_payoff([0.0, 0.5]), [1.0, 0.0], atol=1e-300)


def test_payoff_weights_properties(rng):
    g = random_graph(rng, 8, dim=2)
    x = induce_graphon(g)
    dec = DecoderParams([GraphonFactor(np.zeros((3, 3)), rng.standard_normal((3, 2)))])
    sampled = [sample_decoded_graph(dec, np.ones(1), 6, 1.0, rng) for _ in range(5)]
    q, d = payoff_weights(sampled, x)
    assert q.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(q > 0)
    assert d[np.argmax(q)] == d.min()
    same = [sampled[0]] * 3
    np.testing.assert_allclose(payoff_weights(same, x)[0], 1 / 3)


def test_batch_trace_invariants():
    model, batch, cfg, _ = tiny_setup(0)
    trace = batch_loss(batch, model, cfg, derive_rng(0, "t"))
    assert abs(trace.loss - (trace.recon_term + cfg.gamma * trace.regularizer_term)) <= 1e-9
    for q in trace.weights:
        assert abs(q.sum() - 1) <= 1e-9
    replay = batch_loss(batch, model, cfg, tape=trace.tape)
    assert replay.loss == trace.loss


def test_zero_gamma_loss_and_prior_gradients():
    model, batch, _, _ = tiny_setup(1)
    cfg = TrainConfig(seed=1, gamma=0.0, **TINY)
    trace = batch_loss(batch, model, cfg, derive_rng(1, "t"))
    assert trace.loss == trace.recon_term
    grads = backward(trace, model, cfg)
    assert not np.any(grads["prior.means"]) and not np.any(grads["prior.log_stds"])


def test_factor_with_zero_weight_gets_zero_gradient():
    model, batch, cfg, _ = tiny_setup(2)
    model.encoder.out_weight[:, 0] = 0.0
    model.encoder.out_bias[0] = -1e4
    trace = batch_loss(batch, model, cfg, derive_rng(2, "t"))
    assert all(w[0] == 0.0 for w in trace.cache["weights"])
    grads = backward(trace, model, cfg)
    assert not np.any(grads["decoder.0.logits"]) and not np.any(grads["decoder.0.signal"])


def test_backward_requires_cache():
    model, batch, cfg, _ = tiny_setup(3)
    trace = batch_loss(batch, model, cfg, derive_rng(3, "t"))
    trace.cache = {}
    with pytest.raises(RuntimeError):
        backward(trace, model, cfg)


@pytest.mark.parametrize("seed,kind,activation", [
    (0, "continuous", None),
    (1, "continuous", "relu"),
    (2, "continuous", "sigmoid"),
    (3, "categorical", None),
    (4, "none", None),
])
def test_gradients_match_finite_differences(seed, kind, activation):
    model, batch, cfg, _ = tiny_setup(seed, kind, activation)
    errors = gradient_check(model, batch, cfg, derive_rng(seed, "fd"))
    assert max(errors.values()) <= 1e-4, errors


def test_adam_zero_gradient_keeps_params_and_decays_moments():
    model, _, _, _ = tiny_setup(5)
    zero = {k: np.zeros_like(v) for k, v in model.named_arrays()}
    before = {k: v.copy() for k, v in model.named_arrays()}
    adam_step(model, zero, AdamState.zeros_like(model), 0.01)
    for k, v in model.named_arrays():
        np.testing.assert_array_equal(v, before[k])

    state = AdamState.zeros_like(model)
    for k in state.first:
        state.first[k][...] = 1.0
        state.second[k][...] = 1.0
    adam_step(model, zero, state, 0.01)
    assert all(np.all(state.first[k] == 0.9) for k in state.first)
    assert all(np.all(state.second[k] == 0.999) for k in state.second)


def test_adam_first_step_and_fixed_point():
    model, _, _, _ = tiny_setup(6)
    rate = 0.01
    g = {k: np.full_like(v, 0.37) for k, v in model.named_arrays()}
    for k, v in model.named_arrays():
        if k.endswith(".logits"):
            g[k] = np.full_like(v, -2.5)
    state = AdamState.zeros_like(model)
    before = {k: v.copy() for k, v in model.named_arrays()}
    adam_step(model, g, state, rate)
    for k, v in model.named_arrays():
        expected = -rate * g[k] / (np.abs(g[k]) + state.eps)
        np.testing.assert_allclose(v - before[k], expected, rtol=1e-10)
    for _ in range(3000):
        prev = {k: v.copy() for k, v in model.named_arrays()}
        adam_step(model, g, state, rate)
    for k, v in model.named_arrays():
        assert np.allclose(np.abs(v - prev[k]), rate, rtol=0.01)


def test_adam_preserves_logit_symmetry(rng):
    model, batch, cfg, _ = tiny_setup(7)
    state = AdamState.zeros_like(model)
    for step in range(3):
        trace = batch_loss(batch, model, cfg, derive_rng(7, "s", step))
        adam_step(model, backward(trace, model, cfg), state, 0.05)
        for f in model.decoder.factors:
            assert np.array_equal(f.logits, f.logits.T)


def test_adam_shape_mismatch():
    model, _, _, _ = tiny_setup(8)
    g = {k: np.zeros((1,)) for k, _ in model.named_arrays()}
    with pytest.raises(RuntimeError):
        adam_step(model, g, AdamState.zeros_like(model), 0.1)


def test_train_zero_epochs_returns_initial_model():
    _, _, cfg, ds = tiny_setup(9)
    cfg = TrainConfig(**{**cfg.to_dict(), "epochs": 0})
    model, history = train(ds, cfg)
    assert history == []
    init = init_model(ds, cfg)
    for (k, a), (_, b) in zip(model.named_arrays(), init.named_arrays()):
        np.testing.assert_array_equal(a, b)


def test_train_is_deterministic():
    _, _, cfg, ds = tiny_setup(10)
    cfg = TrainConfig(**{**cfg.to_dict(), "epochs": 2})
    m1, h1 = train(ds, cfg)
    m2, h2 = train(ds, cfg)
    assert h1 == h2 and len(h1) == 2
    for (_, a), (_, b) in zip(m1.named_arrays(), m2.named_arrays()):
        np.testing.assert_array_equal(a, b)


def test_train_rejects_empty_dataset():
    with pytest.raises(InvalidInputError):
        train(Dataset([]), TrainConfig(**TINY))


def test_config_validation():
    with pytest.raises(InvalidInputError):
        TrainConfig(batch_size=0)
    with pytest.raises(InvalidInputError):
        TrainConfig(gamma=-1.0)
    with pytest.raises(InvalidInputError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(InvalidInputError, match="unknown config fields"):
        TrainConfig.from_dict({"bogus": 1})
    assert TrainConfig.from_dict(TrainConfig().to_dict()) == TrainConfig()


def test_embeddings_are_permutation_invariant(rng):
    model, _, _, ds = tiny_setup(11)
    graphs = ds.graphs
    perm = [g.permuted(rng.permutation(g.num_nodes)) for g in graphs]
    np.testing.assert_array_equal(embed_graphs(model, graphs), embed_graphs(model, perm))


def test_sampled_categorical_attributes_are_one_hot(rng):
    dec = DecoderParams([GraphonFactor(np.zeros((2, 2)), rng.standard_normal((2, 3)))], "softmax")
    g = sample_decoded_graph(dec, np.ones(1), 12, 1.0, rng)
    np.testing.assert_array_equal(g.attributes.sum(1), 1.0)
    assert set(np.unique(g.attributes)) <= {0.0, 1.0}
