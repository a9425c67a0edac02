"""Reward-augmented maximum likelihood training of the graphon autoencoder.

Each batch encodes the induced graphons, samples graphs from the decoded
graphons, weights them by an exponentiated FGW payoff and maximises the
weighted log-likelihood, plus a sliced-FGW pull of the codes toward the prior.
Gradients are derived by hand; the payoff weights, node positions, sampled
adjacency and sorting permutations are held fixed.
"""
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np
from scipy.special import expit, log_softmax, softmax

from ._random import check_random_state, derive_rng
from .dataset import Dataset, node_signals
from .exceptions import InvalidInputError
from .graphon import AttributedGraph, StepGraphon, StepSignal, induce_graphon, step_index
from .model import (
    ACTIVATIONS,
    LOG_STD_BOUNDS,
    DecoderParams,
    GraphonAutoencoderModel,
    _activate,
    chebyshev_moments,
    decode_weights,
    decoded_edge_matrix,
    decoded_signal_rows,
    encode_moments,
    factor_from_graph,
    init_encoder,
    init_prior,
)
from .ot import SolverConfig, fgw_distance, sample_directions, sliced_fgw_with_grad

PROB_CLAMP = 1e-6
# graphs above this size are induced as sparse graphons (O(EK) payoff cost)
SPARSE_MIN_NODES = 100
TAU_FLOOR = 1e-8


@dataclass
class TrainConfig:
    """Hyperparameters of a training run.

    The loss is a sum over the batch, so ``learning_rate`` is tied to
    ``batch_size``.  ``prior_components`` defaults to the number of classes
    (or 1 for unlabelled data) and ``signal_activation`` to ``"softmax"`` for
    one-hot node labels and ``"identity"`` otherwise.
    """

    batch_size: int = 50
    learning_rate: float = 0.005
    epochs: int = 25
    samples_per_graphon: int = 5
    sample_size: int = 10
    gamma: float = 0.1
    cheb_order: int = 4
    feature_dim: int = 30
    latent_dim: int = 15
    fgw_order: int = 2
    sfgw_projections: int = 50
    signal_sigma: float = 1.0
    seed: int = 42
    prior_components: Optional[int] = None
    signal_activation: Optional[str] = None
    fgw_beta: float = 0.005
    fgw_outer_iters: int = 20
    fgw_sinkhorn_iters: int = 5

    def __post_init__(self):
        counts = ("batch_size", "samples_per_graphon", "sample_size", "feature_dim",
                  "latent_dim", "sfgw_projections", "fgw_outer_iters", "fgw_sinkhorn_iters")
        for name in counts:
            if int(getattr(self, name)) < 1:
                raise InvalidInputError(f"{name} must be at least 1")
        if self.epochs < 0 or self.cheb_order < 0:
            raise InvalidInputError("epochs and cheb_order must be non-negative")
        if self.gamma < 0:
            raise InvalidInputError("gamma must be non-negative")
        if self.learning_rate <= 0 or self.signal_sigma <= 0 or self.fgw_beta <= 0:
            raise InvalidInputError("learning_rate, signal_sigma and fgw_beta must be positive")
        if self.fgw_order not in (1, 2):
            raise InvalidInputError("fgw_order must be 1 or 2")
        if self.prior_components is not None and self.prior_components < 1:
            raise InvalidInputError("prior_components must be at least 1")
        if self.signal_activation is not None and self.signal_activation not in ACTIVATIONS:
            raise InvalidInputError(f"unknown signal activation {self.signal_activation!r}")

    @classmethod
    def from_dict(cls, values):
        names = set(cls.__dataclass_fields__)
        unknown = sorted(set(values) - names)
        if unknown:
            raise InvalidInputError(f"unknown config fields: {', '.join(unknown)}")
        try:
            return cls(**values)
        except TypeError as exc:
            raise InvalidInputError(f"invalid config value: {exc}") from None

    def to_dict(self):
        return asdict(self)

    def solver(self):
        return SolverConfig(outer_iters=self.fgw_outer_iters, sinkhorn_iters=self.fgw_sinkhorn_iters,
                            beta=self.fgw_beta, order=self.fgw_order)


@dataclass
class InducedSample:
    """A data graph prepared for training: sparse graphon, normalised signal, moments."""

    graphon: StepGraphon
    signal: StepSignal
    moments: np.ndarray


def prepare_graph(graph, model, order=None):
    """Induce ``graph`` with the model's attribute standardisation."""
    order = model.encoder.order if order is None else order
    graphon, _ = induce_graphon(graph, sparse=graph.num_nodes >= SPARSE_MIN_NODES)
    signal = StepSignal(model.normalize(node_signals(graph)))
    if signal.dim != model.encoder.input_dim:
        raise InvalidInputError(
            f"graph attributes have dimension {signal.dim}, model expects {model.encoder.input_dim}")
    return InducedSample(graphon, signal, chebyshev_moments(graphon, signal, order))


def embed_graphs(model, graphs):
    """Latent codes (one row per graph) of a frozen model."""
    codes = [encode_moments(prepare_graph(g, model).moments, model.encoder) for g in graphs]
    return np.array(codes).reshape(len(codes), model.encoder.latent_dim)


# ---------------------------------------------------------------------------
# likelihood


def _pair_vector(graph):
    """0/1 indicator over the unordered pairs ``np.triu_indices(K, 1)``."""
    k = graph.num_nodes
    a = np.zeros(k * (k - 1) // 2)
    if graph.num_edges:
        i, j = graph.edges[:, 0], graph.edges[:, 1]
        a[i * k - i * (i + 1) // 2 + (j - i - 1)] = 1.0
    return a


def _signal_loglik(target, pre, activation, sigma):
    """Attribute log-likelihood and its gradient w.r.t. the pre-activation."""
    m = pre.shape[1]
    if activation in ("identity", "relu"):
        resid = target - _activate(pre, activation)
        ll = -np.sum(resid ** 2) / (2.0 * m * sigma ** 2)
        grad = resid / (m * sigma ** 2)
        if activation == "relu":
            grad = grad * (pre > 0)
        return ll, grad
    if activation == "sigmoid":
        # s log sigma(x) + (1 - s) log(1 - sigma(x)) = s x - log(1 + e^x)
        ll = np.sum(target * pre - np.logaddexp(0.0, pre)) / m
        return ll, (target - expit(pre)) / m
    ll = np.sum(target * log_softmax(pre, axis=1))
    return ll, target - softmax(pre, axis=1) * target.sum(axis=1, keepdims=True)


def _loglik(graph, dec, w, sigma, want_grad=False):
    if graph.positions is None:
        raise InvalidInputError("log-likelihood needs the sampled node positions")
    k = graph.num_nodes
    pos = graph.positions
    rows, cols = np.triu_indices(k, 1)
    a = _pair_vector(graph)
    idx = [step_index(pos, f.partitions) for f in dec.factors]
    sig = [expit(f.logits[ix[rows], ix[cols]]) for f, ix in zip(dec.factors, idx)]
    ghat = np.zeros(len(rows))
    for wc, s in zip(w, sig):
        ghat += wc * s
    gc = np.clip(ghat, PROB_CLAMP, 1.0 - PROB_CLAMP)
    ll = float(np.sum(a * np.log(gc) + (1.0 - a) * np.log1p(-gc)))

    has_attr = graph.attributes is not None
    if has_attr:
        pre = np.zeros((k, dec.signal_dim))
        for wc, f, ix in zip(w, dec.factors, idx):
            pre += wc * f.signal[ix]
        ll_s, dpre = _signal_loglik(graph.attributes, pre, dec.signal_activation, sigma)
        ll += float(ll_s)
    if not want_grad:
        return ll

    inside = (ghat > PROB_CLAMP) & (ghat < 1.0 - PROB_CLAMP)
    dg = np.where(inside, a / gc - (1.0 - a) / (1.0 - gc), 0.0)
    dw = np.zeros(len(w))
    dlogits, dsignals = [], []
    for c, (wc, f, ix, s) in enumerate(zip(w, dec.factors, idx, sig)):
        dw[c] = dg @ s
        G = np.zeros_like(f.logits)
        np.add.at(G, (ix[rows], ix[cols]), dg * wc * s * (1.0 - s))
        dlogits.append(G)
        S = np.zeros_like(f.signal)
        if has_attr:
            dw[c] += np.sum(dpre * f.signal[ix])
            np.add.at(S, ix, wc * dpre)
        dsignals.append(S)
    return ll, dw, dlogits, dsignals


def log_likelihood(graph, dec, w, cfg=None):
    """Log-likelihood of a sampled graph under the decoded graphon.

    Sums Bernoulli edge terms over unordered node pairs, with the decoded
    probability clamped to ``[1e-6, 1 - 1e-6]``, plus the attribute term of the
    decoder's signal activation.  Model-independent constants are dropped.
    """
    sigma = 1.0 if cfg is None else cfg.signal_sigma
    return _loglik(graph, dec, np.asarray(w, dtype=float), sigma)


def payoff_weights(sampled, x, cfg=None):
    """Exponentiated-payoff weights of sampled graphs against ``x``.

    Returns ``(weights, distances)`` with ``weights = softmax(-d / tau)`` and
    ``tau = max(min d, 1e-8)``.
    """
    cfg = cfg or TrainConfig()
    if not sampled:
        raise InvalidInputError("need at least one sampled graph")
    solver = cfg.solver()
    d = np.array([fgw_distance(induce_graphon(g), x, solver).distance for g in sampled])
    return exponentiated_payoff(d), d


def exponentiated_payoff(distances):
    """``softmax(-d / tau)`` with the adaptive temperature ``tau = max(min d, 1e-8)``."""
    d = np.asarray(distances, dtype=float)
    return softmax(-d / max(float(d.min()), TAU_FLOOR))


# ---------------------------------------------------------------------------
# sampling and the random tape


def sample_decoded_graph(dec, w, K, sigma, rng):
    """Draw a ``K``-node graph from the decoded graphon, keeping positions."""
    positions = rng.random(K)
    probs = decoded_edge_matrix(dec, w, positions)
    rows, cols = np.triu_indices(K, 1)
    keep = rng.random(len(rows)) < probs[rows, cols]
    edges = np.stack([rows[keep], cols[keep]], axis=1)
    mean = decoded_signal_rows(dec, w, positions)
    act = dec.signal_activation
    if act in ("identity", "relu"):
        attrs = mean + sigma * rng.standard_normal(mean.shape)
    elif act == "sigmoid":
        attrs = (rng.random(mean.shape) < mean).astype(float)
    else:
        u = rng.random(K)[:, None]
        cat = np.minimum((np.cumsum(mean, axis=1) < u).sum(axis=1), mean.shape[1] - 1)
        attrs = np.eye(mean.shape[1])[cat]
    return AttributedGraph(K, edges, attrs, positions=positions)


@dataclass
class RandomTape:
    """Every random draw of one batch, so the loss can be replayed exactly."""

    samples: List[List[AttributedGraph]]
    weights: List[np.ndarray]
    distances: List[np.ndarray]
    components: np.ndarray
    eps: np.ndarray
    directions: np.ndarray


@dataclass
class BatchTrace:
    loss: float
    recon_term: float
    regularizer_term: float
    weights: List[np.ndarray]
    tape: RandomTape
    gamma: float
    cache: dict = field(repr=False, default_factory=dict)


def _draw_tape(batch, model, cfg, weights_of, rng):
    dec, prior = model.decoder, model.prior
    streams = rng.spawn(len(batch) + 1)
    samples, weights, dists, comps, eps = [], [], [], [], []
    for x, w, r in zip(batch, weights_of, streams):
        graphs = [sample_decoded_graph(dec, w, cfg.sample_size, cfg.signal_sigma, r)
                  for _ in range(cfg.samples_per_graphon)]
        q, d = payoff_weights(graphs, (x.graphon, x.signal), cfg)
        samples.append(graphs)
        weights.append(q)
        dists.append(d)
        comps.append(int(r.integers(prior.num_components)))
        eps.append(r.standard_normal(prior.means.shape[1]))
    directions = sample_directions(cfg.sfgw_projections, prior.means.shape[1], streams[-1])
    return RandomTape(samples, weights, dists, np.array(comps), np.array(eps), directions)


def batch_loss(batch, model, cfg, rng=None, tape=None):
    """RAML loss of one batch of :class:`InducedSample`.

    Draws a fresh :class:`RandomTape` from ``rng`` unless ``tape`` is given, in
    which case the same samples, payoff weights, prior draws and slice
    directions are reused.
    """
    if not batch:
        raise InvalidInputError("batch must be non-empty")
    enc, dec, prior = model.encoder, model.decoder, model.prior
    codes, enc_cache = [], []
    for x in batch:
        z, c = encode_moments(x.moments, enc, return_cache=True)
        codes.append(z)
        enc_cache.append(c)
    Z = np.array(codes)
    W = np.array([decode_weights(z) for z in Z])
    if tape is None:
        tape = _draw_tape(batch, model, cfg, W, check_random_state(rng))

    recon = 0.0
    for w, graphs, q in zip(W, tape.samples, tape.weights):
        lls = np.array([_loglik(g, dec, w, cfg.signal_sigma) for g in graphs])
        recon -= float(q @ lls)
    ls = np.clip(prior.log_stds[tape.components], *LOG_STD_BOUNDS)
    Zp = prior.means[tape.components] + np.exp(ls) * tape.eps
    reg, dZ, dZp = sliced_fgw_with_grad(Z, Zp, tape.directions)
    cache = {"batch": batch, "codes": Z, "weights": W, "encoder": enc_cache, "dZ": dZ, "dZp": dZp}
    return BatchTrace(recon + cfg.gamma * reg, recon, reg, tape.weights, tape, cfg.gamma, cache)


def backward(trace, model, cfg):
    """Gradients of ``trace.loss`` keyed like ``model.named_arrays()``.

    Factor-logit gradients are symmetrised as ``G + G.T - diag(G)``, the
    gradient w.r.t. the shared upper-triangular parameter written to both
    mirrored entries.
    """
    if not trace.cache:
        raise RuntimeError("backward needs the cache of a completed forward pass")
    enc, dec, prior = model.encoder, model.decoder, model.prior
    grads = {name: np.zeros_like(arr) for name, arr in model.named_arrays()}
    gamma = trace.gamma
    c = trace.cache
    for n, x in enumerate(c["batch"]):
        w = c["weights"][n]
        dw = np.zeros(dec.num_factors)
        for g, q in zip(trace.tape.samples[n], trace.tape.weights[n]):
            _, gw, glog, gsig = _loglik(g, dec, w, cfg.signal_sigma, want_grad=True)
            dw -= q * gw
            for k in range(dec.num_factors):
                grads[f"decoder.{k}.logits"] -= q * glog[k]
                grads[f"decoder.{k}.signal"] -= q * gsig[k]
        dz = w * (dw - w @ dw) + gamma * c["dZ"][n]

        feats, pre, hidden = c["encoder"][n]
        grads["encoder.out_weight"] += np.outer(hidden, dz)
        grads["encoder.out_bias"] += dz
        dpre = (enc.out_weight @ dz) * (pre > 0)
        grads["encoder.hidden_weight"] += np.outer(feats, dpre)
        grads["encoder.hidden_bias"] += dpre
        dfeat = enc.hidden_weight @ dpre
        grads["encoder.theta"] += x.moments[:, :, None] * dfeat[None, None, :]
        grads["encoder.theta_bias"] += dfeat[None, :]

    comps, eps = trace.tape.components, trace.tape.eps
    lo, hi = LOG_STD_BOUNDS
    for n, t in enumerate(comps):
        g = gamma * c["dZp"][n]
        grads["prior.means"][t] += g
        ls = prior.log_stds[t]
        grads["prior.log_stds"][t] += g * np.exp(np.clip(ls, lo, hi)) * eps[n] * ((ls > lo) & (ls < hi))

    for k in range(dec.num_factors):
        G = grads[f"decoder.{k}.logits"]
        grads[f"decoder.{k}.logits"] = G + G.T - np.diag(np.diag(G))
    return grads


# ---------------------------------------------------------------------------
# optimisation


@dataclass
class AdamState:
    first: dict
    second: dict
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, model):
        arrays = model.named_arrays()
        return cls({k: np.zeros_like(v) for k, v in arrays}, {k: np.zeros_like(v) for k, v in arrays})


def adam_step(model, grads, state, rate):
    """One bias-corrected Adam update of every model array, in place."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1, c2 = 1.0 - b1 ** state.step, 1.0 - b2 ** state.step
    for name, arr in model.named_arrays():
        g = grads[name]
        if g.shape != arr.shape:
            raise RuntimeError(f"gradient for {name} has shape {g.shape}, expected {arr.shape}")
        m = state.first[name]
        v = state.second[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        arr -= rate * (m / c1) / (np.sqrt(v / c2) + state.eps)
    for f in model.decoder.factors:
        assert np.array_equal(f.logits, f.logits.T), "factor logits lost symmetry"
    return model, state


# ---------------------------------------------------------------------------
# finite-difference validation


def _free_entries(name, arr):
    """Indices of independent entries; logits use the upper triangle only."""
    if name.endswith(".logits"):
        return list(zip(*np.triu_indices(arr.shape[0])))
    return list(np.ndindex(arr.shape))


def gradient_check(model, batch, cfg, rng=None, step=1e-5, floor=1e-6):
    """Largest relative error between ``backward`` and central differences.

    The random tape of one forward pass is replayed for every perturbed
    evaluation.  The relative error is ``|a - f| / max(|a|, |f|, floor)``.

    Returns
    -------
    dict
        Parameter name to its largest relative error.
    """
    trace = batch_loss(batch, model, cfg, rng)
    grads = backward(trace, model, cfg)
    errors = {}
    for name, arr in model.named_arrays():
        worst = 0.0
        for ix in _free_entries(name, arr):
            mirror = name.endswith(".logits") and ix[0] != ix[1]
            old = arr[ix]
            vals = []
            for delta in (step, -step):
                arr[ix] = old + delta
                if mirror:
                    arr[ix[::-1]] = old + delta
                vals.append(batch_loss(batch, model, cfg, tape=trace.tape).loss)
            arr[ix] = old
            if mirror:
                arr[ix[::-1]] = old
            fd = (vals[0] - vals[1]) / (2.0 * step)
            an = grads[name][ix]
            worst = max(worst, abs(an - fd) / max(abs(an), abs(fd), floor))
        errors[name] = worst
    return errors


# ---------------------------------------------------------------------------
# training loop


def _standardisation(dataset):
    if dataset.attribute_kind == "categorical":
        return None, None
    rows = np.vstack([node_signals(g) for g in dataset.graphs])
    mean = rows.mean(axis=0)
    std = rows.std(axis=0)
    std[std == 0] = 1.0
    return mean, std


def _factor_graphs(dataset, count, rng):
    """Indices of ``count`` graphs, round-robin over shuffled label strata."""
    labels = dataset.labels
    strata = [rng.permutation(np.flatnonzero(labels == lab)) for lab in np.unique(labels)]
    order = []
    depth = max(len(s) for s in strata)
    for i in range(depth):
        order.extend(int(s[i]) for s in strata if i < len(s))
    return [order[i % len(order)] for i in range(count)]


def _factor_signal(signal, activation):
    if activation == "sigmoid":
        return np.log(np.clip(signal, 0.01, 0.99)) - np.log1p(-np.clip(signal, 0.01, 0.99))
    if activation == "softmax":
        return np.log(np.clip(signal, 0.01, 0.99))
    return signal


def init_model(dataset, cfg):
    """Initial model: random encoder and prior, factors from dataset graphs."""
    if len(dataset) == 0:
        raise InvalidInputError("dataset is empty")
    activation = cfg.signal_activation or ("softmax" if dataset.attribute_kind == "categorical" else "identity")
    mean, std = _standardisation(dataset)
    dim = node_signals(dataset.graphs[0]).shape[1]
    rng = derive_rng(cfg.seed, "init")
    encoder = init_encoder(dim, cfg.feature_dim, cfg.latent_dim, cfg.cheb_order, rng)
    components = cfg.prior_components or max(dataset.num_classes, 1)
    prior = init_prior(components, cfg.latent_dim, rng)
    factors = []
    for i in _factor_graphs(dataset, cfg.latent_dim, derive_rng(cfg.seed, "factors")):
        g = dataset.graphs[i]
        signal = node_signals(g)
        if mean is not None:
            signal = (signal - mean) / std
        factors.append(factor_from_graph(g.adjacency(), _factor_signal(signal, activation)))
    return GraphonAutoencoderModel(encoder, DecoderParams(factors, activation), prior, mean, std)


def format_epoch(row):
    return f"epoch {row['epoch']} loss {row['loss']:.9g} recon {row['recon']:.9g} reg {row['reg']:.9g}"


def train(dataset, cfg=None, on_epoch=None):
    """Fit a model to ``dataset``.

    Parameters
    ----------
    dataset : Dataset
    cfg : TrainConfig, optional
    on_epoch : callable, optional
        Called with each epoch's history row as it completes.

    Returns
    -------
    (GraphonAutoencoderModel, list of dict)
        The trained model and per-epoch mean batch loss, recon and reg terms.
    """
    cfg = cfg or TrainConfig()
    if not isinstance(dataset, Dataset):
        raise InvalidInputError("train expects a Dataset")
    model = init_model(dataset, cfg)
    prepared = [prepare_graph(g, model) for g in dataset.graphs]
    state = AdamState.zeros_like(model)
    history = []
    n = len(prepared)
    for epoch in range(cfg.epochs):
        order = derive_rng(cfg.seed, "shuffle", epoch).permutation(n)
        totals = np.zeros(3)
        batches = 0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            batch = [prepared[i] for i in order[start:start + cfg.batch_size]]
            trace = batch_loss(batch, model, cfg, derive_rng(cfg.seed, "batch", epoch, b))
            grads = backward(trace, model, cfg)
            adam_step(model, grads, state, cfg.learning_rate)
            totals += (trace.loss, trace.recon_term, trace.regularizer_term)
            batches += 1
        loss, recon, reg = totals / batches
        row = {"epoch": epoch + 1, "loss": float(loss), "recon": float(recon), "reg": float(reg)}
        history.append(row)
        if on_epoch is not None:
            on_epoch(row)
    return model, history
