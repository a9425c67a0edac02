"""Encoder, decoder and latent prior of the graphon autoencoder.

The encoder pools Chebyshev graphon-filter responses of the induced signal and
maps them to a latent code with a one-hidden-layer MLP.  The decoder mixes
``C`` learnable step-graphon factors with softmax weights of the code.
"""
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy.special import expit, logit

from ._random import check_random_state
from .exceptions import InvalidInputError
from .graphon import StepGraphon, StepSignal, merged_partition_count, step_index

__all__ = [
    "EncoderParams",
    "GraphonFactor",
    "DecoderParams",
    "GmmPrior",
    "GraphonAutoencoderModel",
    "ACTIVATIONS",
    "LOG_STD_BOUNDS",
    "chebyshev_moments",
    "chebyshev_features",
    "encode",
    "encode_moments",
    "decode_weights",
    "decode_edge_prob",
    "decode_signal",
    "decoded_edge_matrix",
    "decoded_signal_rows",
    "decoded_grid",
    "prior_sample",
    "init_encoder",
    "init_prior",
    "factor_from_graph",
]

ACTIVATIONS = ("identity", "relu", "sigmoid", "softmax")
LOG_STD_BOUNDS = (-20.0, 5.0)


@dataclass
class EncoderParams:
    """Filter projections ``theta[j]`` (M x D) with biases, then a D-D-C MLP."""

    theta: np.ndarray  # (J+1, M, D)
    theta_bias: np.ndarray  # (J+1, D)
    hidden_weight: np.ndarray  # (D, D)
    hidden_bias: np.ndarray  # (D,)
    out_weight: np.ndarray  # (D, C)
    out_bias: np.ndarray  # (C,)

    def __post_init__(self):
        for name in ("theta", "theta_bias", "hidden_weight", "hidden_bias", "out_weight", "out_bias"):
            arr = np.array(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(arr)):
                raise InvalidInputError(f"encoder {name} has non-finite entries")
            setattr(self, name, arr)
        j1, m, d = self.theta.shape
        if self.theta_bias.shape != (j1, d):
            raise InvalidInputError("theta_bias must be (J+1, D)")
        if self.hidden_weight.shape != (d, d) or self.hidden_bias.shape != (d,):
            raise InvalidInputError("hidden layer must be D x D with a length-D bias")
        if self.out_weight.shape[0] != d or self.out_bias.shape != (self.out_weight.shape[1],):
            raise InvalidInputError("output layer must be D x C with a length-C bias")

    @property
    def order(self):
        return self.theta.shape[0] - 1

    @property
    def input_dim(self):
        return self.theta.shape[1]

    @property
    def latent_dim(self):
        return self.out_weight.shape[1]


@dataclass
class GraphonFactor:
    """One decoder factor: symmetric logits and per-partition signal rows."""

    logits: np.ndarray
    signal: np.ndarray

    def __post_init__(self):
        self.logits = np.array(self.logits, dtype=float)
        self.signal = np.array(self.signal, dtype=float)
        if self.signal.ndim == 1:
            self.signal = self.signal[:, None]
        n = self.logits.shape[0]
        if self.logits.shape != (n, n) or n < 1:
            raise InvalidInputError("factor logits must be a square matrix")
        if not np.array_equal(self.logits, self.logits.T):
            raise InvalidInputError("factor logits not symmetric")
        if self.signal.shape[0] != n:
            raise InvalidInputError("factor signal rows must match its partitions")
        if not (np.all(np.isfinite(self.logits)) and np.all(np.isfinite(self.signal))):
            raise InvalidInputError("factor parameters must be finite")

    @property
    def partitions(self):
        return self.logits.shape[0]

    def graphon(self):
        return StepGraphon(expit(self.logits))


@dataclass
class DecoderParams:
    factors: List[GraphonFactor]
    signal_activation: str = "identity"

    def __post_init__(self):
        if not self.factors:
            raise InvalidInputError("decoder needs at least one factor")
        if self.signal_activation not in ACTIVATIONS:
            raise InvalidInputError(f"unknown signal activation {self.signal_activation!r}")
        dims = {f.signal.shape[1] for f in self.factors}
        if len(dims) != 1:
            raise InvalidInputError("all factor signals must share one dimension")

    @property
    def num_factors(self):
        return len(self.factors)

    @property
    def signal_dim(self):
        return self.factors[0].signal.shape[1]

    @property
    def merged_partitions(self):
        return merged_partition_count([f.partitions for f in self.factors])


@dataclass
class GmmPrior:
    """Uniform-weight mixture of diagonal Gaussians over latent codes."""

    means: np.ndarray  # (T, C)
    log_stds: np.ndarray  # (T, C)

    def __post_init__(self):
        self.means = np.atleast_2d(np.array(self.means, dtype=float))
        self.log_stds = np.atleast_2d(np.array(self.log_stds, dtype=float))
        if self.means.shape != self.log_stds.shape:
            raise InvalidInputError("prior means and log_stds must have the same shape")
        if not (np.all(np.isfinite(self.means)) and np.all(np.isfinite(self.log_stds))):
            raise InvalidInputError("prior parameters must be finite")

    @property
    def num_components(self):
        return self.means.shape[0]

    @property
    def stds(self):
        return np.exp(np.clip(self.log_stds, *LOG_STD_BOUNDS))


@dataclass
class GraphonAutoencoderModel:
    """Encoder, decoder and prior plus the attribute standardisation they expect."""

    encoder: EncoderParams
    decoder: DecoderParams
    prior: GmmPrior
    attr_mean: Optional[np.ndarray] = None
    attr_std: Optional[np.ndarray] = None

    def named_arrays(self):
        """Every learnable array, in a fixed order, keyed by a stable name."""
        enc = self.encoder
        out = [
            ("encoder.theta", enc.theta),
            ("encoder.theta_bias", enc.theta_bias),
            ("encoder.hidden_weight", enc.hidden_weight),
            ("encoder.hidden_bias", enc.hidden_bias),
            ("encoder.out_weight", enc.out_weight),
            ("encoder.out_bias", enc.out_bias),
        ]
        for c, f in enumerate(self.decoder.factors):
            out.append((f"decoder.{c}.logits", f.logits))
            out.append((f"decoder.{c}.signal", f.signal))
        out.append(("prior.means", self.prior.means))
        out.append(("prior.log_stds", self.prior.log_stds))
        return out

    def normalize(self, attributes):
        if self.attr_mean is None:
            return np.asarray(attributes, dtype=float)
        return (np.asarray(attributes, dtype=float) - self.attr_mean) / self.attr_std


def _sorted_sum(values, axis):
    # summing sorted terms makes the result independent of node order
    return np.sum(np.sort(values, axis=axis), axis=axis)


def _laplacian_apply(adj, deg, S, chunk=256):
    """Rows of ``(diag(deg) - adj) @ S`` with node-order independent sums."""
    n = adj.shape[0]
    out = np.empty_like(S)
    for start in range(0, n, chunk):
        rows = adj[start:start + chunk]
        prods = rows[:, :, None] * S[None, :, :]  # (rows, N, M)
        out[start:start + chunk] = deg[start:start + chunk, None] * S[start:start + chunk] - _sorted_sum(prods, axis=1)
    return out


def chebyshev_moments(g, s, order):
    """Mean-pooled Chebyshev filter signals ``mean_n S^(j)_n`` for ``j = 0..order``.

    These are parameter-free, so the encoder output is linear in them.  The
    graphon Laplacian is ``(diag(A 1) - A) / N``.
    """
    if isinstance(g, StepGraphon):
        adj = g.dense()
    else:
        adj = np.asarray(g, dtype=float)
    S0 = s.values if isinstance(s, StepSignal) else np.asarray(s, dtype=float)
    if S0.ndim == 1:
        S0 = S0[:, None]
    n = adj.shape[0]
    if S0.shape[0] != n:
        raise InvalidInputError(f"signal has {S0.shape[0]} rows for a graphon with {n} partitions")
    if order < 0:
        raise InvalidInputError("Chebyshev order must be non-negative")
    deg = _sorted_sum(adj, axis=1)
    signals = [S0]
    if order >= 1:
        signals.append(_laplacian_apply(adj, deg, S0) / n)
    for _ in range(2, order + 1):
        signals.append(2.0 * _laplacian_apply(adj, deg, signals[-1]) / n - signals[-2])
    return np.stack([_sorted_sum(Sj, axis=0) / n for Sj in signals])


def _features_from_moments(moments, enc):
    return np.einsum("jm,jmd->d", moments, enc.theta) + enc.theta_bias.sum(axis=0)


def _check_signal_dim(s, enc):
    dim = s.dim if isinstance(s, StepSignal) else np.shape(s)[-1]
    if dim != enc.input_dim:
        raise InvalidInputError(f"signal dimension {dim} does not match encoder input {enc.input_dim}")


def chebyshev_features(g, s, enc):
    """Pooled, projected Chebyshev graphon-filter responses (length D)."""
    _check_signal_dim(s, enc)
    return _features_from_moments(chebyshev_moments(g, s, enc.order), enc)


def encode_moments(moments, enc, return_cache=False):
    """Latent code from precomputed Chebyshev moments."""
    feats = _features_from_moments(moments, enc)
    pre = feats @ enc.hidden_weight + enc.hidden_bias
    hidden = np.maximum(pre, 0.0)
    z = hidden @ enc.out_weight + enc.out_bias
    if return_cache:
        return z, (feats, pre, hidden)
    return z


def encode(g, s, enc):
    """Deterministic latent code of an induced graphon and signal."""
    _check_signal_dim(s, enc)
    return encode_moments(chebyshev_moments(g, s, enc.order), enc)


def decode_weights(z):
    """Numerically stable softmax of the latent code."""
    z = np.asarray(z, dtype=float)
    e = np.exp(z - z.max())
    return e / e.sum()


def _check_weights(dec, w):
    w = np.asarray(w, dtype=float)
    if w.shape != (dec.num_factors,):
        raise InvalidInputError(f"need {dec.num_factors} mixture weights, got shape {w.shape}")
    return w


def decoded_edge_matrix(dec, w, positions):
    """``ghat(v_k, v_l)`` for all pairs of positions (diagonal included)."""
    w = _check_weights(dec, w)
    positions = np.asarray(positions, dtype=float)
    out = np.zeros((len(positions), len(positions)))
    for wc, f in zip(w, dec.factors):
        idx = step_index(positions, f.partitions)
        out += wc * expit(f.logits[np.ix_(idx, idx)])
    return out


def _activate(pre, activation):
    if activation == "identity":
        return pre
    if activation == "relu":
        return np.maximum(pre, 0.0)
    if activation == "sigmoid":
        return expit(pre)
    e = np.exp(pre - pre.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def decoded_signal_rows(dec, w, positions, activate=True):
    """Decoded signal at each position; pre-activation when ``activate`` is False."""
    w = _check_weights(dec, w)
    positions = np.asarray(positions, dtype=float)
    pre = np.zeros((len(positions), dec.signal_dim))
    for wc, f in zip(w, dec.factors):
        pre += wc * f.signal[step_index(positions, f.partitions)]
    return _activate(pre, dec.signal_activation) if activate else pre


def _check_unit(*vals):
    for v in vals:
        if not 0.0 <= v <= 1.0:
            raise InvalidInputError(f"position {v} outside [0, 1]")


def decode_edge_prob(dec, w, u, v):
    _check_unit(u, v)
    return float(decoded_edge_matrix(dec, w, [u, v])[0, 1])


def decode_signal(dec, w, u):
    _check_unit(u)
    return decoded_signal_rows(dec, w, [u])[0]


def decoded_grid(dec, w, resolution=100):
    """``ghat`` on the midpoints of a ``resolution x resolution`` grid."""
    grid = (np.arange(resolution) + 0.5) / resolution
    return decoded_edge_matrix(dec, w, grid)


def prior_sample(prior, rng=None):
    """Draw ``(component, z', eps)`` with ``z' = mu_t + std_t * eps``."""
    rng = check_random_state(rng)
    t = int(rng.integers(prior.num_components))
    eps = rng.standard_normal(prior.means.shape[1])
    return t, prior.means[t] + prior.stds[t] * eps, eps


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_encoder(input_dim, feature_dim, latent_dim, order, rng=None):
    rng = check_random_state(rng)
    j1 = order + 1
    return EncoderParams(
        theta=_uniform(rng, input_dim, (j1, input_dim, feature_dim)),
        theta_bias=_uniform(rng, input_dim, (j1, feature_dim)),
        hidden_weight=_uniform(rng, feature_dim, (feature_dim, feature_dim)),
        hidden_bias=_uniform(rng, feature_dim, (feature_dim,)),
        out_weight=_uniform(rng, feature_dim, (feature_dim, latent_dim)),
        out_bias=_uniform(rng, feature_dim, (latent_dim,)),
    )


def init_prior(num_components, latent_dim, rng=None):
    rng = check_random_state(rng)
    return GmmPrior(rng.standard_normal((num_components, latent_dim)),
                    np.zeros((num_components, latent_dim)))


def factor_from_graph(adjacency, signal):
    """Factor whose graphon is the clamped induced graphon of an observed graph."""
    adj = np.asarray(adjacency, dtype=float)
    return GraphonFactor(logit(np.clip(adj, 0.01, 0.99)), np.asarray(signal, dtype=float))
