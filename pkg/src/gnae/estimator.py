"""scikit-learn style wrapper around training and embedding."""
from dataclasses import fields

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._random import check_random_state
from .dataset import Dataset
from .exceptions import InvalidInputError
from .graphon import AttributedGraph
from .model import decode_weights, prior_sample
from .training import TrainConfig, embed_graphs, sample_decoded_graph, train


def check_graphs(X):
    """Validate a graph collection, returning a list of AttributedGraph."""
    graphs = X.graphs if isinstance(X, Dataset) else list(X)
    if not graphs:
        raise InvalidInputError("expected at least one graph")
    for i, g in enumerate(graphs):
        if not isinstance(g, AttributedGraph):
            raise InvalidInputError(f"item {i} is a {type(g).__name__}, not an AttributedGraph")
    return graphs


def _with_labels(graphs, y):
    y = np.asarray(y)
    if y.shape != (len(graphs),):
        raise InvalidInputError(f"y has shape {y.shape}, expected ({len(graphs)},)")
    return [AttributedGraph(g.num_nodes, g.edges, g.attributes, int(lab), g.positions)
            for g, lab in zip(graphs, y)]


class GraphonAutoencoder(TransformerMixin, BaseEstimator):
    """Graphon autoencoder trained by reward-augmented maximum likelihood.

    Constructor arguments mirror :class:`gnae.training.TrainConfig`.
    ``fit`` accepts a :class:`Dataset` or a list of :class:`AttributedGraph`;
    ``transform`` returns one latent code per graph.

    Attributes
    ----------
    model_ : GraphonAutoencoderModel
    history_ : list of dict
        Per-epoch mean loss, recon and reg terms.
    """

    def __init__(self, batch_size=50, learning_rate=0.005, epochs=25, samples_per_graphon=5,
                 sample_size=10, gamma=0.1, cheb_order=4, feature_dim=30, latent_dim=15,
                 fgw_order=2, sfgw_projections=50, signal_sigma=1.0, seed=42,
                 prior_components=None, signal_activation=None, fgw_beta=0.005,
                 fgw_outer_iters=20, fgw_sinkhorn_iters=5, attribute_kind=None):
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.samples_per_graphon = samples_per_graphon
        self.sample_size = sample_size
        self.gamma = gamma
        self.cheb_order = cheb_order
        self.feature_dim = feature_dim
        self.latent_dim = latent_dim
        self.fgw_order = fgw_order
        self.sfgw_projections = sfgw_projections
        self.signal_sigma = signal_sigma
        self.seed = seed
        self.prior_components = prior_components
        self.signal_activation = signal_activation
        self.fgw_beta = fgw_beta
        self.fgw_outer_iters = fgw_outer_iters
        self.fgw_sinkhorn_iters = fgw_sinkhorn_iters
        self.attribute_kind = attribute_kind

    def train_config(self):
        return TrainConfig(**{f.name: getattr(self, f.name) for f in fields(TrainConfig)})

    def fit(self, X, y=None):
        graphs = check_graphs(X)
        if y is not None:
            graphs = _with_labels(graphs, y)
        kind = self.attribute_kind
        if kind is None:
            if isinstance(X, Dataset):
                kind = X.attribute_kind
            else:
                kind = "none" if graphs[0].attributes is None else "continuous"
        dataset = Dataset(graphs, name=getattr(X, "name", "dataset"), attribute_kind=kind)
        self.model_, self.history_ = train(dataset, self.train_config())
        self.n_features_in_ = self.model_.encoder.input_dim
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        return embed_graphs(self.model_, check_graphs(X))

    def sample_graphs(self, n, size, random_state=None):
        """Draw ``n`` graphs of ``size`` nodes, each from its own prior code."""
        check_is_fitted(self, "model_")
        rng = check_random_state(random_state)
        out = []
        for _ in range(n):
            _, z, _ = prior_sample(self.model_.prior, rng)
            out.append(sample_decoded_graph(self.model_.decoder, decode_weights(z), size,
                                            self.signal_sigma, rng))
        return out
