"""k-NN evaluation of embeddings, transfer evaluation and generation statistics."""
import warnings
from dataclasses import dataclass, field
from typing import List

import numpy as np
from sklearn.model_selection import KFold, StratifiedKFold

from ._random import check_random_state
from .exceptions import InvalidInputError
from .model import decode_weights, decoded_grid, prior_sample
from .training import embed_graphs, sample_decoded_graph


@dataclass
class EvalReport:
    accuracy_mean: float
    accuracy_std: float
    fold_accuracies: List[float] = field(default_factory=list)
    protocol: str = "in-domain"

    def format(self):
        folds = " ".join(f"{a:.4f}" for a in self.fold_accuracies)
        return (f"protocol  {self.protocol}\n"
                f"accuracy  {self.accuracy_mean:.4f} +/- {self.accuracy_std:.4f}\n"
                f"folds     {folds}")


def knn_classify(train_codes, train_labels, test_codes, k=5):
    """Euclidean k-NN majority vote.

    Ties between labels are broken by the smaller mean distance of the tied
    labels' neighbours, then by the lower label.
    """
    X = np.atleast_2d(np.asarray(train_codes, dtype=float))
    y = np.asarray(train_labels)
    Q = np.atleast_2d(np.asarray(test_codes, dtype=float))
    if len(X) == 0:
        raise InvalidInputError("training set is empty")
    if not 1 <= k <= len(X):
        raise InvalidInputError(f"k must lie in [1, {len(X)}], got {k}")
    if Q.shape[1] != X.shape[1]:
        raise InvalidInputError("train and test codes differ in dimension")
    d = np.sqrt(np.maximum(np.sum(Q * Q, 1)[:, None] + np.sum(X * X, 1)[None, :] - 2.0 * Q @ X.T, 0.0))
    out = np.empty(len(Q), dtype=y.dtype)
    for r in range(len(Q)):
        near = np.argsort(d[r], kind="stable")[:k]
        labels, counts = np.unique(y[near], return_counts=True)
        best = labels[counts == counts.max()]
        if len(best) > 1:
            means = [d[r, near[y[near] == lab]].mean() for lab in best]
            best = best[np.flatnonzero(np.isclose(means, min(means), rtol=0, atol=1e-12))]
        out[r] = best.min()
    return out


def fold_indices(labels, folds, seed=0):
    """Test-index arrays of a stratified split, falling back to plain k-fold."""
    labels = np.asarray(labels)
    if folds < 2 or folds > len(labels):
        raise InvalidInputError(f"folds must lie in [2, {len(labels)}], got {folds}")
    _, counts = np.unique(labels, return_counts=True)
    if counts.min() >= folds:
        splitter = StratifiedKFold(folds, shuffle=True, random_state=seed)
    else:
        warnings.warn("a class has fewer members than folds; using unstratified folds", stacklevel=2)
        splitter = KFold(folds, shuffle=True, random_state=seed)
    return [test for _, test in splitter.split(np.zeros(len(labels)), labels)]


def cross_validate(codes, labels, folds=10, k=5, seed=0, protocol="in-domain"):
    """k-NN accuracy over seeded folds."""
    codes = np.asarray(codes, dtype=float)
    labels = np.asarray(labels)
    accs = []
    for test in fold_indices(labels, folds, seed):
        train = np.setdiff1d(np.arange(len(labels)), test)
        pred = knn_classify(codes[train], labels[train], codes[test], min(k, len(train)))
        accs.append(float(np.mean(pred == labels[test])))
    accs = np.array(accs)
    return EvalReport(float(accs.mean()), float(accs.std()), accs.tolist(), protocol)


def holdout_evaluate(train_codes, train_labels, test_codes, test_labels, k=5, protocol="holdout"):
    """Single-split accuracy of k-NN trained on one embedding set, tested on another."""
    pred = knn_classify(train_codes, train_labels, test_codes, k)
    acc = float(np.mean(pred == np.asarray(test_labels)))
    return EvalReport(acc, 0.0, [acc], protocol)


def transfer_eval(model, dataset, folds=10, k=5, seed=0, source="A"):
    """Embed ``dataset`` with a frozen model and cross-validate on its labels."""
    codes = embed_graphs(model, dataset.graphs)
    return cross_validate(codes, dataset.labels, folds, k, seed, protocol=f"{source}→{dataset.name}")


def generation_stats(model, sizes, graphs_per_size=50, rng=None, resolution=100, z=None):
    """Edge densities of graphs sampled at several sizes from one decoded graphon.

    A single code is drawn from the prior (unless ``z`` is given) and decoded.

    Returns
    -------
    list of (size, mean edge density, grid mean of the decoded graphon)
    """
    if not sizes:
        raise InvalidInputError("sizes must be non-empty")
    rng = check_random_state(rng)
    dec = model.decoder
    if z is None:
        _, z, _ = prior_sample(model.prior, rng)
    w = decode_weights(z)
    grid_mean = float(decoded_grid(dec, w, resolution).mean())
    rows = []
    for size in sizes:
        if size < 2:
            raise InvalidInputError("sizes must be at least 2")
        dens = []
        for _ in range(graphs_per_size):
            g = sample_decoded_graph(dec, w, int(size), 1.0, rng)
            dens.append(g.num_edges / (size * (size - 1) / 2))
        rows.append((int(size), float(np.mean(dens)), grid_mean))
    return rows
