"""In-memory graph dataset container."""
from dataclasses import dataclass
from typing import List

import numpy as np

from .exceptions import InvalidInputError
from .graphon import AttributedGraph, local_degree_profile

ATTRIBUTE_KINDS = ("continuous", "categorical", "none")


@dataclass
class Dataset:
    """A list of graphs sharing one attribute dimension.

    ``attribute_kind`` is ``"continuous"`` for real-valued attributes,
    ``"categorical"`` for one-hot node labels, and ``"none"`` when graphs carry
    no attributes (local degree profiles are substituted at training time).
    """

    graphs: List[AttributedGraph]
    name: str = "dataset"
    attribute_kind: str = "none"

    def __post_init__(self):
        if self.attribute_kind not in ATTRIBUTE_KINDS:
            raise InvalidInputError(f"unknown attribute kind {self.attribute_kind!r}")
        dims = {0 if g.attributes is None else g.attributes.shape[1] for g in self.graphs}
        if len(dims) > 1:
            raise InvalidInputError(f"graphs disagree on attribute dimension: {sorted(dims)}")
        labels = [g.label for g in self.graphs if g.label is not None]
        if labels and min(labels) < 0:
            raise InvalidInputError("labels must be non-negative")

    def __len__(self):
        return len(self.graphs)

    @property
    def attribute_dim(self):
        if not self.graphs or self.graphs[0].attributes is None:
            return 0
        return self.graphs[0].attributes.shape[1]

    @property
    def labels(self):
        return np.array([-1 if g.label is None else g.label for g in self.graphs])

    @property
    def num_classes(self):
        labels = [g.label for g in self.graphs if g.label is not None]
        return max(labels) + 1 if labels else 0


def node_signals(graph):
    """Node attributes of ``graph``, falling back to its local degree profile."""
    if graph.attributes is not None:
        return graph.attributes
    return local_degree_profile(graph).values
