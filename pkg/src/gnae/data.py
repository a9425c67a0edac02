"""Dataset ingestion, synthetic graphon datasets, checkpoints and CSV exports."""
import csv
import io
import json
import os
import warnings
from dataclasses import dataclass, field
from typing import List

import numpy as np

from ._random import check_random_state, derive_rng
from .dataset import Dataset
from .exceptions import CheckpointError, InvalidInputError, ParseError
from .graphon import AttributedGraph, StepGraphon, sample_graph
from .model import DecoderParams, EncoderParams, GmmPrior, GraphonAutoencoderModel, GraphonFactor
from .training import TrainConfig

SCHEMA_VERSION = 1
SYNTH_KINDS = ("two_block_sbm", "er", "ring")
KIND_LABELS = {"two_block_sbm": 0, "er": 1, "ring": 2}


# ---------------------------------------------------------------------------
# TUDataset


def _read_rows(path, parse):
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(parse(line))
            except ValueError:
                raise ParseError(f"{os.path.basename(path)}:{lineno}: cannot parse {line!r}") from None
    return rows


def _ints(line):
    return [int(t) for t in line.replace(",", " ").split()]


def _floats(line):
    return [float(t) for t in line.split(",")]


def parse_tudataset(directory, name):
    """Read a dataset in the TUDataset text layout.

    Parameters
    ----------
    directory : str
        Folder containing ``<name>_A.txt``, ``<name>_graph_indicator.txt`` and
        the optional label/attribute files.
    name : str
        Dataset prefix.

    Returns
    -------
    Dataset
        Edges are deduplicated to simple undirected edges.  Continuous node
        attributes take precedence over node labels, which are one-hot encoded.
        Graphs without either carry no attributes.
    """
    def path(suffix):
        return os.path.join(directory, f"{name}_{suffix}.txt")

    for suffix in ("A", "graph_indicator"):
        if not os.path.exists(path(suffix)):
            raise ParseError(f"missing mandatory file {os.path.basename(path(suffix))}")

    indicator = np.array([r[0] for r in _read_rows(path("graph_indicator"), _ints)], dtype=np.int64)
    num_nodes = len(indicator)
    graph_ids = np.unique(indicator)
    gid_index = {int(g): i for i, g in enumerate(graph_ids)}
    node_graph = np.array([gid_index[int(g)] for g in indicator], dtype=np.int64)
    local = np.zeros(num_nodes, dtype=np.int64)
    sizes = np.zeros(len(graph_ids), dtype=np.int64)
    for v, g in enumerate(node_graph):
        local[v] = sizes[g]
        sizes[g] += 1

    edges = [set() for _ in graph_ids]
    dropped = 0
    seen = set()
    with open(path("A")) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                i, j = _ints(line)
            except ValueError:
                raise ParseError(f"{name}_A.txt:{lineno}: expected two node ids, got {line.strip()!r}") from None
            if not (1 <= i <= num_nodes and 1 <= j <= num_nodes):
                raise ParseError(f"{name}_A.txt:{lineno}: node id outside 1..{num_nodes}")
            i, j = i - 1, j - 1
            if node_graph[i] != node_graph[j]:
                raise ParseError(f"{name}_A.txt:{lineno}: edge joins nodes of different graphs")
            if i == j or (i, j) in seen:
                dropped += 1
                continue
            seen.add((i, j))
            a, b = sorted((int(local[i]), int(local[j])))
            edges[node_graph[i]].add((a, b))
    if dropped:
        warnings.warn(f"dropped {dropped} self-loop or duplicate edge lines", stacklevel=2)

    labels = [None] * len(graph_ids)
    if os.path.exists(path("graph_labels")):
        raw = [r[0] for r in _read_rows(path("graph_labels"), _ints)]
        if len(raw) != len(graph_ids):
            raise ParseError(f"{name}_graph_labels.txt: {len(raw)} labels for {len(graph_ids)} graphs")
        compact = {v: i for i, v in enumerate(sorted(set(raw)))}
        labels = [compact[v] for v in raw]

    attrs, kind = None, "none"
    if os.path.exists(path("node_attributes")):
        rows = _read_rows(path("node_attributes"), _floats)
        kind = "continuous"
        attrs = _node_table(rows, num_nodes, f"{name}_node_attributes.txt")
    elif os.path.exists(path("node_labels")):
        raw = [r[0] for r in _read_rows(path("node_labels"), _ints)]
        if len(raw) != num_nodes:
            raise ParseError(f"{name}_node_labels.txt:{len(raw)}: expected {num_nodes} node labels")
        compact = {v: i for i, v in enumerate(sorted(set(raw)))}
        attrs = np.eye(len(compact))[[compact[v] for v in raw]]
        kind = "categorical"

    graphs = []
    for g in range(len(graph_ids)):
        e = np.array(sorted(edges[g]), dtype=np.int64).reshape(-1, 2)
        a = None if attrs is None else attrs[node_graph == g]
        graphs.append(AttributedGraph(int(sizes[g]), e, a, label=labels[g]))
    return Dataset(graphs, name=name, attribute_kind=kind)


def _node_table(rows, num_nodes, fname):
    if len(rows) != num_nodes:
        raise ParseError(f"{fname}:{len(rows)}: expected {num_nodes} node rows")
    width = len(rows[0])
    for lineno, r in enumerate(rows, 1):
        if len(r) != width:
            raise ParseError(f"{fname}:{lineno}: expected {width} values, got {len(r)}")
    return np.array(rows, dtype=float)


# ---------------------------------------------------------------------------
# synthetic data


def _check_prob(name, p):
    if not 0.0 <= p <= 1.0:
        raise InvalidInputError(f"{name} must be a probability, got {p}")
    return float(p)


def ground_truth_graphon(kind, params=None):
    """Step graphon of a synthetic generator."""
    params = dict(params or {})
    if kind == "two_block_sbm":
        p_in = _check_prob("p_in", params.get("p_in", 0.8))
        p_out = _check_prob("p_out", params.get("p_out", 0.1))
        return StepGraphon(np.array([[p_in, p_out], [p_out, p_in]]))
    if kind == "er":
        return StepGraphon(np.array([[_check_prob("p", params.get("p", 0.45))]]))
    if kind == "ring":
        n = int(params.get("partitions", 10))
        bw = int(params.get("bandwidth", 1))
        p = _check_prob("p", params.get("p", 0.9))
        if n < 1 or bw < 0:
            raise InvalidInputError("ring needs partitions >= 1 and bandwidth >= 0")
        i = np.arange(n)
        gap = np.abs(i[:, None] - i[None, :])
        gap = np.minimum(gap, n - gap)
        return StepGraphon(np.where(gap <= bw, p, 0.0))
    raise InvalidInputError(f"unknown synthetic kind {kind!r}; choose from {SYNTH_KINDS}")


def synth_dataset(kind, params=None, count=100, size_range=(20, 30), rng=None, label=None):
    """Graphs sampled from a synthetic step graphon, labelled by generator kind.

    Node counts are uniform on the inclusive ``size_range``.  Graphs carry no
    attributes.
    """
    if count < 1:
        raise InvalidInputError("count must be at least 1")
    lo, hi = size_range
    if lo < 1 or hi < lo:
        raise InvalidInputError(f"invalid size range {size_range}")
    g = ground_truth_graphon(kind, params)
    rng = check_random_state(rng)
    label = KIND_LABELS[kind] if label is None else label
    graphs = []
    for _ in range(count):
        k = int(rng.integers(lo, hi + 1))
        s = sample_graph(g, None, k, rng=rng)
        graphs.append(AttributedGraph(k, s.edges, None, label=label, positions=s.positions))
    return Dataset(graphs, name=kind, attribute_kind="none")


def concat_datasets(parts, name):
    graphs = [g for p in parts for g in p.graphs]
    kinds = {p.attribute_kind for p in parts}
    if len(kinds) != 1:
        raise InvalidInputError("cannot mix attribute kinds")
    return Dataset(graphs, name=name, attribute_kind=kinds.pop())


SYNTHETIC = {
    # two-block SBM against ER at the SBM's mean density (0.8 + 0.1) / 2
    "two_vs_er": (20, 30),
    "two_vs_er_large": (40, 60),
}


def synthetic_dataset(name, seed=42, count=100):
    """Named synthetic benchmark: ``count`` SBM graphs then ``count`` ER graphs."""
    if name not in SYNTHETIC:
        raise InvalidInputError(f"unknown synthetic dataset {name!r}; choose from {sorted(SYNTHETIC)}")
    sizes = SYNTHETIC[name]
    sbm = synth_dataset("two_block_sbm", {"p_in": 0.8, "p_out": 0.1}, count, sizes,
                        derive_rng(seed, "dataset:" + name, 0), label=0)
    er = synth_dataset("er", {"p": 0.45}, count, sizes, derive_rng(seed, "dataset:" + name, 1), label=1)
    return concat_datasets([sbm, er], "synthetic:" + name)


def load_dataset(source, seed=42):
    """Dataset from ``synthetic:NAME`` or a TUDataset directory (prefix = folder name)."""
    if source.startswith("synthetic:"):
        return synthetic_dataset(source.split(":", 1)[1], seed)
    if not os.path.isdir(source):
        raise ParseError(f"dataset directory {source!r} does not exist")
    return parse_tudataset(source, os.path.basename(os.path.normpath(source)))


# ---------------------------------------------------------------------------
# checkpoints


@dataclass
class Checkpoint:
    config: TrainConfig
    model: GraphonAutoencoderModel
    history: List[dict] = field(default_factory=list)


def _list(arr):
    return None if arr is None else np.asarray(arr).tolist()


def checkpoint_document(ckpt):
    m = ckpt.model
    enc = m.encoder
    return {
        "schema_version": SCHEMA_VERSION,
        "config": ckpt.config.to_dict(),
        "encoder": {
            "theta": _list(enc.theta),
            "theta_bias": _list(enc.theta_bias),
            "hidden_weight": _list(enc.hidden_weight),
            "hidden_bias": _list(enc.hidden_bias),
            "out_weight": _list(enc.out_weight),
            "out_bias": _list(enc.out_bias),
            "attr_mean": _list(m.attr_mean),
            "attr_std": _list(m.attr_std),
        },
        "decoder": {
            "signal_activation": m.decoder.signal_activation,
            "factors": [{"logits": _list(f.logits), "signal": _list(f.signal)} for f in m.decoder.factors],
        },
        "prior": {"means": _list(m.prior.means), "log_stds": _list(m.prior.log_stds)},
        "history": list(ckpt.history),
    }


def save_checkpoint(path, ckpt):
    """Write ``ckpt`` as a versioned JSON document."""
    with open(path, "w") as fh:
        json.dump(checkpoint_document(ckpt), fh, indent=1, sort_keys=True)
        fh.write("\n")


def _field(doc, *keys):
    cur = doc
    for k in keys:
        if not isinstance(cur, dict) or k not in cur:
            raise CheckpointError(f"checkpoint is missing field {'.'.join(keys)}")
        cur = cur[k]
    return cur


def _array(doc, *keys, optional=False):
    val = _field(doc, *keys)
    if val is None and optional:
        return None
    try:
        arr = np.array(val, dtype=float)
    except (TypeError, ValueError):
        raise CheckpointError(f"checkpoint field {'.'.join(keys)} is not a numeric array") from None
    if arr.dtype == object:
        raise CheckpointError(f"checkpoint field {'.'.join(keys)} is ragged")
    return arr


def load_checkpoint(path):
    """Read and validate a checkpoint written by :func:`save_checkpoint`."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"malformed checkpoint: {exc}") from None
    version = _field(doc, "schema_version")
    if version != SCHEMA_VERSION:
        raise CheckpointError(f"unsupported version {version!r}")
    try:
        config = TrainConfig.from_dict(_field(doc, "config"))
    except (InvalidInputError, TypeError) as exc:
        raise CheckpointError(f"invalid config: {exc}") from None
    try:
        encoder = EncoderParams(*(_array(doc, "encoder", k) for k in
                                  ("theta", "theta_bias", "hidden_weight", "hidden_bias", "out_weight", "out_bias")))
        factors = []
        for c, f in enumerate(_field(doc, "decoder", "factors")):
            try:
                factors.append(GraphonFactor(np.array(f["logits"], dtype=float), np.array(f["signal"], dtype=float)))
            except InvalidInputError as exc:
                raise CheckpointError(f"decoder.factors[{c}]: {exc}") from None
            except (KeyError, TypeError, ValueError):
                raise CheckpointError(f"decoder.factors[{c}] is malformed") from None
        decoder = DecoderParams(factors, _field(doc, "decoder", "signal_activation"))
        prior = GmmPrior(_array(doc, "prior", "means"), _array(doc, "prior", "log_stds"))
    except InvalidInputError as exc:
        raise CheckpointError(str(exc)) from None
    mean = _array(doc, "encoder", "attr_mean", optional=True)
    std = _array(doc, "encoder", "attr_std", optional=True)
    if decoder.num_factors != encoder.latent_dim or prior.means.shape[1] != encoder.latent_dim:
        raise CheckpointError("encoder, decoder and prior disagree on the latent dimension")
    if mean is not None and (mean.shape != (encoder.input_dim,) or std is None or np.any(std <= 0)):
        raise CheckpointError("encoder.attr_mean/attr_std do not match the input dimension")
    history = _field(doc, "history")
    if not isinstance(history, list):
        raise CheckpointError("checkpoint field history must be a list")
    model = GraphonAutoencoderModel(encoder, decoder, prior, mean, std)
    return Checkpoint(config, model, history)


# ---------------------------------------------------------------------------
# CSV exports


def _fmt(v):
    return f"{v:.17g}"


def export_embeddings(path, codes):
    """Write ``(graph_id, code, label)`` triples as CSV with 9 significant digits."""
    codes = list(codes)
    dim = len(codes[0][1]) if codes else 0
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["graph_id", "label"] + [f"z_{i}" for i in range(dim)])
    for gid, z, label in codes:
        w.writerow([gid, "" if label is None else int(label)] + [_fmt(float(v)) for v in z])
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def read_embeddings(path):
    """Parse an embeddings CSV into ``(ids, labels, codes)``; missing labels become -1."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:2] != ["graph_id", "label"]:
        raise ParseError(f"{path}: expected header starting with graph_id,label")
    dim = len(rows[0]) - 2
    ids, labels, codes = [], [], []
    for lineno, r in enumerate(rows[1:], 2):
        if len(r) != dim + 2:
            raise ParseError(f"{path}:{lineno}: expected {dim + 2} fields, got {len(r)}")
        try:
            ids.append(int(r[0]))
            labels.append(int(r[1]) if r[1] != "" else -1)
            codes.append([float(v) for v in r[2:]])
        except ValueError:
            raise ParseError(f"{path}:{lineno}: non-numeric field") from None
    return np.array(ids, dtype=np.int64), np.array(labels, dtype=np.int64), np.array(codes).reshape(len(ids), dim)


HISTORY_FIELDS = ("epoch", "loss", "recon", "reg")


def history_line(row):
    return ",".join([str(row["epoch"])] + [_fmt(row[k]) for k in HISTORY_FIELDS[1:]])


def write_history(path, history):
    with open(path, "w") as fh:
        fh.write(",".join(HISTORY_FIELDS) + "\n")
        for row in history:
            fh.write(history_line(row) + "\n")
