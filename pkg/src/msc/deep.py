"""Deep sparse coding: coding layers interlaced with pooling.

Each example is a sequence of vectors per modality (say, the patches of an
image or the frames of a clip), held as a matrix with one vector per column
plus the sequence length of every example.  A layer codes every vector and
then pools consecutive codes of the same example, so the next layer sees a
shorter sequence of dense vectors.

Topologies:

* one joint layer: unimodal stacks feed a single joint layer (``"3a"``);
* two or more joint layers: the joint part is itself deep (``"3b"``).

The joint layer input is the plain stack of the top unimodal features, with
no per-modality scaling.  The top representation of an example is pooled
over the whole remaining sequence into one feature vector.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .dictionary import Dictionary, load_dictionary, save_dictionary
from .errors import ArgumentError, ConfigError, FormatError, ShapeError
from .learning import TrainConfig, train_dictionary
from .solvers import SparseCode, encode_dense
from .tensor import as_matrix


class PoolKind(str, enum.Enum):
    MAX = "max"
    AVERAGE = "average"


@dataclass(frozen=True)
class PoolingConfig:
    kind: PoolKind = PoolKind.MAX
    factor: int = 1
    stride: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", PoolKind(self.kind))
        if int(self.factor) < 1:
            raise ArgumentError("pooling factor must be >= 1")
        if self.stride is not None and int(self.stride) < 1:
            raise ArgumentError("pooling stride must be >= 1")

    @property
    def step(self) -> int:
        return self.factor if self.stride is None else self.stride

    def to_dict(self):
        return {"kind": self.kind.value, "factor": self.factor, "stride": self.stride}

    @classmethod
    def from_dict(cls, d):
        return cls(PoolKind(d["kind"]), int(d["factor"]), d.get("stride"))


@dataclass(frozen=True)
class LayerConfig:
    train: TrainConfig
    pooling: PoolingConfig = field(default_factory=PoolingConfig)


@dataclass(frozen=True)
class StackConfig:
    per_modality_layers: Mapping[str, Sequence[LayerConfig]]
    joint_layers: Sequence[LayerConfig]

    def __post_init__(self):
        if len(self.per_modality_layers) < 1:
            raise ConfigError("need at least one modality")
        if len(self.joint_layers) < 1:
            raise ConfigError("need at least one joint layer")
        object.__setattr__(self, "per_modality_layers",
                           {k: tuple(v) for k, v in self.per_modality_layers.items()})
        object.__setattr__(self, "joint_layers", tuple(self.joint_layers))

    @property
    def topology(self) -> str:
        return "3a" if len(self.joint_layers) == 1 else "3b"


def _windows(length, cfg):
    # consecutive windows of cfg.factor starting every cfg.step; the last one
    # may be short, but a window that adds nothing new is never started
    M, s = cfg.factor, cfg.step
    return [(a, min(a + M, length)) for a in range(0, length, s)
            if a == 0 or a - s + M < length]


def _reduce(block, kind):
    if kind is PoolKind.AVERAGE:
        return block.mean(axis=1)
    pick = np.argmax(np.abs(block), axis=1)
    return block[np.arange(block.shape[0]), pick]


def pool(codes, cfg: PoolingConfig):
    """Pool a sequence of codes with windows of ``cfg.factor``.

    ``codes`` is a list of vectors / :class:`SparseCode` (a list is returned)
    or a ``K x T`` matrix (a ``K x T'`` matrix is returned).  Max pooling
    keeps, per coordinate, the entry of largest magnitude with its sign.
    """
    as_list = not isinstance(codes, np.ndarray)
    if as_list:
        if len(codes) == 0:
            raise ArgumentError("cannot pool an empty sequence")
        vecs = [c.dense() if isinstance(c, SparseCode) else np.asarray(c, dtype=np.float64)
                for c in codes]
        if len({v.shape for v in vecs}) != 1 or vecs[0].ndim != 1:
            raise ShapeError("pooled codes must be vectors of one length")
        Y = np.column_stack(vecs)
    else:
        Y = as_matrix(codes, "codes")
    out = np.column_stack([_reduce(Y[:, a:b], cfg.kind) for a, b in _windows(Y.shape[1], cfg)])
    return [out[:, j].copy() for j in range(out.shape[1])] if as_list else out


def pool_groups(Y, lengths, cfg: PoolingConfig):
    """Pool within each example; returns ``(pooled, new_lengths)``.

    Columns of ``Y`` are the concatenated code sequences of the examples, of
    the given ``lengths``; windows never straddle two examples.
    """
    Y = as_matrix(Y, "codes")
    lengths = np.asarray(lengths, dtype=np.int64)
    if lengths.sum() != Y.shape[1] or np.any(lengths < 1):
        raise ShapeError("sequence lengths must be positive and sum to the column count")
    parts, new = [], []
    start = 0
    for L in lengths:
        P = pool(Y[:, start:start + L], cfg)
        parts.append(P)
        new.append(P.shape[1])
        start += L
    return np.hstack(parts), np.asarray(new, dtype=np.int64)


def _global_pool(Y, lengths, kind):
    Y = as_matrix(Y, "codes")
    out, start = [], 0
    for L in lengths:
        out.append(_reduce(Y[:, start:start + L], kind))
        start += L
    return np.column_stack(out)


@dataclass(frozen=True, eq=False)
class DeepModel:
    config: StackConfig
    modality_dicts: Mapping[str, tuple]
    joint_dicts: tuple

    @property
    def topology(self) -> str:
        return self.config.topology

    @property
    def output_dim(self) -> int:
        return self.joint_dicts[-1].num_atoms


def _check_inputs(inputs, cfg):
    names = list(cfg.per_modality_layers)
    if set(inputs) != set(names):
        raise ArgumentError(f"expected modalities {names}, got {list(inputs)}")
    out, n = {}, None
    for name in names:
        X, lengths = inputs[name]
        X = as_matrix(X, name)
        lengths = np.asarray(lengths, dtype=np.int64)
        if lengths.sum() != X.shape[1] or np.any(lengths < 1):
            raise ShapeError(f"{name}: sequence lengths must be positive and sum to {X.shape[1]}")
        if n is not None and lengths.size != n:
            raise ArgumentError("modalities have different numbers of examples")
        n = lengths.size
        out[name] = (X, lengths)
    return out


def _check_factor(name, layer_no, lengths, pooling):
    if pooling.factor > int(lengths.max()):
        raise ConfigError(f"{name} layer {layer_no}: pooling factor {pooling.factor} exceeds "
                          f"every example's code count (max {int(lengths.max())})")


def _stack_hidden(hidden, names):
    lens = [hidden[n][1] for n in names]
    for n, L in zip(names, lens):
        if not np.array_equal(L, lens[0]):
            raise ConfigError(f"after unimodal pooling, {n} has a different number of vectors "
                              f"per example than {names[0]}; adjust the pooling factors")
    return np.vstack([hidden[n][0] for n in names]), lens[0]


def train_stack(inputs: Mapping[str, tuple], cfg: StackConfig) -> DeepModel:
    """Greedy layer-wise unsupervised training.

    ``inputs`` maps each modality to ``(X, lengths)``: a matrix whose columns
    are the concatenated vector sequences of all examples and the sequence
    length of each example.  There is no label argument.
    """
    data = _check_inputs(inputs, cfg)
    names = list(cfg.per_modality_layers)
    modality_dicts, hidden = {}, {}
    for name in names:
        X, lengths = data[name]
        dicts = []
        for i, layer in enumerate(cfg.per_modality_layers[name]):
            _check_factor(name, i, lengths, layer.pooling)
            d, _ = train_dictionary(X, layer.train)
            dicts.append(d)
            Y = encode_dense(X, d, layer.train.solver)
            X, lengths = pool_groups(Y, lengths, layer.pooling)
        modality_dicts[name] = tuple(dicts)
        hidden[name] = (X, lengths)
    H, lengths = _stack_hidden(hidden, names)
    joint = []
    for i, layer in enumerate(cfg.joint_layers):
        last = i == len(cfg.joint_layers) - 1
        if not last:
            _check_factor("joint", i, lengths, layer.pooling)
        d, _ = train_dictionary(H, layer.train)
        joint.append(d)
        if not last:
            Y = encode_dense(H, d, layer.train.solver)
            H, lengths = pool_groups(Y, lengths, layer.pooling)
    return DeepModel(cfg, modality_dicts, tuple(joint))


def forward_batch(inputs: Mapping[str, tuple], model: DeepModel) -> np.ndarray:
    """Top feature of every example, one column each (``K_top x n``)."""
    cfg = model.config
    data = _check_inputs(inputs, cfg)
    names = list(cfg.per_modality_layers)
    hidden = {}
    for name in names:
        X, lengths = data[name]
        for d, layer in zip(model.modality_dicts[name], cfg.per_modality_layers[name]):
            Y = encode_dense(X, d, layer.train.solver)
            X, lengths = pool_groups(Y, lengths, layer.pooling)
        hidden[name] = (X, lengths)
    H, lengths = _stack_hidden(hidden, names)
    for i, (d, layer) in enumerate(zip(model.joint_dicts, cfg.joint_layers)):
        Y = encode_dense(H, d, layer.train.solver)
        if i == len(model.joint_dicts) - 1:
            return _global_pool(Y, lengths, layer.pooling.kind)
        H, lengths = pool_groups(Y, lengths, layer.pooling)
    raise AssertionError("unreachable")


def forward(sequences: Mapping[str, np.ndarray], model: DeepModel) -> np.ndarray:
    """Top feature vector of one example given each modality's vector sequence."""
    inputs = {}
    for name, X in sequences.items():
        X = as_matrix(X, name)
        inputs[name] = (X, [X.shape[1]])
    return forward_batch(inputs, model)[:, 0]


# ------------------------------------------------------------ serialization

def _layer_dict(layer: LayerConfig, path):
    return {"file": path, "pooling": layer.pooling.to_dict(), "train": layer.train.to_dict()}


def _layer_from(d) -> LayerConfig:
    return LayerConfig(TrainConfig.from_dict(d["train"]), PoolingConfig.from_dict(d["pooling"]))


def save_model(model: DeepModel, directory) -> None:
    """Write every layer dictionary plus ``manifest.json`` into ``directory``."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    cfg = model.config
    manifest = {"topology": model.topology, "modalities": {}, "joint": []}
    for name in cfg.per_modality_layers:
        entries = []
        for i, (d, layer) in enumerate(zip(model.modality_dicts[name],
                                           cfg.per_modality_layers[name])):
            fname = f"{name}_{i}.msc"
            save_dictionary(d, root / fname)
            entries.append(_layer_dict(layer, fname))
        manifest["modalities"][name] = entries
    for i, (d, layer) in enumerate(zip(model.joint_dicts, cfg.joint_layers)):
        fname = f"joint_{i}.msc"
        save_dictionary(d, root / fname)
        manifest["joint"].append(_layer_dict(layer, fname))
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_model(directory) -> DeepModel:
    root = Path(directory)
    try:
        manifest = json.loads((root / "manifest.json").read_text())
        per, dicts = {}, {}
        for name, entries in manifest["modalities"].items():
            per[name] = [_layer_from(e) for e in entries]
            dicts[name] = tuple(load_dictionary(root / e["file"])[0] for e in entries)
        joint_layers = [_layer_from(e) for e in manifest["joint"]]
        joint = tuple(load_dictionary(root / e["file"])[0] for e in manifest["joint"])
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{root}: bad stack manifest ({exc})") from exc
    return DeepModel(StackConfig(per, joint_layers), dicts, joint)
