"""Joint and cross-modal sparse coding.

A joint dictionary is learned on stacked inputs where modality ``m`` of
dimension ``N_m`` is scaled by ``1/sqrt(N_m)``.  Each joint atom then splits
row-wise into per-modality blocks; multiplying a block back by ``sqrt(N_m)``
gives the sub-dictionary used to code that modality on its own.  For any code
``y``::

    ||x_ab - D_ab y||^2 = sum_m ||x_m - D_m y||^2 / N_m

so with ``lambda_joint = (sum_m 1/N_m) * lambda_cross`` the joint objective is
the weighted sum of the per-modality (cross-modal) objectives.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .dictionary import Dictionary, ModalityBlock, load_dictionary, save_dictionary
from .errors import ArgumentError, FormatError, ShapeError
from .learning import TrainConfig, train_dictionary
from .solvers import L1, SolverConfig, SparseCode, encode_dense, lasso_encode
from .tensor import as_matrix, as_vector, gram

COUPLING_RTOL = 1e-12


@dataclass(frozen=True)
class ModalitySpec:
    name: str
    dim: int

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ArgumentError(f"modality {self.name!r} needs dim >= 1")

    @property
    def weight(self) -> float:
        return 1.0 / math.sqrt(self.dim)


def coupling(dims) -> float:
    """``sum_m 1/N_m``: the factor linking the joint and cross-modal lambdas."""
    return float(sum(1.0 / d for d in dims))


def concat_input(parts: Sequence, specs: Sequence[ModalitySpec] | None = None):
    """Stack modality inputs, each scaled by ``1/sqrt(N_m)``.

    ``parts`` holds vectors (one example) or matrices with one example per
    column.  Returns a vector or matrix accordingly.
    """
    if len(parts) < 1:
        raise ArgumentError("need at least one modality")
    vec = np.ndim(parts[0]) == 1
    mats = [as_matrix(p, f"modality {i}") for i, p in enumerate(parts)]
    if specs is not None:
        if len(specs) != len(mats):
            raise ArgumentError(f"{len(mats)} inputs for {len(specs)} modalities")
        for s, m in zip(specs, mats):
            if m.shape[0] != s.dim:
                raise ShapeError(f"modality {s.name!r}: got dim {m.shape[0]}, expected {s.dim}")
    if len({m.shape[1] for m in mats}) != 1:
        raise ArgumentError("modalities have different example counts")
    out = np.vstack([m / math.sqrt(m.shape[0]) for m in mats])
    return out[:, 0] if vec else out


@dataclass(frozen=True, eq=False)
class JointModel:
    dictionary: Dictionary
    lambda_joint: float
    lambda_cross: float
    # whether lambda_joint was derived from lambda_cross by the coupling rule
    coupled: bool = True

    def __post_init__(self):
        blocks = self.dictionary.modality_blocks
        if len(blocks) < 2:
            raise ArgumentError("a joint model needs at least two modality blocks")
        for b in blocks:
            if abs(b.weight - 1.0 / math.sqrt(b.dim)) > 1e-15:
                raise ArgumentError(f"block {b.name!r} weight must be 1/sqrt({b.dim})")
        if self.coupled:
            want = coupling(b.dim for b in blocks) * self.lambda_cross
            if abs(self.lambda_joint - want) > COUPLING_RTOL * max(1.0, abs(want)):
                raise ArgumentError("lambda_joint does not match the coupling rule")

    @property
    def specs(self) -> tuple[ModalitySpec, ...]:
        return tuple(ModalitySpec(b.name, b.dim) for b in self.dictionary.modality_blocks)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(b.name for b in self.dictionary.modality_blocks)

    @property
    def num_atoms(self) -> int:
        return self.dictionary.num_atoms

    def sub_dictionary(self, name) -> np.ndarray:
        """Unscaled block of the joint atoms for modality ``name``."""
        return self._subs[name][0]

    @cached_property
    def _subs(self):
        out = {}
        for b in self.dictionary.modality_blocks:
            sub = self.dictionary.atoms[b.row_start:b.row_end] * math.sqrt(b.dim)
            sub.setflags(write=False)
            g = np.ascontiguousarray(gram(sub))
            g.setflags(write=False)
            out[b.name] = (sub, g)
        return out

    def _check_name(self, name):
        if name not in self.names:
            raise ArgumentError(f"unknown modality {name!r}; model has {list(self.names)}")


def _joint_solver(cfg: TrainConfig) -> float:
    if not isinstance(cfg.solver.regularizer, L1):
        raise ArgumentError("joint coding is defined for the l1 regularizer")
    return float(cfg.solver.regularizer.lam)


def train_joint(modalities: Mapping[str, np.ndarray], cfg: TrainConfig,
                lambda_cross: float | None = None) -> tuple[JointModel, list]:
    """Learn one dictionary on the scaled concatenation of paired modalities.

    ``modalities`` maps names to ``N_m x n`` matrices whose columns are
    corresponding examples (insertion order fixes the row blocks).  The
    solver's lambda is the joint ``lambda_joint``; ``lambda_cross`` defaults
    to the coupled value ``lambda_joint / sum_m 1/N_m``.  Returns
    ``(model, loss_trace)``.
    """
    if len(modalities) < 2:
        raise ArgumentError("joint training needs at least two modalities")
    lam_joint = _joint_solver(cfg)
    names = list(modalities)
    mats = [as_matrix(modalities[n], n) for n in names]
    if len({m.shape[1] for m in mats}) != 1:
        raise ArgumentError("modalities must have the same number of paired examples")
    X = concat_input(mats)
    d, trace = train_dictionary(X, cfg)
    blocks, pos = [], 0
    for name, m in zip(names, mats):
        dim = m.shape[0]
        blocks.append(ModalityBlock(name, pos, pos + dim, 1.0 / math.sqrt(dim)))
        pos += dim
    c = coupling(m.shape[0] for m in mats)
    coupled = lambda_cross is None
    lam_cross = lam_joint / c if coupled else float(lambda_cross)
    joint = Dictionary(d.atoms, blocks, d.meta)
    return JointModel(joint, lam_joint, lam_cross, coupled), trace


def joint_encode(parts: Sequence, model: JointModel, solver: SolverConfig | None = None):
    """Code paired inputs against the full joint dictionary with ``lambda_joint``.

    Returns the dense ``K x n`` codes (or a length-K vector for vector input).
    """
    cfg = solver or SolverConfig(L1(model.lambda_joint))
    x = concat_input(parts, model.specs)
    if x.ndim == 1:
        return encode_dense(x[:, None], model.dictionary, cfg)[:, 0]
    return encode_dense(x, model.dictionary, cfg)


def _cross_cfg(model, lam, solver):
    if solver is not None:
        return solver
    return SolverConfig(L1(model.lambda_cross if lam is None else lam))


def cross_encode(x, model: JointModel, modality: str, lam: float | None = None,
                 solver: SolverConfig | None = None) -> SparseCode:
    """l1-code a single modality against its unscaled sub-dictionary.

    Uses ``lambda_cross`` unless ``lam`` (or a full ``solver``) is given.
    The code indexes the shared joint atoms.
    """
    model._check_name(modality)
    x = as_vector(x, "x")
    sub, g = model._subs[modality]
    if x.shape[0] != sub.shape[0]:
        raise ShapeError(f"modality {modality!r} has dim {sub.shape[0]}, got {x.shape[0]}")
    cfg = _cross_cfg(model, lam, solver)
    if isinstance(cfg.regularizer, L1):
        return lasso_encode(x, sub, cfg)
    return SparseCode.from_dense(encode_dense(x[:, None], sub, cfg)[:, 0], cfg.regularizer)


def cross_encode_dense(xs, model: JointModel, modality: str, lam: float | None = None,
                       solver: SolverConfig | None = None) -> np.ndarray:
    """Column-wise :func:`cross_encode`; returns dense ``K x n`` codes."""
    model._check_name(modality)
    X = as_matrix(xs, "xs")
    sub, _ = model._subs[modality]
    if X.shape[0] != sub.shape[0]:
        raise ShapeError(f"modality {modality!r} has dim {sub.shape[0]}, got {X.shape[0]}")
    return encode_dense(X, sub, _cross_cfg(model, lam, solver))


def cross_reconstruct(x, model: JointModel, src: str, dst: str, lam: float | None = None):
    """Estimate modality ``dst`` from modality ``src`` (vector or columns)."""
    model._check_name(dst)
    if np.ndim(x) == 1:
        y = cross_encode(x, model, src, lam).dense()
    else:
        y = cross_encode_dense(x, model, src, lam)
    return model.sub_dictionary(dst) @ y


def feature_union(codes: Sequence) -> np.ndarray:
    """Stack codes in argument order.

    Items may be :class:`SparseCode` objects, dense vectors, or ``K_i x n``
    matrices (one example per column); vectors give a vector, matrices a
    matrix with ``sum K_i`` rows.
    """
    if len(codes) < 1:
        raise ArgumentError("feature_union needs at least one code")
    dense = [c.dense() if isinstance(c, SparseCode) else np.asarray(c, dtype=np.float64)
             for c in codes]
    if all(d.ndim == 1 for d in dense):
        return np.concatenate(dense)
    mats = [d[:, None] if d.ndim == 1 else d for d in dense]
    if len({m.shape[1] for m in mats}) != 1:
        raise ArgumentError("codes have different example counts")
    return np.vstack(mats)


def decomposition_terms(parts: Sequence, model: JointModel, y) -> tuple[float, list]:
    """Both sides of the block decomposition identity at code ``y``.

    Returns ``(||x_ab - D_ab y||^2, [||x_m - D_m y||^2 / N_m for each m])``.
    """
    y = as_vector(y, "y")
    x = concat_input([as_vector(p, "x") for p in parts], model.specs)
    r = x - model.dictionary.atoms @ y
    per = []
    for p, s in zip(parts, model.specs):
        rm = np.asarray(p, dtype=np.float64) - model.sub_dictionary(s.name) @ y
        per.append(float(rm @ rm) / s.dim)
    return float(r @ r), per


def save_joint(model: JointModel, path) -> None:
    save_dictionary(model.dictionary, path, lambda_joint=model.lambda_joint,
                    lambda_cross=model.lambda_cross, coupled=model.coupled)


def load_joint(path) -> JointModel:
    d, meta = load_dictionary(path)
    try:
        return JointModel(d, float(meta["lambda_joint"]), float(meta["lambda_cross"]),
                          bool(meta.get("coupled", True)))
    except KeyError as exc:
        raise FormatError(f"{path}: not a joint model (missing {exc})") from exc
