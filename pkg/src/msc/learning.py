"""Unsupervised dictionary learning.

Two alternating schemes are provided:

* :func:`train_ksvd` pairs OMP coding with per-atom rank-1 updates of the
  restricted residual.
* :func:`train_online` pairs LASSO coding of minibatches with block
  coordinate descent on accumulated statistics ``A = sum y y'`` and
  ``B = sum x y'``, projecting each atom onto the unit ball.

Both are deterministic functions of the data and ``TrainConfig.seed``.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from .dictionary import Dictionary
from .errors import ArgumentError
from .solvers import L0, L1, SolverConfig, SparseCode, encode_dense
from .tensor import as_matrix

log = logging.getLogger(__name__)

POWER_TOL = 1e-10
POWER_MAX_ITER = 500
MIN_ATOM_NORM = 1e-8


class Method(str, enum.Enum):
    KSVD = "ksvd"
    ONLINE = "online"


@dataclass(frozen=True)
class TrainConfig:
    num_atoms: int
    solver: SolverConfig
    epochs: int = 50
    batch_size: int = 256
    seed: int = 0
    method: Method = Method.ONLINE
    # an atom used this many times or fewer in an epoch counts as dead
    dead_atom_threshold: int = 0
    # K-SVD only: also try each epoch with the weakest atom swapped out
    swap_trials: bool = True

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if self.num_atoms < 1:
            raise ArgumentError("num_atoms must be >= 1")
        if self.epochs < 1 or self.batch_size < 1:
            raise ArgumentError("epochs and batch_size must be positive")
        if self.method is Method.KSVD and not isinstance(self.solver.regularizer, L0):
            raise ArgumentError("K-SVD needs an L0 (OMP) solver")
        if self.method is Method.ONLINE and not isinstance(self.solver.regularizer, L1):
            raise ArgumentError("online learning needs an L1 solver")

    def to_dict(self):
        return {
            "num_atoms": self.num_atoms,
            "solver": self.solver.to_dict(),
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "method": self.method.value,
            "dead_atom_threshold": self.dead_atom_threshold,
            "swap_trials": self.swap_trials,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["num_atoms"]), SolverConfig.from_dict(d["solver"]),
                   epochs=int(d.get("epochs", 50)), batch_size=int(d.get("batch_size", 256)),
                   seed=int(d.get("seed", 0)), method=Method(d.get("method", "online")),
                   dead_atom_threshold=int(d.get("dead_atom_threshold", 0)),
                   swap_trials=bool(d.get("swap_trials", True)))


@dataclass
class KSVDResult:
    dictionary: Dictionary
    codes: list
    loss_trace: list = field(default_factory=list)
    # ||X - DY||_F^2 right after each epoch's coding step
    coding_loss: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.dictionary, self.codes, self.loss_trace))


def _check_data(xs):
    X = as_matrix(xs, "xs")
    if X.shape[1] < 1:
        raise ArgumentError("empty dataset")
    return X


def _meta(cfg):
    return {"solver": cfg.solver.to_dict(), "seed": int(cfg.seed), "method": cfg.method.value}


def init_dictionary(xs, cfg: TrainConfig) -> Dictionary:
    """Draw ``K`` distinct nonzero training columns and scale them to unit norm.

    When there are fewer nonzero columns than atoms, columns are drawn with
    replacement and perturbed with small Gaussian jitter.
    """
    X = _check_data(xs)
    norms = np.linalg.norm(X, axis=0)
    usable = np.flatnonzero(norms > 0)
    if usable.size == 0:
        raise ArgumentError("all training columns are zero")
    rng = np.random.default_rng(cfg.seed)
    K = cfg.num_atoms
    if usable.size >= K:
        pick = rng.choice(usable, K, replace=False)
        atoms = X[:, pick] / norms[pick]
    else:
        pick = rng.choice(usable, K, replace=True)
        atoms = X[:, pick] / norms[pick]
        atoms = atoms + 0.01 * rng.standard_normal(atoms.shape) / np.sqrt(X.shape[0])
        atoms /= np.linalg.norm(atoms, axis=0)
    return Dictionary(atoms, meta=_meta(cfg))


def _normalize_columns(a):
    # only shrinks columns that drifted measurably past unit norm
    n = np.linalg.norm(a, axis=0)
    return np.where(n > 1.0 + 1e-14, a / np.maximum(n, 1.0), a)


def rank1(E, start=None):
    """Leading singular triplet of ``E`` by power iteration on ``E E'``.

    Returns ``(u, sigma, v)`` with ``E ~ sigma u v'``.  ``start`` seeds the
    iteration (the current atom, in K-SVD); the Rayleigh quotient never
    decreases from it.
    """
    N = E.shape[0]
    u = np.ones(N) if start is None else np.array(start, dtype=np.float64)
    nu = np.linalg.norm(u)
    if nu == 0:
        u = np.ones(N)
        nu = np.sqrt(N)
    u = u / nu
    M = E @ E.T
    for _ in range(POWER_MAX_ITER):
        w = M @ u
        nw = np.linalg.norm(w)
        if nw == 0:
            break
        w /= nw
        if w @ u < 0:
            w = -w
        done = np.linalg.norm(w - u) < POWER_TOL
        u = w
        if done:
            break
    t = E.T @ u
    sigma = float(np.linalg.norm(t))
    v = t / sigma if sigma > 0 else np.zeros(E.shape[1])
    return u, sigma, v


def replace_dead_atoms(d: Dictionary, usage, xs, codes=None, seed=0,
                       threshold=0) -> Dictionary:
    """Swap atoms used ``threshold`` times or fewer for badly fit data columns.

    Dead atoms are visited in index order; each takes the training column
    with the largest residual ``||x - D y||`` under ``codes`` (dense ``K x n``;
    zero codes when omitted), normalized.  A column is used at most once.
    ``seed`` only matters when every residual is zero, in which case random
    data columns are used.
    """
    usage = np.asarray(usage)
    if usage.shape != (d.num_atoms,):
        raise ArgumentError(f"usage must have length {d.num_atoms}")
    dead = np.flatnonzero(usage <= threshold)
    if dead.size == 0:
        return d
    X = as_matrix(xs, "xs")
    Y = np.zeros((d.num_atoms, X.shape[1])) if codes is None else np.asarray(codes)
    resid = np.linalg.norm(X - d.atoms @ Y, axis=0)
    atoms = d.atoms.copy()
    order = np.argsort(-resid, kind="stable")
    rng = np.random.default_rng(seed)
    taken = 0
    for k in dead:
        if taken < order.size and resid[order[taken]] > 0:
            col = X[:, order[taken]]
            taken += 1
        else:
            col = X[:, rng.integers(X.shape[1])] + 1e-3 * rng.standard_normal(X.shape[0])
        n = np.linalg.norm(col)
        if n > 0:
            atoms[:, k] = col / n
    return Dictionary(_normalize_columns(atoms), d.modality_blocks, d.meta)


def _frob2(X, D, Y):
    R = X - D @ Y
    return float(np.einsum("ij,ij->", R, R))


def _ksvd_epoch(X, D, Y, cfg, epoch):
    D = D.copy()
    Ynew = encode_dense(X, Dictionary(D), cfg.solver)
    if Y is not None:
        # OMP is greedy: keep last epoch's code where it still fits better,
        # so the alternation never increases the loss.
        err_new = np.linalg.norm(X - D @ Ynew, axis=0)
        err_old = np.linalg.norm(X - D @ Y, axis=0)
        worse = err_new > err_old
        Ynew[:, worse] = Y[:, worse]
    Y = Ynew
    coding_loss = _frob2(X, D, Y)

    usage = np.count_nonzero(Y, axis=1)
    if np.any(usage <= cfg.dead_atom_threshold):
        D = replace_dead_atoms(Dictionary(D), usage, X, Y, seed=cfg.seed + epoch,
                               threshold=cfg.dead_atom_threshold).atoms.copy()

    R = X - D @ Y
    for k in range(D.shape[1]):
        omega = np.flatnonzero(Y[k])
        if omega.size == 0:
            continue
        E = R[:, omega] + np.outer(D[:, k], Y[k, omega])
        u, sigma, v = rank1(E, start=D[:, k])
        if sigma == 0:
            continue
        D[:, k] = u
        Y[k, omega] = sigma * v
        R[:, omega] = E - np.outer(u, Y[k, omega])
    D = _normalize_columns(D)
    return D, Y, coding_loss, _frob2(X, D, Y)


def _swap_weakest(X, D, Y):
    """Replace the atom carrying the least code energy by the worst-fit column."""
    D = D.copy()
    Y = Y.copy()
    k = int(np.argmin(np.einsum("ij,ij->i", Y, Y)))
    err = np.linalg.norm(X - D @ Y, axis=0)
    w = int(np.argmax(err))
    if err[w] == 0:
        return None
    D[:, k] = X[:, w] / np.linalg.norm(X[:, w])
    Y[k] = 0.0
    return D, Y


def train_ksvd(xs, cfg: TrainConfig, init: Dictionary | None = None) -> KSVDResult:
    """K-SVD: OMP coding alternated with rank-1 atom updates.

    With ``cfg.swap_trials`` every epoch after the first is also run from a
    copy of the model whose lowest-energy atom was swapped for the worst
    represented training column; the branch with the lower loss is kept.
    This lets the alternation leave local minima where one atom straddles
    two generating directions, and the loss trace stays non-increasing.
    """
    if cfg.method is not Method.KSVD:
        raise ArgumentError("train_ksvd needs method=KSVD")
    X = _check_data(xs)
    D = (init or init_dictionary(X, cfg)).atoms.copy()
    Y = None
    result = KSVDResult(None, [])
    for epoch in range(cfg.epochs):
        D1, Y1, coding, loss = _ksvd_epoch(X, D, Y, cfg, epoch)
        if cfg.swap_trials and Y is not None:
            swapped = _swap_weakest(X, D, Y)
            if swapped is not None:
                D2, Y2, coding2, loss2 = _ksvd_epoch(X, *swapped, cfg, epoch)
                if loss2 < loss:
                    D1, Y1, coding, loss = D2, Y2, coding2, loss2
        D, Y = D1, Y1
        result.coding_loss.append(coding)
        result.loss_trace.append(loss)
        log.debug("ksvd epoch %d loss %.6g", epoch, loss)

    result.dictionary = Dictionary(D, meta=_meta(cfg))
    result.codes = [SparseCode.from_dense(Y[:, j], cfg.solver.regularizer)
                    for j in range(X.shape[1])]
    return result


def train_online(xs, cfg: TrainConfig, init: Dictionary | None = None):
    """Minibatch alternating learning; returns ``(dictionary, loss_trace)``.

    ``loss_trace[e]`` is the sum over epoch ``e``'s minibatches of
    ``||X_b - D Y_b||^2 + lam * |Y_b|_1`` evaluated with the dictionary that
    coded the batch.

    The statistics ``A`` and ``B`` accumulate over the minibatches of one
    epoch and restart at the next, so codes computed with the early random
    dictionary stop weighing on the atoms once a full pass has been made.
    """
    if cfg.method is not Method.ONLINE:
        raise ArgumentError("train_online needs method=ONLINE")
    X = _check_data(xs)
    D = (init or init_dictionary(X, cfg)).atoms.copy()
    lam = cfg.solver.regularizer.lam
    K, n = D.shape[1], X.shape[1]
    rng = np.random.default_rng(cfg.seed)
    trace = []
    for epoch in range(cfg.epochs):
        A = np.zeros((K, K))
        B = np.zeros((X.shape[0], K))
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            Xb = X[:, idx]
            Yb = encode_dense(Xb, Dictionary(D), cfg.solver)
            total += _frob2(Xb, D, Yb) + lam * float(np.abs(Yb).sum())
            A += Yb @ Yb.T
            B += Xb @ Yb.T
            for j in range(K):
                ajj = A[j, j]
                if ajj <= 0:
                    continue
                u = D[:, j] + (B[:, j] - D @ A[:, j]) / ajj
                nu = np.linalg.norm(u)
                if nu < MIN_ATOM_NORM:
                    continue
                D[:, j] = u / max(1.0, nu)
        trace.append(total)
        log.debug("online epoch %d objective %.6g", epoch, total)
    return Dictionary(_normalize_columns(D), meta=_meta(cfg)), trace


def train_dictionary(xs, cfg: TrainConfig) -> tuple[Dictionary, list]:
    """Dispatch on ``cfg.method``; returns ``(dictionary, loss_trace)``."""
    if cfg.method is Method.KSVD:
        res = train_ksvd(xs, cfg)
        return res.dictionary, res.loss_trace
    return train_online(xs, cfg)
