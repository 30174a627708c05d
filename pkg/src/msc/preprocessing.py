"""Data conditioning: patches, centering, PCA whitening and Gaussian noise."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ArgumentError, DataError, FormatError, NumericalError, ShapeError
from .tensor import as_matrix, load_matrix, save_matrix

DEFAULT_EPSILON = 1e-5


@dataclass(frozen=True)
class PatchConfig:
    """Patch geometry.

    Images use ``width x height x channels`` windows moved by ``stride``
    pixels in both directions (``stride=None`` means non-overlapping).
    One-dimensional inputs use ``patch_len`` instead.
    """

    width: int = 4
    height: int = 4
    channels: int = 1
    stride: int | None = None
    patch_len: int | None = None

    def __post_init__(self):
        for name in ("width", "height", "channels"):
            if int(getattr(self, name)) < 1:
                raise ArgumentError(f"patch {name} must be positive")
        if self.stride is not None and self.stride < 1:
            raise ArgumentError("stride must be positive")
        if self.patch_len is not None and self.patch_len < 1:
            raise ArgumentError("patch_len must be positive")

    @property
    def size(self) -> int:
        if self.patch_len is not None:
            return self.patch_len
        return self.width * self.height * self.channels


def _as_image(img, cfg):
    a = np.asarray(img, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3:
        raise ShapeError(f"expected an H x W or H x W x C image, got shape {np.shape(img)}")
    if a.shape[2] != cfg.channels:
        raise ShapeError(f"image has {a.shape[2]} channels, patch config {cfg.channels}")
    return a


def _grid(length, size, stride):
    return range(0, length - size + 1, stride)


def extract_patches(data, cfg: PatchConfig) -> np.ndarray:
    """Cut ``data`` into patches, one per column.

    Within a patch the layout is row-major with the channel index fastest;
    patches are ordered row-major over the patch grid.  Partial patches at
    the right/bottom edge are dropped.
    """
    if cfg.patch_len is not None:
        v = np.asarray(data, dtype=np.float64).ravel()
        L = cfg.patch_len
        if v.size < L:
            raise ArgumentError(f"vector of length {v.size} shorter than patch_len {L}")
        starts = _grid(v.size, L, cfg.stride or L)
        return np.column_stack([v[s:s + L] for s in starts])
    img = _as_image(data, cfg)
    H, W, _ = img.shape
    h, w = cfg.height, cfg.width
    if H < h or W < w:
        raise ArgumentError(f"patch {h}x{w} larger than image {H}x{W}")
    rows, cols = _grid(H, h, cfg.stride or h), _grid(W, w, cfg.stride or w)
    return np.column_stack([img[r:r + h, c:c + w, :].ravel() for r in rows for c in cols])


def reassemble_patches(cols, shape, cfg: PatchConfig) -> np.ndarray:
    """Inverse of :func:`extract_patches` for an image of ``shape``.

    Overlapping contributions are averaged; pixels no patch covered are 0.
    Returns an array of ``shape``.
    """
    P = as_matrix(cols, "patches")
    if P.shape[0] != cfg.size:
        raise ShapeError(f"patch length {P.shape[0]} != {cfg.size}")
    if cfg.patch_len is not None:
        n = int(np.prod(shape))
        L = cfg.patch_len
        out = np.zeros(n)
        count = np.zeros(n)
        for k, s in enumerate(_grid(n, L, cfg.stride or L)):
            out[s:s + L] += P[:, k]
            count[s:s + L] += 1
        return np.divide(out, count, out=out, where=count > 0).reshape(shape)
    H, W = shape[0], shape[1]
    h, w, ch = cfg.height, cfg.width, cfg.channels
    rows, cols_ = _grid(H, h, cfg.stride or h), _grid(W, w, cfg.stride or w)
    if len(rows) * len(cols_) != P.shape[1]:
        raise ShapeError(f"{P.shape[1]} patches do not tile a {H}x{W} image")
    out = np.zeros((H, W, ch))
    count = np.zeros((H, W, 1))
    k = 0
    for r in rows:
        for c in cols_:
            out[r:r + h, c:c + w, :] += P[:, k].reshape(h, w, ch)
            count[r:r + h, c:c + w] += 1
            k += 1
    out = np.divide(out, count, out=out, where=count > 0)
    return out.reshape(shape)


def center_columns(xs):
    """Remove each column's mean; returns ``(centered, means)``."""
    X = as_matrix(xs, "xs")
    m = X.mean(axis=0)
    return X - m, m


@dataclass(frozen=True, eq=False)
class WhiteningTransform:
    mean: np.ndarray
    projection: np.ndarray
    eigenvalues: np.ndarray
    epsilon: float

    @property
    def keep_d(self) -> int:
        return self.projection.shape[0]

    @property
    def input_dim(self) -> int:
        return self.projection.shape[1]


def fit_whitening(xs, keep_d: int | None = None, epsilon: float = DEFAULT_EPSILON
                  ) -> WhiteningTransform:
    """PCA whitening fitted to the columns of ``xs``.

    Uses the unbiased sample covariance (``n - 1``).  The projection is
    ``diag((lam_i + epsilon)^-1/2) U'`` over the ``keep_d`` leading
    eigenvectors, each signed so its largest-magnitude entry is positive.
    """
    X = as_matrix(xs, "xs")
    N, n = X.shape
    if n < 2:
        raise ArgumentError("whitening needs at least two examples")
    keep_d = N if keep_d is None else int(keep_d)
    if not 1 <= keep_d <= N:
        raise ArgumentError(f"keep_d must be in [1, {N}], got {keep_d}")
    if epsilon < 0:
        raise ArgumentError("epsilon must be >= 0")
    mean = X.mean(axis=1)
    Xc = X - mean[:, None]
    cov = (Xc @ Xc.T) / (n - 1)
    cov = 0.5 * (cov + cov.T)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(-evals, kind="stable")[:keep_d]
    evals = np.maximum(evals[order], 0.0)
    U = evecs[:, order]
    pivot = np.argmax(np.abs(U), axis=0)
    U = U * np.sign(U[pivot, np.arange(keep_d)])
    scale = evals + epsilon
    if epsilon == 0 and np.any(evals <= 1e-12 * float(evals[0])) or np.any(scale <= 0):
        raise NumericalError("zero-variance direction with epsilon = 0; cannot whiten")
    proj = U.T / np.sqrt(scale)[:, None]
    return WhiteningTransform(mean, proj, evals, float(epsilon))


def apply_whitening(t: WhiteningTransform, xs) -> np.ndarray:
    vec = np.ndim(xs) == 1
    X = as_matrix(xs, "xs")
    if X.shape[0] != t.input_dim:
        raise ShapeError(f"whitening expects dim {t.input_dim}, got {X.shape[0]}")
    out = t.projection @ (X - t.mean[:, None])
    return out[:, 0] if vec else out


def _mean_path(path):
    p = Path(path)
    return p.with_name(p.stem + "_mean" + p.suffix)


def save_whitening(t: WhiteningTransform, path) -> None:
    """Projection at ``path``, mean (N x 1) beside it, JSON sidecar."""
    save_matrix(t.projection, path)
    save_matrix(t.mean[:, None], _mean_path(path))
    meta = {"epsilon": t.epsilon, "keep_d": t.keep_d,
            "eigenvalues": [float(v) for v in t.eigenvalues]}
    Path(path).with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_whitening(path) -> WhiteningTransform:
    proj = load_matrix(path)
    mean = load_matrix(_mean_path(path))[:, 0]
    side = Path(path).with_suffix(".json")
    try:
        meta = json.loads(side.read_text())
    except FileNotFoundError as exc:
        raise DataError(f"missing whitening metadata {side}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{side}: {exc}") from exc
    if meta.get("keep_d") != proj.shape[0] or mean.shape[0] != proj.shape[1]:
        raise FormatError(f"{side}: shapes do not match the stored matrices")
    return WhiteningTransform(mean, proj, np.asarray(meta["eigenvalues"], dtype=np.float64),
                              float(meta["epsilon"]))


def noise_std(sigma: float) -> float:
    """Standard deviation used for a noise level ``sigma`` (read as a variance)."""
    if not sigma >= 0:
        raise ArgumentError(f"sigma must be >= 0, got {sigma!r}")
    return float(np.sqrt(sigma))


def add_gaussian_noise(xs, sigma: float, seed: int) -> np.ndarray:
    """``xs`` plus i.i.d. N(0, sigma) noise; ``sigma`` is a variance.

    Values are not clipped.  Deterministic given ``seed``.
    """
    std = noise_std(sigma)
    X = np.array(xs, dtype=np.float64)
    if std == 0:
        return X
    rng = np.random.default_rng(seed)
    return X + std * rng.standard_normal(X.shape)
