"""Desk-scale experiment drivers: joint-dictionary denoising and synthetic
two-modality classification over the feature schemes.

Both drivers are deterministic given their config (which carries the seed)
and return plain JSON-serializable reports that echo the full config.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .deep import LayerConfig, PoolingConfig, PoolKind, StackConfig, forward_batch, train_stack
from .errors import ConfigError
from .evaluation import (EXACT, accuracy, kfold_indices, l2_normalize, mean_binary_accuracy,
                         psnr, train_svm_ova)
from .learning import Method, TrainConfig, train_dictionary
from .multimodal import coupling, cross_encode_dense, feature_union, joint_encode, train_joint
from .preprocessing import PatchConfig, add_gaussian_noise, extract_patches
from .solvers import encode_dense, lasso

SCHEMES = ("uni-a", "uni-b", "uni-union", "joint", "cross-a", "cross-b", "multi-union",
           "deep-3a", "deep-3b")
SHALLOW = SCHEMES[:7]


def _child_seed(*parts) -> int:
    # stable integer seed from a tuple of ints
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _to_dict(cfg):
    out = dataclasses.asdict(cfg)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in out.items()}


# --------------------------------------------------------------- denoising

def synthetic_textures(n: int, size: int, seed: int) -> np.ndarray:
    """``n`` grayscale ``size x size`` textures in [0, 1], shape ``n x size x size``.

    Each image is a few random oriented gratings over a constant level, plus
    one straight edge; values are clipped to [0, 1].
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    out = np.empty((n, size, size))
    for i in range(n):
        img = np.full((size, size), rng.uniform(0.3, 0.7))
        for _ in range(rng.integers(1, 4)):
            theta = rng.uniform(0, np.pi)
            f = rng.uniform(0.03, 0.2)
            phase = rng.uniform(0, 2 * np.pi)
            img += rng.uniform(0.05, 0.2) * np.cos(
                2 * np.pi * f * (np.cos(theta) * xx + np.sin(theta) * yy) + phase)
        theta = rng.uniform(0, 2 * np.pi)
        off = rng.uniform(-size / 3, size / 3)
        side = (np.cos(theta) * (xx - size / 2) + np.sin(theta) * (yy - size / 2)) > off
        img += np.where(side, rng.uniform(-0.2, 0.2), 0.0)
        out[i] = np.clip(img, 0.0, 1.0)
    return out


@dataclass(frozen=True)
class DenoiseConfig:
    sigmas: tuple = (0.001, 0.005, 0.01, 0.1)
    n_train: int = 2000
    n_test: int = 500
    image_size: int = 8
    patch: int = 4
    num_atoms: int = 300
    train_patches: int = 3000
    val_patches: int = 500
    epochs: int = 5
    batch_size: int = 256
    # cross-modal lambdas tried on validation, in units of the noise std
    lambda_scales: tuple = (1.0, 2.0, 4.0, 8.0, 16.0)
    repetitions: int = 5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sigmas", tuple(float(s) for s in self.sigmas))
        object.__setattr__(self, "lambda_scales", tuple(float(s) for s in self.lambda_scales))
        if any(s < 0 for s in self.sigmas):
            raise ConfigError("sigma values must be >= 0")
        if self.image_size < self.patch:
            raise ConfigError("image smaller than the patch")
        if self.n_train < 1 or self.n_test < 1 or self.repetitions < 1:
            raise ConfigError("n_train, n_test and repetitions must be positive")
        if not self.lambda_scales or min(self.lambda_scales) <= 0:
            raise ConfigError("lambda_scales must be positive")

    def to_dict(self):
        return _to_dict(self)


def _patch_matrix(images, pcfg):
    return np.hstack([extract_patches(im, pcfg) for im in images])


def _denoise_patches(noisy, model, lam):
    mu = noisy.mean(axis=0)
    Y = cross_encode_dense(noisy - mu, model, "noisy", lam=lam)
    return model.sub_dictionary("clean") @ Y + mu


def denoise_once(clean_train, clean_test, sigma, cfg: DenoiseConfig, rep: int) -> dict:
    """One repetition at one noise level; returns PSNRs and the chosen lambda.

    Patches are centered (per-patch mean removed) before coding; the noisy
    patch mean is added back to the clean estimate.
    """
    pcfg = PatchConfig(cfg.patch, cfg.patch)
    noise_seed = _child_seed(cfg.seed, rep, int(round(sigma * 1e9)))
    noisy_train = add_gaussian_noise(clean_train, sigma, noise_seed)
    noisy_test = add_gaussian_noise(clean_test, sigma, noise_seed + 1)
    noisy_psnr = psnr(clean_test, noisy_test)
    if sigma == 0:
        # nothing to remove: the input is already the clean image
        return {"noisy_psnr": noisy_psnr, "denoised_psnr": EXACT, "lambda_cross": None}
    Pc = _patch_matrix(clean_train, pcfg)
    Pn = _patch_matrix(noisy_train, pcfg)
    rng = np.random.default_rng(_child_seed(cfg.seed, rep, 7))
    order = rng.permutation(Pc.shape[1])
    tr = order[:cfg.train_patches]
    va = order[cfg.train_patches:cfg.train_patches + cfg.val_patches]
    std = math.sqrt(sigma)
    N = pcfg.size
    lam_mid = std * float(np.median(cfg.lambda_scales))
    tcfg = TrainConfig(cfg.num_atoms, lasso(coupling([N, N]) * lam_mid), epochs=cfg.epochs,
                       batch_size=cfg.batch_size, seed=_child_seed(cfg.seed, rep, 11))
    xc, xn = Pc[:, tr], Pn[:, tr]
    model, _ = train_joint({"clean": xc - xc.mean(axis=0), "noisy": xn - xn.mean(axis=0)}, tcfg)
    best = None
    for s in cfg.lambda_scales:
        lam = s * std
        err = float(np.mean((_denoise_patches(Pn[:, va], model, lam) - Pc[:, va]) ** 2))
        if best is None or err < best[0]:
            best = (err, lam)
    lam = best[1]
    Tn = _patch_matrix(noisy_test, pcfg)
    est = _denoise_patches(Tn, model, lam)
    Tc = _patch_matrix(clean_test, pcfg)
    return {"noisy_psnr": noisy_psnr, "denoised_psnr": psnr(Tc, est), "lambda_cross": lam}


def run_denoise(cfg: DenoiseConfig, images=None) -> dict:
    """Average noisy and denoised PSNR over ``cfg.repetitions`` seeded runs.

    ``images`` (``n x H x W``, values in [0, 1]) replaces the synthetic
    textures; it is split into the first ``n_train`` and the next ``n_test``.
    """
    per_sigma = {f"{s:g}": [] for s in cfg.sigmas}
    for rep in range(cfg.repetitions):
        if images is None:
            imgs = synthetic_textures(cfg.n_train + cfg.n_test, cfg.image_size,
                                      _child_seed(cfg.seed, rep))
        else:
            imgs = np.asarray(images, dtype=np.float64)
            if imgs.shape[0] < cfg.n_train + cfg.n_test:
                raise ConfigError(f"need {cfg.n_train + cfg.n_test} images, got {imgs.shape[0]}")
        clean_train, clean_test = imgs[:cfg.n_train], imgs[cfg.n_train:cfg.n_train + cfg.n_test]
        for s in cfg.sigmas:
            per_sigma[f"{s:g}"].append(denoise_once(clean_train, clean_test, s, cfg, rep))
    results = {}
    for s in cfg.sigmas:
        runs = per_sigma[f"{s:g}"]
        row = {"runs": runs,
               "reference_noisy_psnr": EXACT if s == 0 else 10 * math.log10(1 / s)}
        for key in ("noisy_psnr", "denoised_psnr"):
            vals = [r[key] for r in runs]
            row[f"mean_{key}"] = EXACT if EXACT in vals else float(np.mean(vals))
        if s > 0:
            row["mean_gain_db"] = row["mean_denoised_psnr"] - row["mean_noisy_psnr"]
        results[f"{s:g}"] = row
    return {"experiment": "denoise", "seed": cfg.seed, "config": cfg.to_dict(),
            "results": results}


# ---------------------------------------------------- synthetic classification

@dataclass(frozen=True)
class SynthConfig:
    """Two-modality data driven by shared sparse latent factors.

    Every example is a sequence of ``frames`` vectors per modality.  Frame
    factors ``z`` are nonnegative and ``sparsity``-sparse; each class owns a pool of
    ``pool_size`` factors that a frame draws from with probability
    ``class_prob``.  ``xa = A z + noise`` and ``xb = B g(z) + noise`` with
    ``g`` the identity or the elementwise square.  With ``coherence`` > 0
    the factors are paired at random (independently for ``A`` and ``B``) and
    the two columns of a pair get cosine about ``coherence``, so a single
    modality cannot tell the two factors of a pair apart.  Each modality also gets
    ``private`` label-free factors of its own (``private_sparsity`` active
    per frame, amplitude ``private_scale``) that the other modality never
    sees.  ``mode`` selects
    correlated (shared ``z``), identical (``xb`` is ``xa``) or independent
    (``xb`` uses its own label-free factors) modalities.
    """

    n_examples: int = 400
    n_unlabeled: int = 400
    n_classes: int = 4
    frames: int = 8
    latent: int = 24
    pool_size: int = 6
    sparsity: int = 2
    class_prob: float = 0.5
    dim_a: int = 16
    dim_b: int = 16
    noise_a: float = 0.3
    noise_b: float = 0.3
    coherence: float = 0.95
    private: int = 0
    private_sparsity: int = 2
    private_scale: float = 1.5
    nonlinearity: str = "identity"
    mode: str = "correlated"
    num_atoms: int = 48
    lam: float = 0.5
    epochs: int = 10
    batch_size: int = 128
    deep_atoms: tuple = (48, 48, 64)
    pool_factor: int = 2
    svm_c_grid: tuple = (0.1, 1.0, 10.0)
    svm_epochs: int = 30
    folds: int = 5
    schemes: tuple = SHALLOW
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "schemes", tuple(self.schemes))
        object.__setattr__(self, "svm_c_grid", tuple(float(c) for c in self.svm_c_grid))
        object.__setattr__(self, "deep_atoms", tuple(int(k) for k in self.deep_atoms))
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad or not self.schemes:
            raise ConfigError(f"unknown schemes {bad}; choose from {list(SCHEMES)}")
        if len(set(self.schemes)) != len(self.schemes):
            raise ConfigError("schemes must not repeat")
        if self.nonlinearity not in ("identity", "square"):
            raise ConfigError("nonlinearity must be 'identity' or 'square'")
        if self.mode not in ("correlated", "identical", "independent"):
            raise ConfigError("mode must be correlated, identical or independent")
        if self.n_classes * self.pool_size > self.latent:
            raise ConfigError("class pools do not fit in the latent dimension")
        if not 1 <= self.sparsity <= self.pool_size:
            raise ConfigError("sparsity must be in [1, pool_size]")
        if not 0 <= self.coherence < 1:
            raise ConfigError("coherence must be in [0, 1)")
        if self.private and not 1 <= self.private_sparsity <= self.private:
            raise ConfigError("private_sparsity must be in [1, private]")
        if len(self.deep_atoms) != 3:
            raise ConfigError("deep_atoms needs three sizes (layer I, layer II, joint)")
        if self.mode == "identical" and self.dim_a != self.dim_b:
            raise ConfigError("identical modalities need dim_a == dim_b")
        if self.n_examples < self.folds:
            raise ConfigError("fewer examples than folds")
        if self.lam <= 0:
            raise ConfigError("lam must be positive")

    def to_dict(self):
        return _to_dict(self)


def _mixing(rng, N, L, coherence=0.0):
    M = rng.standard_normal((N, L))
    M /= np.linalg.norm(M, axis=0)
    if coherence > 0:
        # a random pairing of the factors; the second of each pair is made
        # nearly collinear with the first
        order = rng.permutation(L)
        for i, j in zip(order[0::2], order[1::2]):
            M[:, j] = coherence * M[:, i] + math.sqrt(1 - coherence ** 2) * M[:, j]
        M /= np.linalg.norm(M, axis=0)
    return M


def _factors(rng, labels, cfg):
    # one column per frame; frames of an example are consecutive
    L, S, T = cfg.latent, cfg.sparsity, cfg.frames
    Z = np.zeros((L, labels.size * T))
    for i, c in enumerate(labels):
        pool = np.arange(c * cfg.pool_size, (c + 1) * cfg.pool_size)
        for t in range(T):
            if c >= 0 and rng.random() < cfg.class_prob:
                supp = rng.choice(pool, S, replace=False)
            else:
                supp = rng.choice(L, S, replace=False)
            Z[supp, i * T + t] = rng.uniform(0.5, 1.5, S)
    return Z


def make_synthetic(cfg: SynthConfig, seed: int) -> dict:
    """Labeled and unlabeled two-modality sequences; see :class:`SynthConfig`."""
    rng = np.random.default_rng(seed)
    A = _mixing(rng, cfg.dim_a, cfg.latent, cfg.coherence)
    B = _mixing(rng, cfg.dim_b, cfg.latent, cfg.coherence)
    g = np.square if cfg.nonlinearity == "square" else (lambda v: v)

    Pa = _mixing(rng, cfg.dim_a, cfg.private) if cfg.private else None
    Pb = _mixing(rng, cfg.dim_b, cfg.private) if cfg.private else None

    def private(P, n):
        U = np.zeros((cfg.private, n))
        for j in range(n):
            supp = rng.choice(cfg.private, cfg.private_sparsity, replace=False)
            U[supp, j] = cfg.private_scale * rng.uniform(0.5, 1.5, supp.size)
        return P @ U

    def draw(labels):
        Z = _factors(rng, labels, cfg)
        n = Z.shape[1]
        xa = A @ Z + cfg.noise_a * rng.standard_normal((cfg.dim_a, n))
        if cfg.private:
            xa += private(Pa, n)
        if cfg.mode == "identical":
            return xa, xa.copy()
        if cfg.mode == "independent":
            Z = _factors(rng, np.full(labels.size, -1), cfg)
        xb = B @ g(Z) + cfg.noise_b * rng.standard_normal((cfg.dim_b, n))
        if cfg.private:
            xb += private(Pb, n)
        return xa, xb

    labels = np.arange(cfg.n_examples) % cfg.n_classes
    rng.shuffle(labels)
    xa, xb = draw(labels)
    # the unlabeled pool trains the dictionaries; its labels are never used
    ua, ub = draw(rng.integers(0, cfg.n_classes, cfg.n_unlabeled))
    return {"xa": xa, "xb": xb, "labels": labels, "ua": ua, "ub": ub,
            "A": A, "B": B, "lengths": np.full(cfg.n_examples, cfg.frames),
            "unlabeled_lengths": np.full(cfg.n_unlabeled, cfg.frames)}


def _global_max(Y, T):
    # sign-preserving max over each example's frames
    K, n = Y.shape[0], Y.shape[1] // T
    R = Y.reshape(K, n, T)
    pick = np.argmax(np.abs(R), axis=2)
    return np.take_along_axis(R, pick[:, :, None], axis=2)[:, :, 0]


def _train_cfg(K, lam, cfg, salt):
    return TrainConfig(K, lasso(lam), epochs=cfg.epochs, batch_size=cfg.batch_size,
                       seed=_child_seed(cfg.seed, salt), method=Method.ONLINE)


def scheme_features(data: dict, cfg: SynthConfig) -> dict:
    """Feature matrix (``F x n``) of every requested scheme, before normalization."""
    T = cfg.frames
    want = set(cfg.schemes)
    feats = {}
    lam = cfg.lam
    uni_needed = want & {"uni-a", "uni-b", "uni-union"}
    if uni_needed:
        da, _ = train_dictionary(data["ua"], _train_cfg(cfg.num_atoms, lam, cfg, 1))
        db, _ = train_dictionary(data["ub"], _train_cfg(cfg.num_atoms, lam, cfg, 2))
        fa = _global_max(encode_dense(data["xa"], da, lasso(lam)), T)
        fb = _global_max(encode_dense(data["xb"], db, lasso(lam)), T)
        feats.update({"uni-a": fa, "uni-b": fb, "uni-union": feature_union([fa, fb])})
    if want & {"joint", "cross-a", "cross-b", "multi-union"}:
        c = coupling([cfg.dim_a, cfg.dim_b])
        model, _ = train_joint({"a": data["ua"], "b": data["ub"]},
                               _train_cfg(cfg.num_atoms, c * lam, cfg, 3))
        feats["joint"] = _global_max(joint_encode([data["xa"], data["xb"]], model), T)
        ca = _global_max(cross_encode_dense(data["xa"], model, "a"), T)
        cb = _global_max(cross_encode_dense(data["xb"], model, "b"), T)
        feats.update({"cross-a": ca, "cross-b": cb, "multi-union": feature_union([ca, cb])})
    for name, joint_layers in (("deep-3a", 1), ("deep-3b", 2)):
        if name not in want:
            continue
        k1, k2, kj = cfg.deep_atoms
        pool = PoolingConfig(PoolKind.MAX, cfg.pool_factor)
        per = {m: [LayerConfig(_train_cfg(k1, lam, cfg, 10 + i), pool),
                   LayerConfig(_train_cfg(k2, lam, cfg, 20 + i), pool)]
               for i, m in enumerate(("a", "b"))}
        joint = [LayerConfig(_train_cfg(kj, lam, cfg, 30 + j), pool) for j in range(joint_layers)]
        stack = StackConfig(per, joint)
        model = train_stack({"a": (data["ua"], data["unlabeled_lengths"]),
                             "b": (data["ub"], data["unlabeled_lengths"])}, stack)
        feats[name] = forward_batch({"a": (data["xa"], data["lengths"]),
                                     "b": (data["xb"], data["lengths"])}, model)
    return {s: feats[s] for s in cfg.schemes}


def cv_accuracy(features, labels, cfg: SynthConfig, seed: int) -> dict:
    """5-fold CV accuracies of one-vs-all SVMs; C is the grid value with the
    best multiclass CV accuracy (ties to the smaller C)."""
    X = l2_normalize(features)
    best = None
    for C in sorted(cfg.svm_c_grid):
        acc, bacc = [], []
        for tr, te in kfold_indices(labels.size, cfg.folds, seed):
            m = train_svm_ova(X[:, tr], labels[tr], C=C, epochs=cfg.svm_epochs, seed=seed)
            acc.append(accuracy(m, X[:, te], labels[te]))
            bacc.append(mean_binary_accuracy(m, X[:, te], labels[te]))
        row = {"C": C, "accuracy": float(np.mean(acc)),
               "mean_binary_accuracy": float(np.mean(bacc))}
        if best is None or row["accuracy"] > best["accuracy"]:
            best = row
    return best


def run_synth_classify(cfg: SynthConfig, data: dict | None = None) -> dict:
    """One seeded run: every requested scheme, 5-fold CV, one report."""
    if data is None:
        data = make_synthetic(cfg, _child_seed(cfg.seed, 0))
    feats = scheme_features(data, cfg)
    labels = np.asarray(data["labels"])
    schemes = {}
    for name, F in feats.items():
        row = cv_accuracy(F, labels, cfg, _child_seed(cfg.seed, 99))
        row["feature_dim"] = int(F.shape[0])
        schemes[name] = row
    return {"experiment": "synth-classify", "seed": cfg.seed, "config": cfg.to_dict(),
            "feature_normalization": "l2", "schemes": schemes}


def paired_margin(a, b) -> tuple[float, float]:
    """Mean of ``a - b`` over paired runs and its standard error."""
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    se = float(d.std(ddof=1) / math.sqrt(d.size)) if d.size > 1 else 0.0
    return float(d.mean()), se


@dataclass
class SeedSweep:
    """Accuracy of each scheme over several seeds."""

    runs: list = field(default_factory=list)

    def accuracies(self, scheme) -> list:
        return [r["schemes"][scheme]["accuracy"] for r in self.runs]


def sweep(cfg: SynthConfig, seeds) -> SeedSweep:
    return SeedSweep([run_synth_classify(dataclasses.replace(cfg, seed=int(s))) for s in seeds])
