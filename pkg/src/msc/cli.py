"""Command-line interface.

    msc train-dict      train a unimodal or joint dictionary
    msc encode          code a data matrix against a stored dictionary
    msc denoise         joint-dictionary denoising experiment
    msc synth-classify  feature-scheme comparison on synthetic paired data

Every command takes ``--config FILE`` (JSON; flags override its values) and
``--seed``.  Output goes to ``--out DIR``: matrices in the MSC1 format plus
``report.json`` and ``report.txt``.  Exit codes: 0 success, 2 configuration,
3 data, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .dictionary import load_dictionary, save_dictionary
from .errors import ConfigError, DataError, MSCError
from .experiments import SCHEMES, DenoiseConfig, SynthConfig, run_denoise, run_synth_classify
from .learning import Method, TrainConfig, train_dictionary
from .multimodal import cross_encode_dense, joint_encode, load_joint, save_joint, train_joint
from .solvers import L0, L1, SolverConfig, encode_dense, lasso_objective
from .tensor import read_any, save_matrix

log = logging.getLogger("msc")

DEFAULT_LAMBDA = 0.1


def _parse_modality(text):
    name, sep, path = text.partition("=")
    if not sep or not name or not path:
        raise ConfigError(f"--modality expects NAME=PATH, got {text!r}")
    return name, path


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad number list {text!r}") from exc


def _load_config(path):
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise DataError(f"no such config file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return cfg


def _resolve(args, keys):
    """Config-file values overridden by any flag the user actually gave."""
    cfg = _load_config(args.config)
    for key in keys:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _echo(cfg):
    # the output directory is where results go, not part of the computation;
    # leaving it out keeps reports byte-identical across output locations
    return {k: v for k, v in cfg.items() if k != "out"}


def _write_report(out: Path, report: dict, text: str):
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    (out / "report.txt").write_text(text)


def _solver_from(cfg) -> SolverConfig:
    if cfg.get("sparsity") is not None:
        if cfg.get("lambda") is not None:
            raise ConfigError("give either --sparsity or --lambda, not both")
        return SolverConfig(L0(int(cfg["sparsity"])))
    return SolverConfig(L1(float(cfg.get("lambda", DEFAULT_LAMBDA))))


def _modalities(cfg):
    mods = cfg.get("modality") or []
    pairs = [_parse_modality(m) if isinstance(m, str) else tuple(m) for m in mods]
    names = [n for n, _ in pairs]
    if len(set(names)) != len(names):
        raise ConfigError("modality names must be unique")
    return pairs


# ------------------------------------------------------------------ commands

def cmd_train_dict(args) -> int:
    cfg = _resolve(args, ["seed", "modality", "k", "lambda", "sparsity", "epochs",
                          "batch_size", "method", "out"])
    pairs = _modalities(cfg)
    if not 1 <= len(pairs) <= 2:
        raise ConfigError("train-dict needs one or two --modality NAME=PATH")
    if "out" not in cfg:
        raise ConfigError("--out is required")
    solver = _solver_from(cfg)
    default_method = "ksvd" if isinstance(solver.regularizer, L0) else "online"
    cfg.setdefault("method", default_method)
    cfg.setdefault("seed", 0)
    cfg.setdefault("k", 64)
    cfg.setdefault("epochs", 20)
    cfg.setdefault("batch_size", 256)
    tcfg = TrainConfig(int(cfg["k"]), solver, epochs=int(cfg["epochs"]),
                       batch_size=int(cfg["batch_size"]), seed=int(cfg["seed"]),
                       method=Method(cfg["method"]))
    data = {name: read_any(path) for name, path in pairs}
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    if len(pairs) == 1:
        (name, X), = data.items()
        d, trace = train_dictionary(X, tcfg)
        target = out / "dictionary.msc"
        save_dictionary(d, target)
        kind = "unimodal"
    else:
        if not isinstance(solver.regularizer, L1):
            raise ConfigError("joint dictionaries need the l1 solver (--lambda)")
        model, trace = train_joint(data, tcfg)
        target = out / "joint.msc"
        save_joint(model, target)
        kind = "joint"
    trace = [float(v) for v in trace]
    for i, v in enumerate(trace):
        print(f"epoch {i + 1}: loss {v:.10g}")
    resolved = {**_echo(cfg), "train": tcfg.to_dict()}
    report = {"command": "train-dict", "kind": kind, "config": resolved,
              "dictionary": target.name, "loss_trace": trace}
    lines = [f"train-dict ({kind}) -> {target.name}", f"config: {json.dumps(resolved, sort_keys=True)}"]
    lines += [f"epoch {i + 1:3d}  loss {v:.10g}" for i, v in enumerate(trace)]
    _write_report(out, report, "\n".join(lines) + "\n")
    return 0


def cmd_encode(args) -> int:
    cfg = _resolve(args, ["seed", "modality", "lambda", "sparsity", "dictionary",
                          "cross_modal", "out"])
    if "dictionary" not in cfg or "out" not in cfg:
        raise ConfigError("--dictionary and --out are required")
    pairs = _modalities(cfg)
    if not pairs:
        raise ConfigError("encode needs --modality NAME=PATH")
    d, meta = load_dictionary(cfg["dictionary"])
    data = {name: read_any(path) for name, path in pairs}
    cross = cfg.get("cross_modal")
    joint = bool(d.modality_blocks)
    if (cfg.get("lambda") is None and cfg.get("sparsity") is None
            and not joint and "solver" in meta):
        solver = SolverConfig.from_dict(meta["solver"])
    else:
        solver = _solver_from(cfg)
    if cross is not None:
        if not joint:
            raise ConfigError("--cross-modal needs a joint dictionary; this one is unimodal")
        model = load_joint(cfg["dictionary"])
        if cross not in model.names:
            raise ConfigError(f"dictionary has no modality {cross!r}; has {list(model.names)}")
        if cross not in data:
            raise ConfigError(f"--cross-modal {cross} needs --modality {cross}=PATH")
        lam = None if cfg.get("lambda") is None else float(cfg["lambda"])
        Y = cross_encode_dense(data[cross], model, cross, lam=lam)
        mode = f"cross-modal {cross}"
    elif joint:
        model = load_joint(cfg["dictionary"])
        missing = [n for n in model.names if n not in data]
        if missing:
            raise ConfigError(f"joint coding needs every modality; missing {missing}")
        js = None if cfg.get("lambda") is None else SolverConfig(L1(float(cfg["lambda"])))
        Y = joint_encode([data[n] for n in model.names], model, js)
        mode = "joint"
    else:
        if len(data) != 1:
            raise ConfigError("a unimodal dictionary codes exactly one --modality")
        (X,) = data.values()
        Y = encode_dense(X, d, solver)
        mode = "unimodal"
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    save_matrix(Y, out / "codes.msc")
    nnz = int(np.count_nonzero(Y))
    report = {"command": "encode", "mode": mode, "config": {**_echo(cfg), "solver": solver.to_dict()},
              "codes": "codes.msc", "shape": list(Y.shape), "nonzeros": nnz}
    if mode == "unimodal" and isinstance(solver.regularizer, L1):
        (X,) = data.values()
        report["objective"] = float(sum(lasso_objective(X[:, j], d.atoms, Y[:, j],
                                                        solver.regularizer.lam)
                                        for j in range(X.shape[1])))
    text = (f"encode ({mode}) -> codes.msc  {Y.shape[0]}x{Y.shape[1]}  nonzeros {nnz}\n"
            f"config: {json.dumps(report['config'], sort_keys=True)}\n")
    _write_report(out, report, text)
    print(text, end="")
    return 0


def _dataclass_from(cls, cfg, rename):
    fields = {f.name for f in dataclasses.fields(cls)}
    kw = {}
    for key, val in cfg.items():
        key = rename.get(key, key)
        if key in fields:
            kw[key] = val
        elif key not in ("out", "config"):
            raise ConfigError(f"unknown setting {key!r} for this command")
    try:
        return cls(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _denoise_table(report):
    lines = ["sigma     ref_noisy  noisy      denoised   gain",
             "--------  ---------  ---------  ---------  ------"]

    def f(v):
        return f"{v:9.3f}" if isinstance(v, float) else f"{v:>9}"

    for s, row in report["results"].items():
        gain = row.get("mean_gain_db")
        lines.append(f"{s:<8}  {f(row['reference_noisy_psnr'])}  {f(row['mean_noisy_psnr'])}  "
                     f"{f(row['mean_denoised_psnr'])}  "
                     + (f"{gain:+6.2f}" if isinstance(gain, float) else "     -"))
    return lines


def cmd_denoise(args) -> int:
    cfg = _resolve(args, ["seed", "k", "sigma", "modality", "out"])
    if "out" not in cfg:
        raise ConfigError("--out is required")
    images = None
    for name, path in _modalities(cfg):
        if name != "clean":
            raise ConfigError("denoise takes only --modality clean=PATH (one image per column)")
        X = read_any(path)
        side = int(round(np.sqrt(X.shape[0])))
        if side * side != X.shape[0]:
            raise DataError("clean images must be square, stored one per column")
        images = X.T.reshape(-1, side, side)
        cfg.setdefault("image_size", side)
    cfg.pop("modality", None)
    dcfg = _dataclass_from(DenoiseConfig, cfg, {"k": "num_atoms", "sigma": "sigmas"})
    report = run_denoise(dcfg, images)
    report["command"] = "denoise"
    lines = ["denoise: mean PSNR (dB) over repetitions",
             f"config: {json.dumps(report['config'], sort_keys=True)}", ""]
    lines += _denoise_table(report)
    _write_report(Path(cfg["out"]), report, "\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


def cmd_synth_classify(args) -> int:
    cfg = _resolve(args, ["seed", "k", "lambda", "schemes", "modality", "labels", "out"])
    if "out" not in cfg:
        raise ConfigError("--out is required")
    if isinstance(cfg.get("schemes"), str):
        cfg["schemes"] = [s.strip() for s in cfg["schemes"].split(",") if s.strip()]
    data = None
    pairs = dict(_modalities(cfg))
    if pairs:
        if set(pairs) != {"a", "b"} or "labels" not in cfg:
            raise ConfigError("external data needs --modality a=PATH --modality b=PATH --labels PATH")
        xa, xb = read_any(pairs["a"]), read_any(pairs["b"])
        labels = read_any(cfg["labels"]).ravel()
        if not (xa.shape[1] == xb.shape[1] == labels.size):
            raise DataError("a, b and labels must have one column/entry per example")
        if not np.all(labels == np.round(labels)):
            raise DataError("labels must be integers")
        n = labels.size
        data = {"xa": xa, "xb": xb, "labels": labels.astype(np.int64), "ua": xa, "ub": xb,
                "lengths": np.ones(n, dtype=np.int64),
                "unlabeled_lengths": np.ones(n, dtype=np.int64)}
        cfg.update(frames=1, dim_a=xa.shape[0], dim_b=xb.shape[0], n_examples=n)
    cfg.pop("modality", None)
    cfg.pop("labels", None)
    scfg = _dataclass_from(SynthConfig, cfg, {"k": "num_atoms", "lambda": "lam"})
    report = run_synth_classify(scfg, data)
    report["command"] = "synth-classify"
    lines = ["synth-classify: 5-fold CV on l2-normalized features",
             f"config: {json.dumps(report['config'], sort_keys=True)}", "",
             "scheme        dim  C        accuracy  mean-binary-acc",
             "-----------  ----  -------  --------  ---------------"]
    for name, row in report["schemes"].items():
        lines.append(f"{name:<11}  {row['feature_dim']:4d}  {row['C']:<7g}  "
                     f"{row['accuracy']:8.4f}  {row['mean_binary_accuracy']:15.4f}")
    _write_report(Path(cfg["out"]), report, "\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


# -------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="msc", description="Multimodal sparse coding tools")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file; flags override its values")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--modality", action="append", metavar="NAME=PATH")

    t = sub.add_parser("train-dict", help="train a unimodal or joint dictionary")
    common(t)
    t.add_argument("--k", type=int, help="number of atoms")
    t.add_argument("--lambda", type=float, dest="lambda")
    t.add_argument("--sparsity", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int, dest="batch_size")
    t.add_argument("--method", choices=[m.value for m in Method])
    t.set_defaults(func=cmd_train_dict)

    e = sub.add_parser("encode", help="code data against a stored dictionary")
    common(e)
    e.add_argument("--dictionary", help="dictionary file (MSC1 with JSON sidecar)")
    e.add_argument("--lambda", type=float, dest="lambda")
    e.add_argument("--sparsity", type=int)
    e.add_argument("--cross-modal", dest="cross_modal", metavar="NAME")
    e.set_defaults(func=cmd_encode)

    d = sub.add_parser("denoise", help="joint-dictionary denoising experiment")
    common(d)
    d.add_argument("--k", type=int)
    d.add_argument("--sigma", type=_float_list, help="comma-separated noise variances")
    d.set_defaults(func=cmd_denoise)

    s = sub.add_parser("synth-classify", help="feature schemes on synthetic paired data")
    common(s)
    s.add_argument("--k", type=int)
    s.add_argument("--lambda", type=float, dest="lambda")
    s.add_argument("--schemes", help=f"comma-separated subset of {','.join(SCHEMES)}")
    s.add_argument("--labels", help="label vector file for external --modality data")
    s.set_defaults(func=cmd_synth_classify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad usage, which already matches the contract
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    start = time.perf_counter()
    try:
        code = args.func(args)
    except MSCError as exc:
        print(f"msc: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"msc: error: {exc}", file=sys.stderr)
        return DataError.exit_code
    # wall time goes to stderr so reports stay byte-identical across runs
    print(f"wall time {time.perf_counter() - start:.2f} s", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
