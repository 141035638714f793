"""Command-line front end.

Configuration comes from an optional JSON file plus flag overrides; flags
win.  Every run writes a ``summary.txt`` echoing the fully resolved
configuration so experiments are self-describing.  Output files are
written to a temporary name and renamed, so a failed run never leaves a
partial file.  Exit codes: 0 success, 1 runtime failure, 2 usage or
validation error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path


from . import baselines
from .active_learning import (ALConfig, baseline_aggregator, simulate,
                              vb_aggregator)
from .annotators import AnnotatorPriorConfig, ModelKind
from .corpus import (ParseError, load_conll_labels, load_crowd_annotations,
                     load_gold_labels, save_conll_labels,
                     save_crowd_annotations)
from .evaluation import (ErrorReport, cross_entropy, error_report, relaxed_f1,
                         strict_f1, token_accuracy, cluster_annotators)
from .inference import VbConfig, run_vb
from .scheme import expand_scheme
from .serialize import (load_model_dump, load_posteriors, save_model_dump,
                        save_posteriors)
from .synth import synth_generate


class ConfigError(ValueError):
    """Invalid configuration or inputs; maps to exit code 2."""


METHODS = ("mv", "ds", "ibcc", "bsc-acc", "bsc-spam", "bsc-cv", "bsc-cm",
           "bsc-seq")

DEFAULTS: dict[str, object] = {
    "crowd_file": "",
    "gold_file": "",
    "pred_file": "",
    "posteriors_file": "",
    "model_file": "",
    "scheme": [],
    "method": "bsc-seq",
    "mode": "strict",
    "notext": False,
    "no_transitions": False,
    "gamma0": 1.0,
    "alpha0": 1.0,
    "epsilon0": 1.0,
    "kappa0": 0.1,
    "disallowed_mass": 1e-6,
    "smoothing": 0.1,
    "tol": 1e-4,
    "max_iters": 200,
    "seed": 0,
    "output_dir": "out",
    "threads": 1,
    "synth_kind": "seq",
    "num_docs": 50,
    "doc_len": 10,
    "num_annotators": 5,
    "vocab_size": 25,
    "diag_mass": 0.8,
    "initial_set_size": 100,
    "batch_size": 10,
    "max_no_labels": 0,
    "selector": "least_confidence",
    "repeats": 1,
    "k": 5,
}


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_save(path: Path, saver) -> None:
    """Run a file-writing callable against a temp path, then rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    os.close(fd)
    try:
        saver(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {args.config}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}")
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = sorted(set(loaded) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg.update(loaded)
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if isinstance(cfg["scheme"], str):
        cfg["scheme"] = [t for t in cfg["scheme"].split(",") if t]
    return cfg


def _require(cfg: dict, key: str) -> object:
    if not cfg[key]:
        raise ConfigError(f"missing required setting --{key.replace('_', '-')}")
    return cfg[key]


def _scheme(cfg: dict):
    types = cfg["scheme"]
    if not types:
        raise ConfigError("missing required setting --scheme")
    try:
        return expand_scheme(types)
    except ValueError as exc:
        raise ConfigError(str(exc))


def _vb_config(cfg: dict, kind: ModelKind) -> VbConfig:
    prior = AnnotatorPriorConfig(alpha0=float(cfg["alpha0"]),
                                 epsilon0=float(cfg["epsilon0"]),
                                 disallowed_mass=float(cfg["disallowed_mass"]))
    return VbConfig(kind=kind, gamma0=float(cfg["gamma0"]),
                    kappa0=float(cfg["kappa0"]), prior=prior,
                    use_text=not cfg["notext"],
                    use_transitions=not cfg["no_transitions"],
                    convergence_tol=float(cfg["tol"]),
                    max_iters=int(cfg["max_iters"]))


def _summary(out_dir: Path, command: str, cfg: dict, extra: dict) -> None:
    lines = [f"command = {command}"]
    for key in sorted(cfg):
        value = cfg[key]
        if key == "scheme":
            value = ",".join(value)
        lines.append(f"{key} = {value}")
    for key in sorted(extra):
        lines.append(f"{key} = {extra[key]}")
    _atomic_write(out_dir / "summary.txt", "\n".join(lines) + "\n")


def _write_scores(path: Path, report, mode: str) -> None:
    lines = [f"mode = {mode}",
             f"precision = {report.precision:.6f}",
             f"recall = {report.recall:.6f}",
             f"f1 = {report.f1:.6f}"]
    if report.cee is not None:
        lines.append(f"cee = {report.cee:.6f}")
    _atomic_write(path, "\n".join(lines) + "\n")


def _write_errors(path: Path, report: ErrorReport) -> None:
    keys = ("exact_match", "wrong_type", "partial_match", "missed_span",
            "false_positive", "late_start", "early_start", "late_finish",
            "early_finish", "fused_spans", "splits", "invalid")
    lines = [f"{key} = {getattr(report, key)}" for key in keys]
    lines.append(f"length_error = {report.length_error:.6f}")
    _atomic_write(path, "\n".join(lines) + "\n")


def cmd_aggregate(cfg: dict) -> int:
    scheme = _scheme(cfg)
    crowd = _require(cfg, "crowd_file")
    method = cfg["method"]
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; choose from {METHODS}")
    corpus, annotations = load_crowd_annotations(crowd, scheme)
    out_dir = Path(cfg["output_dir"])
    extra: dict[str, object] = {}

    if method.startswith("bsc-"):
        kind = ModelKind(method[4:])
        vb_cfg = _vb_config(cfg, kind)
        result = run_vb(corpus, annotations, scheme, vb_cfg)
        rows = result.sequence.r
        decoded = result.sequence.viterbi_paths
        extra["converged"] = result.converged
        extra["iterations"] = len(result.trace)
        extra["final_elbo"] = f"{result.trace[-1].elbo:.6f}"
        if not result.converged:
            extra["warning"] = "not converged within max_iters"
        _atomic_save(out_dir / "model.dump",
                     lambda p: save_model_dump(p, result, scheme, kind,
                                               vb_cfg.prior, vb_cfg.gamma0,
                                               vb_cfg.kappa0))
    elif method == "mv":
        table = baselines.majority_vote(corpus, annotations, scheme)
        rows, decoded = table.rows, table.decoded
    elif method == "ds":
        ds = baselines.dawid_skene_em(corpus, annotations, scheme,
                                      smoothing=float(cfg["smoothing"]),
                                      max_iters=int(cfg["max_iters"]),
                                      tol=float(cfg["tol"]))
        rows, decoded = ds.table.rows, ds.table.decoded
        extra["converged"] = ds.converged
    else:
        ibcc = baselines.ibcc_vb(corpus, annotations, scheme,
                                 alpha0=float(cfg["alpha0"]),
                                 epsilon0=float(cfg["epsilon0"]),
                                 class_prior0=float(cfg["gamma0"]),
                                 max_iters=int(cfg["max_iters"]),
                                 tol=float(cfg["tol"]))
        rows, decoded = ibcc.table.rows, ibcc.table.decoded
        extra["converged"] = ibcc.converged

    _atomic_save(out_dir / "posteriors.tsv",
                 lambda p: save_posteriors(p, corpus.doc_ids, rows))
    _atomic_save(out_dir / "decoded.conll",
                 lambda p: save_conll_labels(p, corpus, decoded, scheme))
    _summary(out_dir, "aggregate", cfg, extra)
    return 0


def cmd_evaluate(cfg: dict) -> int:
    scheme = _scheme(cfg)
    pred_path = _require(cfg, "pred_file")
    gold_path = _require(cfg, "gold_file")
    mode = cfg["mode"]
    if mode not in ("strict", "relaxed"):
        raise ConfigError(f"mode must be strict or relaxed, got {mode!r}")

    pred_tokens, pred_labels = load_conll_labels(pred_path, scheme)
    gold_tokens, gold_labels = load_conll_labels(gold_path, scheme)
    if len(pred_labels) != len(gold_labels):
        raise ConfigError(f"prediction has {len(pred_labels)} documents, "
                          f"gold has {len(gold_labels)}")
    for n, (p, g) in enumerate(zip(pred_labels, gold_labels)):
        if len(p) != len(g):
            raise ConfigError(f"alignment mismatch in document {n}")

    scorer = strict_f1 if mode == "strict" else relaxed_f1
    report = scorer(pred_labels, gold_labels, scheme)
    if cfg["posteriors_file"]:
        _, rows = load_posteriors(cfg["posteriors_file"])
        if len(rows) != len(gold_labels) or any(
                len(r) != len(g) for r, g in zip(rows, gold_labels)):
            raise ConfigError("posteriors file does not align with gold")
        report = type(report)(report.precision, report.recall, report.f1,
                              cee=cross_entropy(rows, gold_labels))

    out_dir = Path(cfg["output_dir"])
    _write_scores(out_dir / "scores.txt", report, mode)
    _write_errors(out_dir / "errors.txt",
                  error_report(pred_labels, gold_labels, scheme))
    extra = {"token_accuracy": f"{token_accuracy(pred_labels, gold_labels):.6f}"}
    _summary(out_dir, "evaluate", cfg, extra)
    return 0


def cmd_synth(cfg: dict) -> int:
    scheme = _scheme(cfg)
    try:
        kind = ModelKind(cfg["synth_kind"])
    except ValueError:
        raise ConfigError(f"unknown synth_kind {cfg['synth_kind']!r}")
    try:
        corpus, annotations, gold = synth_generate(
            scheme, int(cfg["num_docs"]), int(cfg["doc_len"]),
            int(cfg["num_annotators"]), kind, float(cfg["diag_mass"]),
            int(cfg["seed"]), vocab_size=int(cfg["vocab_size"]))
    except ValueError as exc:
        raise ConfigError(str(exc))
    out_dir = Path(cfg["output_dir"])
    _atomic_save(out_dir / "crowd.tsv",
                 lambda p: save_crowd_annotations(p, corpus, annotations, scheme))
    _atomic_save(out_dir / "gold.conll",
                 lambda p: save_conll_labels(
                     p, corpus, [gold[d] for d in corpus.doc_ids], scheme))
    _summary(out_dir, "synth", cfg, {"annotation_count": len(annotations)})
    return 0


def cmd_active_learn(cfg: dict) -> int:
    scheme = _scheme(cfg)
    crowd = _require(cfg, "crowd_file")
    gold_path = _require(cfg, "gold_file")
    method = cfg["method"]
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; choose from {METHODS}")
    corpus, pool = load_crowd_annotations(crowd, scheme)
    gold = load_gold_labels(gold_path, corpus, scheme)

    if method.startswith("bsc-"):
        aggregator = vb_aggregator(scheme, _vb_config(cfg, ModelKind(method[4:])))
    else:
        aggregator = baseline_aggregator(method, scheme)
    al_cfg = ALConfig(initial_set_size=int(cfg["initial_set_size"]),
                      batch_size=int(cfg["batch_size"]),
                      max_no_labels=int(cfg["max_no_labels"]),
                      selector=cfg["selector"],
                      repeats=int(cfg["repeats"]),
                      seed=int(cfg["seed"]))
    try:
        curve = simulate(corpus, pool, gold, scheme, al_cfg, aggregator,
                         n_workers=int(cfg["threads"]))
    except ValueError as exc:
        raise ConfigError(str(exc))

    lines = ["iteration,labels,f1_strict,f1_relaxed,cee,accuracy"]
    for i in range(len(curve)):
        lines.append(f"{i},{int(curve.n_labels[i])},{curve.strict[i]:.6f},"
                     f"{curve.relaxed[i]:.6f},{curve.cee[i]:.6f},"
                     f"{curve.accuracy[i]:.6f}")
    out_dir = Path(cfg["output_dir"])
    _atomic_write(out_dir / "curve.csv", "\n".join(lines) + "\n")
    _summary(out_dir, "active-learn", cfg, {"iterations": len(curve)})
    return 0


def cmd_cluster(cfg: dict) -> int:
    model_path = _require(cfg, "model_file")
    k = int(cfg["k"])
    dump = load_model_dump(model_path)
    means = [post.posterior_mean() for post in dump.annotators]
    try:
        assignments, centers = cluster_annotators(means, k, seed=int(cfg["seed"]))
    except ValueError as exc:
        raise ConfigError(str(exc))

    out_dir = Path(cfg["output_dir"])
    lines = ["annotator\tcluster"]
    lines += [f"{i}\t{c}" for i, c in enumerate(assignments)]
    _atomic_write(out_dir / "clusters.tsv", "\n".join(lines) + "\n")

    mean_lines = []
    for c, center in enumerate(centers):
        shape = " ".join(str(d) for d in center.shape)
        mean_lines.append(f"cluster {c} shape {shape}")
        mean_lines.append(" ".join(f"{v:.8f}" for v in center.ravel()))
    _atomic_write(out_dir / "cluster_means.txt", "\n".join(mean_lines) + "\n")
    _summary(out_dir, "cluster", cfg, {"clusters": k})
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crowdseq",
        description="Aggregate noisy crowd sequence labels and evaluate them.")
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "aggregate": cmd_aggregate,
        "evaluate": cmd_evaluate,
        "synth": cmd_synth,
        "active-learn": cmd_active_learn,
        "cluster": cmd_cluster,
    }
    for name, func in commands.items():
        cmd = sub.add_parser(name)
        cmd.set_defaults(func=func)
        cmd.add_argument("--config", default="", help="JSON config file")
        for key, default in DEFAULTS.items():
            flag = "--" + key.replace("_", "-")
            if isinstance(default, bool):
                cmd.add_argument(flag, dest=key, action="store_const",
                                 const=True, default=None)
            elif isinstance(default, int) and not isinstance(default, bool):
                cmd.add_argument(flag, dest=key, type=int, default=None)
            elif isinstance(default, float):
                cmd.add_argument(flag, dest=key, type=float, default=None)
            else:
                cmd.add_argument(flag, dest=key, type=str, default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve_config(args)
        return args.func(cfg)
    except (ConfigError, ParseError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
