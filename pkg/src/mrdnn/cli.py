"""Command-line entry point: ``mrdnn {gen,graph,train,extract,diagnose,compare}``.

Every command resolves its configuration as flags > ``--config`` JSON file >
built-in defaults, runs, and writes a run manifest next to its main output.
A manifest holds the command, the fully resolved configuration, the derived
sub-seeds and the SHA-256 of every input and output file.  Passing a manifest
back through ``--config`` reruns the command with identical settings.

Relative paths are resolved against ``$MRDNN_WORKDIR`` when it is set.
Failures print one JSON line on stderr and exit nonzero.
"""

import argparse
import json
import os
import sys
import traceback
import zlib

import numpy as np
from threadpoolctl import threadpool_limits

from mrdnn import dataio, diagnostics, features, graph, network, objective, trainer
from mrdnn._fileio import sha256_file

MANIFEST_SUFFIX = ".manifest.json"


class ConfigError(ValueError):
    pass


def _int_or_none(text):
    return None if text in (None, "none") else int(text)


def _rho(text):
    if text == "median":
        return text
    value = float(text)
    if not value > 0:
        raise ConfigError(f"rho must be > 0 or 'median', got {text!r}")
    return value


def _bool(text):
    if isinstance(text, bool):
        return text
    if text.lower() in ("1", "true", "yes"):
        return True
    if text.lower() in ("0", "false", "no"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _layers(text):
    if isinstance(text, list):
        return [int(v) for v in text]
    return [int(v) for v in text.split(",") if v.strip()]


# (name, parser, default, help); a default of None means "unset"
COMMON = [
    ("seed", int, 0, "master seed; fanned out to named sub-seeds"),
    ("threads", int, 1, "worker threads (BLAS and graph search); 1 is bit-reproducible"),
    ("manifest", str, None, "run manifest path (default: <main output>" + MANIFEST_SUFFIX + ")"),
]

OPTIONS = {
    "gen": [
        ("kind", str, "noisy-manifold-strip", "synthetic family: " + ", ".join(dataio.KINDS)),
        ("n_per_class", int, 200, "vectors per class"),
        ("noise", float, 0.1, "isotropic noise standard deviation"),
        ("n_classes", int, 2, "number of classes"),
        ("dim", _int_or_none, None, "vector dimension (none: family default)"),
        ("splice", int, 1, "odd context window to splice (1: no splicing)"),
        ("format", str, "binary", "output format: binary or csv"),
        ("out", str, None, "output dataset path (required)"),
    ],
    "graph": [
        ("data", str, None, "input dataset (required)"),
        ("k", int, graph.DEFAULT_K, "same-class neighbours per vector"),
        ("rho", _rho, graph.DEFAULT_RHO, "heat parameter, or 'median' for the median squared pair distance"),
        ("out", str, None, "output graph path (required)"),
    ],
    "train": [
        ("data", str, None, "training dataset (required)"),
        ("graph", str, None, "intrinsic graph; required while the manifold term is active"),
        ("hidden", _layers, [1024, 1024, 1024, 1024, 40], "comma-separated hidden layer widths"),
        ("bottleneck", _int_or_none, -1, "bottleneck activation index (-1: last hidden layer, none: no bottleneck)"),
        ("epochs", int, 40, "training epochs"),
        ("batch_size", int, 128, "mini-batch size"),
        ("lr0", float, 1e-3, "initial learning rate"),
        ("lr_decay", float, 0.9, "per-epoch learning-rate factor"),
        ("gamma1", float, 1e-4, "L2 weight-decay coefficient"),
        ("gamma2", float, 1e-3, "manifold penalty coefficient"),
        ("k", _int_or_none, None, "manifold normaliser k (none: the graph's k, or 10 without a graph)"),
        ("manifold_tap", str, "output", "activation the manifold term acts on: output or bottleneck"),
        ("manifold_epochs", _int_or_none, None, "apply the manifold gradient only in the first N epochs (none: all)"),
        ("checkpoint_every", int, 0, "also checkpoint every N epochs (0: final only)"),
        ("timing", _bool, False, "record wall-clock seconds in the metrics (breaks bit-exact reruns)"),
        ("out", str, None, "output checkpoint path (required)"),
        ("metrics", str, None, "metrics path (default: <out>.metrics.jsonl)"),
    ],
    "extract": [
        ("checkpoint", str, None, "trained network with a bottleneck (required)"),
        ("data", str, None, "dataset to transform (required)"),
        ("components", int, 39, "PCA components kept"),
        ("pca", str, None, "existing PCA transform to apply instead of fitting one"),
        ("pca_out", str, None, "where to save a fitted transform (default: <out>.pca)"),
        ("format", str, "binary", "feature file format: binary or csv"),
        ("out", str, None, "output feature dataset (required)"),
    ],
    "diagnose": [
        ("checkpoint", str, None, "trained network (required)"),
        ("data", str, None, "evaluation dataset (required)"),
        ("layer", int, 1, "activation index for the contraction profile (1: first hidden layer)"),
        ("bins", int, 10, "radius bins"),
        ("csv", str, None, "optional CSV export of the profile"),
        ("graph", str, None, "graph over the dataset; enables the scatter and audit records"),
        ("audit", _bool, False, "run the finite-difference gradient audit (tiny instances only)"),
        ("epsilon", float, 1e-5, "audit central-difference step"),
        ("gamma1", float, 1e-4, "audit objective: L2 coefficient"),
        ("gamma2", float, 1e-3, "audit objective: manifold coefficient"),
        ("k", _int_or_none, None, "audit objective: manifold normaliser (none: the graph's k)"),
        ("manifold_tap", str, "output", "audit objective and scatter tap: output or bottleneck"),
        ("out", str, None, "output report path, line-delimited JSON (required)"),
    ],
    "compare": [
        ("checkpoint_a", str, None, "first network (required)"),
        ("metrics_a", str, None, "first run's metrics (required)"),
        ("checkpoint_b", str, None, "second network (required)"),
        ("metrics_b", str, None, "second run's metrics (required)"),
        ("data", str, None, "evaluation dataset (required)"),
        ("names", str, "dnn,mrdnn", "comma-separated run names"),
        ("layer", int, 1, "contraction activation index"),
        ("bins", int, 10, "radius bins"),
        ("out", str, None, "output comparison table, line-delimited JSON (required)"),
    ],
}

INPUT_KEYS = ("data", "graph", "checkpoint", "pca", "checkpoint_a", "checkpoint_b", "metrics_a", "metrics_b")
SEED_NAMES = {"gen": ("data",), "train": ("init", "shuffle")}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser():
    parser = _Parser(prog="mrdnn", description="Manifold-regularized network training pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, opts in OPTIONS.items():
        p = sub.add_parser(cmd, help=f"{cmd} command")
        p.add_argument("--config", default=None, help="JSON config or run manifest (default: none)")
        for name, _, default, text in opts + COMMON:
            shown = ",".join(map(str, default)) if isinstance(default, list) else default
            p.add_argument("--" + name.replace("_", "-"), dest=name, default=None,
                           help=f"{text} (default: {'none' if shown is None else shown})")
    return parser


def sub_seeds(seed, names):
    """Independent 32-bit seeds derived from ``seed`` and a stable hash of each name."""
    out = {}
    for name in names:
        ss = np.random.SeedSequence([int(seed), zlib.crc32(name.encode())])
        out[name] = int(ss.generate_state(1)[0])
    return out


def _resolve_path(path):
    if path is None or os.path.isabs(path):
        return path
    root = os.environ.get("MRDNN_WORKDIR")
    return os.path.join(root, path) if root else path


def resolve_config(cmd, args):
    table = {name: (conv, default) for name, conv, default, _ in OPTIONS[cmd] + COMMON}
    cfg = {name: default for name, (_, default) in table.items()}
    if args.config:
        with open(_resolve_path(args.config)) as fh:
            loaded = json.load(fh)
        if "config" in loaded and "command" in loaded:
            if loaded["command"] != cmd:
                raise ConfigError(f"manifest is for command {loaded['command']!r}, not {cmd!r}")
            loaded = loaded["config"]
        unknown = sorted(set(loaded) - set(table))
        if unknown:
            raise ConfigError(f"unknown config keys for {cmd}: {', '.join(unknown)}")
        for name, value in loaded.items():
            cfg[name] = None if value is None else table[name][0](value) if isinstance(value, str) else value
    for name, (conv, _) in table.items():
        value = getattr(args, name)
        if value is not None:
            try:
                cfg[name] = conv(value)
            except ValueError as exc:
                raise ConfigError(f"--{name.replace('_', '-')}: {exc}") from None
    for name in ("out",) + tuple(n for n, _, _, t in OPTIONS[cmd] if "(required)" in t):
        if cfg.get(name) is None:
            raise ConfigError(f"{cmd}: missing required setting {name!r}")
    if cfg["threads"] < 1:
        raise ConfigError("threads must be >= 1")
    return cfg


def _need_file(path, what):
    if not os.path.isfile(path):
        raise FileNotFoundError(f"{what} file not found: {path}")
    return path


def _inputs(cfg):
    return {k: _need_file(_resolve_path(cfg[k]), k) for k in INPUT_KEYS if cfg.get(k) is not None}


def run_gen(cfg, paths, seeds):
    ds = dataio.generate_synthetic(cfg["kind"], cfg["n_per_class"], cfg["noise"], seeds["data"],
                                   n_classes=cfg["n_classes"], dim=cfg["dim"])
    if cfg["splice"] != 1:
        ds = dataio.splice(ds, cfg["splice"])
    out = _resolve_path(cfg["out"])
    dataio.save_dataset(ds, out, cfg["format"])
    return [out], {}


def run_graph(cfg, paths, seeds):
    ds = dataio.load_dataset(paths["data"])
    rho = graph.median_sq_distance(ds.vectors) if cfg["rho"] == "median" else cfg["rho"]
    g = graph.build_intrinsic_graph(ds, cfg["k"], rho, threads=cfg["threads"])
    out = _resolve_path(cfg["out"])
    graph.save_graph(g, out)
    return [out], {"rho": rho}


def _objective(cfg, g):
    k = cfg["k"] if cfg["k"] is not None else (g.k if g is not None else graph.DEFAULT_K)
    return objective.ObjectiveConfig(cfg["gamma1"], cfg["gamma2"], k, cfg["manifold_tap"])


def _epoch_path(path, epoch):
    stem, ext = os.path.splitext(path)
    return f"{stem}.epoch{epoch}{ext}"


def run_train(cfg, paths, seeds):
    ds = dataio.load_dataset(paths["data"])
    manifold_wanted = cfg["gamma2"] > 0 and cfg["manifold_epochs"] != 0
    if manifold_wanted and "graph" not in paths:
        raise ConfigError("manifold training (gamma2 > 0) needs --graph")
    g = graph.load_graph(paths["graph"]) if "graph" in paths else None
    bottleneck = cfg["bottleneck"]
    if bottleneck == -1:
        bottleneck = len(cfg["hidden"]) if cfg["hidden"] else None
    sizes = [ds.dim] + cfg["hidden"] + [ds.class_count]
    net = network.init_network(sizes, bottleneck, seed=seeds["init"])
    tcfg = trainer.TrainConfig(cfg["epochs"], cfg["batch_size"], cfg["lr0"], cfg["lr_decay"],
                               _objective(cfg, g), cfg["manifold_epochs"], seeds["shuffle"])
    out = _resolve_path(cfg["out"])
    metrics = _resolve_path(cfg["metrics"]) or out + ".metrics.jsonl"
    written = []

    def on_epoch(rec, current):
        every = cfg["checkpoint_every"]
        if every > 0 and (rec.epoch + 1) % every == 0 and rec.epoch + 1 < tcfg.epochs:
            path = _epoch_path(out, rec.epoch + 1)
            network.save_network(current, path, {"epoch": rec.epoch + 1})
            written.append(path)

    report = trainer.train(net, ds, g, tcfg, on_epoch)
    network.save_network(report.network, out, {"epoch": tcfg.epochs})
    trainer.write_metrics(report.epochs, metrics, timing=cfg["timing"])
    return written + [out, metrics], {"bottleneck_index": bottleneck, "k": tcfg.objective.k}


def run_extract(cfg, paths, seeds):
    net = network.load_network(paths["checkpoint"])
    ds = dataio.load_dataset(paths["data"])
    B = features.extract_bottleneck(net, ds.vectors)
    outputs = []
    if "pca" in paths:
        t = features.load_pca(paths["pca"])
    else:
        t = features.fit_pca(B, cfg["components"])
        pca_out = _resolve_path(cfg["pca_out"]) or _resolve_path(cfg["out"]) + ".pca"
        features.save_pca(t, pca_out)
        outputs.append(pca_out)
    out = _resolve_path(cfg["out"])
    dataio.save_dataset(dataio.Dataset(features.apply_pca(t, B), ds.labels, ds.class_count), out, cfg["format"])
    return outputs + [out], {}


def run_diagnose(cfg, paths, seeds):
    net = network.load_network(paths["checkpoint"])
    ds = dataio.load_dataset(paths["data"])
    g = graph.load_graph(paths["graph"]) if "graph" in paths else None
    prof = diagnostics.contraction_profile(net, ds.vectors, cfg["layer"], cfg["bins"])
    lines = [json.dumps({"record": "profile", "layer": cfg["layer"], **prof.as_dict()}, sort_keys=True)]
    outputs = []
    if g is not None:
        ocfg = _objective(cfg, g)
        Z = network.forward(net, ds.vectors).acts[objective.tap_index(net, ocfg)]
        lines.append(json.dumps({"record": "scatter", "tap": ocfg.manifold_tap,
                                 "graph_scatter": graph.graph_scatter(g, Z)}, sort_keys=True))
    if cfg["audit"]:
        ocfg = _objective(cfg, g)
        rep = diagnostics.gradient_audit(net, ds, g, ocfg, cfg["epsilon"])
        lines.append(json.dumps({"record": "audit", "max_rel_error": rep.max_rel_error,
                                 "worst_param": list(rep.worst_param), "analytic": rep.analytic,
                                 "numeric": rep.numeric, "n_params": rep.n_params}, sort_keys=True))
    out = _resolve_path(cfg["out"])
    with open(out, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    if cfg["csv"]:
        csv_path = _resolve_path(cfg["csv"])
        prof.to_csv(csv_path)
        outputs.append(csv_path)
    return [out] + outputs, {}


def run_compare(cfg, paths, seeds):
    names = tuple(n.strip() for n in cfg["names"].split(","))
    if len(names) != 2 or names[0] == names[1]:
        raise ConfigError(f"names must be two distinct labels, got {cfg['names']!r}")
    reports = []
    for side in ("a", "b"):
        net = network.load_network(paths["checkpoint_" + side])
        reports.append(trainer.TrainReport(trainer.read_metrics(paths["metrics_" + side]), net))
    ds = dataio.load_dataset(paths["data"])
    table = diagnostics.compare_runs(reports[0], reports[1], ds, cfg["layer"], cfg["bins"], names)
    out = _resolve_path(cfg["out"])
    with open(out, "w") as fh:
        fh.write("\n".join(table.to_lines()) + "\n")
    return [out], {}


COMMANDS = {"gen": run_gen, "graph": run_graph, "train": run_train, "extract": run_extract,
            "diagnose": run_diagnose, "compare": run_compare}


def write_manifest(path, cmd, cfg, inputs, outputs, seeds, derived):
    manifest = {
        "command": cmd,
        "config": cfg,
        "seeds": seeds,
        "derived": derived,
        "inputs": {k: {"path": p, "sha256": sha256_file(p)} for k, p in inputs.items()},
        "outputs": [{"path": p, "sha256": sha256_file(p)} for p in outputs],
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def _error_module(exc):
    module = "cli"
    for frame, _ in traceback.walk_tb(exc.__traceback__):
        name = frame.f_globals.get("__name__", "")
        if name.startswith("mrdnn."):
            module = name.split(".", 1)[1].lstrip("_")
    return module


def main(argv=None):
    cmd = None
    try:
        args = build_parser().parse_args(argv)
        cmd = args.command
        cfg = resolve_config(cmd, args)
        seeds = sub_seeds(cfg["seed"], SEED_NAMES.get(cmd, ()))
        inputs = _inputs(cfg)
        with threadpool_limits(limits=cfg["threads"]):
            outputs, derived = COMMANDS[cmd](cfg, inputs, seeds)
        manifest_path = _resolve_path(cfg["manifest"]) or _resolve_path(cfg["out"]) + MANIFEST_SUFFIX
        write_manifest(manifest_path, cmd, cfg, inputs, outputs, seeds, derived)
    except SystemExit:
        raise
    except Exception as exc:
        err = {"error": str(exc), "type": type(exc).__name__,
               "module": "cli" if isinstance(exc, ConfigError) else _error_module(exc), "command": cmd}
        print(json.dumps(err), file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
