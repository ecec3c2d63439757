"""Command-line experiment runner.

    eigengame synth  --d 3 --spectrum exp --lambda1 1 --ratio 0.5 --seed 1 --out s3/
    eigengame pca    --data s3/sigma.egm --truth s3/ --k 3 --lr 0.1 --steps 500 --out run/
    eigengame graph  --edges g.edges --k 2 --cluster 2 --labels truth.csv --out g/
    eigengame oracle --data s3/sigma.egm --out o/

Option values are resolved as: command-line flag, then ``--from-manifest``,
then ``--config`` (``key=value`` lines using the flag names without dashes),
then ``--profile``, then built-in defaults. Every command writes
``manifest.json`` next to its outputs.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import warnings
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .data_io import (Dataset, Spectrum, load_edges, load_labels, load_matrix, save_labels, save_matrix,
                      synth_covariance)
from .errors import ConfigError, EigenGameError
from .graph import TRACKED, laplacian, run_graph
from .linalg import ORACLE_MAX_DIM, SymEig, jacobi_eigh
from .metrics import Labeling, kmeans, v_measure
from .solver import PROFILES, Schedule, SolverConfig, run

log = logging.getLogger("eigengame")

GRAPH_ORACLE_MAX_NODES = 1024


class UsageError(Exception):
    pass


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="output directory")
    p.add_argument("--config", help="key=value defaults file")
    p.add_argument("--from-manifest", help="re-run with the configuration stored in a manifest")


def _add_solver(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--batch-size", type=int, default=None, help="rows (or edges) per step; default full batch")
    p.add_argument("--shards", type=int, default=1)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--schedule", choices=["constant", "inv-t"], default="constant")
    p.add_argument("--momentum", type=float, default=0.0)
    p.add_argument("--nesterov", action="store_true")
    p.add_argument("--riemannian-projection", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eval-every", type=int, default=100)
    p.add_argument("--profile", choices=sorted(PROFILES), default="default")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eigengame", description="Unbiased EigenGame experiments.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthetic covariance with a known spectrum")
    _add_common(p)
    p.add_argument("--d", type=int, default=50)
    p.add_argument("--spectrum", choices=["exp", "linear"], default="exp")
    p.add_argument("--lambda1", type=float, default=1.0)
    p.add_argument("--ratio", type=float, default=0.9)
    p.add_argument("--lambda-d", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("pca", help="top-k eigenvectors of a covariance or a row dataset")
    _add_common(p)
    p.add_argument("--data")
    p.add_argument("--truth", help="synth/oracle output directory or an eigenvector matrix file")
    p.add_argument("--rule", choices=["mu", "alpha", "gha", "mu-grad"], default="mu")
    p.add_argument("--as-rows", action="store_true", help="treat a square data file as samples")
    _add_solver(p)

    p = sub.add_parser("graph", help="bottom-k Laplacian eigenvectors from an edge file")
    _add_common(p)
    p.add_argument("--edges")
    p.add_argument("--lambda-star", choices=["fixed2v", "tracked"], default="fixed2v")
    p.add_argument("--cluster", type=int, default=None, help="run k-means with this many clusters")
    p.add_argument("--labels", help="ground-truth labels, one integer per line")
    _add_solver(p)
    p.set_defaults(lr=0.05)

    p = sub.add_parser("oracle", help="dense Jacobi eigendecomposition")
    _add_common(p)
    p.add_argument("--data")
    p.add_argument("--laplacian", help="edge file; decompose its dense Laplacian")
    p.add_argument("--gram", action="store_true", help="decompose XᵀX/n even for square input")
    return parser


def _read_config_file(path) -> dict:
    values = {}
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            values[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return values


def _layered_defaults(sub: argparse.ArgumentParser, argv: list[str], pre: argparse.Namespace) -> None:
    actions = {a.dest: a for a in sub._actions}
    layers = []
    profile = getattr(pre, "profile", None)
    layered = {}
    if pre.config:
        layered.update(_read_config_file(pre.config))
    if pre.from_manifest:
        with open(pre.from_manifest) as f:
            layered.update(json.load(f)["config"])
    profile = layered.get("profile", profile)
    if profile and profile != "default":
        preset = dict(PROFILES[profile])
        sched = preset.pop("schedule", None)
        if sched is not None:
            preset["lr"] = sched.lr
        layers.append(preset)
    layers.append(layered)
    for layer in layers:
        for key, value in layer.items():
            if key in ("config", "from_manifest", "command", "verbose"):
                continue
            action = actions.get(key)
            if action is None:
                raise UsageError(f"unknown option {key!r}")
            if isinstance(action, argparse._StoreTrueAction):
                value = _bool(value)
            elif value is not None and action.type is not None:
                try:
                    value = action.type(value)
                except ValueError:
                    raise UsageError(f"bad value for {key}: {value!r}") from None
            if action.choices is not None and value is not None and value not in action.choices:
                raise UsageError(f"bad value for {key}: {value!r}")
            sub.set_defaults(**{key: value})


def parse_args(argv: list[str]):
    parser = build_parser()
    pre = parser.parse_args(argv)
    sub = parser._subparsers._group_actions[0].choices[pre.command]
    _layered_defaults(sub, argv, pre)
    return parser, parser.parse_args(argv)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _write_manifest(out: Path, args, inputs: list, artifacts: list, started: str) -> None:
    config = {k: v for k, v in vars(args).items() if k not in ("config", "from_manifest", "verbose")}
    manifest = {
        "version": __version__,
        "command": args.command,
        "config": config,
        "seed": config.get("seed"),
        "inputs": {str(p): _sha256(p) for p in inputs if p},
        "started": started,
        "finished": _now(),
        "artifacts": [str(out / a) for a in artifacts],
    }
    with open(out / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _require(args, *names):
    for name in names:
        if getattr(args, name) is None:
            raise UsageError(f"--{name.replace('_', '-')} is required")


def _solver_config(args, rule="mu") -> SolverConfig:
    if args.steps < 1:
        raise UsageError("--steps must be >= 1")
    schedule = Schedule("inverse_t" if args.schedule == "inv-t" else "constant", args.lr)
    return SolverConfig(k=args.k, rule=rule, steps=args.steps, batch_size=args.batch_size, shards=args.shards,
                        schedule=schedule, momentum=args.momentum, nesterov=args.nesterov,
                        riemannian_projection=args.riemannian_projection, seed=args.seed,
                        eval_every=args.eval_every)


def cmd_synth(args) -> int:
    _require(args, "out")
    kind = "exponential" if args.spectrum == "exp" else "linear"
    try:
        spectrum = Spectrum(kind, d=args.d, lambda1=args.lambda1, ratio=args.ratio, lambda_d=args.lambda_d)
        spectrum.values()
    except ConfigError as e:
        raise UsageError(str(e)) from None
    started = _now()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sigma, _ = synth_covariance(spectrum, args.seed)
    eig = jacobi_eigh(sigma)
    save_matrix(out / "sigma.egm", sigma)
    save_matrix(out / "eigenvalues.egm", eig.eigenvalues[:, None])
    save_matrix(out / "eigenvectors.egm", eig.eigenvectors)
    _write_manifest(out, args, [], ["sigma.egm", "eigenvalues.egm", "eigenvectors.egm"], started)
    return 0


def _load_truth(path, d) -> SymEig:
    path = Path(path)
    if path.is_dir():
        vectors = load_matrix(path / "eigenvectors.egm")
        values_file = path / "eigenvalues.egm"
        values = load_matrix(values_file)[:, 0] if values_file.exists() else np.full(vectors.shape[1], np.nan)
    else:
        vectors = load_matrix(path)
        values = np.full(vectors.shape[1], np.nan)
    if vectors.shape[0] != d:
        raise UsageError(f"truth has dimension {vectors.shape[0]}, data has {d}")
    return SymEig(values, vectors)


def _is_covariance(M) -> bool:
    return M.shape[0] == M.shape[1] and np.linalg.norm(M - M.T) <= 1e-8 * np.linalg.norm(M)


def cmd_pca(args) -> int:
    _require(args, "out", "data", "k")
    M = load_matrix(args.data)
    d = M.shape[1]
    if not 1 <= args.k <= d:
        raise UsageError(f"--k must lie in [1, {d}]")
    try:
        config = _solver_config(args, rule=args.rule)
    except ConfigError as e:
        raise UsageError(str(e)) from None
    if _is_covariance(M) and not args.as_rows:
        if args.batch_size is not None or args.shards != 1:
            raise UsageError("a covariance input is always full batch; use --as-rows for sample data")
        source = M
    else:
        source = Dataset(rows=M)
    truth = _load_truth(args.truth, d) if args.truth else None
    if truth is None:
        warnings.warn("no --truth given; streak and subspace distance are written as NaN", RuntimeWarning)

    started = _now()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    state, trace = run(config, source, truth)
    save_matrix(out / "vectors.egm", state.vectors)
    trace.to_csv(out / "trace.csv")
    inputs = [args.data]
    if args.truth is not None:
        inputs.append(Path(args.truth) / "eigenvectors.egm" if Path(args.truth).is_dir() else args.truth)
    _write_manifest(out, args, inputs, ["vectors.egm", "trace.csv"], started)
    return 0


def cmd_graph(args) -> int:
    _require(args, "out", "edges", "k")
    edges = load_edges(args.edges)
    if not 1 <= args.k < edges.num_nodes:
        raise UsageError(f"--k must lie in [1, {edges.num_nodes - 1}]")
    if args.labels and not args.cluster:
        raise UsageError("--labels needs --cluster")
    try:
        config = _solver_config(args)
    except ConfigError as e:
        raise UsageError(str(e)) from None
    truth = None
    if edges.num_nodes <= GRAPH_ORACLE_MAX_NODES:
        truth = jacobi_eigh(laplacian(edges))

    started = _now()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mode = TRACKED if args.lambda_star == "tracked" else "fixed_2v"
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        vectors, trace = run_graph(config, edges, truth, lambda_star=mode)
    save_matrix(out / "vectors.egm", vectors)
    trace.to_csv(out / "trace.csv")
    artifacts = ["vectors.egm", "trace.csv"]
    if args.cluster:
        result = kmeans(vectors, args.cluster, seed=args.seed)
        save_labels(out / "labels.csv", result.labeling.assignments)
        artifacts.append("labels.csv")
        if args.labels:
            truth_labels = load_labels(args.labels)
            if truth_labels.shape[0] != edges.num_nodes:
                raise UsageError(f"labels file has {truth_labels.shape[0]} entries, graph has {edges.num_nodes}")
            print(f"v_measure={v_measure(Labeling.from_labels(truth_labels), result.labeling)!r}")
    _write_manifest(out, args, [args.edges, args.labels], artifacts, started)
    return 0


def cmd_oracle(args) -> int:
    _require(args, "out")
    if (args.data is None) == (args.laplacian is None):
        raise UsageError("give exactly one of --data or --laplacian")
    if args.laplacian:
        S = laplacian(load_edges(args.laplacian))
    else:
        X = load_matrix(args.data)
        if args.gram or X.shape[0] != X.shape[1]:
            S = X.T @ X / X.shape[0]
        elif _is_covariance(X):
            S = X
        else:
            raise UsageError("square input is not symmetric; pass --gram to decompose XᵀX/n")
    if S.shape[0] > ORACLE_MAX_DIM:
        raise UsageError(f"oracle is limited to d <= {ORACLE_MAX_DIM}")
    started = _now()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    eig = jacobi_eigh(S)
    save_matrix(out / "eigenvalues.csv", eig.eigenvalues[:, None])
    save_matrix(out / "eigenvectors.egm", eig.eigenvectors)
    _write_manifest(out, args, [args.data or args.laplacian], ["eigenvalues.csv", "eigenvectors.egm"], started)
    return 0


COMMANDS = {"synth": cmd_synth, "pca": cmd_pca, "graph": cmd_graph, "oracle": cmd_oracle}


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        parser, args = parse_args(argv)
    except UsageError as e:
        print(f"eigengame: error: {e}", file=sys.stderr)
        return 2
    except SystemExit as e:
        return int(e.code or 0)
    warnings.formatwarning = lambda message, category, *rest, **kw: f"warning: {message}\n"
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"eigengame {args.command}: error: {e}", file=sys.stderr)
        return 2
    except (EigenGameError, OSError) as e:
        print(f"eigengame {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
