"""Command-line workbench: generate benchmark data, learn structure pools,
evaluate them against the ground truth and run whole experiment grids.

Every subcommand takes ``--seed``; all randomness is drawn from labeled
streams of that seed (``generation``, ``chain``, ``evaluation``). Failures
print one JSON line ``{"error": ..., "message": ...}`` to stderr and exit
nonzero.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import __version__
from .errors import GenerationFailure, InvalidArgument, InvalidOperation, ParseError, SizeLimit
from .evaluate import (
    coclass_accuracy,
    expected_hamming,
    kl_estimate,
    predictive_log_probs,
    summarize,
    truth_state,
)
from .generate import BenchmarkName, BenchmarkSpec, build_benchmark, forward_sample
from .graph import Hyperparams
from .io import (
    dump_json,
    finite_or_none,
    read_dataset,
    read_network,
    read_results,
    results_to_json,
    write_dataset,
    write_heatmap,
    write_network,
)
from .mcmc import ChainConfig, run_search
from .priors import PriorKind
from .seeding import rng_for

PRIOR_CHOICES = [k.value for k in PriorKind]
SUMMARY_COLUMNS = [
    "benchmark", "M", "prior", "kl", "kl_stderr", "hamming", "coclass_acc", "best_score", "truth_score", "error",
]
DEFAULT_TEST_SIZE = 5000


class UsageError(Exception):
    pass


_ERROR_CODES = {
    ParseError: "parse-error",
    UsageError: "usage-error",
    SizeLimit: "size-limit",
    InvalidArgument: "invalid-input",
    InvalidOperation: "invalid-operation",
    GenerationFailure: "generation-failure",
    OSError: "io-error",
}


def error_record(exc: BaseException) -> dict:
    code = next((c for t, c in _ERROR_CODES.items() if isinstance(exc, t)), "internal-error")
    rec = {"error": code, "message": str(exc)}
    if isinstance(exc, ParseError):
        rec["path"] = str(exc.path) if exc.path is not None else None
        rec["line"] = exc.line
    elif isinstance(exc, OSError) and exc.filename is not None:
        rec["path"] = str(exc.filename)
    return rec


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(json.dumps({"error": "usage-error", "message": message}), file=sys.stderr)
        sys.exit(2)


# --- building blocks shared by the subcommands -------------------------------------


def parse_params(items: Sequence[str] | None) -> dict:
    """``key=value`` pairs; values are parsed as JSON when possible."""
    out = {}
    for item in items or []:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise UsageError(f"benchmark parameter {item!r} is not key=value")
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def generate_files(spec: BenchmarkSpec, sizes: Sequence[int], test_size: int, out: Path):
    """Write ``network.json``, ``train_<M>.csv`` per size and ``test.csv``."""
    if any(m < 0 for m in sizes) or test_size < 0:
        raise UsageError("sample sizes must be >= 0")
    out.mkdir(parents=True, exist_ok=True)
    bench = build_benchmark(spec)
    ordering = bench.ordering.o if bench.ordering is not None else None
    write_network(out / "network.json", bench.net, bench.classes.z, ordering)
    for m in sizes:
        write_dataset(out / f"train_{m}.csv", forward_sample(bench.net, m, rng_for(spec.seed, "generation", 1, m)))
    write_dataset(out / "test.csv", forward_sample(bench.net, test_size, rng_for(spec.seed, "generation", 2)))
    return bench


def learn_file(train_path: Path, cfg: ChainConfig, h: Hyperparams, out: Path, network_path: Path | None = None) -> Path:
    arities = read_network(network_path).arities if network_path is not None else None
    data = read_dataset(train_path, arities)
    pool = run_search(cfg, data, h)
    states = pool.entries()
    meta = {
        "train": str(train_path),
        "arities": [int(a) for a in data.arities],
        "names": list(data.names),
        "hyperparameters": {"alpha": h.alpha, "beta1": h.beta1, "beta2": h.beta2, "gamma": h.gamma},
        "search": {
            "iterations": cfg.iterations, "restarts": cfg.restarts, "top_k": cfg.top_k,
            "seed": cfg.seed, "anneal": cfg.anneal,
        },
        "best_score": states[0].log_score,
    }
    out.mkdir(parents=True, exist_ok=True)
    return dump_json(out / f"results_{cfg.prior_kind.value}.json", results_to_json(states, cfg.prior_kind, summarize(states), meta))


def _hyper_from(doc: dict) -> Hyperparams:
    prm = doc.get("hyperparameters") or {}
    return Hyperparams(**{k: float(v) for k, v in prm.items()}) if prm else Hyperparams()


def eval_files(
    results_path: Path, network_path: Path, test_path: Path, out: Path,
    train_path: Path | None = None, n_mc: int | None = None, seed: int = 0,
) -> dict:
    """Write ``report.json``, ``edges.ppm`` and ``coclass.ppm``; return the report."""
    doc, states = read_results(results_path)
    network = read_network(network_path)
    if network.net is None:
        raise InvalidArgument(f"{network_path}: ground-truth network has no CPTs")
    n = network.dag.n
    if not states:
        raise InvalidArgument(f"{results_path}: results contain no models")
    if states[0].g.n != n:
        raise InvalidArgument(f"results have {states[0].g.n} variables but the network has {n}")
    train_path = train_path if train_path is not None else doc.get("train")
    if train_path is None:
        raise UsageError("no training data: pass --train")
    train = read_dataset(train_path, network.arities)
    test = read_dataset(test_path, network.arities)
    h = _hyper_from(doc)
    kind = PriorKind.parse(doc.get("prior", "block"))
    summary = summarize(states)

    if n_mc is not None:
        kl = kl_estimate(states, network.net, train, n_mc, h.gamma, rng_for(seed, "evaluation"))
        kl_source = "fresh"
    else:
        kl = kl_estimate(states, network.net, train, test.n_rows, h.gamma, samples=test.rows)
        kl_source = "test"
    report = {
        "prior": kind.value,
        "kl": kl.to_json(),
        "kl_samples": kl_source,
        "expected_hamming": expected_hamming(summary.edge_marginals, network.dag),
        "coclass_accuracy": (
            coclass_accuracy(summary.coclass_marginals, network.classes) if network.classes is not None else None
        ),
        "test_log_likelihood": float(predictive_log_probs(states, train, test.rows, h.gamma).mean())
        if test.n_rows else None,
        "best_score": states[0].log_score,
        "truth_score": finite_or_none(
            truth_state(network.net, network.classes, network.ordering, kind, train, h).log_score
        ),
    }
    out.mkdir(parents=True, exist_ok=True)
    dump_json(out / "report.json", report)
    write_heatmap(out / "edges.ppm", summary.edge_marginals)
    write_heatmap(out / "coclass.ppm", summary.coclass_marginals)
    return report


@dataclass
class ExperimentConfig:
    benchmark: BenchmarkSpec
    sizes: list[int]
    priors: list[PriorKind]
    chain: ChainConfig = field(default_factory=ChainConfig)
    hyper: Hyperparams = field(default_factory=Hyperparams)
    test_size: int = DEFAULT_TEST_SIZE
    n_mc: int | None = None

    def __post_init__(self):
        if not self.sizes or any(m < 1 for m in self.sizes):
            raise UsageError("sample sizes must be a nonempty list of positive integers")
        if not self.priors:
            raise UsageError("at least one prior is required")
        self.priors = [PriorKind.parse(p) for p in self.priors]


def _cell_row(bench_name: str, m: int, kind: PriorKind) -> dict:
    return {"benchmark": bench_name, "M": m, "prior": kind.value, **{c: "" for c in SUMMARY_COLUMNS[3:]}}


def run_experiment(cfg: ExperimentConfig, out: Path) -> list[dict]:
    """Generate once, then learn and evaluate every (size, prior) cell.

    A failing cell is recorded in its row's ``error`` column and the run
    continues. ``summary.csv`` is written once at the end.
    """
    out.mkdir(parents=True, exist_ok=True)
    data_dir = out / "data"
    generate_files(cfg.benchmark, cfg.sizes, cfg.test_size, data_dir)
    rows = []
    for m in cfg.sizes:
        for kind in cfg.priors:
            row = _cell_row(cfg.benchmark.name, m, kind)
            cell = out / f"M{m}" / kind.value
            try:
                chain = ChainConfig(
                    prior_kind=kind, iterations=cfg.chain.iterations, restarts=cfg.chain.restarts,
                    top_k=cfg.chain.top_k, seed=cfg.chain.seed, anneal=cfg.chain.anneal,
                )
                results = learn_file(data_dir / f"train_{m}.csv", chain, cfg.hyper, cell, data_dir / "network.json")
                report = eval_files(
                    results, data_dir / "network.json", data_dir / "test.csv", cell, n_mc=cfg.n_mc, seed=cfg.chain.seed
                )
                row.update(
                    kl=report["kl"]["estimate"], kl_stderr=report["kl"]["stderr"], hamming=report["expected_hamming"],
                    coclass_acc=report["coclass_accuracy"], best_score=report["best_score"],
                    truth_score=report["truth_score"],
                )
            except Exception as exc:  # recorded per cell; the grid keeps going
                row["error"] = json.dumps(error_record(exc))
            rows.append(row)
    with (out / "summary.csv").open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if v is None else v) for k, v in row.items()})
    return rows


# --- argument parsing ---------------------------------------------------------------


def _add_search_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("model and search")
    g.add_argument("--alpha", type=float, default=0.5, help="CRP concentration (default 0.5)")
    g.add_argument("--beta1", type=float, default=1.0, help="Beta prior on class-pair edge probability, first shape (default 1.0)")
    g.add_argument("--beta2", type=float, default=1.0, help="Beta prior on class-pair edge probability, second shape (default 1.0)")
    g.add_argument("--gamma", type=float, default=0.5, help="Dirichlet pseudo-count per CPT cell (default 0.5)")
    g.add_argument("--iters", type=int, default=2000, help="sweeps per restart (default 2000)")
    g.add_argument("--restarts", type=int, default=10, help="independent chains (default 10)")
    g.add_argument("--top-k", type=int, default=100, help="size of the model pool (default 100)")
    g.add_argument("--anneal", type=float, default=None, metavar="T0",
                   help="anneal linearly from temperature T0 down to 1 (default off)")
    g.add_argument("--seed", type=int, default=0, help="master seed (default 0)")


def _hyper(args) -> Hyperparams:
    return Hyperparams(alpha=args.alpha, beta1=args.beta1, beta2=args.beta2, gamma=args.gamma)


def _chain(args, prior) -> ChainConfig:
    return ChainConfig(
        prior_kind=prior, iterations=args.iters, restarts=args.restarts, top_k=args.top_k, seed=args.seed,
        anneal=args.anneal,
    )


def _sizes(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _priors(text: str) -> list[str]:
    items = [x.strip() for x in text.split(",") if x.strip()]
    for item in items:
        try:
            PriorKind.parse(item)
        except ValueError:
            raise argparse.ArgumentTypeError(f"unknown prior {item!r}; choose from {PRIOR_CHOICES}")
    return items


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="blocknet", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen = sub.add_parser("generate", help="write a benchmark network and sampled datasets")
    gen.add_argument("--benchmark", required=True, choices=[b.value for b in BenchmarkName])
    gen.add_argument("--sizes", type=_sizes, required=True, help="training-set sizes, e.g. 25,100")
    gen.add_argument("--test-size", type=int, default=DEFAULT_TEST_SIZE, help=f"rows in test.csv (default {DEFAULT_TEST_SIZE})")
    gen.add_argument("--param", action="append", metavar="KEY=VALUE", help="benchmark size parameter (repeatable)")
    gen.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    gen.add_argument("--out", type=Path, required=True, help="output directory")

    learn = sub.add_parser("learn", help="sample structures and write the top-k model pool")
    learn.add_argument("data", type=Path, help="training CSV (header row of variable names)")
    learn.add_argument("--prior", required=True, choices=PRIOR_CHOICES)
    learn.add_argument("--network", type=Path, help="network.json whose arities override inference from the data")
    learn.add_argument("--out", type=Path, default=Path("."), help="output directory (default .)")
    _add_search_flags(learn)

    ev = sub.add_parser("eval", help="score a results file against the true network")
    ev.add_argument("--results", type=Path, required=True)
    ev.add_argument("--network", type=Path, required=True, help="ground-truth network.json (with CPTs)")
    ev.add_argument("--test", type=Path, required=True, help="held-out rows drawn from the true network")
    ev.add_argument("--train", type=Path, help="training CSV (default: the path recorded in the results)")
    ev.add_argument("--n-mc", type=int, default=None,
                    help="estimate KL from this many fresh draws instead of the test rows")
    ev.add_argument("--seed", type=int, default=0, help="seed for fresh Monte Carlo draws (default 0)")
    ev.add_argument("--out", type=Path, default=Path("."), help="output directory (default .)")

    exp = sub.add_parser("experiment", help="generate, learn and evaluate a grid of sizes and priors")
    exp.add_argument("--config", type=Path, help="JSON file; its keys replace the flags below")
    exp.add_argument("--benchmark", choices=[b.value for b in BenchmarkName])
    exp.add_argument("--sizes", type=_sizes)
    exp.add_argument("--priors", type=_priors, default=list(PRIOR_CHOICES), help="comma-separated prior kinds")
    exp.add_argument("--param", action="append", metavar="KEY=VALUE")
    exp.add_argument("--test-size", type=int, default=DEFAULT_TEST_SIZE)
    exp.add_argument("--n-mc", type=int, default=None)
    exp.add_argument("--out", type=Path, required=True)
    _add_search_flags(exp)
    return parser


_CONFIG_KEYS = {
    "benchmark", "seed", "params", "sizes", "priors", "iters", "restarts", "top_k", "anneal",
    "alpha", "beta1", "beta2", "gamma", "test_size", "n_mc",
}


def experiment_config(args) -> ExperimentConfig:
    values = {
        "benchmark": args.benchmark, "seed": args.seed, "params": parse_params(args.param), "sizes": args.sizes,
        "priors": args.priors, "iters": args.iters, "restarts": args.restarts, "top_k": args.top_k,
        "anneal": args.anneal, "alpha": args.alpha, "beta1": args.beta1, "beta2": args.beta2, "gamma": args.gamma,
        "test_size": args.test_size, "n_mc": args.n_mc,
    }
    if args.config is not None:
        try:
            doc = json.loads(args.config.read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(str(exc), args.config, exc.lineno) from exc
        unknown = set(doc) - _CONFIG_KEYS
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        values.update(doc)
    if values["benchmark"] is None or values["sizes"] is None:
        raise UsageError("experiment needs a benchmark and sample sizes")
    if isinstance(values["priors"], str):
        values["priors"] = _priors(values["priors"])
    h = Hyperparams(values["alpha"], values["beta1"], values["beta2"], values["gamma"])
    chain = ChainConfig(
        iterations=values["iters"], restarts=values["restarts"], top_k=values["top_k"], seed=values["seed"],
        anneal=values["anneal"],
    )
    spec = BenchmarkSpec(values["benchmark"], values["seed"], values["params"] or {})
    return ExperimentConfig(
        spec, list(values["sizes"]), list(values["priors"]), chain, h, values["test_size"], values["n_mc"]
    )


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, --version and usage errors
        return int(exc.code or 0)
    try:
        if args.command == "generate":
            spec = BenchmarkSpec(args.benchmark, args.seed, parse_params(args.param))
            generate_files(spec, args.sizes, args.test_size, args.out)
        elif args.command == "learn":
            learn_file(args.data, _chain(args, args.prior), _hyper(args), args.out, args.network)
        elif args.command == "eval":
            eval_files(args.results, args.network, args.test, args.out, args.train, args.n_mc, args.seed)
        elif args.command == "experiment":
            rows = run_experiment(experiment_config(args), args.out)
            failed = sum(1 for r in rows if r["error"])
            if failed:
                print(json.dumps({"warning": "cells-failed", "count": failed}), file=sys.stderr)
    except UsageError as exc:
        print(json.dumps(error_record(exc)), file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as exc:
        print(json.dumps(error_record(exc)), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
