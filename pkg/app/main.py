import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from app.config.settings import (
    DEFAULT_SAMPLES,
    DEFAULT_SEED,
    EXIT_CHECK_FAILED,
    EXIT_CONFIG_ERROR,
    EXIT_OK,
    LOG_FILE,
    LOG_LEVEL,
)
from app.core.exceptions import UstLabError
from app.core.experiment_runner import run
from app.models.experiment import ExperimentConfig
from app.models.family import FamilySpec
from app.services.families import generate
from app.utils.serialization import (
    edge_rows,
    format_records,
    load_config,
    network_to_dot,
    network_to_record,
    tomllib,
    write_edge_list,
    write_output,
)

logger = logging.getLogger(__name__)


def configure_logging():
    """Log to stderr (stdout carries the JSON lines) and to LOG_FILE when set."""
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if LOG_FILE:
        Path(LOG_FILE).parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(LOG_FILE, mode="a"))
    logging.basicConfig(
        level=getattr(logging, LOG_LEVEL.upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )


def _parse_label(text: str) -> Any:
    """Vertex labels on the command line are JSON ([0,0,0], 3, "a") or bare strings."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _load_family(path: str) -> Dict[str, Any]:
    """A FamilySpec file, or a network file (edge list, or a JSON record with `edges`) wrapped as one."""
    if path.endswith(".toml"):
        with open(path, "rb") as f:
            return tomllib.load(f)
    if not path.endswith(".json"):
        return {"family": "network_file", "path": path}
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    if isinstance(data, dict) and "edges" in data:
        return {"family": "network_file", "path": path}
    return data


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED, help="Root seed")
    parser.add_argument("--samples", type=int, default=DEFAULT_SAMPLES, help="Number of replicas")
    parser.add_argument("--threads", type=int, default=1, help="Worker processes for replicas")
    parser.add_argument("--out", default=None, help="Output file (default: stdout)")
    parser.add_argument("--format", choices=["json", "csv", "dot"], default="json")


def _add_graph(parser: argparse.ArgumentParser):
    parser.add_argument("--graph", required=True,
                        help="FamilySpec file (TOML or JSON), JSON network record, or edge-list text")
    parser.add_argument("--retain", nargs="+", type=_parse_label, default=None,
                        help="Keep exactly these vertex labels; wire the rest")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ustlab",
        description="Uniform spanning trees and forests from the excursion (interlacement) process",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="Run an experiment config file")
    p.add_argument("--config", required=True, help="ExperimentConfig file (TOML or JSON)")

    p = sub.add_parser("sample", help="Sample spanning trees of a wired quotient")
    _add_common(p)
    _add_graph(p)
    p.add_argument("--sampler", choices=["aldous_broder", "wilson", "interlacement"], default="interlacement")
    p.add_argument("--emit", choices=["forest", "stats"], default="stats")

    p = sub.add_parser("interlace", help="Sample the excursion process on a time window")
    _add_common(p)
    _add_graph(p)
    p.add_argument("--window", nargs=2, type=float, default=[0.0, 1.0], metavar=("A", "B"))
    p.add_argument("--emit", choices=["forest", "process", "stats"], default="stats")

    p = sub.add_parser("dynamics", help="Run the forest-valued dynamics along a decreasing time grid")
    _add_common(p)
    _add_graph(p)
    p.add_argument("--t-grid", nargs="+", type=float, required=True)

    p = sub.add_parser("hitting", help="Hit probability of a vertex set against 1 - exp(-t Cap)")
    _add_common(p)
    _add_graph(p)
    p.add_argument("--K", nargs="+", type=_parse_label, required=True)
    p.add_argument("--window", nargs=2, type=float, default=[0.0, 1.0], metavar=("A", "B"))

    p = sub.add_parser("potential", help="Exact potential-theory queries")
    p.add_argument("query", choices=["capacity", "treecount", "edgeprob"])
    _add_common(p)
    _add_graph(p)
    p.add_argument("--K", nargs="+", type=_parse_label, default=None)
    p.add_argument("--edge", type=int, default=None)

    p = sub.add_parser("families", help="Graph family generators")
    family_sub = p.add_subparsers(dest="family_command", required=True)
    g = family_sub.add_parser("generate", help="Write a generated network")
    g.add_argument("--spec", required=True, help="FamilySpec file (TOML or JSON)")
    g.add_argument("--out", default=None)
    g.add_argument("--format", choices=["json", "edgelist", "csv", "dot"], default="json",
                   help="json network record, `u v c` edge list, csv edge table, or dot")

    p = sub.add_parser("counterexample", help="Exact p(m, k) on depth cuts of the counterexample family")
    _add_common(p)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--depth", type=int, default=5)
    p.add_argument("--stretch", choices=["explicit", "reduced"], default="reduced")

    p = sub.add_parser("verify", help="Run the invariant suite")
    _add_common(p)
    p.add_argument("--scale", choices=["quick", "full"], default="quick")
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    """Translate a subcommand into an ExperimentConfig."""
    if args.command == "run":
        return load_config(args.config)

    data: Dict[str, Any] = {
        "seed": args.seed,
        "samples": args.samples,
        "threads": args.threads,
        "output": args.out,
        "format": args.format,
    }
    if getattr(args, "graph", None):
        data["family"] = _load_family(args.graph)
        if args.retain:
            data["quotient"] = {"mode": "retain", "vertices": args.retain}

    if args.command == "sample":
        data.update(kind="sample_ust", sampler=args.sampler, emit=args.emit)
    elif args.command == "interlace":
        data.update(kind="sample_interlacement", window=args.window, emit=args.emit)
    elif args.command == "dynamics":
        data.update(kind="dynamics", t_grid=args.t_grid)
    elif args.command == "hitting":
        data.update(kind="hitting", K=args.K, window=args.window)
    elif args.command == "potential":
        data.update(kind="capacity", query=args.query, K=args.K, edge=args.edge)
    elif args.command == "counterexample":
        data.update(kind="counterexample", k=args.k, m=args.m, depth=args.depth, stretch=args.stretch)
    elif args.command == "verify":
        data.update(kind="verify", scale=args.scale)
    return ExperimentConfig.model_validate(data)


def generate_network(args: argparse.Namespace) -> int:
    spec = FamilySpec.model_validate(_load_family(args.spec))
    generated = generate(spec)
    if args.format == "dot":
        text = network_to_dot(generated.network)
    elif args.format == "edgelist":
        text = write_edge_list(generated.network)
    elif args.format == "csv":
        text = format_records(edge_rows(generated.network), "csv")
    else:
        record = network_to_record(generated.network).model_dump()
        record["frontier"] = sorted(generated.frontier)
        record["designated"] = generated.designated
        text = format_records([record], "json")
    write_output(text, args.out)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point of the `ustlab` console script; returns the exit code."""
    configure_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.command == "families":
            return generate_network(args)
        config = config_from_args(args)
        result = run(config)
    except ValidationError as e:
        logger.error(f"Invalid configuration: {e}")
        details = json.loads(e.json(include_url=False))
        sys.stderr.write(format_records([{"error": "invalid_config", "details": details}], "json"))
        return EXIT_CONFIG_ERROR
    except (UstLabError, OSError, ValueError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        sys.stderr.write(format_records([{"error": type(e).__name__, "details": str(e)}], "json"))
        return EXIT_CONFIG_ERROR

    write_output(result.text, config.output)
    return EXIT_OK if result.passed else EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
