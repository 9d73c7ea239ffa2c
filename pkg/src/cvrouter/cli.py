"""Command-line entry point: ``cvrouter <generate|spectrum|route|histogram|square-oracle>``.

Every command accepts ``--config run.json``; explicit flags override keys
from the file and ``CVROUTER_SEED`` overrides the seed from either source.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import zlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import criteria as cr
from . import gaussian as ga
from .netgen import Graph, GraphError, TopologySpec, bipartition, generate, select_scenario_pair
from .optimizer import CmaConfig, RoutingProblem, route

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NO_GO = 2
EXIT_NOT_IDEAL = 3

# ensembles below this size are flagged as reduced relative to the full-size runs
FULL_ENSEMBLE_GRAPHS = 100
FULL_ENSEMBLE_N = 1000

log = logging.getLogger("cvrouter")


class ConfigError(ValueError):
    pass


def sub_seed(seed: int, label: str) -> int:
    """Independent 32-bit seed for the named sub-stream of a run seed."""
    return int(np.random.SeedSequence([seed, zlib.crc32(label.encode())]).generate_state(1)[0])


@dataclass
class RunConfig:
    """Everything needed to reproduce a run."""

    topology: str = "grid"
    n: int = 8
    model_params: dict[str, Any] = field(default_factory=dict)
    seed: int = 0
    s: float = 10.0
    partition: str | list[int] = "half_by_index"
    scenario: str | None = None
    pair: list[int] | None = None
    optimizer: dict[str, Any] = field(default_factory=dict)
    output_dir: str = "."
    graph: str | None = None
    method: str = "cma"
    mode: str = "bipartite"
    graphs: int = 20
    bins: int = 200
    points: int = 200
    threads: int = 0

    def to_json(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> RunConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @property
    def squeezing(self) -> ga.Squeezing:
        return ga.Squeezing(self.s)

    @property
    def topology_spec(self) -> TopologySpec:
        return TopologySpec(self.topology, self.n, self.model_params, sub_seed(self.seed, "topology"))

    @property
    def workers(self) -> int:
        return self.threads if self.threads > 0 else (os.cpu_count() or 1)


def load_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        try:
            cfg = RunConfig.from_json(json.loads(Path(args.config).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    overrides = {
        f.name: getattr(args, f.name)
        for f in fields(RunConfig)
        if getattr(args, f.name, None) is not None
    }
    cfg = replace(cfg, **overrides)
    env_seed = os.environ.get("CVROUTER_SEED")
    if env_seed is not None:
        try:
            cfg = replace(cfg, seed=int(env_seed))
        except ValueError as exc:
            raise ConfigError(f"CVROUTER_SEED must be an integer, got {env_seed!r}") from exc
    if cfg.seed < 0:
        raise ConfigError("seed must be non-negative")
    return cfg


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")


def _out_path(cfg: RunConfig, explicit: str | None, default: str) -> Path:
    return Path(explicit) if explicit else Path(cfg.output_dir) / default


def _load_graph(cfg: RunConfig) -> Graph:
    if cfg.graph:
        try:
            g = Graph.loads(Path(cfg.graph).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read graph file: {exc}") from exc
    else:
        g = generate(cfg.topology_spec)
    if g.partition is None:
        g = bipartition(g, cfg.partition)
    return g


def _pair(cfg: RunConfig, g: Graph) -> tuple[int, int]:
    if cfg.pair is not None:
        if len(cfg.pair) != 2:
            raise ConfigError("pair needs exactly two vertices")
        return int(cfg.pair[0]), int(cfg.pair[1])
    if cfg.scenario:
        return select_scenario_pair(g, cfg.scenario)
    return g.side_a[0], g.side_b[-1]


def cmd_generate(cfg: RunConfig, args: argparse.Namespace) -> int:
    g = bipartition(generate(cfg.topology_spec), cfg.partition)
    path = _out_path(cfg, args.out, "graph.json")
    _write(path, g.dumps())
    print(f"vertices={g.n} edges={g.n_edges} retries={g.retries} -> {path}")
    return EXIT_OK


def cmd_spectrum(cfg: RunConfig, args: argparse.Namespace) -> int:
    g = _load_graph(cfg)
    report = cr.spectrum_report(g, cfg.squeezing)
    path = _out_path(cfg, args.out, "spectrum.json")
    _write(path, json.dumps(report.to_json(), indent=2))
    verdict = report.verdict_internal if cfg.mode == "internal" else report.verdict_bipartite
    print(
        f"count_one={report.count_one} contains_lambda={str(report.contains_lambda).lower()} "
        f"{cfg.mode}={verdict} -> {path}"
    )
    if report.marginal_internal and cfg.mode == "internal":
        print("note: exactly two unit eigenvalues, internal routing is marginal")
    return EXIT_NO_GO if verdict == "impossible" else EXIT_OK


def cmd_route(cfg: RunConfig, args: argparse.Namespace) -> int:
    g = _load_graph(cfg)
    pair = _pair(cfg, g)
    out = _out_path(cfg, args.out, "outcome.json")
    if cfg.method == "constructive":
        try:
            res = cr.constructive_route(g, cfg.squeezing, pair)
        except cr.PreconditionError as exc:
            print(f"no-go: {exc}")
            return EXIT_NO_GO
        err = float(np.abs(res.routed - ga.target_pair_covariance(cfg.squeezing)).max())
        doc = {
            "method": "constructive",
            "pair": list(res.pair),
            "routed": res.routed.tolist(),
            "max_error": err,
            "ambiguous": res.ambiguous,
            "u_a": {"re": res.u_a.real.tolist(), "im": res.u_a.imag.tolist()},
            "u_b": {"re": res.u_b.real.tolist(), "im": res.u_b.imag.tolist()},
        }
        _write(out, json.dumps(doc, indent=2))
        print(f"constructive pair={pair} max_error={err:.3e} -> {out}")
        return EXIT_OK if err <= 1e-6 else EXIT_NOT_IDEAL

    problem = RoutingProblem(g, cfg.squeezing, *pair)
    try:
        opt = CmaConfig(problem.dim, **{"seed": sub_seed(cfg.seed, "optimizer"), "threads": cfg.workers, **cfg.optimizer})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad optimizer settings: {exc}") from exc
    outcome = route(problem, opt)
    _write(out, outcome.dumps())
    hist = out.with_name(out.stem + "_history.csv")
    _write(hist, outcome.history_csv())
    print(
        f"{outcome.classification} f_opt={outcome.f_opt:.6e} purity={outcome.purity:.12f} "
        f"generations={outcome.generations} stop={outcome.stop_reason} -> {out}"
    )
    if outcome.classification != "ideal":
        print("routed block (Q_A, Q_B, P_A, P_B):")
        print(np.array2string(outcome.routed, precision=6, suppress_small=False))
        return EXIT_NOT_IDEAL
    return EXIT_OK


def cmd_histogram(cfg: RunConfig, args: argparse.Namespace) -> int:
    if cfg.graphs < 1:
        raise ConfigError("graphs must be at least 1")
    hist = cr.spectral_histogram(cfg.topology_spec, cfg.graphs, cfg.squeezing, cfg.bins, cfg.partition, cfg.workers)
    csv_path = _out_path(cfg, args.out, "histogram.csv")
    _write(csv_path, hist.to_csv())
    summary = hist.summary()
    summary.update(
        topology=cfg.topology,
        n=cfg.n,
        s=cfg.s,
        seed=cfg.seed,
        reduced_ensemble=cfg.graphs < FULL_ENSEMBLE_GRAPHS or cfg.n < FULL_ENSEMBLE_N,
    )
    if summary["reduced_ensemble"]:
        summary["caveat"] = (
            f"ensemble of {cfg.graphs} graphs with n={cfg.n} is smaller than the "
            f"{FULL_ENSEMBLE_GRAPHS} x n={FULL_ENSEMBLE_N} reference size; percentages carry sampling noise"
        )
    sum_path = csv_path.with_name(csv_path.stem + "_summary.json")
    _write(sum_path, json.dumps(summary, indent=2))
    print(
        f"one={summary['value_one_pct']:.3f}% lambda={summary['value_lambda_pct']:.3f}% "
        f">=0.99lambda={summary['ge_99_lambda_pct']:.3f}% -> {csv_path}"
    )
    return EXIT_OK


def cmd_square_oracle(cfg: RunConfig, args: argparse.Namespace) -> int:
    sq = cfg.squeezing
    gen = cr.square_oracle(sq, **cr.SQUARE_HAND_SOLUTION)
    block = cr.square_pair_block(gen)
    scan = cr.square_scan(sq, cfg.points)
    csv_path = _out_path(cfg, args.out, "square_scan.csv")
    _write(csv_path, scan.to_csv())
    doc = {
        "s": sq.s,
        "lambda": sq.lam,
        "hand_solution": cr.SQUARE_HAND_SOLUTION,
        "pair_block": block.tolist(),
        "scan_points": cfg.points,
        "scan_min_max_residual": scan.min_max_residual,
    }
    _write(csv_path.with_name(csv_path.stem + "_summary.json"), json.dumps(doc, indent=2))
    print(f"mu'={block[0, 3]:.12f} scan_min_max_residual={scan.min_max_residual:.6f} -> {csv_path}")
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "spectrum": cmd_spectrum,
    "route": cmd_route,
    "histogram": cmd_histogram,
    "square-oracle": cmd_square_oracle,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="output file (default: inside --output-dir)")
    common.add_argument("--output-dir", dest="output_dir")
    common.add_argument("--seed", type=int)
    common.add_argument("--s", type=float, help="squeezing factor s = exp(2r)")
    common.add_argument("--threads", type=int, help="worker threads (default: all cores)")
    common.add_argument("-v", "--verbose", action="store_true")

    topo = argparse.ArgumentParser(add_help=False)
    topo.add_argument("--topology", help="grid, complete, ba, as, dd or explicit")
    topo.add_argument("--n", type=int)
    topo.add_argument("--model-params", dest="model_params", type=json.loads, help="JSON object")
    topo.add_argument("--partition", type=_partition_arg, help="half_by_index or comma-separated A vertices")

    p = argparse.ArgumentParser(prog="cvrouter", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common, topo], help="write a graph file")
    sp = sub.add_parser("spectrum", parents=[common, topo], help="symplectic spectrum and no-go verdicts")
    sp.add_argument("--graph", help="graph JSON file")
    sp.add_argument("--mode", choices=["bipartite", "internal"])
    rp = sub.add_parser("route", parents=[common, topo], help="route a pair with CMA-ES or the constructive method")
    rp.add_argument("--graph")
    rp.add_argument("--pair", type=int, nargs=2)
    rp.add_argument("--scenario", choices=["I", "II", "III"])
    rp.add_argument("--method", choices=["cma", "constructive"])
    rp.add_argument("--optimizer", type=json.loads, help="JSON object of CMA-ES settings")
    hp = sub.add_parser("histogram", parents=[common, topo], help="ensemble symplectic-eigenvalue histogram")
    hp.add_argument("--graphs", type=int)
    hp.add_argument("--bins", type=int)
    qp = sub.add_parser("square-oracle", parents=[common], help="square-network closed form and impossibility scan")
    qp.add_argument("--points", type=int)
    return p


def _partition_arg(text: str) -> str | list[int]:
    if text == "half_by_index":
        return text
    try:
        return [int(v) for v in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid partition {text!r}") from exc


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, GraphError, ga.PhysicalityError, ValueError, IndexError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
