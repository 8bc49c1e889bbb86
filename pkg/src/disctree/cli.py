"""Command-line entry point.

Exit codes: 0 success, 2 bad input, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .analysis import build_adjacency_graph, build_level_set_tree, detect_modes
from .core import DomainError, InvariantError, PartitionTree, PiecewiseDensity, SampleSet
from .discrepancy import DiscrepancySizeError
from .estimator import EstimatorConfig, estimate_density
from .evaluation import EXPERIMENTS, REFERENCE_FUNCTIONS, run_experiment, sample_from_estimate

log = logging.getLogger("disctree")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INVARIANT = 3


class InputError(DomainError):
    pass


@dataclass
class Ingested:
    samples: SampleSet
    header: list[str] | None
    transform: dict | None


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def ingest_csv(path: str | os.PathLike, rescale: bool = False) -> Ingested:
    """Read an ``N x d`` numeric CSV, optionally min-max rescaling each column.

    A first row containing any non-numeric cell is treated as a header.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    header = None
    if rows and not all(_is_number(c) for c in rows[0]):
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
    if not rows:
        raise InputError(f"{path}: no data rows")
    width = len(header) if header else len(rows[0])
    first_line = 2 if header else 1
    data = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        line = i + first_line
        if len(row) != width:
            raise InputError(f"{path}: row {line} has {len(row)} columns, expected {width}")
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise InputError(f"{path}: row {line}, column {j + 1}: non-numeric value {cell.strip()!r}") from None
            if not np.isfinite(v):
                raise InputError(f"{path}: row {line}, column {j + 1}: non-finite value")
            data[i, j] = v
    transform = None
    if rescale:
        lo = data.min(axis=0)
        hi = data.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        data = np.where(hi > lo, (data - lo) / span, 0.5)
        transform = {"min": lo.tolist(), "max": hi.tolist()}
    else:
        bad = np.argwhere((data < 0.0) | (data > 1.0))
        if bad.size:
            i, j = bad[0]
            raise InputError(
                f"{path}: row {i + first_line}, column {j + 1}: value {float(data[i, j])!r} outside [0, 1] "
                "(use --rescale)"
            )
    return Ingested(SampleSet(data), header, transform)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n")


def _write_csv(path: Path, header: Sequence[str], rows, seed: int) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# seed={seed}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _config(args) -> EstimatorConfig:
    return EstimatorConfig(
        m=args.m,
        theta=args.theta,
        epsilon=args.epsilon,
        pseudo_count=args.pseudo_count,
        max_depth=args.max_depth,
        mode=args.disc_mode,
        grid_res=args.grid_res,
        seed=args.seed,
    )


def _load_density(args) -> tuple[PartitionTree, dict | None]:
    if args.partition:
        return PartitionTree.from_json(Path(args.partition).read_text()), None
    if not args.input:
        raise InputError("--input or --partition is required")
    data = ingest_csv(args.input, args.rescale)
    est = estimate_density(data.samples, _config(args))
    tree = est.tree
    if data.transform is not None:
        tree = PartitionTree(tree.dimension, tree.nodes, tree.theta, {**tree.meta, "rescale": data.transform})
    tree.check()
    tree.density().check()
    if args.max_leaves_report is not None:
        decisions = est.report["decisions"]
        est.report["decisions"] = decisions[: args.max_leaves_report]
        est.report["decisions_truncated"] = len(decisions) > args.max_leaves_report
    est.report["seed"] = args.seed
    return tree, est.report


def cmd_estimate(args, out: Path) -> None:
    tree, report = _load_density(args)
    (out / "partition.json").write_text(tree.to_json())
    if report is not None:
        _write_json(out / "report.json", report)


def _mode_records(pd: PiecewiseDensity, modes: list[int]) -> list[dict]:
    return [
        {
            "cell": i,
            "lower": pd.lower[i].tolist(),
            "upper": pd.upper[i].tolist(),
            "center": pd.centers[i].tolist(),
            "density": float(pd.density[i]),
            "mass": float(pd.mass[i]),
        }
        for i in modes
    ]


def cmd_modes(args, out: Path) -> None:
    tree, _ = _load_density(args)
    pd = tree.density()
    modes = detect_modes(pd)
    _write_json(out / "modes.json", {"seed": args.seed, "modes": _mode_records(pd, modes)})


def cmd_tree(args, out: Path) -> None:
    tree, _ = _load_density(args)
    pd = tree.density()
    lst = build_level_set_tree(pd, build_adjacency_graph(pd))
    for i, p in enumerate(lst.parent):
        if p >= 0 and lst.color[p] > lst.color[i]:
            raise InvariantError(f"level-set node {i} has a denser parent")
    (out / "levelset.dot").write_text(f"// seed={args.seed}\n" + lst.to_dot())
    payload = lst.to_dict()
    payload["seed"] = args.seed
    _write_json(out / "levelset.json", payload)


def cmd_eval(args, out: Path) -> None:
    sizes = [int(s) for s in args.sizes.split(",")]
    rows, summary = run_experiment(
        args.experiment,
        sizes,
        replicas=args.replicas,
        seed=args.seed,
        d=args.dim,
        cfg=_config(args),
        function=args.function,
    )
    _write_csv(out / "results.csv", ["size", "replica", "error"], rows, args.seed)
    _write_json(out / "summary.json", summary)


def cmd_sample(args, out: Path) -> None:
    tree, _ = _load_density(args)
    pts = sample_from_estimate(tree.density(), args.n, args.seed).points
    _write_csv(
        out / "samples.csv",
        [f"x{j}" for j in range(pts.shape[1])],
        ([repr(float(v)) for v in row] for row in pts),
        args.seed,
    )


COMMANDS = {
    "estimate": cmd_estimate,
    "modes": cmd_modes,
    "tree": cmd_tree,
    "eval": cmd_eval,
    "sample": cmd_sample,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="disctree", description="Discrepancy-driven binary partition density estimation.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--input", help="CSV of samples, one row per point")
    p.add_argument("--partition", help="reuse a saved partition.json instead of estimating")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--m", type=int, default=3, help="bins per dimension for gap search")
    p.add_argument("--epsilon", type=float, default=1e-3)
    p.add_argument("--pseudo-count", type=float, default=0.0)
    p.add_argument("--max-depth", type=int, default=50)
    p.add_argument("--disc-mode", choices=["exact", "grid", "l2", "auto"], default="auto")
    p.add_argument("--grid-res", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rescale", action="store_true", help="min-max rescale every column to [0, 1]")
    p.add_argument("--experiment", choices=EXPERIMENTS, default="slope")
    p.add_argument("--sizes", default="1000,10000,100000")
    p.add_argument("--replicas", type=int, default=5)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--function", choices=sorted(REFERENCE_FUNCTIONS), default="f2")
    p.add_argument("--n", type=int, default=1000, help="points to draw for 'sample'")
    p.add_argument("--max-leaves-report", type=int, default=None, help="cap on decision records in report.json")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    level = os.environ.get("DISCTREE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, out)
    except InvariantError as exc:
        log.error("invariant violated: %s", exc)
        print(f"error: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (DomainError, DiscrepancySizeError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
