"""Command-line pipeline: ``vrmrf {qc,fit,segment,associate,simulate}``.

Every output file starts with a ``#`` provenance line holding the tool
version and the full run configuration as JSON. Exit codes: 0 success,
1 usage error, 2 data error, 3 degenerate statistics under ``--strict``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from contextlib import ExitStack
from pathlib import Path

import numpy as np

from . import __version__
from .association import associate_all, write_association_tsv, write_plot_data
from .estimator import (
    NeighborhoodParams,
    estimate_all,
    neighborhood_summary,
    read_neighborhoods_tsv,
    write_neighborhoods_tsv,
)
from .ingest import (
    GenotypeMatrix,
    ParseError,
    Phenotype,
    parse_genotype_files,
    parse_individuals,
    parse_meta,
    parse_phenotype,
    write_individuals,
    write_matrix,
    write_meta,
    write_phenotype,
)
from .qc import QcError, apply_qc
from .segmentation import (
    influence_windows,
    read_windows_tsv,
    window_summary,
    write_windows_tsv,
)
from . import simulation as sim

log = logging.getLogger("vrmrf")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DEGENERATE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _probability(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"{text} not in [0, 1]")
    return value


def _positive(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"{text} must be positive")
    return value


def _nonneg_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"{text} must be >= 0")
    return value


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vrmrf", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"vrmrf {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("--out", required=True, help="output path prefix")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--strict", action="store_true")
    common.add_argument("-v", "--verbose", action="store_true")

    matrix_in = _Parser(add_help=False)
    matrix_in.add_argument("--matrix", required=True)
    matrix_in.add_argument("--meta", required=True)
    matrix_in.add_argument("--individuals")
    matrix_in.add_argument("--alphabet-size", type=int, default=3)

    p = sub.add_parser("qc", parents=[common, matrix_in], help="MAF and HWE site filters")
    p.add_argument("--maf-min", type=_probability, default=0.01)
    p.add_argument("--hwe-alpha", type=_probability, default=1e-4)
    p.add_argument("--phenotype")
    p.add_argument("--hwe-controls-only", action="store_true")

    p = sub.add_parser("fit", parents=[common, matrix_in], help="estimate neighborhoods")
    p.add_argument("--penalty-c", type=_positive, default=1.0)
    p.add_argument("--max-left", type=_nonneg_int, default=5)
    p.add_argument("--max-right", type=_nonneg_int, default=5)

    p = sub.add_parser("segment", parents=[common], help="influence windows")
    p.add_argument("--neighborhoods", required=True)
    p.add_argument("--meta", required=True)

    p = sub.add_parser("associate", parents=[common, matrix_in], help="window chi-square tests")
    p.add_argument("--windows", required=True)
    p.add_argument("--phenotype", required=True)
    p.add_argument("--report-threshold", type=_probability, default=1e-4)

    p = sub.add_parser("simulate", parents=[common], help="synthetic data and experiments")
    p.add_argument("--model", choices=("block", "genome"), default="block")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=1000, help="individuals")
    p.add_argument("--n-sites", type=int, default=9)
    p.add_argument("--blocks", default="0-3,4-6,7-8")
    p.add_argument("--alphabet-size", type=int, default=2)
    p.add_argument("--concentration", type=_positive, default=1.0)
    p.add_argument("--max-block", type=int, default=4)
    p.add_argument("--chromosomes", type=int, default=1)
    p.add_argument("--no-truth", action="store_true")
    p.add_argument("--phenotype", choices=("none", "null", "planted"), default="none")
    p.add_argument("--planted-window", default="0-0",
                   help="site span driving the planted phenotype")
    p.add_argument("--accuracy", type=_probability, default=0.9)
    p.add_argument("--n-grid", type=_int_list, default=None,
                   help="comma-separated sample sizes for the consistency experiment")
    p.add_argument("--replicates", type=_nonneg_int, default=50)
    p.add_argument("--site", type=int, default=None, help="experiment site (default centre)")
    p.add_argument("--penalty-c", type=_positive, default=0.5)
    p.add_argument("--max-left", type=_nonneg_int, default=3)
    p.add_argument("--max-right", type=_nonneg_int, default=3)
    return parser


def _config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("verbose",)}


def _header(args) -> str:
    return f"# vrmrf {__version__} " + json.dumps(_config(args), sort_keys=True) + "\n"


def _open_out(stack: ExitStack, args, suffix: str):
    path = Path(f"{args.out}{suffix}")
    path.parent.mkdir(parents=True, exist_ok=True)
    stream = stack.enter_context(open(path, "w", encoding="utf-8", newline="\n"))
    stream.write(_header(args))
    return stream


def _load_matrix(args) -> GenotypeMatrix:
    ids = None
    if args.individuals:
        with open(args.individuals, encoding="utf-8") as f:
            ids = parse_individuals(f)
    with open(args.matrix, encoding="utf-8") as fm, open(args.meta, encoding="utf-8") as fs:
        return parse_genotype_files(fm, fs, args.alphabet_size, ids)


def _load_phenotype(path: str, matrix: GenotypeMatrix) -> Phenotype:
    with open(path, encoding="utf-8") as f:
        return parse_phenotype(f, matrix)


def cmd_qc(args) -> int:
    matrix = _load_matrix(args)
    phenotype = _load_phenotype(args.phenotype, matrix) if args.phenotype else None
    filtered, report = apply_qc(matrix, args.maf_min, args.hwe_alpha, phenotype,
                                args.hwe_controls_only)
    with ExitStack() as stack:
        report.write_tsv(_open_out(stack, args, ".qc.tsv"))
        write_matrix(filtered, _open_out(stack, args, ".matrix.txt"))
        write_meta(filtered, _open_out(stack, args, ".meta.tsv"))
    n_maf = sum(s.removed_maf for s in report.sites)
    n_hwe = sum(s.removed_hwe for s in report.sites)
    print(f"qc: sites={matrix.n_sites} kept={filtered.n_sites} removed={report.n_removed} "
          f"maf_removed={n_maf} hwe_removed={n_hwe}")
    return EXIT_OK


def cmd_fit(args) -> int:
    matrix = _load_matrix(args)
    params = NeighborhoodParams(args.penalty_c, args.max_left, args.max_right,
                                matrix.alphabet_size)
    neighborhoods = estimate_all(matrix, params, workers=args.threads)
    with ExitStack() as stack:
        write_neighborhoods_tsv(neighborhoods, matrix, _open_out(stack, args, ".neighborhoods.tsv"))
    s = neighborhood_summary(neighborhoods)
    print(f"fit: sites={s['n_sites']} mean_size={s['mean_size']:.6g} "
          f"std_size={s['std_size']:.6g} mean_left={s['mean_left']:.6g} "
          f"mean_right={s['mean_right']:.6g}")
    return EXIT_OK


def cmd_segment(args) -> int:
    with open(args.neighborhoods, encoding="utf-8") as f:
        neighborhoods, ids, chroms = read_neighborhoods_tsv(f)
    if not neighborhoods:
        raise ParseError("no neighborhoods in input")
    with open(args.meta, encoding="utf-8") as f:
        meta_ids, meta_chroms, positions = parse_meta(f)
    if meta_ids != ids or meta_chroms != chroms:
        raise ParseError("neighborhoods and metadata disagree on site order")
    windows = influence_windows(neighborhoods, np.array(chroms))
    with ExitStack() as stack:
        write_windows_tsv(windows, ids, positions, _open_out(stack, args, ".windows.tsv"))
    s = window_summary(windows)
    print(f"segment: windows={s['count']} mean={s['mean']:.6g} min={s['min']} "
          f"max={s['max']} std={s['std']:.6g}")
    return EXIT_OK


def cmd_associate(args) -> int:
    matrix = _load_matrix(args)
    phenotype = _load_phenotype(args.phenotype, matrix)
    with open(args.windows, encoding="utf-8") as f:
        windows = read_windows_tsv(f, matrix.site_of)
    if not windows:
        raise ParseError("no windows in input")
    results, significant = associate_all(matrix, windows, phenotype, args.report_threshold,
                                         workers=args.threads)
    with ExitStack() as stack:
        write_association_tsv(results, windows, matrix, _open_out(stack, args, ".association.tsv"))
        write_plot_data(results, windows, matrix, _open_out(stack, args, ".plot.tsv"))
        write_association_tsv(significant, windows, matrix,
                              _open_out(stack, args, ".significant.tsv"))
    degenerate = sum(r.degenerate for r in results)
    sparse = sum((not r.degenerate) and r.min_expected < 5 for r in results)
    print(f"associate: windows={len(results)} significant={len(significant)} "
          f"degenerate={degenerate} low_expected={sparse}")
    if degenerate:
        log.warning("%d degenerate windows reported with p = 1", degenerate)
        if args.strict:
            return EXIT_DEGENERATE
    return EXIT_OK


def _write_truth(truth, stream) -> None:
    stream.write("site_index\tl_true\tr_true\n")
    for i, (l, r) in enumerate(truth):
        stream.write(f"{i}\t{l}\t{r}\n")


def cmd_simulate(args) -> int:
    if args.model == "block":
        blocks = sim.parse_blocks(args.blocks)
        joint = sim.random_block_model(args.seed, args.n_sites, blocks, args.alphabet_size,
                                       args.concentration)
        matrix = sim.sample(joint, args.n, np.random.SeedSequence(args.seed).spawn(1)[0])
        truth = None if args.no_truth else sim.true_neighborhoods(joint)
    else:
        matrix, truth = sim.simulate_genome(args.n_sites, args.n, args.seed, args.alphabet_size,
                                            args.max_block, args.concentration,
                                            args.chromosomes, not args.no_truth)
    ids = [f"ind{i + 1}" for i in range(matrix.n_individuals)]
    with ExitStack() as stack:
        write_matrix(matrix, _open_out(stack, args, ".matrix.txt"))
        write_meta(matrix, _open_out(stack, args, ".meta.tsv"))
        write_individuals(ids, _open_out(stack, args, ".individuals.txt"))
        if truth is not None:
            _write_truth(truth, _open_out(stack, args, ".truth.tsv"))
        if args.phenotype != "none":
            pheno_seed = np.random.SeedSequence(args.seed).spawn(2)[1]
            if args.phenotype == "null":
                labels = sim.simulate_phenotype(matrix.n_individuals, pheno_seed)
            else:
                lo, hi = sim.parse_blocks(args.planted_window)[0]
                labels = sim.planted_phenotype(matrix, lo, hi, pheno_seed, args.accuracy)
            write_phenotype(ids, Phenotype(labels), _open_out(stack, args, ".phenotype.tsv"))
    print(f"simulate: sites={matrix.n_sites} individuals={matrix.n_individuals}")
    if args.n_grid:
        if args.model != "block":
            raise UsageError("--n-grid requires --model block")
        site = args.n_sites // 2 if args.site is None else args.site
        params = NeighborhoodParams(args.penalty_c, args.max_left, args.max_right,
                                    args.alphabet_size)
        rows, rates = sim.consistency_experiment(joint, site, args.n_grid, args.replicates,
                                                 params, args.seed, f"block{args.seed}",
                                                 args.threads)
        with ExitStack() as stack:
            sim.write_experiment_csv(rows, _open_out(stack, args, ".experiment.csv"))
            rec = _open_out(stack, args, ".recovery.csv")
            rec.write("n,recovery_rate\n")
            for n, rate in rates.items():
                rec.write(f"{n},{rate:.6g}\n")
        for n, rate in rates.items():
            print(f"recovery: n={n} rate={rate:.4f}")
    return EXIT_OK


COMMANDS = {"qc": cmd_qc, "fit": cmd_fit, "segment": cmd_segment, "associate": cmd_associate,
            "simulate": cmd_simulate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"vrmrf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, QcError, ValueError, KeyError, OSError) as exc:
        print(f"vrmrf: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
