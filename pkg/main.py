import argparse
import logging
import signal
import sys

from src.config.run_config import ALPHA, CALIBRATION_N_PERM, LOG_FILE, N_PERM, RunConfig, SubsetMode
from src.data_loaders.data_processor import CharacterKind
from src.errors import PhonosignalError

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"


def setup_logging(log_file=LOG_FILE, verbose=False):
    level = logging.DEBUG if verbose else logging.INFO
    if log_file == "-":
        logging.basicConfig(level=level, stream=sys.stderr, format=LOG_FORMAT, force=True)
    else:
        logging.basicConfig(level=level, filename=log_file, filemode="a", format=LOG_FORMAT, force=True)


def signal_handler(sig, frame):
    logging.info("Interrupt received. Exiting...")
    sys.exit(130)


def _common(parser):
    parser.add_argument("--verbose", action="store_true", help="log at DEBUG level")
    parser.add_argument("--log-file", default=LOG_FILE, help="log file ('-' for stderr)")
    parser.add_argument("--no-progress", dest="progress", action="store_false", default=None,
                        help="hide progress bars")


def _stochastic(parser, n_perm=N_PERM):
    parser.add_argument("--seed", type=int, help="master seed (falls back to PHONOSIGNAL_SEED)")
    parser.add_argument("--n-perm", dest="n_perm", type=int, default=n_perm, help=f"null draws (default {n_perm})")
    parser.add_argument("--alpha", type=float, default=ALPHA, help=f"significance level (default {ALPHA})")
    parser.add_argument("--workers", type=int, help="parallel workers (default PHONOSIGNAL_WORKERS or 1)")
    parser.add_argument("--full-precision", dest="full_precision", action="store_true", default=None,
                        help="also write unrounded JSON sidecars")


def _tree_input(parser):
    parser.add_argument("--default-length", dest="default_length", type=float,
                        help="branch length for edges the Newick leaves without one")


def _kind_input(parser):
    parser.add_argument("--kind", choices=[k.value for k in CharacterKind],
                        help="character kind (default: from the file name)")


def build_parser():
    parser = argparse.ArgumentParser(prog="phonosignal",
                                     description="Phylogenetic signal of phonotactic characters (K and D).")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("extract", help="wordlists -> character CSVs + manifest")
    p.add_argument("--wordlist", required=True, help="TSV: doculect<TAB>form")
    p.add_argument("--classmap", help="TSV: segment<TAB>place<TAB>major_place<TAB>manner")
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--modes", nargs="+", choices=["binary", "fwd", "bwd", "class-fwd", "class-bwd"])
    p.add_argument("--schemes", nargs="+", choices=["place", "major_place", "manner"])
    _common(p)

    p = sub.add_parser("signal", help="K or D per character")
    p.add_argument("--tree", required=True, help="Newick file")
    p.add_argument("--characters", required=True, help="character CSV")
    p.add_argument("--output", required=True, help="results CSV (summary goes to <stem>_summary.csv)")
    p.add_argument("--statistic", choices=["auto", "K", "D"])
    p.add_argument("--min-non-na", dest="min_non_na", type=int, help="default 50 for D, 20 for K")
    p.add_argument("--normalize", action="store_true", default=None, help="Tukey-normalize before K")
    p.add_argument("--max-skew", dest="max_skew", type=float, help="drop binary characters skewed beyond this")
    p.add_argument("--pseudocount", action="store_true", default=None, help="p = (r + 1) / (n + 1)")
    p.add_argument("--two-sided-d", dest="two_sided_d", action="store_true", default=None,
                   help="two-sided D p-values")
    p.add_argument("--tip-map", dest="tip_map", help="TSV: doculect<TAB>tip")
    _tree_input(p)
    _kind_input(p)
    _stochastic(p)
    _common(p)

    p = sub.add_parser("calibrate", help="K calibration sweep over Brownian shares")
    tree = p.add_mutually_exclusive_group(required=True)
    tree.add_argument("--tree", help="Newick file")
    tree.add_argument("--simulate-tips", dest="simulate_tips", type=int, help="simulate a Yule tree with N tips")
    p.add_argument("--output", required=True, help="sweep CSV (per-trait rows go to <stem>_traits.csv)")
    p.add_argument("--step", dest="calibration_step", type=float, help="grid step in percent (default 1)")
    p.add_argument("--traits-per-step", dest="traits_per_step", type=int, help="default 1000")
    _tree_input(p)
    _stochastic(p, n_perm=CALIBRATION_N_PERM)
    _common(p)

    p = sub.add_parser("robustness", help="posterior-tree or doculect-subset replication")
    p.add_argument("--tree-dir", dest="tree_dir", help="directory of Newick files (posterior mode)")
    p.add_argument("--reference-tree", dest="reference_tree", help="tree to compare the posterior against")
    p.add_argument("--characters", help="character CSV (posterior mode)")
    p.add_argument("--subset", choices=[m.value for m in SubsetMode])
    p.add_argument("--wordlist", help="TSV wordlist (subset modes)")
    p.add_argument("--tree", help="Newick file (subset modes)")
    p.add_argument("--modes", nargs="+", choices=["fwd", "bwd"])
    p.add_argument("--min-non-na", dest="min_non_na", type=int)
    p.add_argument("--tip-map", dest="tip_map")
    p.add_argument("--output", required=True)
    _tree_input(p)
    _kind_input(p)
    _stochastic(p)
    _common(p)

    p = sub.add_parser("compare", help="compare K/D distributions of several results files")
    p.add_argument("--results", nargs="+", required=True)
    p.add_argument("--labels", nargs="+")
    p.add_argument("--output", required=True)
    p.add_argument("--full-precision", dest="full_precision", action="store_true", default=None)
    _common(p)
    return parser


def run(config):
    from src.calibration import cmd_calibrate
    from src.comparisons import cmd_compare
    from src.pipeline import cmd_extract, cmd_robustness, cmd_signal

    commands = {"extract": cmd_extract, "signal": cmd_signal, "calibrate": cmd_calibrate,
                "robustness": cmd_robustness, "compare": cmd_compare}
    return commands[config.subcommand](config)


def main(argv=None):
    args = build_parser().parse_args(argv)
    setup_logging(args.log_file, args.verbose)
    signal.signal(signal.SIGINT, signal_handler)

    try:
        config = RunConfig.from_namespace(args)
        logging.info(f"Starting '{config.subcommand}'")
        run(config)
    except PhonosignalError as e:
        logging.error(f"{type(e).__name__}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logging.error(f"Unexpected error in '{args.subcommand}': {e}", exc_info=True)
        print(f"internal error: {e}", file=sys.stderr)
        return 1
    logging.info(f"Finished '{config.subcommand}'")
    return 0


if __name__ == "__main__":
    sys.exit(main())
