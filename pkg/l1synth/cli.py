"""
Command line entry point.

    l1synth gen-matrix --law gaussian --rows 64 --cols 256 --kind measurement --out phi.txt
    l1synth solve --matrix phi.txt --dict D.txt --y y.txt --eps 0.01
    l1synth phase --config configs/phase_gaussian.json --threads 8
    l1synth nsp-cert --matrix a.txt --s 2
    l1synth verify lemma51 --config configs/lemma51.json
    l1synth report --out results

Exit codes: 0 on completion, 1 on other library errors, 2 on config errors, 3 on numerical
aborts, 4 on file I/O errors. Environment defaults (also read from .env): L1SYNTH_THREADS,
L1SYNTH_RESULTS_DIR, L1SYNTH_LOG_LEVEL.
"""

import argparse
import json
import logging
import os
import sys
from typing import List, Optional

from dotenv import load_dotenv

from . import __version__
from .base import EnsembleSpec, EntryLaw, SolverConfig
from .dictionary import load_dictionary, make_identity, make_random_dict, save_dictionary
from .ensembles import sample_matrix
from .exceptions import ConfigError, L1SynthError, NumericalAbortError
from .harness import SUITES, ExperimentConfig, default_threads, run_experiment
from .matcore import read_matrix, write_matrix
from .nsp import certify_nsp, certify_synthesis_nsp
from .results import build_report, format_report, write_json, write_result
from .solver import Problem, synthesize

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def results_dir(args) -> str:
    return args.out or os.environ.get("L1SYNTH_RESULTS_DIR") or "results"


def _emit(data: dict, path: Optional[str]) -> None:
    if path:
        write_json(path, data)
        logger.info(f"Wrote {path}")
    else:
        print(json.dumps(data, indent=2, sort_keys=True))


def _load_config(args, expected_kinds) -> ExperimentConfig:
    if not args.config:
        raise ConfigError("--config is required")
    cfg = ExperimentConfig.from_file(args.config)
    if cfg.kind not in expected_kinds:
        raise ConfigError(
            f"config kind '{cfg.kind}' cannot run here", details={"expected": list(expected_kinds)}
        )
    return cfg.with_overrides(master_seed=args.seed)


def _run(cfg: ExperimentConfig, args) -> int:
    threads = args.threads if args.threads is not None else default_threads()
    if threads < 1:
        raise ConfigError("--threads must be >= 1")
    result = run_experiment(cfg, threads)
    out_dir = write_result(results_dir(args), cfg, result)
    logger.info(f"{cfg.kind} '{cfg.name}' finished; results in {out_dir}")
    return 0


# ===== Subcommands =====

def cmd_gen_matrix(args) -> int:
    try:
        law = EntryLaw.from_dict(json.loads(args.law))
    except json.JSONDecodeError:
        law = EntryLaw.from_dict({"kind": args.law, **({"dof": args.dof} if args.dof else {})})
    seed = args.seed if args.seed is not None else 0
    if args.kind == "dictionary":
        dictionary = make_random_dict(EnsembleSpec.dictionary(law, args.rows, args.cols), seed)
        save_dictionary(args.out, dictionary)
    else:
        if args.kind == "measurement":
            spec = EnsembleSpec.measurement(law, args.rows, args.cols)
        else:
            spec = EnsembleSpec(law, args.rows, args.cols)
        write_matrix(args.out, sample_matrix(spec, seed))
    logger.info(f"Wrote {args.rows}x{args.cols} {law.tag} {args.kind} matrix to {args.out}")
    return 0


def cmd_solve(args) -> int:
    phi = read_matrix(args.matrix)
    dictionary = load_dictionary(args.dict) if args.dict else make_identity(phi.shape[1])
    y = read_matrix(args.y).ravel()
    cfg = SolverConfig()
    if args.config:
        with open(args.config, "r", encoding="utf-8") as f:
            cfg = SolverConfig.from_dict(json.load(f))
    report = synthesize(Problem(phi=phi, dictionary=dictionary, y=y, eps=args.eps), cfg)
    if not report.converged:
        logger.warning(f"solver stopped after {report.iterations} iterations without converging")
    _emit(report.to_dict(), args.report)
    return 0


def cmd_phase(args) -> int:
    return _run(_load_config(args, ("phase",)), args)


def cmd_noise(args) -> int:
    return _run(_load_config(args, ("noise",)), args)


def cmd_nsp_cert(args) -> int:
    if args.config:
        return _run(_load_config(args, ("nsp_corpus",)), args)
    if not args.matrix or args.s is None:
        raise ConfigError("nsp-cert needs --config, or --matrix and --s")
    mat = read_matrix(args.matrix)
    if args.dict:
        report = certify_synthesis_nsp(mat, load_dictionary(args.dict), args.s, args.tol)
    else:
        report = certify_nsp(mat, args.s, args.tol)
    logger.info(f"NSP of order {args.s}: {report.status.value} ({report.lp_count} LPs)")
    _emit(report.to_dict(), args.report)
    return 0


def cmd_verify(args) -> int:
    cfg = _load_config(args, SUITES)
    return _run(cfg.with_overrides(kind=args.suite), args)


def cmd_report(args) -> int:
    print(format_report(build_report(results_dir(args))))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="l1synth", description="l1-synthesis recovery experiments"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    experiment = argparse.ArgumentParser(add_help=False)
    experiment.add_argument("--config", help="ExperimentConfig JSON")
    experiment.add_argument("--seed", type=int, help="Override master_seed")
    experiment.add_argument("--out", help="Results root (default $L1SYNTH_RESULTS_DIR or results)")
    experiment.add_argument(
        "--threads", type=int, help="Worker processes (default $L1SYNTH_THREADS)"
    )

    p = sub.add_parser("gen-matrix", help="Sample a random matrix to a text file")
    p.add_argument("--law", default="gaussian", help="Law kind or JSON object")
    p.add_argument("--dof", type=int, help="Student-t degrees of freedom")
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--cols", type=int, required=True)
    p.add_argument("--kind", choices=("measurement", "dictionary", "raw"), default="measurement")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="Matrix file")
    p.set_defaults(func=cmd_gen_matrix)

    p = sub.add_parser("solve", help="Solve one l1-synthesis problem")
    p.add_argument("--matrix", required=True, help="Measurement matrix file")
    p.add_argument("--dict", help="Dictionary file (default identity)")
    p.add_argument("--y", required=True, help="Measurement vector file")
    p.add_argument("--eps", type=float, default=0.0)
    p.add_argument("--config", help="SolverConfig JSON")
    p.add_argument("--report", help="Write the SolveReport JSON here instead of stdout")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("phase", parents=[experiment], help="Phase transition experiment")
    p.set_defaults(func=cmd_phase)

    p = sub.add_parser("noise", parents=[experiment], help="Robustness experiment")
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("nsp-cert", parents=[experiment], help="Certify the NSP")
    p.add_argument("--matrix", help="Matrix file (Phi when --dict is given)")
    p.add_argument("--dict", help="Dictionary file")
    p.add_argument("--s", type=int, help="Order")
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--report", help="Write the NspReport JSON here instead of stdout")
    p.set_defaults(func=cmd_nsp_cert)

    p = sub.add_parser("verify", parents=[experiment], help="Run a verification suite")
    p.add_argument("suite", choices=SUITES)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("report", help="Aggregate results with DuckDB")
    p.add_argument("--out", help="Results root (default $L1SYNTH_RESULTS_DIR or results)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    logging.basicConfig(
        level=os.environ.get("L1SYNTH_LOG_LEVEL", "INFO").upper(), format=LOG_FORMAT
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        logger.error(str(e))
        return EXIT_CONFIG
    except NumericalAbortError as e:
        logger.error(str(e))
        return EXIT_NUMERICAL
    except L1SynthError as e:
        logger.error(str(e))
        return EXIT_ERROR
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
