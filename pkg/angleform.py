#!/usr/bin/env python3
"""
angleform - CLI du simulateur de formation sous contraintes d'angles
Usage:
    angleform validate <fichier.scn>
    angleform run <fichier.scn> --out DIR [--dt X] [--duration X]
    angleform run --all --out DIR
    angleform reproduce {shape,maneuver} --out DIR [--extended]

Codes de sortie : 0 ok, 1 échec de validation ou d'exécution, 2 usage.
Verbosité : variable ANGLEFORM_LOG (DEBUG, INFO, WARNING, ERROR).
"""

import argparse
import os
import sys
import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from typing import Dict, List, Optional

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
from errors import AngleformError, ValidationError  # noqa: E402
from report import run_scenario, write_artifacts  # noqa: E402
from reproduction import FIXTURES, reproduce  # noqa: E402
from scenario_file import bundled_path, list_bundled, load_scenario  # noqa: E402
from sim import scenario_violations, validate_scenario  # noqa: E402

logger = logging.getLogger("angleform")

LOG_ENV = "ANGLEFORM_LOG"
VALID_LOG_LEVELS = {"DEBUG", "INFO", "WARNING", "ERROR"}
DEFAULT_LOG_LEVEL = "WARNING"

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def configure_logging():
    """Niveau lu dans ANGLEFORM_LOG ; matplotlib reste à WARNING."""
    level = os.environ.get(LOG_ENV, DEFAULT_LOG_LEVEL).strip().upper()
    if level not in VALID_LOG_LEVELS:
        level = DEFAULT_LOG_LEVEL
    logging.basicConfig(level=getattr(logging, level),
                        format='%(asctime)s [%(name)s] %(message)s')
    logging.getLogger("matplotlib").setLevel(logging.WARNING)


# --- Commandes ---------------------------------------------------------------

def cmd_validate(path: str) -> List[str]:
    """Analyser puis vérifier un scénario ; ValidationError si une hypothèse casse."""
    scenario = load_scenario(path)
    violations = scenario_violations(scenario)
    if violations:
        raise ValidationError(violations)
    logger.info(f"Scénario {scenario.name} valide ({scenario.n} agents)")
    return violations


def cmd_run(path: str, out_dir: str, dt: Optional[float] = None,
            duration: Optional[float] = None) -> Dict:
    """Exécuter un scénario et écrire ses artefacts dans out_dir."""
    scenario = load_scenario(path).with_overrides(dt=dt, duration=duration)
    validate_scenario(scenario)
    result = run_scenario(scenario)
    write_artifacts(out_dir, result)
    return result.metrics


def _run_bundled(name: str, out_dir: str) -> Dict:
    """Tâche d'un worker du mode --all."""
    configure_logging()
    metrics = cmd_run(bundled_path(name), os.path.join(out_dir, name))
    return metrics["terminal"]


def cmd_run_all(out_dir: str, workers: Optional[int] = None) -> Dict[str, Optional[str]]:
    """Tous les scénarios livrés en parallèle, un sous-répertoire chacun.

    Retourne {nom: None si succès, sinon message d'erreur}.
    """
    names = list_bundled()
    outcome: Dict[str, Optional[str]] = {}
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = {pool.submit(_run_bundled, name, out_dir): name for name in names}
        for fut in as_completed(futures):
            name = futures[fut]
            try:
                terminal = fut.result()
                outcome[name] = None
                print(f"✅ {name}: angle error {terminal['angle_error_rad']}")
            except (AngleformError, OSError) as e:
                outcome[name] = str(e)
                print(f"❌ {name}: {e}", file=sys.stderr)
    return dict(sorted(outcome.items()))


# --- Parseur -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="angleform",
        description="Angle-constrained formation control simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="check a scenario file")
    p_validate.add_argument("file")

    p_run = sub.add_parser("run", help="simulate a scenario and write artefacts")
    p_run.add_argument("file", nargs="?")
    p_run.add_argument("--all", action="store_true", help="run every bundled scenario")
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--dt", type=float)
    p_run.add_argument("--duration", type=float)
    p_run.add_argument("--workers", type=int)

    p_repro = sub.add_parser("reproduce", help="replay a bundled fixture with acceptance checks")
    p_repro.add_argument("which", choices=FIXTURES)
    p_repro.add_argument("--out", required=True)
    p_repro.add_argument("--extended", action="store_true",
                         help="also run the frame, uniqueness, collision, invariance and order checks")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging()

    if args.command == "run":
        if args.all == bool(args.file):
            parser.error("run needs either a scenario file or --all")
        if args.all and (args.dt is not None or args.duration is not None):
            parser.error("--dt/--duration apply to a single scenario")

    try:
        if args.command == "validate":
            cmd_validate(args.file)
            print(f"✅ {args.file}: ok")
        elif args.command == "run" and args.all:
            outcome = cmd_run_all(args.out, args.workers)
            if any(outcome.values()):
                return EXIT_FAILURE
        elif args.command == "run":
            metrics = cmd_run(args.file, args.out, args.dt, args.duration)
            print(f"✅ {args.file} → {args.out} "
                  f"(angle error {metrics['terminal']['angle_error_rad']})")
        else:
            summary = reproduce(args.which, args.out, extended=args.extended)
            if not summary["passed"]:
                return EXIT_FAILURE
    except ValidationError as e:
        print(f"❌ {getattr(args, 'file', '')}: validation failed", file=sys.stderr)
        for v in e.violations:
            print(f"  {v}", file=sys.stderr)
        return EXIT_FAILURE
    except (AngleformError, OSError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
