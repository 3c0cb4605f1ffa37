"""Command-line entry point: ``korn-lab {constants,verify,korn,betti,convergence}``.

Exit codes: 0 all checks pass, 1 mathematical violation, 2 configuration
error, 3 numerical failure.
"""

import argparse
import logging
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any

from src.config.experiment import ExperimentConfig, load_experiment
from src.config.settings import get_settings, overridden_settings
from src.services.campaigns import get_campaign_service
from src.services.grid_fields import DomainKind
from src.utils.error_handler import run_guarded

logger = logging.getLogger(__name__)

COMMANDS = ("constants", "verify", "korn", "betti", "convergence")
_BC_FLAGS = {"full": "full_dirichlet", "tangential": "tangential"}


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML experiment file")
    common.add_argument("--domain", choices=[k.value for k in DomainKind], help="Domain kind")
    common.add_argument("--dimension", type=int, help="Ambient dimension N")
    common.add_argument(
        "--resolution",
        type=int,
        nargs="+",
        help="Vertex count per axis; several values form a refinement sweep",
    )
    common.add_argument("--seed", type=int, help="First seed")
    common.add_argument("--seed-count", type=int, help="Number of consecutive seeds starting at --seed")
    common.add_argument("--bc-mode", choices=sorted(_BC_FLAGS), help="Boundary condition space")
    common.add_argument("--family", choices=["generic", "skew", "compatible"], help="Tensor family for verify")
    common.add_argument("--format", choices=["csv", "json"], help="Report format")
    common.add_argument("--out", type=Path, help="Report path (suffix follows --format)")
    common.add_argument(
        "--deterministic-sum",
        action="store_true",
        help="Exactly rounded reductions and no timings, for byte-stable reports",
    )
    common.add_argument("--log-level", help="Logging level (default from KORNLAB_LOG_LEVEL)")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = argparse.ArgumentParser(
        prog="korn-lab",
        description="Discrete exterior calculus laboratory for Korn-type inequalities",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "constants": "Poincaré/Maxwell constants and harmonic dimensions per resolution",
        "verify": "Sharp constant against c_hat and the main-lemma chain over seeds",
        "korn": "Korn ratio and identity residual suite",
        "betti": "Harmonic Dirichlet dimensions for every degree",
        "convergence": "Refinement sweep with extrapolated constants",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def overrides_from_args(args: argparse.Namespace) -> dict[str, Any]:
    """Nested config overrides for every flag that was given."""
    overrides: dict[str, Any] = {}
    domain: dict[str, Any] = {}
    if args.domain:
        domain["kind"] = args.domain
    if args.dimension:
        domain["dimension"] = args.dimension
    if args.resolution:
        domain["resolutions"] = args.resolution
    if domain:
        overrides["domain"] = domain
    if args.seed is not None:
        overrides["seeds"] = [args.seed]
    if args.seed_count is not None:
        overrides["seed_count"] = args.seed_count
    if args.bc_mode:
        overrides["bc_mode"] = _BC_FLAGS[args.bc_mode]
    if args.family:
        overrides["field_family"] = args.family
    if args.format:
        overrides["output"] = {"format": args.format}
    return overrides


def report_path(config: ExperimentConfig, command: str, out: Path | None) -> Path:
    if out is not None:
        return out
    return Path(config.output.directory) / f"{config.output.report_name}-{command}"


def setup_logging(level: str | None) -> None:
    settings = get_settings()
    logging.basicConfig(
        level=getattr(logging, (level or settings.log_level).upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
    )


def main(argv: Sequence[str] | None = None) -> int:
    """Run one campaign and return its exit code."""
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)

    def campaign() -> int:
        config = load_experiment(args.config, overrides_from_args(args))
        logger.info(
            f"Starting {args.command} on {config.domain.kind.value} "
            f"N={config.domain.dimension} resolutions={config.domain.resolutions}"
        )
        report = get_campaign_service().run(args.command, config)
        path = report.write(report_path(config, args.command, args.out), config.output.format)
        print(path)
        return report.exit_code

    campaign.__name__ = f"cmd_{args.command}"
    if not args.deterministic_sum:
        return run_guarded(campaign)
    with overridden_settings(deterministic_sum=True):
        return run_guarded(campaign)


if __name__ == "__main__":
    sys.exit(main())
