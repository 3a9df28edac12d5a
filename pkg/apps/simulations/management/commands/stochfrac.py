import logging

from django.core.management.base import BaseCommand, CommandError

from apps.simulations.fluxes import FLUX_ALIASES, FluxScheme
from apps.simulations.services import SimulationService
from common.exceptions import format_errors, handle_exception

logger = logging.getLogger(__name__)

SUBCOMMANDS = {
    "solve": "Evolve one path and write the solution profiles",
    "rates": "Monte Carlo strong-error study and observed rates",
    "weights": "Write the fractional weights G_0 ... G_imax",
    "check": "Check the a priori estimates and the maximum principle",
}

# command-line flag -> configuration key
FLAG_KEYS = {
    "seed": "seed",
    "paths": "paths",
    "lambda_": "lambda",
    "dx": "dx",
    "dt": "dt",
    "T": "T",
    "K": "K",
    "flux": "flux",
    "sigma": "sigma",
    "preset": "preset",
    "out": "out",
    "threads": "threads",
    "trace": "trace",
    "imax": "imax",
    "problem": "problem",
}

VERBOSITY_LEVELS = {0: logging.WARNING, 1: logging.INFO, 2: logging.INFO}


def add_run_arguments(parser):
    parser.add_argument("--config", help="Flat 'key = value' configuration file")
    parser.add_argument("--seed", type=int, help="Root seed (unsigned 64-bit)")
    parser.add_argument("--paths", type=int, help="Number of Monte Carlo paths")
    parser.add_argument(
        "--lambda",
        dest="lambda_",
        help="Fractional order, or a comma separated list for 'rates'",
    )
    parser.add_argument("--dx", type=float, help="Cell width")
    parser.add_argument("--dt", type=float, help="Time step")
    parser.add_argument("--T", dest="T", type=float, help="Final time")
    parser.add_argument("--K", dest="K", type=int, help="Cells on each side of 0")
    parser.add_argument(
        "--flux", choices=[*FluxScheme.values, *FLUX_ALIASES], help="Numerical flux"
    )
    parser.add_argument("--sigma", choices=["on", "off"], help="Noise on or off")
    parser.add_argument("--preset", help="Named preset (desk, paper, ...)")
    parser.add_argument("--out", help="Output directory")
    parser.add_argument("--threads", type=int, help="Worker threads")
    parser.add_argument(
        "--trace", action="store_true", default=None, help="Write a per-step trace"
    )
    parser.add_argument("--imax", type=int, help="Largest weight index")
    parser.add_argument("--problem", help="Problem from the catalogue")


class Command(BaseCommand):
    help = "Finite volume solver for degenerate fractional stochastic conservation laws"
    requires_system_checks = []

    def add_arguments(self, parser):
        subparsers = parser.add_subparsers(dest="subcommand", required=True)
        for name, help_text in SUBCOMMANDS.items():
            add_run_arguments(subparsers.add_parser(name, help=help_text))

    def handle(self, *args, **options):
        verbosity = options.get("verbosity", 1)
        logging.getLogger("apps").setLevel(
            VERBOSITY_LEVELS.get(verbosity, logging.DEBUG)
        )
        subcommand = options["subcommand"]
        flags = {key: options.get(flag) for flag, key in FLAG_KEYS.items()}

        try:
            config, validated = SimulationService.build_config(
                flags, config_path=options.get("config")
            )
            out_dir = SimulationService.output_dir(validated.get("out"))
            if subcommand == "solve":
                written = SimulationService.solve(
                    config, out_dir, trace=validated.get("trace", False)
                )
            else:
                written = getattr(SimulationService, subcommand)(config, out_dir)
        except Exception as exc:
            code, payload = handle_exception(exc)
            raise CommandError(format_errors(payload), returncode=code) from exc

        for path in written:
            self.stdout.write(f"Wrote {path}")
