"""
Standalone entry point: ``python -m apps.simulations.cli solve --lambda 0.5``.

Same command as ``manage.py stochfrac`` but returns the exit code (0 ok,
1 invalid input, 2 numerical abort) instead of leaving it to Django.
"""

import os
import sys

import django
from django.core.management.base import CommandError

from common.exceptions import EXIT_OK


def main(argv=None) -> int:
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "config.settings")
    django.setup()

    from apps.simulations.management.commands.stochfrac import Command

    argv = sys.argv[1:] if argv is None else list(argv)
    command = Command()
    try:
        parser = command.create_parser("stochfrac", "stochfrac")
        options = vars(parser.parse_args(argv))
        args = options.pop("args", ())
        command.execute(*args, **options)
    except CommandError as exc:
        sys.stderr.write(f"stochfrac: {exc}\n")
        return exc.returncode
    except SystemExit as exc:
        # --help and argparse usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_OK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
