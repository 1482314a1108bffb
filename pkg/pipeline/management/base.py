"""
Shared base for the pipeline management commands.

Every RunConfig field becomes a long-form flag (`--gn-iterations 0`,
`--trace/--no-trace`), and `--config` names a flat key=value file. Errors
leave the command as CommandError with the exit status

    0  ok
    1  usage or configuration error
    2  missing or malformed data, a failed stage, diverged training
    3  verification failure
"""

import argparse
import dataclasses
import sys
from functools import partial

from django.core.management.base import BaseCommand, CommandError

from depthlab.exceptions import ConfigError, DataError, StageError, TrainingDiverged

from ..config import RunConfig, resolve_config

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_CHECK = 3


def _usage_error(parser, message):
    if parser.called_from_command_line:
        parser.print_usage(sys.stderr)
        parser.exit(EXIT_USAGE, f'{parser.prog}: error: {message}\n')
    raise CommandError(f'Error: {message}', returncode=EXIT_USAGE)


class PipelineCommand(BaseCommand):
    """
    BaseCommand with RunConfig flags and exit-code mapping.

    Subclasses implement run(cfg, **options) instead of handle(); cfg is
    None when `config_flags` is False.
    """

    config_flags = True

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        parser.error = partial(_usage_error, parser)
        return parser

    def add_arguments(self, parser):
        if not self.config_flags:
            return
        parser.add_argument('--config', help='Flat key=value file; flags override its values.')
        group = parser.add_argument_group('run configuration')
        for field in dataclasses.fields(RunConfig):
            flag = '--' + field.name.replace('_', '-')
            if field.type is bool:
                group.add_argument(flag, dest=field.name, action=argparse.BooleanOptionalAction, default=None)
            else:
                group.add_argument(flag, dest=field.name, default=None, metavar=field.name.upper())

    def handle(self, *args, **options):
        try:
            cfg = None
            if self.config_flags:
                overrides = {f.name: options.get(f.name) for f in dataclasses.fields(RunConfig)}
                cfg = resolve_config(overrides, config_file=options.get('config'))
            return self.run(cfg, **options)
        except ConfigError as exc:
            raise CommandError(' '.join(exc.messages), returncode=EXIT_USAGE) from exc
        except (DataError, StageError, TrainingDiverged) as exc:
            raise CommandError(str(exc), returncode=EXIT_DATA) from exc

    def run(self, cfg, **options):
        raise NotImplementedError('subclasses of PipelineCommand must provide a run() method')
