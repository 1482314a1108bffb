"""
Management command to run the verification suite, the pipeline's `check`
verb under a name that does not shadow Django's own `check` command.

Exits with status 3 when any check fails.

Usage:
    python manage.py verify
    python manage.py verify --group gradients --group io
"""

from django.core.management.base import CommandError

from ..base import EXIT_CHECK, PipelineCommand
from ...verification import GROUPS, run_checks


class Command(PipelineCommand):
    help = ('Run the gradient and invariant checks (the "check" verb; Django reserves '
            'the check command name); exit 3 on failure.')

    config_flags = False

    def add_arguments(self, parser):
        parser.add_argument(
            '--group',
            action='append',
            choices=GROUPS,
            help='Run only this check group (repeatable).',
        )

    def run(self, cfg, **options):
        results = run_checks(options['group'])
        for r in results:
            status = self.style.SUCCESS('PASS') if r.passed else self.style.ERROR('FAIL')
            line = f'{status}  {r.group:<13}{r.name:<38}{r.error:.3e} <= {r.tolerance:g}'
            if r.detail:
                line += f'  ({r.detail})'
            self.stdout.write(line)

        failed = [r for r in results if not r.passed]
        if failed:
            raise CommandError(f'{len(failed)} of {len(results)} checks failed.', returncode=EXIT_CHECK)
        self.stdout.write(self.style.SUCCESS(f'All {len(results)} checks passed.'))
