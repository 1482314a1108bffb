"""
Management command to estimate depth maps for the views of a scene.

Dispatches one Celery task per reference view of the scene's pair list
(run in-process in development) and writes `depths/<id>.pfm` plus the
confidence map `depths/<id>_prob.pfm` to --output-dir. With --trace every
pipeline stage is written under `trace/` as well.

Usage:
    python manage.py depth --random-init
    python manage.py depth --checkpoint data/model.mvsf --view 2
    python manage.py depth --gn-iterations 0 --trace
"""

from datasets.layout import load_scene
from depthlab.exceptions import DataError

from ..base import PipelineCommand
from ...inference import STAGES, load_model
from ...tasks import estimate_view_depth


class Command(PipelineCommand):
    help = 'Estimate a depth map for every reference view of --scene-dir.'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            '--view',
            type=int,
            action='append',
            help='Only this reference view id (repeatable).',
        )

    def run(self, cfg, **options):
        scene = load_scene(cfg.scene_dir)
        references = [p.reference for p in scene.pairs]
        if options['view']:
            missing = sorted(set(options['view']) - set(references))
            if missing:
                raise DataError(f'Views {missing} are not reference views in {cfg.scene_dir}.')
            references = [r for r in references if r in options['view']]
        # fail before dispatching if the checkpoint is missing or does not fit
        load_model(cfg)

        self.stdout.write(f'Estimating depth for {len(references)} views...')
        pending = [estimate_view_depth.delay(cfg.scene_dir, ref, cfg.as_dict()) for ref in references]
        summaries = [result.get() for result in pending]

        for summary in summaries:
            line = f'  view {summary["view_id"]}: {summary["final_stage"]} {summary["shape"][0]}x{summary["shape"][1]}'
            if 'errors' in summary:
                errors = summary['errors']
                line += '  MAE ' + ' '.join(f'{s}={errors[s]:.3f}' for s in STAGES if s in errors)
            self.stdout.write(line)
        self.stdout.write(self.style.SUCCESS(f'Wrote {len(summaries)} depth maps to {cfg.output_dir}'))
