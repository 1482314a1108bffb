"""
Management command to train the depth model on synthetic scenes.

Renders `num_scenes` scenes, pretrains the sparse-depth and propagation
networks for `pretrain_epochs`, trains end to end for `e2e_epochs` and
writes the parameters to --checkpoint. Every run and its per-epoch loss
is recorded in the database.

Usage:
    python manage.py train
    python manage.py train --num-scenes 3 --e2e-epochs 12 --seed 1
    python manage.py train --history   #  List previous runs
"""

from django.utils import timezone

from depthlab.exceptions import TrainingDiverged
from networks.model import DepthModel

from ..base import PipelineCommand
from ...models import EpochRecord, TrainingRun
from ...training import synthetic_bundles, train


class Command(PipelineCommand):
    help = 'Train the depth model on synthetic scenes and save a checkpoint.'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            '--history',
            action='store_true',
            help='List recorded training runs instead of training.',
        )

    def run(self, cfg, **options):
        if options['history']:
            self.show_history()
            return

        self.stdout.write(f'Rendering {cfg.num_scenes} training scenes...')
        bundles = synthetic_bundles(cfg)
        model = DepthModel(width_scale=cfg.width_scale, prop_window=cfg.prop_window, seed=cfg.seed)
        run = TrainingRun.objects.create(config=cfg.as_dict(), checkpoint=cfg.checkpoint)

        def record(stats):
            EpochRecord.objects.create(
                run=run,
                epoch=stats.epoch,
                stage=stats.stage,
                learning_rate=stats.lr,
                mean_loss=stats.loss,
                full_loss=stats.full_loss,
            )
            self.stdout.write(f'  epoch {stats.epoch:3d} [{stats.stage}] lr {stats.lr:.6f} '
                              f'loss {stats.loss:.4f} (full {stats.full_loss:.4f})')

        try:
            train(model, bundles, cfg, on_epoch=record)
        except TrainingDiverged as exc:
            self.finish(run, TrainingRun.Status.DIVERGED, str(exc))
            raise
        except Exception as exc:
            self.finish(run, TrainingRun.Status.FAILED, f'{type(exc).__name__}: {exc}')
            raise

        model.save(cfg.checkpoint)
        self.finish(run, TrainingRun.Status.COMPLETED)
        self.stdout.write(self.style.SUCCESS(
            f'Trained {cfg.epochs} epochs on {len(bundles)} bundles; saved {cfg.checkpoint}'
        ))

    def finish(self, run, status, message=''):
        run.status = status
        run.message = message
        run.finished_at = timezone.now()
        run.save()

    def show_history(self):
        runs = TrainingRun.objects.all()
        if not runs:
            self.stdout.write('No training runs recorded.')
            return
        for run in runs:
            loss = run.final_loss
            loss = '-' if loss is None else f'{loss:.4f}'
            self.stdout.write(
                f'{run.pk:4d}  {run.started_at:%Y-%m-%d %H:%M}  {run.status:<10}'
                f'{run.epochs.count():3d} epochs  final loss {loss}  {run.checkpoint}'
            )
