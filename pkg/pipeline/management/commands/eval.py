"""
Management command to evaluate a reconstruction against ground truth.

Compares --output-dir/fused.ply with the scene's gt.ply (accuracy,
completeness, overall and F-scores) and every estimated depth map with
the ground-truth depth on the same grid.

Usage:
    python manage.py eval
    python manage.py eval --threshold 0.5 --threshold 2
"""

from pathlib import Path

import numpy as np

from datasets.io import read_pfm
from datasets.layout import load_scene
from depthlab.exceptions import DataError
from fusion.evaluation import eval_acc_comp, f_score
from fusion.ply import read_ply

from ..base import PipelineCommand
from ...inference import depth_name

DEFAULT_THRESHOLDS = (0.5, 1.0, 2.0)


def depth_errors(scene, output_dir):
    """Mean absolute error of every estimated depth map with ground truth, by view id."""
    errors = {}
    for view_id, gt in sorted(scene.depths.items()):
        path = Path(output_dir) / 'depths' / depth_name(view_id)
        if not path.exists():
            continue
        estimate = read_pfm(path)
        factor = max(gt.shape[0] // estimate.shape[0], 1)
        truth = gt.downsampled(factor)
        if truth.shape != estimate.shape:
            raise DataError(f'{path} is {estimate.shape}, ground truth is {gt.shape}.')
        mask = truth.mask & (estimate > 0)
        if mask.any():
            errors[view_id] = float(np.abs(estimate - truth.values)[mask].mean())
    return errors


class Command(PipelineCommand):
    help = 'Evaluate fused.ply and the depth maps in --output-dir against ground truth.'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            '--threshold',
            type=float,
            action='append',
            help='F-score distance threshold in mm (repeatable).',
        )

    def run(self, cfg, **options):
        scene = load_scene(cfg.scene_dir)
        fused_path = Path(cfg.output_dir) / 'fused.ply'
        errors = depth_errors(scene, cfg.output_dir)
        if not errors and not fused_path.exists():
            raise DataError(f'Nothing to evaluate in {cfg.output_dir}; run `depth` first.')

        self.report_cloud(fused_path, Path(cfg.scene_dir) / 'gt.ply',
                          options['threshold'] or DEFAULT_THRESHOLDS)
        if errors:
            self.stdout.write('')
            self.stdout.write(f'{"View":<12}{"Depth MAE":>10}')
            for view_id, error in errors.items():
                self.stdout.write(f'{view_id:<12}{error:>10.4f}')
            self.stdout.write(f'{"mean":<12}{np.mean(list(errors.values())):>10.4f}')
        self.stdout.write(self.style.SUCCESS('Evaluation finished.'))

    def report_cloud(self, fused_path, gt_path, thresholds):
        if not fused_path.exists() or not gt_path.exists():
            self.stdout.write(self.style.WARNING(f'Skipping point-cloud metrics: need {fused_path} and {gt_path}.'))
            return
        cloud, reference = read_ply(fused_path), read_ply(gt_path)
        if not len(cloud):
            self.stdout.write(self.style.WARNING(f'{fused_path} holds no points.'))
            return

        scores = eval_acc_comp(cloud, reference)
        self.stdout.write(f'{"Method":<12}{"Acc.":>10}{"Comp.":>10}{"Overall":>10}')
        self.stdout.write(f'{"fused":<12}{scores.accuracy:>10.4f}{scores.completeness:>10.4f}{scores.overall:>10.4f}')
        self.stdout.write('')
        self.stdout.write(f'{"tau (mm)":<12}{"Prec.":>10}{"Recall":>10}{"F-score":>10}')
        for threshold in thresholds:
            fs = f_score(cloud, reference, threshold)
            self.stdout.write(f'{threshold:<12g}{fs.precision:>10.4f}{fs.recall:>10.4f}{fs.fscore:>10.4f}')
