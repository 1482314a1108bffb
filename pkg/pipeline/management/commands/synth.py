"""
Management command to render a synthetic scene to disk.

Writes images, cam files, ground-truth depth maps, the pair list and the
ground-truth point cloud (gt.ply) of one SceneSpec realisation. Output is
byte-identical for identical settings.

Usage:
    python manage.py synth
    python manage.py synth --seed 7 --scene-dir data/scene7
    python manage.py synth --surface sphere --num-views 4
    python manage.py synth --scene-index 3   # a scene held out from training
"""

from pathlib import Path

from datasets.layout import write_scene
from datasets.scenes import render_scene, ring_pairs
from fusion.evaluation import depth_maps_to_cloud
from fusion.ply import write_ply
from geometry.depthmaps import DepthMap

from ..base import PipelineCommand


class Command(PipelineCommand):
    help = 'Render a synthetic calibrated scene with ground truth into --scene-dir.'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            '--scene-index',
            type=int,
            default=0,
            help='Render the n-th scene of the seed sequence (training uses 0 .. num_scenes - 1).',
        )

    def run(self, cfg, **options):
        spec = cfg.scene_spec(options['scene_index'])
        self.stdout.write(f'Rendering {spec.num_views} views of a {spec.surface} scene (seed {spec.seed})...')
        rendered = render_scene(spec)

        views = [r.view for r in rendered]
        depths = {r.view.id: DepthMap(r.depth) for r in rendered}
        directory = Path(cfg.scene_dir)
        write_scene(directory, views, ring_pairs(len(views)), depths, num_planes=cfg.n_planes)
        cloud = depth_maps_to_cloud([depths[v.id] for v in views], views)
        write_ply(directory / 'gt.ply', cloud)

        self.stdout.write(self.style.SUCCESS(
            f'Wrote {len(views)} views and a {len(cloud)}-point ground-truth cloud to {directory}'
        ))
