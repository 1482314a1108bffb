"""
Management command to fuse estimated depth maps into a point cloud.

Reads `depths/<id>.pfm` and `depths/<id>_prob.pfm` from --output-dir,
applies the photometric and geometric consistency filters and writes
`fused.ply` next to them.

Usage:
    python manage.py fuse
    python manage.py fuse --fusion-eta 0.25 --fusion-min-views 2
"""

from pathlib import Path

from datasets.io import read_pfm
from datasets.layout import load_scene
from depthlab.exceptions import DataError
from fusion.fusion import fuse
from fusion.ply import write_ply
from geometry.depthmaps import DepthMap

from ..base import PipelineCommand
from ...inference import depth_name


def read_estimates(output_dir, views):
    """DepthMaps (with confidence) for the views that have an estimate, and those views."""
    depths_dir = Path(output_dir) / 'depths'
    maps, found = [], []
    for view in views:
        path = depths_dir / depth_name(view.id)
        if not path.exists():
            continue
        prob_path = depths_dir / depth_name(view.id, 'prob')
        confidence = read_pfm(prob_path) if prob_path.exists() else None
        maps.append(DepthMap(read_pfm(path), confidence=confidence))
        found.append(view)
    return maps, found


class Command(PipelineCommand):
    help = 'Fuse the depth maps in --output-dir into fused.ply.'

    def run(self, cfg, **options):
        scene = load_scene(cfg.scene_dir)
        views = [scene.views[view_id] for view_id in sorted(scene.views)]
        maps, found = read_estimates(cfg.output_dir, views)
        if not maps:
            raise DataError(f'No depth maps in {Path(cfg.output_dir) / "depths"}; run `depth` first.')
        if len(found) < len(views):
            self.stdout.write(self.style.WARNING(f'Only {len(found)} of {len(views)} views have depth maps.'))

        pairs = {p.reference: p.sources for p in scene.pairs}
        cloud = fuse(maps, found, cfg.fusion(), pairs=pairs)
        path = Path(cfg.output_dir) / 'fused.ply'
        write_ply(path, cloud)
        self.stdout.write(self.style.SUCCESS(f'Wrote {len(cloud)} points to {path}'))
