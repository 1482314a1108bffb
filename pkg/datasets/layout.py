"""
Scene directories and view bundles.

A scene directory holds

    images/00000000.ppm      reference images
    cams/00000000_cam.txt    cam files
    depths/00000000.pfm      ground-truth depth (optional)
    pair.txt                 pair list
    gt.ply                   ground-truth point cloud (optional, written by `synth`)
"""

import logging
from collections import namedtuple
from pathlib import Path

from depthlab.exceptions import DataError
from geometry.cameras import CameraView
from geometry.depthmaps import DepthMap

from .io import read_cam, read_image, read_pairs, read_pfm, write_cam, write_image, write_pairs, write_pfm
from .validators import validate_image_size, validate_pairs

logger = logging.getLogger(__name__)

Scene = namedtuple('Scene', ['views', 'depths', 'pairs'])


class ViewBundle:
    """A reference view, its ordered source views and optional ground truth."""

    def __init__(self, reference, sources, gt_depth=None):
        if any(src.id == reference.id for src in sources):
            raise DataError(f'View {reference.id} appears among its own sources.')
        self.reference = reference
        self.sources = list(sources)
        self.gt_depth = gt_depth

    def __repr__(self):
        return f'<ViewBundle ref={self.reference.id} sources={[s.id for s in self.sources]}>'

    @property
    def views(self):
        return [self.reference] + self.sources


def image_name(view_id):
    return f'{view_id:08d}.ppm'


def cam_name(view_id):
    return f'{view_id:08d}_cam.txt'


def depth_name(view_id):
    return f'{view_id:08d}.pfm'


def write_scene(directory, views, pairs, depths=None, num_planes=8):
    """Write views (and ground-truth depths keyed by view id) to `directory`."""
    directory = Path(directory)
    for view in views:
        write_image(directory / 'images' / image_name(view.id), view.image)
        write_cam(directory / 'cams' / cam_name(view.id), view.pose, view.intrinsics,
                  view.depth_range, num_planes)
    for view_id, depth in (depths or {}).items():
        values = depth.masked_values() if isinstance(depth, DepthMap) else depth
        write_pfm(directory / 'depths' / depth_name(view_id), values)
    write_pairs(directory / 'pair.txt', pairs)
    logger.info('Wrote %d views to %s', len(views), directory)


def load_scene(directory):
    """
    Load a scene directory written by write_scene (or laid out the same way).

    View ids come from the pair list; ground-truth depths are loaded when
    present.
    """
    directory = Path(directory)
    pair_path = directory / 'pair.txt'
    if not pair_path.exists():
        raise DataError(f'{directory} has no pair.txt')
    pairs = read_pairs(pair_path)
    view_ids = sorted({p.reference for p in pairs} | {v for p in pairs for v in p.sources})

    views, depths = {}, {}
    for view_id in view_ids:
        cam_path = directory / 'cams' / cam_name(view_id)
        image_path = directory / 'images' / image_name(view_id)
        if not cam_path.exists() or not image_path.exists():
            raise DataError(f'View {view_id} is missing its image or cam file in {directory}.')
        cam = read_cam(cam_path)
        image = read_image(image_path)
        validate_image_size(*image.shape[:2])
        views[view_id] = CameraView(view_id, image, cam.intrinsics, cam.pose, cam.depth_range)
        depth_path = directory / 'depths' / depth_name(view_id)
        if depth_path.exists():
            depths[view_id] = DepthMap(read_pfm(depth_path))
    validate_pairs(pairs, views)
    return Scene(views, depths, pairs)


def make_bundles(scene):
    """One ViewBundle per pair entry, in pair-list order."""
    return [
        ViewBundle(scene.views[p.reference], [scene.views[v] for v in p.sources],
                   scene.depths.get(p.reference))
        for p in scene.pairs
    ]
