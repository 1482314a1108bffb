"""
Point-cloud accuracy and completeness.

Accuracy is the mean distance from each reconstructed point to its nearest
reference point; completeness is the mean distance the other way round.
"""

from collections import namedtuple

import numpy as np
from scipy.spatial import cKDTree

from depthlab.exceptions import DataError
from geometry.projection import backproject

from .fusion import PointCloud, resize_nearest, view_at_depth_scale

AccComp = namedtuple('AccComp', ['accuracy', 'completeness', 'overall'])
FScore = namedtuple('FScore', ['precision', 'recall', 'fscore'])


def _points(cloud, label):
    points = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    points = points.reshape(-1, 3)
    if not len(points):
        raise DataError(f'The {label} cloud is empty.')
    return points


def nearest_distances(source, target):
    """Distance from every point of `source` to its nearest point of `target`."""
    distances, _ = cKDTree(target).query(source)
    return distances


def eval_acc_comp(cloud, reference):
    """(accuracy, completeness, overall) in mm between two non-empty clouds."""
    points, truth = _points(cloud, 'reconstructed'), _points(reference, 'reference')
    accuracy = float(nearest_distances(points, truth).mean())
    completeness = float(nearest_distances(truth, points).mean())
    return AccComp(accuracy, completeness, (accuracy + completeness) / 2.0)


def f_score(cloud, reference, threshold):
    """Precision, recall and their harmonic mean at a distance threshold (mm)."""
    points, truth = _points(cloud, 'reconstructed'), _points(reference, 'reference')
    precision = float(np.mean(nearest_distances(points, truth) < threshold))
    recall = float(np.mean(nearest_distances(truth, points) < threshold))
    if precision + recall == 0:
        return FScore(precision, recall, 0.0)
    return FScore(precision, recall, 2 * precision * recall / (precision + recall))


def depth_maps_to_cloud(depth_maps, views, step=1):
    """Back-project every valid pixel (every `step`-th along each axis) into world space."""
    points, colors = [], []
    for depth, view in zip(depth_maps, views):
        camera = view_at_depth_scale(view, depth)
        mask = np.zeros(depth.shape, dtype=bool)
        mask[::step, ::step] = depth.mask[::step, ::step]
        rows, cols = np.nonzero(mask)
        pixels = np.stack([cols, rows], axis=1).astype(np.float64)
        local = backproject(pixels, depth.values[rows, cols], camera.intrinsics)
        points.append((local - camera.pose.translation) @ camera.pose.rotation)
        if view.image is None:
            colors.append(np.full((len(rows), 3), 255, dtype=np.uint8))
        else:
            image = resize_nearest(view.image, depth.shape)
            colors.append(np.round(image[rows, cols] * 255).astype(np.uint8))
    if not points:
        return PointCloud.empty()
    return PointCloud(np.concatenate(points), np.concatenate(colors))
