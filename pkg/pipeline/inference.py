"""
End-to-end depth estimation for one reference view.

Stages, in order: a sparse quarter-resolution depth map from the cost
volume, nearest densification, propagation, 2x upsampling to half
resolution and Gauss-Newton refinement. Each stage is timed and any
failure is re-raised as a StageError naming the stage.
"""

import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from autodiff import functional as F
from costvolume.volume import build_sparse_cost_volume, regularize, sample_hypotheses, soft_argmax_depth
from datasets.io import write_pfm
from depthlab.exceptions import DataError, DepthLabError, StageError
from fusion.fusion import resize_nearest
from networks.model import DepthModel
from networks.nets import extract_gn_features, extract_match_features, predict_prop_weights
from propagation.propagate import PropagationMode, densify_nearest, nearest_cell_index, propagate
from refinement.gauss_newton import refine_depth_map

logger = logging.getLogger(__name__)

STAGES = ('sparse', 'densified', 'propagated', 'upsampled', 'refined')


@dataclass
class PipelineTrace:
    """
    Per-stage depth maps of one reference view.

    `stages` maps a stage name to its depth tensor and holds exactly the
    stages that ran; `confidence` is the sparse map's quarter-resolution
    confidence.
    """

    view_id: int
    stages: dict = field(default_factory=dict)
    confidence: np.ndarray = None
    timings: dict = field(default_factory=dict)
    updated_mask: np.ndarray = None

    def depth(self, stage):
        return self.stages[stage].data

    @property
    def final_stage(self):
        return next(name for name in reversed(STAGES) if name in self.stages)

    @property
    def final(self):
        return self.depth(self.final_stage)


@contextmanager
def _stage(trace, name):
    start = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except (DepthLabError, ValueError, ArithmeticError) as exc:
        raise StageError(name, exc) from exc
    trace.timings[name] = time.perf_counter() - start
    logger.debug('view %d: %s took %.3f s', trace.view_id, name, trace.timings[name])


def load_model(cfg):
    """The model named by cfg.checkpoint, or a seeded random one with cfg.random_init."""
    if cfg.random_init:
        return DepthModel(width_scale=cfg.width_scale, prop_window=cfg.prop_window, seed=cfg.seed)
    if not Path(cfg.checkpoint).exists():
        raise DataError(f'Checkpoint {cfg.checkpoint} does not exist; train first or use --random-init.')
    return DepthModel.load(cfg.checkpoint, width_scale=cfg.width_scale, prop_window=cfg.prop_window)


def estimate_depth(bundle, model, cfg, stop_after='refined'):
    """
    Run the pipeline on a ViewBundle and return its PipelineTrace.

    Stages after `stop_after` are skipped. Runs inside an active Tape are
    differentiable end to end.
    """
    if stop_after not in STAGES:
        raise ValueError(f'Unknown stage "{stop_after}"; choose from {STAGES}.')
    last = STAGES.index(stop_after)
    ref, sources = bundle.reference, bundle.sources
    trace = PipelineTrace(ref.id)

    with _stage(trace, 'sparse'):
        ref_feats = extract_match_features(ref.image, model.match)
        src_feats = [extract_match_features(v.image, model.match) for v in sources]
        scale = ref_feats.shape[2] / ref.width
        hypotheses = sample_hypotheses(ref.depth_range, cfg.n_planes)
        volume = build_sparse_cost_volume(ref_feats, src_feats, ref.at_scale(scale),
                                          [v.at_scale(scale) for v in sources], hypotheses)
        sparse = soft_argmax_depth(regularize(volume, model.reg), hypotheses, ref_feats.shape[1:])
        trace.stages['sparse'] = sparse.values
        trace.confidence = sparse.confidence
    if last < 1:
        return trace

    with _stage(trace, 'densified'):
        trace.stages['densified'] = densify_nearest(sparse)
    if last < 2:
        return trace

    with _stage(trace, 'propagated'):
        prop_cfg = cfg.propagation()
        weights = None
        if prop_cfg.mode == PropagationMode.LEARNED:
            weights = predict_prop_weights(ref.image, model.prop, prop_cfg.k)
        trace.stages['propagated'] = propagate(sparse, prop_cfg, image=ref.image, weights=weights)
    if last < 3:
        return trace

    with _stage(trace, 'upsampled'):
        trace.stages['upsampled'] = F.nearest_upsample2x(trace.stages['propagated'])
    if last < 4:
        return trace

    with _stage(trace, 'refined'):
        ref_half = extract_gn_features(ref.image, model.gn).half_res
        src_half = [extract_gn_features(v.image, model.gn).half_res for v in sources]
        result = refine_depth_map(trace.stages['upsampled'], ref, sources, ref_half, src_half,
                                  cfg.gauss_newton())
        trace.stages['refined'] = result.depth
        trace.updated_mask = result.updated_mask
    return trace


def stage_errors(trace, gt_depth):
    """Mean absolute error of every executed stage against ground truth on its own grid."""
    errors = {}
    for name, tensor in trace.stages.items():
        factor = gt_depth.shape[0] // tensor.shape[0]
        gt = gt_depth.downsampled(factor)
        mask = gt.mask
        if name == 'sparse':
            mask = mask & (tensor.data > 0)
        errors[name] = float(np.abs(tensor.data - gt.values)[mask].mean())
    return errors


def depth_name(view_id, stage=None):
    return f'{view_id:08d}.pfm' if stage is None else f'{view_id:08d}_{stage}.pfm'


def write_outputs(trace, directory, with_stages=False):
    """
    Write the final depth map and its confidence (`<id>_prob.pfm`, same grid) to
    `directory`; with_stages adds one PFM per executed stage under trace/.
    """
    directory = Path(directory)
    write_pfm(directory / 'depths' / depth_name(trace.view_id), trace.final)
    write_pfm(directory / 'depths' / depth_name(trace.view_id, 'prob'), _dense_confidence(trace))
    if with_stages:
        for name in trace.stages:
            write_pfm(directory / 'trace' / depth_name(trace.view_id, name), trace.depth(name))
        write_pfm(directory / 'trace' / depth_name(trace.view_id, 'confidence'), trace.confidence)
    logger.info('Wrote depth of view %d to %s', trace.view_id, directory)


def _dense_confidence(trace):
    """Sparse confidence filled from the nearest cell, on the final depth grid."""
    confidence = trace.confidence
    cells = confidence > 0
    if cells.any():
        confidence = confidence.reshape(-1)[nearest_cell_index(cells)]
    return np.clip(resize_nearest(confidence, trace.final.shape), 0.0, 1.0)
