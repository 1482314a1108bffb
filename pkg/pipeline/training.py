"""
Two-stage training of the depth model on synthetic scenes.

The first `pretrain_epochs` optimise the sparse-depth and propagation
networks on the propagated map alone. Later epochs train every network
end to end on

    loss = L1(propagated, GT / 4) + refine_weight * L1(refined, GT / 2)

where GT / s is the ground truth sampled every s-th pixel and both terms
are means over valid pixels. Updates are RMSProp with a step-decayed
learning rate.
"""

import logging
from collections import namedtuple

import numpy as np

from autodiff import functional as F
from autodiff import ops
from autodiff.optim import rmsprop_step, step_decay_lr
from autodiff.tensor import Tape
from datasets.layout import ViewBundle
from datasets.scenes import render_scene, ring_pairs
from depthlab.exceptions import ConfigError, TrainingDiverged
from geometry.depthmaps import DepthMap

from .inference import estimate_depth

logger = logging.getLogger(__name__)

# Source views per training bundle, nearest on the camera arc first
TRAINING_SOURCES = 2

PRETRAIN = 'pretrain'
END_TO_END = 'end_to_end'

EpochStats = namedtuple('EpochStats', ['epoch', 'stage', 'lr', 'loss', 'full_loss'])
StepLoss = namedtuple('StepLoss', ['objective', 'full'])


def synthetic_bundles(cfg, first_scene=0, count=None):
    """Rendered ViewBundles (with ground truth) of `count` consecutive synthetic scenes."""
    count = cfg.num_scenes if count is None else count
    bundles = []
    for index in range(first_scene, first_scene + count):
        rendered = render_scene(cfg.scene_spec(index))
        views = {r.view.id: r.view for r in rendered}
        depths = {r.view.id: DepthMap(r.depth) for r in rendered}
        for pair in ring_pairs(len(rendered), TRAINING_SOURCES):
            bundles.append(ViewBundle(views[pair.reference], [views[v] for v in pair.sources],
                                      depths[pair.reference]))
    return bundles


def stage_of(epoch, cfg):
    return PRETRAIN if epoch < cfg.pretrain_epochs else END_TO_END


def trainable(model, stage):
    """Parameters updated in a stage: no Gauss-Newton features while pretraining."""
    if stage == PRETRAIN:
        return model.group('match', 'prop', 'reg')
    return list(model.parameters())


def loss_terms(trace, gt_depth):
    """
    (propagated, refined) L1 terms against ground truth on each map's grid;
    refined is None when refinement did not run.
    """
    quarter = gt_depth.downsampled(4)
    propagated = F.l1_loss_masked(trace.stages['propagated'], quarter.values, quarter.mask)
    refined = None
    if 'refined' in trace.stages:
        half = gt_depth.downsampled(2)
        refined = F.l1_loss_masked(trace.stages['refined'], half.values, half.mask)
    return propagated, refined


def depth_loss(trace, gt_depth, refine_weight=1.0):
    """L1 loss of the propagated map, plus the weighted refined term when refinement ran."""
    propagated, refined = loss_terms(trace, gt_depth)
    if refined is None:
        return propagated
    return ops.add(propagated, ops.mul(refined, float(refine_weight)))


def training_step(model, bundle, cfg, stage, lr):
    """
    Forward, backward and one RMSProp update on a single bundle.

    The whole pipeline runs in both stages so that `full` is always the
    complete loss; while pretraining only the propagated term is
    back-propagated. Returns StepLoss(objective, full).
    """
    if bundle.gt_depth is None:
        raise ConfigError(f'{bundle} has no ground truth to train on.')
    with Tape() as tape:
        trace = estimate_depth(bundle, model, cfg)
        propagated, refined = loss_terms(trace, bundle.gt_depth)
        full = ops.add(propagated, ops.mul(refined, float(cfg.refine_weight)))
        objective = propagated if stage == PRETRAIN else full
    losses = StepLoss(objective.item(), full.item())
    if not np.isfinite(losses.objective):
        return losses
    tape.backward(objective)
    params = trainable(model, stage)
    rmsprop_step(params, lr, cfg.rmsprop_decay, cfg.rmsprop_eps)
    for param in model.parameters():
        param.grad = None
    return losses


def train(model, bundles, cfg, on_epoch=None):
    """
    Train `model` in place for cfg.epochs epochs and return the EpochStats
    history. `on_epoch(stats)` is called after every epoch.

    `loss` is the epoch mean of the optimised objective and `full_loss`
    the epoch mean of the complete loss, comparable across stages.
    Bundles are visited in a seeded random order each epoch. A non-finite
    loss aborts with TrainingDiverged.
    """
    if not bundles:
        raise ConfigError('Training needs at least one scene.')
    rng = np.random.default_rng(cfg.seed)
    history = []
    for epoch in range(cfg.epochs):
        stage = stage_of(epoch, cfg)
        lr = step_decay_lr(cfg.lr, cfg.lr_decay, cfg.lr_decay_every, epoch)
        objectives, fulls = [], []
        for step, index in enumerate(rng.permutation(len(bundles))):
            losses = training_step(model, bundles[index], cfg, stage, lr)
            if not np.isfinite(losses.objective):
                raise TrainingDiverged(epoch, step, losses.objective, detail=f'{stage}, {bundles[index]}')
            objectives.append(losses.objective)
            fulls.append(losses.full)
        stats = EpochStats(epoch, stage, lr, float(np.mean(objectives)), float(np.mean(fulls)))
        history.append(stats)
        logger.info('epoch %d (%s): lr %.6g, mean loss %.4f, full loss %.4f',
                    epoch, stage, lr, stats.loss, stats.full_loss)
        if on_epoch is not None:
            on_epoch(stats)
    return history
