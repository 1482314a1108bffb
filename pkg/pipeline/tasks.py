"""
Celery tasks for the pipeline application.

Depth estimation is independent per reference view, so the `depth`
command dispatches one task per pair-list entry. Arguments and results
are plain JSON values so the tasks run on a Redis-backed worker as well
as eagerly in development.
"""

import logging

from celery import shared_task

logger = logging.getLogger(__name__)


@shared_task
def estimate_view_depth(scene_dir, reference_id, config):
    """
    Estimate and write the depth map of one reference view.

    `config` is RunConfig.as_dict(). Returns a summary with the final
    stage, the output resolution, the stage timings and, when the scene
    has ground truth, the mean absolute error of every stage.
    """
    from datasets.layout import load_scene, make_bundles
    from depthlab.exceptions import DataError

    from .config import resolve_config
    from .inference import estimate_depth, load_model, stage_errors, write_outputs

    cfg = resolve_config(overrides=config, use_settings=False)
    scene = load_scene(scene_dir)
    bundle = next((b for b in make_bundles(scene) if b.reference.id == reference_id), None)
    if bundle is None:
        raise DataError(f'View {reference_id} is not a reference view in {scene_dir}.')

    trace = estimate_depth(bundle, load_model(cfg), cfg)
    write_outputs(trace, cfg.output_dir, with_stages=cfg.trace)

    summary = {
        'view_id': reference_id,
        'final_stage': trace.final_stage,
        'shape': list(trace.final.shape),
        'timings': trace.timings,
    }
    if bundle.gt_depth is not None:
        summary['errors'] = stage_errors(trace, bundle.gt_depth)
    logger.info('View %d done in %.2f s', reference_id, sum(trace.timings.values()))
    return summary
