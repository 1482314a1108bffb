"""
Unit tests for end-to-end depth estimation on a synthetic scene with a
randomly initialised model.
"""

import tempfile
from pathlib import Path
from unittest import mock

import numpy as np
from django.test import SimpleTestCase

from datasets.io import read_pfm
from depthlab.exceptions import ConfigError, DataError, StageError
from networks.model import DepthModel
from pipeline.config import resolve_config
from pipeline.inference import STAGES, estimate_depth, load_model, stage_errors, write_outputs
from pipeline.training import synthetic_bundles


def toy_config(**changes):
    overrides = {'random_init': True, 'image_size': '64', 'num_views': '3', 'num_scenes': '1'}
    overrides.update(changes)
    return resolve_config(overrides)


class EstimateDepthTest(SimpleTestCase):
    """Tests for estimate_depth stage bookkeeping."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.cfg = toy_config()
        cls.model = load_model(cls.cfg)
        cls.bundle = synthetic_bundles(cls.cfg)[1]
        cls.trace = estimate_depth(cls.bundle, cls.model, cls.cfg)

    def test_every_stage_runs(self):
        """A full run records all five stages and their timings."""
        self.assertEqual(tuple(self.trace.stages), STAGES)
        self.assertEqual(set(self.trace.timings), set(STAGES))
        self.assertEqual(self.trace.final_stage, 'refined')
        self.assertEqual(self.trace.view_id, self.bundle.reference.id)

    def test_stage_resolutions(self):
        """Quarter resolution up to propagation, half resolution afterwards."""
        for name in ('sparse', 'densified', 'propagated'):
            self.assertEqual(self.trace.depth(name).shape, (16, 16))
        for name in ('upsampled', 'refined'):
            self.assertEqual(self.trace.depth(name).shape, (32, 32))
        self.assertEqual(self.trace.confidence.shape, (16, 16))
        self.assertEqual(self.trace.updated_mask.shape, (32, 32))

    def test_sparse_grid(self):
        """Only every other quarter-resolution pixel carries a sparse depth."""
        sparse = self.trace.depth('sparse')
        d_min, d_max = self.bundle.reference.depth_range
        cells = sparse[::2, ::2]
        self.assertTrue(np.all((cells >= d_min - 1e-9) & (cells <= d_max + 1e-9)))
        self.assertTrue(np.all(sparse[1::2, :] == 0))
        self.assertTrue(np.all(self.trace.confidence[1::2, :] == 0))

    def test_densified_copies_sparse_cells(self):
        """Densification keeps every sparse value in place."""
        np.testing.assert_array_equal(self.trace.depth('densified')[::2, ::2],
                                      self.trace.depth('sparse')[::2, ::2])

    def test_upsampling_replicates(self):
        """Each propagated pixel becomes a 2x2 block."""
        np.testing.assert_array_equal(self.trace.depth('upsampled')[::2, ::2],
                                      self.trace.depth('propagated'))

    def test_deterministic(self):
        """The same model and bundle give bit-identical depth."""
        again = estimate_depth(self.bundle, self.model, self.cfg)
        for name in STAGES:
            np.testing.assert_array_equal(again.depth(name), self.trace.depth(name))

    def test_zero_gn_iterations(self):
        """With no Gauss-Newton iterations the refined map equals the upsampled one."""
        trace = estimate_depth(self.bundle, self.model, self.cfg.replace(gn_iterations=0))
        np.testing.assert_array_equal(trace.depth('refined'), trace.depth('upsampled'))
        self.assertFalse(trace.updated_mask.any())

    def test_stop_after(self):
        """Stages after stop_after are absent."""
        trace = estimate_depth(self.bundle, self.model, self.cfg, stop_after='propagated')
        self.assertEqual(tuple(trace.stages), STAGES[:3])
        self.assertEqual(trace.final_stage, 'propagated')
        with self.assertRaises(ValueError):
            estimate_depth(self.bundle, self.model, self.cfg, stop_after='fused')

    def test_stage_errors(self):
        """Per-stage errors are finite and cover every executed stage."""
        errors = stage_errors(self.trace, self.bundle.gt_depth)
        self.assertEqual(set(errors), set(STAGES))
        self.assertTrue(all(np.isfinite(e) and e >= 0 for e in errors.values()))

    def test_failure_names_stage(self):
        """An error inside a stage surfaces as StageError with the stage label."""
        with mock.patch('pipeline.inference.refine_depth_map', side_effect=ConfigError('bad features')):
            with self.assertRaises(StageError) as ctx:
                estimate_depth(self.bundle, self.model, self.cfg)
        self.assertEqual(ctx.exception.stage, 'refined')
        self.assertIsInstance(ctx.exception.cause, ConfigError)

    def test_nearest_mode(self):
        """Nearest propagation leaves the densified map unchanged."""
        trace = estimate_depth(self.bundle, self.model, self.cfg.replace(prop_mode='nearest'),
                               stop_after='propagated')
        np.testing.assert_array_equal(trace.depth('propagated'), trace.depth('densified'))


class WriteOutputsTest(SimpleTestCase):
    """Tests for write_outputs."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cfg = toy_config(image_size='32')
        cls.trace = estimate_depth(synthetic_bundles(cfg)[0], load_model(cfg), cfg)

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_depth_and_confidence(self):
        """The final map and a same-size confidence in [0, 1] are written."""
        write_outputs(self.trace, self.root)
        depth = read_pfm(self.root / 'depths' / '00000000.pfm')
        prob = read_pfm(self.root / 'depths' / '00000000_prob.pfm')
        np.testing.assert_allclose(depth, self.trace.final, rtol=1e-6)
        self.assertEqual(prob.shape, depth.shape)
        self.assertTrue(np.all((prob >= 0) & (prob <= 1)))
        self.assertTrue(np.all(prob > 0))
        self.assertFalse((self.root / 'trace').exists())

    def test_trace_files(self):
        """with_stages writes one PFM per stage plus the sparse confidence."""
        write_outputs(self.trace, self.root, with_stages=True)
        names = sorted(p.name for p in (self.root / 'trace').iterdir())
        expected = sorted([f'00000000_{s}.pfm' for s in STAGES] + ['00000000_confidence.pfm'])
        self.assertEqual(names, expected)


class LoadModelTest(SimpleTestCase):
    """Tests for load_model."""

    def test_random_init(self):
        """random_init builds a seeded model without a checkpoint."""
        model = load_model(toy_config(checkpoint='/nonexistent/model.mvsf'))
        self.assertIsInstance(model, DepthModel)

    def test_missing_checkpoint(self):
        """Without random_init a missing checkpoint is a DataError."""
        with self.assertRaises(DataError):
            load_model(toy_config(random_init=False, checkpoint='/nonexistent/model.mvsf'))

    def test_checkpoint_round_trip(self):
        """A saved model is loaded with the configured width and window."""
        cfg = toy_config()
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'model.mvsf'
            DepthModel(width_scale=cfg.width_scale, prop_window=cfg.prop_window, seed=3).save(path)
            model = load_model(cfg.replace(random_init=False, checkpoint=str(path)))
        reference = DepthModel(width_scale=cfg.width_scale, prop_window=cfg.prop_window, seed=3)
        for name, value in reference.state_dict().items():
            np.testing.assert_array_equal(model.state_dict()[name], value)
