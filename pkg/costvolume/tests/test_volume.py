"""
Unit tests for hypothesis sampling, the sparse cost volume, regularisation
and soft-argmax depth regression.
"""

import numpy as np
from django.test import SimpleTestCase

from autodiff import ops
from autodiff.gradcheck import gradient_check
from autodiff.tensor import Tensor
from costvolume.volume import (
    UNUSABLE_COST, build_sparse_cost_volume, hypotheses_from_cam, regularize, sample_hypotheses,
    soft_argmax_depth, sparse_grid,
)
from datasets.scenes import SceneSpec, render_scene
from depthlab.exceptions import ConfigError
from geometry.cameras import CameraView, Intrinsics, Pose
from networks.nets import ConvNet
from networks.specs import Activation, LayerSpec, NetSpec, regularizer_spec


def camera(view_id=0, translation=(0.0, 0.0, 0.0), rotation=None):
    rotation = np.eye(3) if rotation is None else rotation
    return CameraView(view_id, None, Intrinsics(8.0, 8.0, 3.5, 3.5), Pose(rotation, translation),
                      (400.0, 750.0))


def channel_first(image):
    return np.moveaxis(image, -1, 0).copy()


def linear_regularizer(channels, seed=0):
    spec = NetSpec(channels, (
        LayerSpec('conv0', 3, 1, 2, Activation.NONE),
        LayerSpec('prob', 3, 1, 1, Activation.NONE),
    ), dims=3)
    return ConvNet(spec, 'reg', np.random.default_rng(seed))


class HypothesesTest(SimpleTestCase):
    """Tests for sample_hypotheses."""

    def test_endpoints(self):
        """Two planes are the range endpoints."""
        np.testing.assert_array_equal(sample_hypotheses((425.0, 921.0), 2), [425.0, 921.0])

    def test_midpoint(self):
        """Three planes add the midpoint."""
        np.testing.assert_allclose(sample_hypotheses((425.0, 921.0), 3), [425.0, 673.0, 921.0])

    def test_spacing(self):
        """48 planes over 425-921 mm are 496/47 mm apart."""
        planes = sample_hypotheses((425.0, 921.0), 48)
        np.testing.assert_allclose(np.diff(planes), 496.0 / 47.0, rtol=1e-12)
        self.assertAlmostEqual(np.diff(planes)[0], 10.553, places=3)

    def test_too_few_planes_rejected(self):
        """Fewer than two planes is a configuration error."""
        with self.assertRaises(ConfigError):
            sample_hypotheses((425.0, 921.0), 1)

    def test_from_cam_interval(self):
        """d_min and interval describe the same planes."""
        np.testing.assert_allclose(hypotheses_from_cam(425.0, 2.5, 5), [425.0, 427.5, 430.0, 432.5, 435.0])


class SparseGridTest(SimpleTestCase):
    """Tests for sparse_grid."""

    def test_cell_count(self):
        """An H x W map has ceil(H/2) * ceil(W/2) cells starting at (0, 0)."""
        pixels, shape = sparse_grid(7, 6)
        self.assertEqual(shape, (4, 3))
        self.assertEqual(len(pixels), 12)
        np.testing.assert_array_equal(pixels[:4], [[0, 0], [2, 0], [4, 0], [0, 2]])


class CostVolumeTest(SimpleTestCase):
    """Tests for build_sparse_cost_volume."""

    def setUp(self):
        self.rng = np.random.default_rng(11)
        self.planes = sample_hypotheses((400.0, 750.0), 4)

    def test_identical_views_have_zero_variance(self):
        """Identical cameras and features give zero cost everywhere."""
        feats = self.rng.normal(size=(3, 8, 8))
        volume = build_sparse_cost_volume(feats, [feats.copy()], camera(0), [camera(1)], self.planes)
        self.assertEqual(volume.data.shape, (3, 4, 4, 4))
        np.testing.assert_allclose(volume.data.data, 0.0, atol=1e-12)
        self.assertFalse(volume.unusable.any())

    def test_variance_formula(self):
        """Three views give the population variance of their three samples."""
        r, x, y = 0.3, 1.1, -0.4
        ref = np.full((1, 8, 8), r)
        sources = [np.full((1, 8, 8), x), np.full((1, 8, 8), y)]
        volume = build_sparse_cost_volume(ref, sources, camera(0), [camera(1), camera(2)], self.planes)
        m = (r + x + y) / 3
        expected = ((x - m) ** 2 + (y - m) ** 2 + (r - m) ** 2) / 3
        np.testing.assert_allclose(volume.data.data, expected, rtol=1e-12)

    def test_variance_is_non_negative(self):
        """Random features and a translated source give non-negative costs."""
        ref = self.rng.normal(size=(4, 8, 8))
        src = self.rng.normal(size=(4, 8, 8))
        volume = build_sparse_cost_volume(ref, [src], camera(0), [camera(1, (30.0, 0.0, 0.0))], self.planes)
        self.assertTrue((volume.data.data >= 0).all())

    def test_out_of_frame_cells_are_unusable(self):
        """A source that sees none of the cells flags every cell."""
        feats = self.rng.normal(size=(2, 8, 8))
        far = camera(1, (5000.0, 0.0, 0.0))
        volume = build_sparse_cost_volume(feats, [feats], camera(0), [far], self.planes)
        self.assertTrue(volume.unusable.all())
        np.testing.assert_array_equal(volume.data.data, UNUSABLE_COST)

    def test_behind_camera_samples_excluded(self):
        """A source facing away contributes nothing."""
        feats = self.rng.normal(size=(2, 8, 8))
        turned = camera(1, rotation=np.diag([-1.0, 1.0, -1.0]))
        volume = build_sparse_cost_volume(feats, [feats], camera(0), [turned], self.planes)
        self.assertTrue(volume.unusable.all())

    def test_requires_a_source(self):
        """An empty source list is a configuration error."""
        with self.assertRaises(ConfigError):
            build_sparse_cost_volume(np.zeros((1, 8, 8)), [], camera(0), [], self.planes)

    def test_argmin_recovers_plane_depth(self):
        """On a fronto-parallel textured plane the cheapest plane is the true depth."""
        spec = SceneSpec(height=32, width=32, num_views=3, depth_range=(400.0, 750.0), arc_degrees=40.0,
                         focal_factor=1.0, texture_period=200.0, noise_cell=200.0)
        rendered = render_scene(spec)
        ref, sources = rendered[1].view, [rendered[0].view, rendered[2].view]
        planes = sample_hypotheses(spec.depth_range, 8)
        self.assertEqual(planes[2], 500.0)

        volume = build_sparse_cost_volume(
            channel_first(ref.image), [channel_first(v.image) for v in sources], ref, sources, planes)
        cost = volume.data.data.sum(axis=0)
        best = cost.argmin(axis=0)[3:13, 3:13]
        self.assertGreaterEqual(np.mean(best == 2), 0.95)


class RegularizeTest(SimpleTestCase):
    """Tests for regularize."""

    def setUp(self):
        self.volume = np.random.default_rng(2).uniform(size=(8, 8, 8, 8))

    def test_probabilities_sum_to_one(self):
        """The output is a distribution over hypotheses per cell."""
        net = ConvNet(regularizer_spec(8), 'reg', np.random.default_rng(0))
        prob = regularize(self.volume, net)
        self.assertEqual(prob.shape, (8, 8, 8))
        np.testing.assert_allclose(prob.data.sum(axis=0), 1.0, atol=1e-12)

    def test_zero_network_is_uniform(self):
        """A zeroed regulariser gives 1/N everywhere."""
        net = ConvNet(regularizer_spec(8), 'reg')
        for weight in net.weights.values():
            weight.data[...] = 0.0
        np.testing.assert_allclose(regularize(self.volume, net).data, 1.0 / 8.0, atol=1e-15)

    def test_non_finite_volume_rejected(self):
        """NaN costs are rejected."""
        self.volume[0, 0, 0, 0] = np.nan
        with self.assertRaises(ConfigError):
            regularize(self.volume, ConvNet(regularizer_spec(8), 'reg'))


class SoftArgmaxTest(SimpleTestCase):
    """Tests for soft_argmax_depth."""

    def test_one_hot_gives_plane_depth(self):
        """A one-hot distribution regresses exactly to its plane."""
        planes = sample_hypotheses((425.0, 921.0), 8)
        prob = np.zeros((8, 2, 2))
        prob[5] = 1.0
        sparse = soft_argmax_depth(prob, planes, (4, 4))
        np.testing.assert_array_equal(sparse.values.data[::2, ::2], planes[5])
        np.testing.assert_array_equal(sparse.confidence[::2, ::2], 1.0)

    def test_uniform_gives_range_midpoint(self):
        """A uniform distribution regresses to (d_min + d_max) / 2."""
        planes = sample_hypotheses((425.0, 921.0), 8)
        sparse = soft_argmax_depth(np.full((8, 2, 2), 1.0 / 8.0), planes, (4, 4))
        np.testing.assert_allclose(sparse.values.data[::2, ::2], 673.0, rtol=1e-12)
        np.testing.assert_allclose(sparse.confidence[::2, ::2], 0.5, rtol=1e-12)

    def test_two_planes(self):
        """(0.5, 0.5) on {425, 921} gives 673 mm with confidence one."""
        sparse = soft_argmax_depth(np.full((2, 1, 1), 0.5), [425.0, 921.0], (2, 2))
        self.assertEqual(sparse.values.data[0, 0], 673.0)
        self.assertEqual(sparse.confidence[0, 0], 1.0)

    def test_mask_is_the_sparse_grid(self):
        """Exactly the stride-2 cells are masked, and only they carry values."""
        prob = np.full((4, 3, 4), 0.25)
        sparse = soft_argmax_depth(prob, [400.0, 500.0, 600.0, 700.0], (5, 8))
        self.assertEqual(sparse.mask.sum(), 12)
        self.assertTrue(sparse.mask[0, 0] and sparse.mask[4, 6])
        self.assertFalse(sparse.mask[1, 0] or sparse.mask[0, 1])
        np.testing.assert_array_equal(sparse.values.data[~sparse.mask], 0.0)

    def test_depth_within_range(self):
        """Regressed depth is a convex combination of the planes."""
        logits = np.random.default_rng(0).normal(size=(6, 3, 3)) * 4
        prob = np.exp(logits) / np.exp(logits).sum(axis=0)
        planes = sample_hypotheses((400.0, 700.0), 6)
        values = soft_argmax_depth(prob, planes, (6, 6)).values.data[::2, ::2]
        self.assertTrue(((values >= 400.0) & (values <= 700.0)).all())

    def test_gradient_through_volume(self):
        """Soft-argmax depth is differentiable w.r.t. the input features."""
        rendered = render_scene(SceneSpec(height=8, width=8, num_views=2, arc_degrees=10.0))
        ref, src = rendered[0].view, rendered[1].view
        planes = sample_hypotheses(ref.depth_range, 4)
        net = linear_regularizer(3, seed=1)
        mix = np.random.default_rng(3).normal(size=(8, 8))

        def f(ref_feats, src_feats):
            volume = build_sparse_cost_volume(ref_feats, [src_feats], ref, [src], planes)
            sparse = soft_argmax_depth(regularize(volume, net), planes, (8, 8))
            return ops.sum(ops.mul(sparse.values, Tensor(mix)))

        inputs = [Tensor(channel_first(ref.image)), Tensor(channel_first(src.image))]
        self.assertLess(gradient_check(f, inputs, max_entries=15), 1e-4)
