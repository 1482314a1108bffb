"""
Unit tests for ConvNet and the three image-network operations.
"""

import numpy as np
from django.test import SimpleTestCase

from autodiff import ops
from autodiff.gradcheck import gradient_check
from autodiff.tensor import Tensor
from depthlab.exceptions import ConfigError
from networks.nets import (
    ConvNet, extract_gn_features, extract_match_features, image_tensor, predict_prop_weights,
)
from networks.specs import (
    Activation, LayerSpec, NetSpec, gn_feature_spec, match_feature_spec, prop_weight_spec,
)


def random_image(size=64, seed=0):
    return np.random.default_rng(seed).uniform(size=(size, size, 3))


def make_positive(net, seed=0):
    """Positive weights and biases keep every ReLU in its linear region."""
    rng = np.random.default_rng(seed)
    for name, weight in net.weights.items():
        weight.data[...] = rng.uniform(0.0, 0.1, size=weight.shape)
        net.biases[name].data[...] = 0.5


def weighted_sum(t, weights):
    return ops.sum(ops.mul(t, Tensor(weights)))


class ConvNetTest(SimpleTestCase):
    """Tests for ConvNet construction and forward passes."""

    def test_parameter_names_and_shapes(self):
        """Parameters are namespaced by prefix and layer."""
        net = ConvNet(match_feature_spec(), 'match')
        names = [p.name for p in net.parameters()]
        self.assertEqual(names[:2], ['match.conv0.weight', 'match.conv0.bias'])
        self.assertEqual(len(names), 16)
        self.assertEqual(net.weights['conv2'].shape, (4, 2, 5, 5))

    def test_glorot_bounds(self):
        """Initial weights lie within the Glorot-uniform limit; biases are zero."""
        net = ConvNet(match_feature_spec(), 'match', np.random.default_rng(3))
        weight = net.weights['conv0']
        limit = np.sqrt(6.0 / (3 * 9 + 2 * 9))
        self.assertLessEqual(np.abs(weight.data).max(), limit)
        np.testing.assert_array_equal(net.biases['conv0'].data, 0.0)

    def test_taps_return_intermediate_outputs(self):
        """Requested layers are returned alongside the output."""
        net = ConvNet(gn_feature_spec(), 'gn')
        out, taps = net(image_tensor(random_image(16)), taps=('conv4',))
        self.assertEqual(out.shape, (8, 4, 4))
        self.assertEqual(taps['conv4'].shape, (4, 8, 8))

    def test_flip_equivariance_with_symmetric_weights(self):
        """A stride-1 net with mirror-symmetric kernels commutes with horizontal flips."""
        spec = NetSpec(3, (
            LayerSpec('a', 3, 1, 4),
            LayerSpec('b', 5, 1, 3),
            LayerSpec('c', 3, 1, 2, Activation.NONE),
        ))
        net = ConvNet(spec, 'sym', np.random.default_rng(5))
        for weight in net.weights.values():
            weight.data[...] = 0.5 * (weight.data + weight.data[..., ::-1])
        image = random_image(16, seed=2)
        out = net(image_tensor(image)).data
        flipped = net(image_tensor(image[:, ::-1])).data
        np.testing.assert_allclose(flipped, out[..., ::-1], atol=1e-12)


class MatchFeaturesTest(SimpleTestCase):
    """Tests for extract_match_features."""

    def setUp(self):
        self.net = ConvNet(match_feature_spec(), 'match', np.random.default_rng(1))

    def test_quarter_resolution_output(self):
        """A 64x64 image gives 16x16 features."""
        features = extract_match_features(random_image(), self.net)
        self.assertEqual(features.shape, (8, 16, 16))

    def test_deterministic(self):
        """Identical images give identical features."""
        image = random_image()
        a = extract_match_features(image, self.net).data
        b = extract_match_features(image.copy(), self.net).data
        np.testing.assert_array_equal(a, b)

    def test_zero_weights_give_bias_map(self):
        """With all weights zero the output is the last layer's bias everywhere."""
        for weight in self.net.weights.values():
            weight.data[...] = 0.0
        self.net.biases['conv7'].data[...] = np.arange(8.0)
        features = extract_match_features(random_image(), self.net).data
        for c in range(8):
            np.testing.assert_array_equal(features[c], np.full((16, 16), float(c)))

    def test_indivisible_size_rejected(self):
        """Height and width must be multiples of 8."""
        with self.assertRaises(ConfigError):
            extract_match_features(np.zeros((60, 64, 3)), self.net)

    def test_gradient(self):
        """Gradients w.r.t. the image and a weight match finite differences."""
        make_positive(self.net)
        image = Tensor(image_tensor(random_image(8)).data)
        mix = np.random.default_rng(4).normal(size=(8, 2, 2))
        weight = self.net.weights['conv3']

        # `weight` is the network's own parameter, so perturbing it perturbs the net
        error = gradient_check(lambda img, _w: weighted_sum(extract_match_features(img, self.net), mix),
                               [image, weight], max_entries=20)
        self.assertLess(error, 1e-4)


class PropWeightsTest(SimpleTestCase):
    """Tests for predict_prop_weights."""

    def setUp(self):
        self.net = ConvNet(prop_weight_spec(3), 'prop', np.random.default_rng(2))

    def test_shape_and_normalisation(self):
        """k=3 gives 9 x 16 x 16 positive weights summing to one per pixel."""
        weights = predict_prop_weights(random_image(), self.net, 3).data
        self.assertEqual(weights.shape, (9, 16, 16))
        self.assertTrue((weights > 0).all())
        np.testing.assert_allclose(weights.sum(axis=0), 1.0, atol=1e-12)

    def test_zero_final_layer_is_uniform(self):
        """A zeroed final layer predicts 1/k^2 everywhere."""
        self.net.weights['weights'].data[...] = 0.0
        self.net.biases['weights'].data[...] = 0.0
        weights = predict_prop_weights(random_image(), self.net, 3).data
        np.testing.assert_allclose(weights, 1.0 / 9.0, atol=1e-15)

    def test_even_window_rejected(self):
        """Even and too-small windows are configuration errors."""
        with self.assertRaises(ConfigError):
            predict_prop_weights(random_image(), self.net, 4)
        with self.assertRaises(ConfigError):
            prop_weight_spec(2)

    def test_window_must_match_network(self):
        """A k=5 request on a k=3 network is rejected."""
        with self.assertRaises(ConfigError):
            predict_prop_weights(random_image(), self.net, 5)

    def test_gradient(self):
        """Softmax weights are differentiable w.r.t. the image."""
        make_positive(self.net, seed=1)
        image = Tensor(image_tensor(random_image(8, seed=3)).data)
        mix = np.random.default_rng(6).normal(size=(9, 2, 2))
        error = gradient_check(lambda img: weighted_sum(predict_prop_weights(img, self.net, 3), mix),
                               [image], max_entries=20)
        self.assertLess(error, 1e-4)


class GNFeaturesTest(SimpleTestCase):
    """Tests for extract_gn_features."""

    def setUp(self):
        self.net = ConvNet(gn_feature_spec(), 'gn', np.random.default_rng(3))

    def test_pyramid_shapes(self):
        """The half-resolution map concatenates conv4 and upsampled conv7."""
        pyramid = extract_gn_features(random_image(), self.net)
        self.assertEqual(pyramid.quarter_res.shape, (8, 16, 16))
        self.assertEqual(pyramid.half_res.shape, (12, 32, 32))

    def test_full_width_channel_count(self):
        """At full width the concatenation has 16 + 32 = 48 channels."""
        net = ConvNet(gn_feature_spec(1.0), 'gn')
        pyramid = extract_gn_features(random_image(16), net)
        self.assertEqual(pyramid.half_res.shape, (48, 8, 8))

    def test_half_res_contains_conv4(self):
        """The first channels of half_res are the conv4 activations."""
        image = random_image()
        _, taps = self.net(image_tensor(image), taps=('conv4',))
        pyramid = extract_gn_features(image, self.net)
        np.testing.assert_array_equal(pyramid.half_res.data[:4], taps['conv4'].data)

    def test_constant_image_gives_constant_interior(self):
        """Away from zero-padding effects, a constant image gives constant features."""
        pyramid = extract_gn_features(np.full((64, 64, 3), 0.4), self.net)
        quarter = pyramid.quarter_res.data[:, 5:11, 5:11]
        half = pyramid.half_res.data[:, 10:20, 10:20]
        for block in (quarter, half):
            spread = block.max(axis=(1, 2)) - block.min(axis=(1, 2))
            self.assertLess(spread.max(), 1e-12)

    def test_deterministic(self):
        """Repeated calls give identical pyramids."""
        image = random_image()
        a = extract_gn_features(image, self.net)
        b = extract_gn_features(image, self.net)
        np.testing.assert_array_equal(a.half_res.data, b.half_res.data)
        np.testing.assert_array_equal(a.quarter_res.data, b.quarter_res.data)

    def test_gradient(self):
        """The pyramid is differentiable w.r.t. the image."""
        make_positive(self.net, seed=2)
        image = Tensor(image_tensor(random_image(8, seed=4)).data)
        rng = np.random.default_rng(8)
        mix_half = rng.normal(size=(12, 4, 4))
        mix_quarter = rng.normal(size=(8, 2, 2))

        def f(img):
            pyramid = extract_gn_features(img, self.net)
            return ops.add(weighted_sum(pyramid.half_res, mix_half),
                           weighted_sum(pyramid.quarter_res, mix_quarter))

        self.assertLess(gradient_check(f, [image], max_entries=20), 1e-4)
