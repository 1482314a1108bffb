"""
Convolutional networks over autodiff tensors, and the three image-network
operations of the pipeline: matching features, propagation weights and
the two-scale Gauss-Newton feature pyramid.

Batch normalisation is replaced by a learnable bias; images are
channel-first 3 x H x W tensors.
"""

from collections import namedtuple

import numpy as np

from autodiff import functional as F
from autodiff import ops
from autodiff.tensor import Parameter, Tensor, as_tensor
from depthlab.exceptions import ConfigError

from .specs import Activation, validate_window

FeaturePyramid = namedtuple('FeaturePyramid', ['quarter_res', 'half_res'])


class ConvNet:
    """
    A plain stack of convolutions built from a NetSpec.

    Parameters are named `<prefix>.<layer>.weight` / `.bias`. Weights use
    Glorot-uniform initialisation from `rng`; biases start at zero.
    """

    def __init__(self, spec, prefix, rng=None):
        self.spec = spec
        self.prefix = prefix
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights = {}
        self.biases = {}
        channels = spec.in_channels
        for layer in spec.layers:
            shape = (layer.channels, channels) + (layer.kernel,) * spec.dims
            taps = layer.kernel ** spec.dims
            limit = np.sqrt(6.0 / (channels * taps + layer.channels * taps))
            self.weights[layer.name] = Parameter(
                rng.uniform(-limit, limit, size=shape), name=f'{prefix}.{layer.name}.weight'
            )
            self.biases[layer.name] = Parameter(
                np.zeros(layer.channels), name=f'{prefix}.{layer.name}.bias'
            )
            channels = layer.channels

    def __repr__(self):
        return f'<ConvNet {self.prefix}: {len(self.spec.layers)} layers>'

    def parameters(self):
        for layer in self.spec.layers:
            yield self.weights[layer.name]
            yield self.biases[layer.name]

    def forward(self, x, taps=()):
        """
        Run the stack on `x`; returns the output, or (output, {name: tensor})
        when intermediate layer outputs are requested through `taps`.
        """
        conv = F.conv2d if self.spec.dims == 2 else F.conv3d
        captured = {}
        for layer in self.spec.layers:
            x = conv(x, self.weights[layer.name], self.biases[layer.name],
                     stride=layer.stride, padding=layer.padding)
            if layer.activation == Activation.RELU:
                x = ops.relu(x)
            if layer.name in taps:
                captured[layer.name] = x
        return (x, captured) if taps else x

    __call__ = forward


def image_tensor(image):
    """H x W x 3 image array -> 3 x H x W tensor; tensors pass through as channel-first."""
    if isinstance(image, Tensor):
        return image
    return as_tensor(np.moveaxis(np.asarray(image, dtype=np.float64), -1, 0))


def check_image_size(image):
    height, width = image.shape[-2:]
    if height % 8 or width % 8:
        raise ConfigError(f'Image size {height}x{width} must be divisible by 8.')


def extract_match_features(image, net):
    """F x H/4 x W/4 matching features of a 3 x H x W image."""
    image = image_tensor(image)
    check_image_size(image)
    return net(image)


def predict_prop_weights(image, net, k):
    """k*k x H/4 x W/4 per-pixel window weights, normalised by a channel softmax."""
    validate_window(k)
    if net.spec.out_channels != k * k:
        raise ConfigError(f'Weight network predicts {net.spec.out_channels} channels, expected {k * k}.')
    image = image_tensor(image)
    check_image_size(image)
    return F.softmax(net(image), axis=0)


def extract_gn_features(image, net):
    """
    Two-scale features for Gauss-Newton refinement.

    half_res concatenates conv4 (1/2 resolution) with conv7 bilinearly
    upsampled onto the same grid; quarter_res is conv7 itself.
    """
    image = image_tensor(image)
    check_image_size(image)
    conv7, taps = net(image, taps=('conv4',))
    conv4 = taps['conv4']
    upsampled = F.bilinear_resize(conv7, conv4.shape[1], conv4.shape[2])
    return FeaturePyramid(conv7, ops.concat([conv4, upsampled], axis=0))
