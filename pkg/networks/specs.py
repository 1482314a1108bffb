"""
Layer layouts of the four networks.

Widths are given at full scale and multiplied by `width_scale` (the toy
default 0.25 turns 8/16/32 into 2/4/8). Every 2-D layer pads by k // 2,
so a stride-2 layer maps output pixel j onto input pixel 2j.
"""

from dataclasses import dataclass

from depthlab.exceptions import ConfigError


class Activation:
    RELU = 'relu'
    NONE = 'none'


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kernel: int
    stride: int
    channels: int
    activation: str = Activation.RELU

    @property
    def padding(self):
        return self.kernel // 2


@dataclass(frozen=True)
class NetSpec:
    """
    Ordered layer descriptors of one network.

    `dims` is 2 for image networks and 3 for the cost-volume regulariser.
    """

    in_channels: int
    layers: tuple
    dims: int = 2

    def __post_init__(self):
        if not self.layers:
            raise ConfigError('A network needs at least one layer.')
        names = [layer.name for layer in self.layers]
        if len(set(names)) != len(names):
            raise ConfigError(f'Duplicate layer names in {names}.')
        for layer in self.layers:
            if layer.kernel < 1 or layer.kernel % 2 == 0:
                raise ConfigError(f'Layer {layer.name}: kernel must be odd, got {layer.kernel}.')
            if layer.stride < 1 or layer.channels < 1:
                raise ConfigError(f'Layer {layer.name}: stride and channels must be positive.')

    @property
    def out_channels(self):
        return self.layers[-1].channels

    @property
    def downsampling(self):
        factor = 1
        for layer in self.layers:
            factor *= layer.stride
        return factor

    def channels_of(self, name):
        for layer in self.layers:
            if layer.name == name:
                return layer.channels
        raise KeyError(name)


def scaled(channels, width_scale):
    if width_scale <= 0:
        raise ConfigError(f'width_scale must be positive, got {width_scale}.')
    return max(1, int(round(channels * width_scale)))


def _backbone(width_scale):
    s = width_scale
    return (
        LayerSpec('conv0', 3, 1, scaled(8, s)),
        LayerSpec('conv1', 3, 1, scaled(8, s)),
        LayerSpec('conv2', 5, 2, scaled(16, s)),
        LayerSpec('conv3', 3, 1, scaled(16, s)),
        LayerSpec('conv4', 3, 1, scaled(16, s)),
        LayerSpec('conv5', 5, 2, scaled(32, s)),
        LayerSpec('conv6', 3, 1, scaled(32, s)),
        LayerSpec('conv7', 3, 1, scaled(32, s), Activation.NONE),
    )


def match_feature_spec(width_scale=0.25):
    """The 8-layer image feature extractor (1/4 resolution output)."""
    return NetSpec(3, _backbone(width_scale))


def gn_feature_spec(width_scale=0.25):
    """Same backbone, trained separately; conv4 and conv7 form its pyramid."""
    return NetSpec(3, _backbone(width_scale))


def validate_window(k):
    if k < 3 or k % 2 == 0:
        raise ConfigError(f'Propagation window must be odd and at least 3, got {k}.')


def prop_weight_spec(k=3, width_scale=0.25):
    """Backbone plus a two-layer head predicting k*k logits per pixel."""
    validate_window(k)
    head = (
        LayerSpec('conv8', 3, 1, scaled(16, width_scale), Activation.NONE),
        LayerSpec('weights', 3, 1, k * k, Activation.NONE),
    )
    return NetSpec(3, _backbone(width_scale) + head)


def regularizer_spec(in_channels, width_scale=0.25):
    """Four stride-1 3-D layers collapsing the feature axis to one channel."""
    s = width_scale
    return NetSpec(in_channels, (
        LayerSpec('conv0', 3, 1, scaled(16, s)),
        LayerSpec('conv1', 3, 1, scaled(8, s)),
        LayerSpec('conv2', 3, 1, scaled(4, s)),
        LayerSpec('prob', 3, 1, 1, Activation.NONE),
    ), dims=3)
