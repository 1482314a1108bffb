"""
The four networks of the pipeline bundled for training and checkpointing.

Parameter names are namespaced by network (`match.*`, `prop.*`, `gn.*`,
`reg.*`) so one checkpoint holds the whole model and the training loop can
select per-stage parameter groups.
"""

import logging

import numpy as np

from autodiff.checkpoint import load_checkpoint, save_checkpoint
from depthlab.exceptions import DataError

from .nets import ConvNet
from .specs import gn_feature_spec, match_feature_spec, prop_weight_spec, regularizer_spec

logger = logging.getLogger(__name__)

PREFIXES = ('match', 'prop', 'gn', 'reg')


class DepthModel:
    """Matching, propagation-weight, Gauss-Newton feature and regulariser nets."""

    def __init__(self, width_scale=0.25, prop_window=3, seed=0):
        self.width_scale = width_scale
        self.prop_window = prop_window
        rng = np.random.default_rng(seed)
        self.match = ConvNet(match_feature_spec(width_scale), 'match', rng)
        self.prop = ConvNet(prop_weight_spec(prop_window, width_scale), 'prop', rng)
        self.gn = ConvNet(gn_feature_spec(width_scale), 'gn', rng)
        self.reg = ConvNet(regularizer_spec(self.match.spec.out_channels, width_scale), 'reg', rng)

    def __repr__(self):
        return f'<DepthModel width_scale={self.width_scale} k={self.prop_window}>'

    @property
    def nets(self):
        return {'match': self.match, 'prop': self.prop, 'gn': self.gn, 'reg': self.reg}

    def parameters(self):
        for net in self.nets.values():
            yield from net.parameters()

    def group(self, *prefixes):
        """Parameters of the named networks, e.g. group('match', 'prop', 'reg')."""
        unknown = set(prefixes) - set(PREFIXES)
        if unknown:
            raise KeyError(f'Unknown parameter groups {sorted(unknown)}')
        return [p for prefix in prefixes for p in self.nets[prefix].parameters()]

    def state_dict(self):
        return {p.name: p.data.copy() for p in self.parameters()}

    def load_state_dict(self, state):
        """Copy arrays into the parameters; names and shapes must match exactly."""
        params = {p.name: p for p in self.parameters()}
        missing = sorted(set(params) - set(state))
        unexpected = sorted(set(state) - set(params))
        if missing or unexpected:
            raise DataError(f'Checkpoint does not fit the model: missing {missing}, unexpected {unexpected}')
        for name, param in params.items():
            array = np.asarray(state[name], dtype=np.float64)
            if array.shape != param.shape:
                raise DataError(f'{name}: checkpoint shape {array.shape} != model shape {param.shape}')
            param.data[...] = array
            param.accumulator[...] = 0.0

    def save(self, path):
        save_checkpoint(path, [(p.name, p.data) for p in self.parameters()])

    @classmethod
    def load(cls, path, width_scale=0.25, prop_window=3):
        model = cls(width_scale=width_scale, prop_window=prop_window)
        model.load_state_dict(load_checkpoint(path))
        logger.info('Loaded %s from %s', model, path)
        return model
