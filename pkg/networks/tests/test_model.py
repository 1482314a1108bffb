"""
Unit tests for the DepthModel bundle and its checkpoints.
"""

import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from autodiff.checkpoint import save_checkpoint
from depthlab.exceptions import DataError
from networks.model import DepthModel


class DepthModelTest(SimpleTestCase):
    """Tests for DepthModel parameters, groups and persistence."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = Path(self.tmp.name) / 'model.mvsf'

    def tearDown(self):
        self.tmp.cleanup()

    def test_namespaced_parameters(self):
        """Every parameter name starts with its network prefix."""
        model = DepthModel()
        prefixes = {p.name.split('.')[0] for p in model.parameters()}
        self.assertEqual(prefixes, {'match', 'prop', 'gn', 'reg'})
        self.assertEqual(len(model.state_dict()), len(list(model.parameters())))

    def test_regulariser_reads_match_channels(self):
        """The 3-D regulariser takes as many channels as the matching features."""
        model = DepthModel()
        self.assertEqual(model.reg.spec.in_channels, model.match.spec.out_channels)
        self.assertEqual(model.reg.weights['conv0'].ndim, 5)

    def test_groups(self):
        """group() selects parameters by network."""
        model = DepthModel()
        gn_names = {p.name for p in model.group('gn')}
        self.assertTrue(all(name.startswith('gn.') for name in gn_names))
        self.assertEqual(len(model.group('match', 'prop')),
                         len(model.group('match')) + len(model.group('prop')))
        with self.assertRaises(KeyError):
            model.group('decoder')

    def test_seeded_initialisation(self):
        """Equal seeds give equal weights; different seeds do not."""
        a, b, c = DepthModel(seed=4), DepthModel(seed=4), DepthModel(seed=5)
        for name, value in a.state_dict().items():
            np.testing.assert_array_equal(value, b.state_dict()[name])
        self.assertFalse(np.array_equal(a.match.weights['conv0'].data, c.match.weights['conv0'].data))

    def test_save_load_round_trip(self):
        """A saved model loads back bit-exactly."""
        model = DepthModel(seed=9)
        model.save(self.path)
        loaded = DepthModel.load(self.path)
        for name, value in model.state_dict().items():
            np.testing.assert_array_equal(loaded.state_dict()[name], value)

    def test_mismatched_checkpoint_rejected(self):
        """Missing names or wrong shapes are data errors."""
        state = DepthModel().state_dict()
        state.pop('gn.conv7.bias')
        save_checkpoint(self.path, state)
        with self.assertRaises(DataError):
            DepthModel.load(self.path)

        state = DepthModel().state_dict()
        with self.assertRaises(DataError):
            DepthModel(prop_window=5).load_state_dict(state)
