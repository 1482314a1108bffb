"""
Tests for the synth, depth, fuse, eval, train and verify management
commands, run through call_command.
"""

import tempfile
from io import StringIO
from pathlib import Path
from unittest import mock

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import TestCase

from pipeline.management.commands.verify import Command as VerifyCommand
from pipeline.models import EpochRecord, TrainingRun
from pipeline.training import StepLoss
from pipeline.verification import CheckResult

TOY = {'image_size': '32', 'num_views': '3'}


def directory_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(Path(root).rglob('*')) if p.is_file()}


class CommandTestCase(TestCase):
    """Temporary scene and output directories for command tests."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)
        self.scene_dir = str(self.root / 'scene')
        self.output_dir = str(self.root / 'output')

    def tearDown(self):
        self.tmp.cleanup()

    def call(self, name, **options):
        out = StringIO()
        call_command(name, stdout=out, **options)
        return out.getvalue()


class SynthCommandTest(CommandTestCase):
    """Tests for the synth command."""

    def test_writes_scene(self):
        """synth writes images, cams, depths, pairs and the ground-truth cloud."""
        self.call('synth', scene_dir=self.scene_dir, **TOY)
        scene = Path(self.scene_dir)
        self.assertEqual(len(list((scene / 'images').iterdir())), 3)
        self.assertEqual(len(list((scene / 'cams').iterdir())), 3)
        self.assertEqual(len(list((scene / 'depths').iterdir())), 3)
        self.assertTrue((scene / 'pair.txt').exists())
        self.assertTrue((scene / 'gt.ply').exists())

    def test_same_seed_is_byte_identical(self):
        """Two runs with --seed 7 produce identical directories."""
        first, second = str(self.root / 'a'), str(self.root / 'b')
        self.call('synth', scene_dir=first, seed='7', **TOY)
        self.call('synth', scene_dir=second, seed='7', **TOY)
        self.assertEqual(directory_bytes(first), directory_bytes(second))

    def test_seed_changes_scene(self):
        """A different seed gives different images."""
        first, second = str(self.root / 'a'), str(self.root / 'b')
        self.call('synth', scene_dir=first, seed='7', **TOY)
        self.call('synth', scene_dir=second, seed='8', **TOY)
        self.assertNotEqual(directory_bytes(first), directory_bytes(second))

    def test_invalid_value_is_usage_error(self):
        """An out-of-range flag exits with status 1."""
        with self.assertRaises(CommandError) as ctx:
            self.call('synth', scene_dir=self.scene_dir, image_size='30')
        self.assertEqual(ctx.exception.returncode, 1)

    def test_config_file(self):
        """Values come from --config, and unknown keys there are usage errors."""
        config = self.root / 'run.cfg'
        config.write_text(f'scene_dir = {self.scene_dir}\nimage-size = 32\nnum_views = 2\n')
        self.call('synth', config=str(config))
        self.assertEqual(len(list((Path(self.scene_dir) / 'images').iterdir())), 2)

        config.write_text('views = 2\n')
        with self.assertRaises(CommandError) as ctx:
            self.call('synth', config=str(config))
        self.assertEqual(ctx.exception.returncode, 1)


class DepthFuseEvalCommandTest(CommandTestCase):
    """Tests for depth, fuse and eval on a synthesised scene."""

    def setUp(self):
        super().setUp()
        self.call('synth', scene_dir=self.scene_dir, **TOY)
        self.paths = {'scene_dir': self.scene_dir, 'output_dir': self.output_dir}

    def test_depth_writes_every_view(self):
        """depth writes a map and a confidence per reference view."""
        out = self.call('depth', random_init=True, **self.paths, **TOY)
        depths = sorted(p.name for p in (Path(self.output_dir) / 'depths').iterdir())
        self.assertEqual(len(depths), 6)
        self.assertIn('00000002_prob.pfm', depths)
        self.assertIn('refined 16x16', out)

    def test_single_view_with_trace(self):
        """--view restricts the run and --trace writes the stage maps."""
        self.call('depth', random_init=True, view=[1], trace=True, **self.paths, **TOY)
        self.assertEqual(sorted(p.name for p in (Path(self.output_dir) / 'depths').iterdir()),
                         ['00000001.pfm', '00000001_prob.pfm'])
        self.assertEqual(len(list((Path(self.output_dir) / 'trace').iterdir())), 6)

    def test_unknown_view_is_data_error(self):
        """Asking for a view that is not in the pair list exits with status 2."""
        with self.assertRaises(CommandError) as ctx:
            self.call('depth', random_init=True, view=[9], **self.paths, **TOY)
        self.assertEqual(ctx.exception.returncode, 2)

    def test_missing_checkpoint_is_data_error(self):
        """Without a checkpoint or --random-init the run stops with status 2."""
        with self.assertRaises(CommandError) as ctx:
            self.call('depth', checkpoint=str(self.root / 'absent.mvsf'), **self.paths, **TOY)
        self.assertEqual(ctx.exception.returncode, 2)

    def test_missing_scene_is_data_error(self):
        """A scene directory without a pair list exits with status 2."""
        with self.assertRaises(CommandError) as ctx:
            self.call('depth', random_init=True, scene_dir=str(self.root / 'nowhere'))
        self.assertEqual(ctx.exception.returncode, 2)

    def test_fuse_and_eval(self):
        """fuse writes fused.ply and eval reports per-view depth errors."""
        self.call('depth', random_init=True, **self.paths, **TOY)
        self.call('fuse', fusion_min_views='2', **self.paths)
        self.assertTrue((Path(self.output_dir) / 'fused.ply').exists())
        out = self.call('eval', **self.paths)
        self.assertIn('Depth MAE', out)
        self.assertIn('Evaluation finished.', out)

    def test_fuse_without_depths(self):
        """fuse before depth exits with status 2."""
        with self.assertRaises(CommandError) as ctx:
            self.call('fuse', **self.paths)
        self.assertEqual(ctx.exception.returncode, 2)

    def test_eval_ground_truth_cloud(self):
        """Evaluating the ground-truth cloud against itself scores zero."""
        output = Path(self.output_dir)
        output.mkdir()
        (output / 'fused.ply').write_bytes((Path(self.scene_dir) / 'gt.ply').read_bytes())
        out = self.call('eval', threshold=[1.0], **self.paths)
        self.assertIn(f'{"fused":<12}{0.0:>10.4f}{0.0:>10.4f}{0.0:>10.4f}', out)
        self.assertIn(f'{1.0:<12g}{1.0:>10.4f}{1.0:>10.4f}{1.0:>10.4f}', out)


class TrainCommandTest(CommandTestCase):
    """Tests for the train command and its history."""

    def test_empty_history(self):
        """--history without runs says so."""
        self.assertIn('No training runs recorded.', self.call('train', history=True))

    def test_train_records_run(self):
        """A one-epoch run saves a checkpoint and records its epoch."""
        checkpoint = self.root / 'model.mvsf'
        self.call('train', checkpoint=str(checkpoint), num_scenes='1', pretrain_epochs='1',
                  e2e_epochs='0', **TOY)
        self.assertTrue(checkpoint.exists())
        run = TrainingRun.objects.get()
        self.assertEqual(run.status, TrainingRun.Status.COMPLETED)
        self.assertIsNotNone(run.finished_at)
        self.assertEqual(run.config['image_size'], 32)
        record = EpochRecord.objects.get()
        self.assertEqual((record.epoch, record.stage), (0, EpochRecord.Stage.PRETRAIN))
        self.assertGreater(record.full_loss, record.mean_loss)
        self.assertIn(str(checkpoint), self.call('train', history=True))

    def test_divergence_is_recorded(self):
        """A diverged run is marked as such and exits with status 2."""
        with mock.patch('pipeline.training.training_step', return_value=StepLoss(float('inf'), float('inf'))):
            with self.assertRaises(CommandError) as ctx:
                self.call('train', checkpoint=str(self.root / 'model.mvsf'), num_scenes='1', **TOY)
        self.assertEqual(ctx.exception.returncode, 2)
        run = TrainingRun.objects.get()
        self.assertEqual(run.status, TrainingRun.Status.DIVERGED)
        self.assertIn('diverged', run.message)
        self.assertFalse((self.root / 'model.mvsf').exists())


class VerifyCommandTest(CommandTestCase):
    """Tests for the verify command."""

    def test_io_group_passes(self):
        """The file-format checks pass."""
        out = self.call('verify', group=['io'])
        self.assertIn('PASS', out)
        self.assertNotIn('FAIL', out)
        self.assertIn('All 4 checks passed.', out)

    def test_failure_exits_three(self):
        """A failing check exits with status 3."""
        failed = [CheckResult('io', 'pfm_round_trip', 1.0, 0.0, False, '')]
        with mock.patch('pipeline.management.commands.verify.run_checks', return_value=failed):
            with self.assertRaises(CommandError) as ctx:
                self.call('verify')
        self.assertEqual(ctx.exception.returncode, 3)

    def test_help_names_check_verb(self):
        """The help text says verify is the check verb."""
        self.assertIn('"check" verb', VerifyCommand.help)

    def test_unknown_group_is_usage_error(self):
        """An unknown group is rejected by the parser."""
        with self.assertRaises(CommandError) as ctx:
            self.call('verify', group=['speed'])
        self.assertEqual(ctx.exception.returncode, 1)
