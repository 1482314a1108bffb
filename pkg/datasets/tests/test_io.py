"""
Unit tests for cam files, pair lists, PFM maps and PPM images.
"""

import struct
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from scipy.spatial.transform import Rotation

from datasets.io import (
    Pair, read_cam, read_image, read_pairs, read_pfm, write_cam, write_image, write_pairs, write_pfm,
)
from depthlab.exceptions import ParseError
from geometry.cameras import Intrinsics, Pose

CAM_FIXTURE = """extrinsic
0.0 -1.0 0.0 12.5
1.0 0.0 0.0 -3.0
0.0 0.0 1.0 400.0
0.0 0.0 0.0 1.0

intrinsic
361.54 0.0 82.9
0.0 360.39 66.38
0.0 0.0 1.0

425.0 2.5
"""


class TempDirMixin:
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()


class CamFileTest(TempDirMixin, SimpleTestCase):
    """Tests for read_cam and write_cam."""

    def test_fixture_fields(self):
        """A hand-written MVSNet cam file parses to the expected fields."""
        path = self.root / 'cam.txt'
        path.write_text(CAM_FIXTURE)
        cam = read_cam(path)
        np.testing.assert_array_equal(cam.pose.rotation, [[0, -1, 0], [1, 0, 0], [0, 0, 1]])
        np.testing.assert_array_equal(cam.pose.translation, [12.5, -3.0, 400.0])
        self.assertEqual(cam.intrinsics, Intrinsics(361.54, 360.39, 82.9, 66.38))
        self.assertEqual(cam.num_planes, 192)
        self.assertEqual(cam.depth_range, (425.0, 425.0 + 2.5 * 191))

    def test_plane_count_override(self):
        """Without a tail, d_max follows the requested plane count."""
        path = self.root / 'cam.txt'
        path.write_text(CAM_FIXTURE)
        self.assertEqual(read_cam(path, num_planes=48).depth_range, (425.0, 425.0 + 2.5 * 47))

    def test_round_trip(self):
        """write_cam then read_cam reproduces every value."""
        rng = np.random.default_rng(4)
        pose = Pose(Rotation.from_rotvec(rng.normal(size=3)).as_matrix(), rng.normal(size=3) * 50)
        intrinsics = Intrinsics(*rng.uniform(50, 500, size=4))
        path = self.root / 'cams' / 'a.txt'
        write_cam(path, pose, intrinsics, (425.0, 921.0), 48)
        cam = read_cam(path)
        self.assertEqual(cam.pose, pose)
        self.assertEqual(cam.intrinsics, intrinsics)
        self.assertEqual(cam.depth_range, (425.0, 921.0))
        self.assertEqual(cam.num_planes, 48)

    def test_identity_extrinsic(self):
        """An identity extrinsic parses to the identity pose."""
        path = self.root / 'cam.txt'
        write_cam(path, Pose.identity(), Intrinsics(10.0, 10.0, 4.0, 4.0), (1.0, 2.0), 2)
        self.assertEqual(read_cam(path).pose, Pose.identity())

    def test_rounded_rotation_is_repaired(self):
        """A rotation printed to 6 digits is projected back to orthonormal."""
        rotation = Rotation.from_rotvec([0.3, 0.2, -0.1]).as_matrix()
        rows = [' '.join(f'{v:.6f}' for v in list(rotation[i]) + [0.0]) for i in range(3)]
        text = CAM_FIXTURE.splitlines()
        text[1:4] = rows
        path = self.root / 'cam.txt'
        path.write_text('\n'.join(text))
        cam = read_cam(path)
        np.testing.assert_allclose(cam.pose.rotation, rotation, atol=1e-5)

    def test_malformed_row_reports_line(self):
        """A short matrix row raises ParseError with its line number."""
        path = self.root / 'cam.txt'
        path.write_text(CAM_FIXTURE.replace('1.0 0.0 0.0 -3.0', '1.0 0.0 -3.0'))
        with self.assertRaises(ParseError) as ctx:
            read_cam(path)
        self.assertEqual(ctx.exception.line, 3)

    def test_truncated_file(self):
        """A file cut inside the intrinsic block is rejected."""
        path = self.root / 'cam.txt'
        path.write_text('\n'.join(CAM_FIXTURE.splitlines()[:8]))
        with self.assertRaises(ParseError):
            read_cam(path)


class PairListTest(TempDirMixin, SimpleTestCase):
    """Tests for read_pairs and write_pairs."""

    def test_single_pair(self):
        """`0 1 1` reads as reference 0 with source 1."""
        path = self.root / 'pair.txt'
        path.write_text('1\n0 1 1\n')
        self.assertEqual(read_pairs(path), [Pair(0, (1,))])

    def test_round_trip_five_views(self):
        """A 5-view list with 4 sources per reference survives a round trip."""
        pairs = [Pair(r, tuple(v for v in range(5) if v != r)) for r in range(5)]
        path = self.root / 'pair.txt'
        write_pairs(path, pairs)
        loaded = read_pairs(path)
        self.assertEqual(loaded, pairs)
        self.assertTrue(all(len(p.sources) == 4 for p in loaded))

    def test_two_line_layout(self):
        """The MVSNet two-line layout with scores is accepted."""
        path = self.root / 'pair.txt'
        path.write_text('2\n0\n2 1 1830.5 2 900.1\n1\n1 0 1830.5\n')
        self.assertEqual(read_pairs(path), [Pair(0, (1, 2)), Pair(1, (0,))])

    def test_count_mismatch_reports_line(self):
        """A source count that disagrees with the ids is a positioned error."""
        path = self.root / 'pair.txt'
        path.write_text('2\n0 1 1\n1 3 0 2\n')
        with self.assertRaises(ParseError) as ctx:
            read_pairs(path)
        self.assertEqual(ctx.exception.line, 3)

    def test_missing_reference(self):
        """Fewer references than announced is an error."""
        path = self.root / 'pair.txt'
        path.write_text('3\n0 1 1\n')
        with self.assertRaises(ParseError):
            read_pairs(path)


class PfmTest(TempDirMixin, SimpleTestCase):
    """Tests for read_pfm and write_pfm."""

    def test_round_trip_is_bit_exact(self):
        """float32-representable maps survive a round trip exactly."""
        values = np.random.default_rng(1).uniform(400, 900, size=(6, 5)).astype(np.float32)
        path = self.root / 'd.pfm'
        write_pfm(path, values)
        loaded = read_pfm(path)
        self.assertEqual(loaded.astype(np.float32).tobytes(), values.tobytes())

    def test_single_pixel_layout(self):
        """A 1x1 map of 42.0 is the header followed by four payload bytes."""
        path = self.root / 'd.pfm'
        write_pfm(path, np.array([[42.0]]))
        payload = path.read_bytes()
        self.assertEqual(payload, b'Pf\n1 1\n-1.0\n' + struct.pack('<f', 42.0))

    def test_rows_are_stored_bottom_up(self):
        """The first stored row is the bottom row of the map."""
        path = self.root / 'd.pfm'
        write_pfm(path, np.array([[1.0, 2.0], [3.0, 4.0]]))
        data = path.read_bytes()[len(b'Pf\n2 2\n-1.0\n'):]
        self.assertEqual(struct.unpack('<4f', data), (3.0, 4.0, 1.0, 2.0))

    def test_big_endian_fixture(self):
        """A positive scale means big-endian data."""
        path = self.root / 'be.pfm'
        path.write_bytes(b'Pf\n2 1\n1.0\n' + struct.pack('>2f', 1.5, -7.25))
        np.testing.assert_array_equal(read_pfm(path), [[1.5, -7.25]])

    def test_bad_magic(self):
        """Colour or foreign files are rejected."""
        path = self.root / 'x.pfm'
        path.write_bytes(b'PF\n1 1\n-1.0\n' + b'\x00' * 12)
        with self.assertRaises(ParseError):
            read_pfm(path)

    def test_truncated_payload(self):
        """Missing data bytes raise a positioned ParseError."""
        path = self.root / 'd.pfm'
        write_pfm(path, np.ones((3, 3)))
        path.write_bytes(path.read_bytes()[:-4])
        with self.assertRaises(ParseError) as ctx:
            read_pfm(path)
        self.assertIsNotNone(ctx.exception.offset)


class ImageTest(TempDirMixin, SimpleTestCase):
    """Tests for read_image and write_image."""

    def test_round_trip_8bit(self):
        """Values on the 8-bit grid survive a round trip exactly."""
        image = np.random.default_rng(2).integers(0, 256, size=(8, 16, 3)) / 255.0
        path = self.root / 'images' / 'a.ppm'
        write_image(path, image)
        self.assertTrue(path.read_bytes().startswith(b'P6'))
        np.testing.assert_array_equal(read_image(path), image)
