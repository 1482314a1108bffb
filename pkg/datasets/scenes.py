"""
Procedural multi-view scenes with exact ground truth.

A scene is one parametric surface (a plane, a sphere in front of a
backdrop plane, or a two-plane step with its riser) seen by cameras on a
horizontal arc that all look at a common target. Depth is the exact
ray/surface intersection; colour is a procedural texture evaluated at
the 3-D hit point, so every view is photo-consistent with every other.
"""

import logging
from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from depthlab.exceptions import ConfigError
from geometry.cameras import CameraView, Intrinsics
from geometry.projection import look_at_pose

from .io import Pair
from .validators import validate_image_size

logger = logging.getLogger(__name__)

RenderedView = namedtuple('RenderedView', ['view', 'depth'])


class Surface:
    PLANE = 'plane'
    SPHERE = 'sphere'
    STEP = 'step'

    choices = (PLANE, SPHERE, STEP)


@dataclass(frozen=True)
class SceneSpec:
    """
    Parameters of a synthetic scene (lengths in mm, angles in degrees).

    The target sits at (0, 0, distance). Cameras lie on a circle of radius
    `distance` around it in the y = 0 plane, spread evenly over
    `arc_degrees` and centred on the one at the world origin. The focal
    length is `focal_factor` image widths; the defaults move a pixel near
    the target by about 0.8 px per depth plane between neighbouring views
    at quarter resolution, with eight planes over `depth_range`.
    """

    surface: str = Surface.PLANE
    height: int = 64
    width: int = 64
    num_views: int = 5
    distance: float = 500.0
    arc_degrees: float = 60.0
    focal_factor: float = 2.0
    depth_range: tuple = (380.0, 720.0)
    plane_tilt_degrees: float = 0.0
    sphere_radius: float = 80.0
    backdrop_offset: float = 60.0
    step_height: float = 60.0
    texture_period: float = 80.0
    noise_amplitude: float = 0.25
    noise_cell: float = 40.0
    seed: int = 0

    def __post_init__(self):
        if self.surface not in Surface.choices:
            raise ConfigError(f'Unknown surface "{self.surface}"; choose from {Surface.choices}.')
        validate_image_size(self.height, self.width)
        if self.num_views < 2:
            raise ConfigError('A scene needs at least two views.')
        if self.distance <= 0 or self.focal_factor <= 0 or self.texture_period <= 0:
            raise ConfigError('distance, focal_factor and texture_period must be positive.')
        if self.noise_cell <= 0:
            raise ConfigError('noise_cell must be positive.')

    @property
    def target(self):
        return np.array([0.0, 0.0, self.distance])

    def intrinsics(self):
        focal = self.focal_factor * self.width
        return Intrinsics(focal, focal, (self.width - 1) / 2.0, (self.height - 1) / 2.0)

    def camera_centers(self):
        angles = np.deg2rad(np.linspace(-self.arc_degrees / 2, self.arc_degrees / 2, self.num_views))
        return [self.target + self.distance * np.array([np.sin(a), 0.0, -np.cos(a)]) for a in angles]


class ProceduralTexture:
    """
    RGB texture of a 3-D point: per-channel sinusoids plus smooth value noise.

    Value noise is a seeded random lattice with spacing `cell`, blended
    with the smoothstep of the fractional position, so the texture is C1
    everywhere.
    """

    LATTICE = 64

    def __init__(self, period, noise_amplitude, cell, seed):
        rng = np.random.default_rng(seed)
        self.frequency = 2 * np.pi / period
        self.noise_amplitude = noise_amplitude
        self.cell = cell
        self.phases = rng.uniform(0, 2 * np.pi, size=(3, 2))
        self.lattice = rng.uniform(-1.0, 1.0, size=(3, self.LATTICE, self.LATTICE))

    def _noise(self, u, v):
        gu, gv = u / self.cell, v / self.cell
        i0, j0 = np.floor(gu).astype(np.int64), np.floor(gv).astype(np.int64)
        fu, fv = gu - i0, gv - j0
        su = fu * fu * (3 - 2 * fu)
        sv = fv * fv * (3 - 2 * fv)
        i0, j0 = i0 % self.LATTICE, j0 % self.LATTICE
        i1, j1 = (i0 + 1) % self.LATTICE, (j0 + 1) % self.LATTICE
        lat = self.lattice
        return (lat[:, j0, i0] * (1 - su) * (1 - sv) + lat[:, j0, i1] * su * (1 - sv)
                + lat[:, j1, i0] * (1 - su) * sv + lat[:, j1, i1] * su * sv)

    def __call__(self, points, reference_depth):
        """Colour of world points (..., 3) as an array (..., 3) in [0, 1]."""
        # u runs continuously across depth steps and risers
        u = points[..., 0] + points[..., 2] - reference_depth
        v = points[..., 1]
        w = self.frequency
        waves = np.stack([
            np.sin(w * u + self.phases[c, 0]) * np.cos(0.7 * w * v + self.phases[c, 1])
            for c in range(3)
        ])
        colour = 0.5 + 0.25 * waves + 0.2 * self.noise_amplitude * self._noise(u, v)
        return np.clip(np.moveaxis(colour, 0, -1), 0.0, 1.0)


def _plane_hits(origin, directions, normal, offset):
    """Ray parameter where n . X = offset, inf where the ray misses."""
    denom = directions @ normal
    with np.errstate(divide='ignore', invalid='ignore'):
        t = (offset - origin @ normal) / denom
    return np.where((np.abs(denom) > 1e-12) & (t > 0), t, np.inf)


def _sphere_hits(origin, directions, center, radius):
    """Nearest positive ray parameter on the sphere, inf where the ray misses."""
    oc = origin - center
    a = np.einsum('...i,...i->...', directions, directions)
    b = 2.0 * directions @ oc
    c = oc @ oc - radius * radius
    disc = b * b - 4 * a * c
    root = np.sqrt(np.maximum(disc, 0.0))
    near = (-b - root) / (2 * a)
    far = (-b + root) / (2 * a)
    t = np.where(near > 0, near, far)
    return np.where((disc >= 0) & (t > 0), t, np.inf)


def surface_intersection(spec, origin, directions):
    """
    Ray parameters of the first surface hit for rays origin + t * d.

    Rays are expressed in world coordinates; when a direction has camera
    z-component 1 the parameter equals the camera-frame depth.
    """
    d = spec.distance
    if spec.surface == Surface.PLANE:
        tilt = np.deg2rad(spec.plane_tilt_degrees)
        normal = np.array([np.sin(tilt), 0.0, np.cos(tilt)])
        return _plane_hits(origin, directions, normal, normal @ spec.target)

    if spec.surface == Surface.SPHERE:
        sphere = _sphere_hits(origin, directions, spec.target, spec.sphere_radius)
        backdrop = _plane_hits(origin, directions, np.array([0.0, 0.0, 1.0]), d + spec.backdrop_offset)
        return np.minimum(sphere, backdrop)

    # Two-plane step: z = d for x < 0, z = d + h for x >= 0, joined by the riser x = 0.
    h = spec.step_height
    z_axis = np.array([0.0, 0.0, 1.0])
    candidates = []
    for offset, keep in ((d, lambda x, z: x < 0), (d + h, lambda x, z: x >= 0)):
        t = _plane_hits(origin, directions, z_axis, offset)
        hit = origin + np.where(np.isfinite(t), t, 0.0)[..., None] * directions
        candidates.append(np.where(keep(hit[..., 0], hit[..., 2]), t, np.inf))
    t = _plane_hits(origin, directions, np.array([1.0, 0.0, 0.0]), 0.0)
    hit_z = origin[2] + np.where(np.isfinite(t), t, 0.0) * directions[..., 2]
    low, high = min(d, d + h), max(d, d + h)
    candidates.append(np.where((hit_z >= low) & (hit_z <= high), t, np.inf))
    return np.minimum.reduce(candidates)


def render_view(spec, view_id, center, texture):
    """Render one camera: returns RenderedView(CameraView, depth H x W)."""
    intrinsics = spec.intrinsics()
    pose = look_at_pose(center, spec.target)
    ys, xs = np.mgrid[0:spec.height, 0:spec.width].astype(np.float64)
    rays = np.stack([xs, ys, np.ones_like(xs)], axis=-1) @ intrinsics.inverse.T
    directions = rays @ pose.rotation
    t = surface_intersection(spec, center, directions)
    if not np.isfinite(t).all():
        raise ConfigError(f'Camera {view_id} does not see the surface everywhere.')
    d_min, d_max = spec.depth_range
    if t.min() < d_min or t.max() > d_max:
        raise ConfigError(
            f'Camera {view_id} sees depths [{t.min():.1f}, {t.max():.1f}] outside the depth '
            f'range ({d_min}, {d_max}).'
        )
    points = center + t[..., None] * directions
    image = texture(points, spec.distance)
    return RenderedView(CameraView(view_id, image, intrinsics, pose, spec.depth_range), t)


def render_scene(spec):
    """Render every camera of `spec`; deterministic for a fixed seed."""
    texture = ProceduralTexture(spec.texture_period, spec.noise_amplitude, spec.noise_cell, spec.seed)
    rendered = [render_view(spec, i, center, texture) for i, center in enumerate(spec.camera_centers())]
    logger.debug('Rendered %d views of a %s scene (seed %d)', len(rendered), spec.surface, spec.seed)
    return rendered


def ring_pairs(num_views, num_sources=None):
    """Pair each view with its nearest neighbours on the arc, closest first."""
    num_sources = min(num_sources or num_views - 1, num_views - 1)
    pairs = []
    for ref in range(num_views):
        others = sorted((v for v in range(num_views) if v != ref), key=lambda v: (abs(v - ref), v))
        pairs.append(Pair(ref, tuple(others[:num_sources])))
    return pairs
