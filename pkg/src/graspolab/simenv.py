"""Simulated grasp cycle and synthetic data generation.

One episode: an elongated box is dropped on the table with a random pose,
the detector reports its bounding box, the box crop becomes an 84x84
grayscale state, the agent picks a gripper orientation, and the reward is 1
exactly when a post-grasp detection finds no object left on the table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, EnvironmentError_
from .geometry import BoundingBox, ImagePoint, WorkspaceConfig, angular_distance
from .mapping import MappingMatrix, ObservationSet

STATE_SIDE = 84

# object footprint in pixels; length strictly dominates width so the grasp
# axis is unambiguous even under render noise
_LENGTH_RANGE = (120.0, 260.0)
_WIDTH_RANGE = (40.0, 100.0)

# synthetic ground-truth map: normalized image coordinates -> meters, with
# mild cross-axis terms a per-axis line cannot express
DEFAULT_TRUE_MAPPING = MappingMatrix(np.array([
    [0.62, 0.04, 0.30],
    [0.01, -0.79, 0.35],
    [0.02, 0.04, -0.12],
]))

# default depth plane iz = d0 + dx*ix + dy*iy used when a dataset carries a
# depth channel instead of the constant homogeneous 1
DEFAULT_DEPTH_PLANE = (0.9, 0.12, -0.08)


@dataclass(frozen=True)
class SimObject:
    """Rectangular object; orientation is the long-axis angle in degrees [0, 180)."""

    center: ImagePoint
    orientation: float
    length: float
    width: float

    def __post_init__(self):
        if not 0.0 <= self.orientation < 180.0:
            raise ValueError(f"orientation {self.orientation} outside [0, 180)")
        if self.length <= self.width:
            raise ValueError(f"length {self.length} must exceed width {self.width}")
        if self.width <= 0:
            raise ValueError("width must be positive")


@dataclass(frozen=True)
class StepResult:
    next_state: np.ndarray
    reward: int
    done: bool
    optimal_action: int


def _circular_gaps(angles: Sequence[float]):
    ordered = sorted(a % 180.0 for a in angles)
    gaps = [b - a for a, b in zip(ordered, ordered[1:])]
    gaps.append(180.0 - ordered[-1] + ordered[0])
    return ordered, gaps


@dataclass(frozen=True)
class EnvConfig:
    """Grasp-cycle environment parameters."""

    angles: tuple
    tolerance: Optional[float] = None
    workspace: WorkspaceConfig = field(default_factory=WorkspaceConfig)
    render_noise: float = 0.02
    detector_jitter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        angles = tuple(float(a) % 180.0 for a in self.angles)
        if len(angles) < 1:
            raise ConfigError("angle table is empty")
        if len(set(angles)) != len(angles):
            raise ConfigError(f"angle table has duplicates: {angles}")
        object.__setattr__(self, "angles", angles)
        _, gaps = _circular_gaps(angles)
        min_gap = min(gaps) if len(angles) > 1 else 180.0
        tolerance = self.tolerance
        if tolerance is None:
            tolerance = min_gap / 2.0
        if tolerance <= 0:
            raise ConfigError("tolerance must be positive")
        if tolerance > min_gap / 2.0 + 1e-12:
            raise ConfigError(
                f"tolerance {tolerance} exceeds half the smallest angle gap ({min_gap / 2.0}); "
                "the optimal action would be ambiguous"
            )
        object.__setattr__(self, "tolerance", float(tolerance))
        if self.render_noise < 0 or self.detector_jitter < 0:
            raise ConfigError("noise levels must be >= 0")
        lo, hi = required_angle_span(angles, self.tolerance)
        object.__setattr__(self, "_required_span", (lo, hi))


def required_angle_span(angles: Sequence[float], tolerance: float):
    """Range of grasp angles the table can serve within tolerance.

    Tables that tile the whole half-circle (uniform step, max + step = 180)
    cover every orientation; otherwise spawning is limited to the span
    between the lowest and highest table entry so that every object stays
    graspable.
    """
    ordered, gaps = _circular_gaps(angles)
    internal = gaps[:-1]
    wrap = gaps[-1]
    if all(g <= 2.0 * tolerance + 1e-12 for g in gaps):
        return (0.0, 180.0)
    if internal and max(internal) > 2.0 * tolerance + 1e-12:
        raise ConfigError(
            f"angle table {tuple(ordered)} leaves gaps wider than 2*tolerance "
            f"({max(internal):.3f} > {2 * tolerance:.3f}); some objects would be ungraspable"
        )
    del wrap
    return (ordered[0], ordered[-1])


def detect_object(obj: Optional[SimObject], jitter_sigma: float = 0.0,
                  rng: Optional[np.random.Generator] = None) -> Optional[BoundingBox]:
    """Stand-in detector: exact bounding box of the object, or None if absent.

    jitter_sigma > 0 shifts the box center by rounded Gaussian noise,
    imitating detector localization error.
    """
    if obj is None:
        return None
    theta = math.radians(obj.orientation)
    ex = (obj.length / 2.0) * abs(math.cos(theta)) + (obj.width / 2.0) * abs(math.sin(theta))
    ey = (obj.length / 2.0) * abs(math.sin(theta)) + (obj.width / 2.0) * abs(math.cos(theta))
    dx = dy = 0.0
    if jitter_sigma > 0.0:
        if rng is None:
            raise ValueError("jittered detection needs an rng")
        dx = float(rng.normal(0.0, jitter_sigma))
        dy = float(rng.normal(0.0, jitter_sigma))
    x1 = math.floor(obj.center.ix + dx - ex)
    y1 = math.floor(obj.center.iy + dy - ey)
    x2 = math.ceil(obj.center.ix + dx + ex)
    y2 = math.ceil(obj.center.iy + dy + ey)
    return BoundingBox(int(x1), int(y1), int(x2), int(y2))


def render_crop(obj: SimObject, box: BoundingBox, noise_sigma: float = 0.0,
                rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Resample the box crop onto an 84x84 grid; interior 1.0, background 0.0."""
    xs = box.x1 + (np.arange(STATE_SIDE) + 0.5) * (box.width / STATE_SIDE)
    ys = box.y1 + (np.arange(STATE_SIDE) + 0.5) * (box.height / STATE_SIDE)
    px, py = np.meshgrid(xs, ys)
    dx = px - obj.center.ix
    dy = py - obj.center.iy
    theta = math.radians(obj.orientation)
    c, s = math.cos(theta), math.sin(theta)
    u = c * dx + s * dy   # along the long axis
    v = -s * dx + c * dy  # across it
    inside = (np.abs(u) <= obj.length / 2.0) & (np.abs(v) <= obj.width / 2.0)
    img = inside.astype(float)
    if noise_sigma > 0.0:
        if rng is None:
            raise ValueError("noisy rendering needs an rng")
        img = np.clip(img + rng.normal(0.0, noise_sigma, img.shape), 0.0, 1.0)
    return img[:, :, None]


class GraspEnv:
    """Single-step grasp episodes against randomly posed objects."""

    def __init__(self, cfg: EnvConfig):
        self.cfg = cfg
        self._rng = np.random.default_rng(cfg.seed)
        self._object: Optional[SimObject] = None
        self._required: Optional[float] = None
        self._optimal: Optional[int] = None

    def _spawn(self):
        rng = self._rng
        lo, hi = self.cfg._required_span
        required = float(rng.uniform(lo, hi)) % 180.0
        orientation = (required - 90.0) % 180.0
        length = float(rng.uniform(*_LENGTH_RANGE))
        width = float(rng.uniform(_WIDTH_RANGE[0], min(_WIDTH_RANGE[1], 0.75 * length)))
        margin = math.hypot(length, width) / 2.0 + 1.0
        ws = self.cfg.workspace
        if 2 * margin >= ws.image_width_px or 2 * margin >= ws.image_height_px:
            raise EnvironmentError_("workspace too small for the object footprint")
        cx = float(rng.uniform(margin, ws.image_width_px - margin))
        cy = float(rng.uniform(margin, ws.image_height_px - margin))
        self._object = SimObject(ImagePoint(cx, cy), orientation, length, width)
        self._required = required
        dists = [angular_distance(a, required) for a in self.cfg.angles]
        self._optimal = int(np.argmin(dists))

    def detector_oracle(self) -> Optional[BoundingBox]:
        return detect_object(self._object, self.cfg.detector_jitter, self._rng)

    def _observe(self) -> np.ndarray:
        box = self.detector_oracle()
        if box is None:
            raise EnvironmentError_("no object on the table to observe")
        return render_crop(self._object, box, self.cfg.render_noise, self._rng)

    def reset(self) -> np.ndarray:
        self._spawn()
        return self._observe()

    @property
    def required_angle(self) -> Optional[float]:
        return self._required

    @property
    def optimal_action(self) -> Optional[int]:
        return self._optimal

    def step(self, orientation_deg: float) -> StepResult:
        """Attempt a grasp at the given gripper orientation (degrees)."""
        if self._object is None:
            raise EnvironmentError_("step() before reset()")
        optimal = self._optimal
        hit = angular_distance(float(orientation_deg), self._required) <= self.cfg.tolerance
        if hit:
            self._object = None  # lifted off the table
        seen_after = detect_object(self._object, self.cfg.detector_jitter, self._rng)
        reward = 1 if seen_after is None else 0
        # next episode starts immediately: object put back with a fresh pose
        self._spawn()
        next_state = self._observe()
        return StepResult(next_state, reward, True, optimal)


def random_policy_success_rate(cfg: EnvConfig, grid_step: float = 0.1) -> float:
    """Expected success of a uniform random action, brute-forced over a
    grid of spawnable object orientations."""
    lo, hi = cfg._required_span
    required = np.arange(lo, hi + grid_step / 2.0, grid_step)
    total = 0.0
    for req in required:
        hits = sum(1 for a in cfg.angles if angular_distance(a, req % 180.0) <= cfg.tolerance)
        total += hits / len(cfg.angles)
    return total / len(required)


def gen_position_dataset(n: int, true_map: MappingMatrix, noise_sigma: float,
                         rng: np.random.Generator, *,
                         workspace: Optional[WorkspaceConfig] = None,
                         normalized: bool = True,
                         depth_plane: Optional[tuple] = None,
                         strip_width: float = 0.0) -> ObservationSet:
    """Sample n image points uniformly over the camera frame and map them
    through ``true_map`` plus Gaussian position noise.

    normalized=True rescales pixels by the image size so coordinates land in
    [0, 1).  depth_plane=(d0, dx, dy) fills the third image row with
    d0 + dx*ix + dy*iy; otherwise it is the constant 1.  strip_width > 0
    confines the points to a diagonal band of that width (normalized units)
    across the frame, mimicking calibration points collected along a line;
    the strong ix/iy correlation makes the image matrix nearly rank-deficient.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    if strip_width < 0:
        raise ValueError("strip_width must be >= 0")
    ws = workspace or WorkspaceConfig()
    if strip_width > 0.0:
        u = rng.uniform(0.05, 0.95, size=n)
        t = rng.uniform(-strip_width / 2.0, strip_width / 2.0, size=n)
        nx = u
        ny = np.clip(0.15 + 0.7 * u + t, 0.0, 1.0)
        px = nx * ws.image_width_px
        py = ny * ws.image_height_px
    else:
        px = rng.uniform(0.0, ws.image_width_px, size=n)
        py = rng.uniform(0.0, ws.image_height_px, size=n)
    ix = px / ws.image_width_px if normalized else px
    iy = py / ws.image_height_px if normalized else py
    if depth_plane is None:
        iz = np.ones(n)
    else:
        d0, dx, dy = (float(v) for v in depth_plane)
        iz = d0 + dx * ix + dy * iy
    image = np.vstack([ix, iy, iz])
    robot = true_map.m @ image
    if noise_sigma > 0.0:
        robot = robot + rng.normal(0.0, noise_sigma, size=robot.shape)
    return ObservationSet(image, robot)
