"""Orthographic cameras and viewpoint sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial.transform import Rotation

from .wireframe import WireframeGraph

DEFAULT_DISTANCE = 1.5
DEFAULT_HALF_WIDTH = 1.05
DEFAULT_SIZE = (256, 256)
ISO_ELEVATION = math.atan(1.0 / math.sqrt(2.0))
ISO_AZIMUTHS = (45.0, 135.0, 225.0, 315.0)


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def default_up(view: np.ndarray) -> np.ndarray:
    """World +z projected onto the image plane (+y when looking along z)."""
    ref = np.array([0.0, 0.0, 1.0]) if abs(view[2]) < 0.999 else np.array([0.0, 1.0, 0.0])
    return _unit(ref - (ref @ view) * view)


@dataclass(frozen=True)
class OrthoCamera:
    view: np.ndarray
    up: np.ndarray
    half_width: float = DEFAULT_HALF_WIDTH
    principal: np.ndarray = field(default_factory=lambda: np.zeros(2))
    image_size: tuple[int, int] = DEFAULT_SIZE
    distance: float = DEFAULT_DISTANCE

    def __post_init__(self):
        view = np.asarray(self.view, dtype=float)
        up = np.asarray(self.up, dtype=float)
        if abs(np.linalg.norm(view) - 1) > 1e-9 or abs(np.linalg.norm(up) - 1) > 1e-9:
            raise ValueError("view and up must be unit vectors")
        if abs(view @ up) > 1e-9:
            raise ValueError("up must be orthogonal to view")
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")
        h, w = self.image_size
        if h < 16 or w < 16:
            raise ValueError("image must be at least 16x16")
        object.__setattr__(self, "view", view)
        object.__setattr__(self, "up", up)
        object.__setattr__(self, "principal", np.asarray(self.principal, dtype=float).reshape(2))
        object.__setattr__(self, "image_size", (int(h), int(w)))

    @classmethod
    def looking(cls, view, **kw) -> "OrthoCamera":
        v = _unit(view)
        return cls(v, default_up(v), **kw)

    @property
    def right(self) -> np.ndarray:
        return np.cross(self.view, self.up)

    @property
    def eye(self) -> np.ndarray:
        return -self.distance * self.view + self.principal[0] * self.right + self.principal[1] * self.up

    @property
    def footprint(self) -> float:
        """Model-space width of one pixel."""
        return 2.0 * self.half_width / self.image_size[1]

    @property
    def half_height(self) -> float:
        h, w = self.image_size
        return self.half_width * h / w

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Continuous (col, row, depth); pixel (i, j) has its centre at col=j, row=i."""
        d = np.asarray(points, dtype=float) - self.eye
        a = d @ self.right
        b = d @ self.up
        fp = self.footprint
        col = (a + self.half_width) / fp - 0.5
        row = (self.half_height - b) / fp - 0.5
        return col, row, d @ self.view

    def unproject(self, col, row, depth) -> np.ndarray:
        fp = self.footprint
        a = (np.asarray(col, float) + 0.5) * fp - self.half_width
        b = self.half_height - (np.asarray(row, float) + 0.5) * fp
        depth = np.asarray(depth, float)
        return (
            self.eye
            + a[..., None] * self.right
            + b[..., None] * self.up
            + depth[..., None] * self.view
        )

    def with_size(self, size: tuple[int, int]) -> "OrthoCamera":
        return replace(self, image_size=tuple(size))

    def to_dict(self) -> dict:
        return {
            "view": [float(c) for c in self.view],
            "up": [float(c) for c in self.up],
            "half_width": float(self.half_width),
            "principal": [float(c) for c in self.principal],
            "image_size": list(self.image_size),
            "distance": float(self.distance),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "OrthoCamera":
        return cls(
            np.asarray(doc["view"], float),
            np.asarray(doc["up"], float),
            float(doc["half_width"]),
            np.asarray(doc.get("principal", [0.0, 0.0]), float),
            tuple(doc["image_size"]),
            float(doc.get("distance", DEFAULT_DISTANCE)),
        )


def sample_hemisphere_views(n: int, seed: int, **camera_kw) -> list[OrthoCamera]:
    """``n`` view directions uniform by solid angle over z >= 0.

    Azimuth is uniform on [0, 2pi) and the z component uniform on [0, 1].
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    az = rng.uniform(0.0, 2.0 * math.pi, size=n)
    z = rng.uniform(0.0, 1.0, size=n)
    s = np.sqrt(1.0 - z * z)
    views = np.stack([s * np.cos(az), s * np.sin(az), z], axis=1)
    return [OrthoCamera.looking(v, **camera_kw) for v in views]


def isometric_direction(azimuth_deg: float) -> np.ndarray:
    a = math.radians(azimuth_deg)
    c = math.cos(ISO_ELEVATION)
    return np.array([c * math.cos(a), c * math.sin(a), math.sin(ISO_ELEVATION)])


def isometric_benchmark_views(jitter_deg: float, seed: int, **camera_kw) -> list[OrthoCamera]:
    """Four isometric cameras, each rotated about a random axis by at most ``jitter_deg``."""
    if jitter_deg < 0:
        raise ValueError("jitter must be >= 0")
    rng = np.random.default_rng(seed)
    cams = []
    for az in ISO_AZIMUTHS:
        view = isometric_direction(az)
        up = default_up(view)
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        angle = math.radians(jitter_deg) * rng.uniform(0.0, 1.0)
        if angle > 0:
            rot = Rotation.from_rotvec(axis * angle)
            view = _unit(rot.apply(view))
            up = rot.apply(up)
            up = _unit(up - (up @ view) * view)
        cams.append(OrthoCamera(view, up, **camera_kw))
    return cams


def zoom_augment(cam: OrthoCamera, g: WireframeGraph, seed: int, low: float = 0.3, high: float = 0.7) -> OrthoCamera:
    """Zoom in by a factor in [low, high] and recentre on a random edge sample."""
    rng = np.random.default_rng(seed)
    factor = rng.uniform(low, high)
    samples = np.concatenate([e.samples for e in g.edges])
    pick = samples[rng.integers(len(samples))]
    rel = pick - (-cam.distance * cam.view)
    principal = np.array([rel @ cam.right, rel @ cam.up])
    return replace(cam, half_width=cam.half_width * factor, principal=principal)


def great_circle_deg(a: np.ndarray, b: np.ndarray) -> float:
    return math.degrees(math.acos(float(np.clip(np.dot(_unit(a), _unit(b)), -1.0, 1.0))))
