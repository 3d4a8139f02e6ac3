"""Rigid transforms, bounding volumes, and the registration error metric.

All distances are in millimeters. Transforms are immutable after
construction and safe to share between workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .validation import check_cloud, check_rotation

# Relative side length substituted for a collapsed bounding-box axis so the
# uniform-density support volume stays positive for planar or linear data.
DEGENERATE_BOX_REL = 1e-6


@dataclass(frozen=True)
class RigidTransform:
    """A proper rigid motion p -> rotation @ p + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = check_rotation(self.rotation).copy()
        tr = np.asarray(self.translation, dtype=np.float64).reshape(3).copy()
        if not np.all(np.isfinite(tr)):
            raise ConfigurationError("translation entries must be finite")
        rot.setflags(write=False)
        tr.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tr)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points) -> np.ndarray:
        """Map a point (3,) or a cloud (n, 3)."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Motion applying `other` first, then `self`."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def as_matrix(self) -> np.ndarray:
        """4x4 homogeneous matrix form."""
        mat = np.eye(4)
        mat[:3, :3] = self.rotation
        mat[:3, 3] = self.translation
        return mat


def _stack_clouds(clouds) -> np.ndarray:
    checked = [check_cloud(c, name=f"cloud {j}") for j, c in enumerate(clouds)]
    if not checked:
        raise ConfigurationError("cloud set is empty")
    return np.vstack(checked)


def bounding_sphere(clouds) -> tuple[np.ndarray, float]:
    """Centroid of all points of all clouds and the max distance to it."""
    pts = _stack_clouds(clouds)
    center = pts.mean(axis=0)
    radius = float(np.sqrt(((pts - center) ** 2).sum(axis=1).max()))
    return center, radius


def bounding_box_volume(clouds) -> float:
    """Volume (mm^3) of the axis-aligned box around all points.

    Collapsed axes are given a floor side length so the volume is always
    positive.
    """
    pts = _stack_clouds(clouds)
    extents = pts.max(axis=0) - pts.min(axis=0)
    largest = float(extents.max())
    floor_side = DEGENERATE_BOX_REL * largest if largest > 0.0 else DEGENERATE_BOX_REL
    sides = np.where(extents > 0.0, extents, floor_side)
    return float(np.prod(sides))


def bounding_box_diagonal(clouds) -> float:
    """Length (mm) of the axis-aligned bounding-box diagonal."""
    pts = _stack_clouds(clouds)
    extents = pts.max(axis=0) - pts.min(axis=0)
    return float(np.linalg.norm(extents))


def registration_rmse(calculated, ground_truth, clouds) -> float:
    """Root-mean-square pose discrepancy in the first cloud's frame.

    Both pose sets are reduced to poses relative to their own first cloud,
    which removes the arbitrary global frame. The error is then the RMS
    distance between the two images of every point of clouds 2..N.
    """
    calculated = list(calculated)
    ground_truth = list(ground_truth)
    clouds = [check_cloud(c, name=f"cloud {j}") for j, c in enumerate(clouds)]
    if len(calculated) != len(clouds) or len(ground_truth) != len(clouds):
        raise ConfigurationError(
            "pose lists and cloud set must have equal lengths "
            f"(got {len(calculated)}, {len(ground_truth)}, {len(clouds)})"
        )
    if len(clouds) < 2:
        raise ConfigurationError("need at least 2 clouds to compute the error")

    cal_ref_inv = calculated[0].inverse()
    gt_ref_inv = ground_truth[0].inverse()
    total_sq = 0.0
    total_pts = 0
    for j in range(1, len(clouds)):
        rel_cal = cal_ref_inv.compose(calculated[j])
        rel_gt = gt_ref_inv.compose(ground_truth[j])
        diff = rel_cal.apply(clouds[j]) - rel_gt.apply(clouds[j])
        total_sq += float((diff**2).sum())
        total_pts += clouds[j].shape[0]
    return float(np.sqrt(total_sq / total_pts))
