"""Input validation helpers for point clouds, cloud sets, and rotations.

Clouds are plain float64 arrays of shape (n, 3), in millimeters. A cloud
set is an ordered sequence of such arrays; list position is the cloud
index used everywhere else in the package.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError

ROTATION_ATOL = 1e-9


def check_cloud(points, name: str = "cloud") -> np.ndarray:
    """Coerce to a finite (n, 3) float64 array with n >= 1."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ConfigurationError(
            f"{name}: expected shape (n, 3), got {arr.shape}"
        )
    if arr.shape[0] == 0:
        raise ConfigurationError(f"{name}: cloud is empty")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{name}: coordinates must be finite")
    return arr


def check_cloud_set(clouds, min_clouds: int = 2) -> list[np.ndarray]:
    """Validate every cloud of a set and require at least `min_clouds`."""
    checked = [check_cloud(c, name=f"cloud {j}") for j, c in enumerate(clouds)]
    if len(checked) < min_clouds:
        raise ConfigurationError(
            f"need at least {min_clouds} point clouds, got {len(checked)}"
        )
    return checked


def check_rotation(matrix, atol: float = ROTATION_ATOL) -> np.ndarray:
    """Validate a proper rotation: orthonormal with determinant +1."""
    rot = np.asarray(matrix, dtype=np.float64)
    if rot.shape != (3, 3):
        raise ConfigurationError(f"rotation must be 3x3, got {rot.shape}")
    if not np.all(np.isfinite(rot)):
        raise ConfigurationError("rotation entries must be finite")
    if not np.allclose(rot.T @ rot, np.eye(3), rtol=0.0, atol=atol):
        raise ConfigurationError("rotation is not orthonormal")
    if abs(np.linalg.det(rot) - 1.0) > atol:
        raise ConfigurationError("rotation determinant is not +1 (reflection?)")
    return rot
