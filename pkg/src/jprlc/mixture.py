"""Shared Gaussian mixture state, its initialization, and posterior estimation.

All clouds are treated as samples of one isotropic Gaussian mixture plus a
uniform component that absorbs outliers. The expectation step assigns every
point a posterior over the mixture components and the outlier class.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericalError
from .geometry import bounding_box_volume, bounding_sphere
from .validation import check_cloud

SIMPLEX_ATOL = 1e-12

_GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


@dataclass(frozen=True)
class MixtureModel:
    """Isotropic GMM with a fixed-weight uniform outlier component.

    centroids: (m, 3) component means, mm
    variances: (m,) isotropic variances, mm^2
    weights: (m,) component weights; together with outlier_weight they sum to 1
    outlier_weight: weight of the uniform component, in [0, 1)
    volume: support volume of the uniform density (its density is 1/volume)
    """

    centroids: np.ndarray
    variances: np.ndarray
    weights: np.ndarray
    outlier_weight: float
    volume: float

    def __post_init__(self):
        cent = np.asarray(self.centroids, dtype=np.float64)
        var = np.asarray(self.variances, dtype=np.float64)
        wts = np.asarray(self.weights, dtype=np.float64)
        if cent.ndim != 2 or cent.shape[1] != 3 or cent.shape[0] == 0:
            raise ConfigurationError(f"centroids must be (m, 3), got {cent.shape}")
        m = cent.shape[0]
        if var.shape != (m,) or wts.shape != (m,):
            raise ConfigurationError("variances and weights must have one entry per component")
        if not (np.all(np.isfinite(cent)) and np.all(np.isfinite(var)) and np.all(np.isfinite(wts))):
            raise ConfigurationError("mixture parameters must be finite")
        if np.any(var <= 0.0):
            raise ConfigurationError("variances must be positive")
        if np.any(wts < 0.0):
            raise ConfigurationError("weights must be non-negative")
        if not 0.0 <= self.outlier_weight < 1.0:
            raise ConfigurationError(f"outlier weight must be in [0, 1), got {self.outlier_weight}")
        if abs(wts.sum() + self.outlier_weight - 1.0) > SIMPLEX_ATOL:
            raise ConfigurationError("component weights plus outlier weight must sum to 1")
        if not self.volume > 0.0:
            raise ConfigurationError(f"support volume must be positive, got {self.volume}")
        for arr in (cent, var, wts):
            arr.setflags(write=False)
        object.__setattr__(self, "centroids", cent)
        object.__setattr__(self, "variances", var)
        object.__setattr__(self, "weights", wts)

    @property
    def n_components(self) -> int:
        return self.centroids.shape[0]


@dataclass(frozen=True)
class Posteriors:
    """Per-point correspondence probabilities for every cloud.

    components[j] is an (n_j, m) table; outlier[j] the matching (n_j,)
    column for the uniform class. Every row of (components[j], outlier[j])
    sums to 1.
    """

    components: tuple[np.ndarray, ...]
    outlier: tuple[np.ndarray, ...]

    def component_mass(self) -> np.ndarray:
        """Total posterior mass per component, summed over all points."""
        return sum(p.sum(axis=0) for p in self.components)


def fibonacci_sphere(count: int) -> np.ndarray:
    """`count` near-uniform unit vectors on the sphere (golden-angle lattice)."""
    if count < 1:
        raise ConfigurationError(f"count must be >= 1, got {count}")
    idx = np.arange(count, dtype=np.float64)
    z = 1.0 - (2.0 * idx + 1.0) / count
    ring = np.sqrt(np.maximum(0.0, 1.0 - z**2))
    phi = _GOLDEN_ANGLE * idx
    return np.column_stack([ring * np.cos(phi), ring * np.sin(phi), z])


def init_mixture(
    clouds,
    m_count: int,
    outlier_weight: float,
    initial_variance: float,
) -> MixtureModel:
    """Initial mixture: centroids on a half-radius sphere, uniform weights.

    Centroids are spread deterministically over the sphere centered on the
    centroid of all points, with radius equal to half the enclosing-sphere
    radius. Every variance starts at `initial_variance` and every weight at
    (1 - outlier_weight) / m_count. The uniform support volume is the
    bounding-box volume of the data.
    """
    checked = [check_cloud(c, name=f"cloud {j}") for j, c in enumerate(clouds)]
    if not checked:
        raise ConfigurationError("cloud set is empty")
    if m_count < 1:
        raise ConfigurationError(f"m_count must be >= 1, got {m_count}")
    if not 0.0 <= outlier_weight < 1.0:
        raise ConfigurationError(f"outlier weight must be in [0, 1), got {outlier_weight}")
    if not initial_variance > 0.0:
        raise ConfigurationError(f"initial variance must be positive, got {initial_variance}")
    center, radius = bounding_sphere(checked)
    centroids = center + 0.5 * radius * fibonacci_sphere(m_count)
    weights = np.full(m_count, (1.0 - outlier_weight) / m_count)
    variances = np.full(m_count, float(initial_variance))
    return MixtureModel(
        centroids=centroids,
        variances=variances,
        weights=weights,
        outlier_weight=float(outlier_weight),
        volume=bounding_box_volume(checked),
    )


def gaussian_density(x, mean, variance: float):
    """Isotropic trivariate normal density at x for the given mean."""
    if not variance > 0.0:
        raise ValueError(f"variance must be positive, got {variance}")
    diff = np.asarray(x, dtype=np.float64) - np.asarray(mean, dtype=np.float64)
    dist_sq = (diff**2).sum(axis=-1)
    norm = (2.0 * math.pi * variance) ** -1.5
    return norm * np.exp(-dist_sq / (2.0 * variance))


def _squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """(n, m) squared Euclidean distances, clipped at zero."""
    sq_p = np.einsum("ij,ij->i", points, points)
    sq_c = np.einsum("ij,ij->i", centroids, centroids)
    d2 = sq_p[:, None] + sq_c[None, :] - 2.0 * points @ centroids.T
    return np.maximum(d2, 0.0)


def e_step(clouds, transforms, model: MixtureModel) -> Posteriors:
    """Posterior of every point over the m components and the outlier class.

    Works in log space: each component term is log(weight) plus the log
    Gaussian density of the transformed point, the outlier term is
    log(outlier_weight / volume), and rows are normalized with
    log-sum-exp so large initial variances cannot underflow.
    """
    clouds = [check_cloud(c, name=f"cloud {j}") for j, c in enumerate(clouds)]
    if len(transforms) != len(clouds):
        raise ConfigurationError(
            f"got {len(transforms)} transforms for {len(clouds)} clouds"
        )
    variances = model.variances
    with np.errstate(divide="ignore"):
        log_weights = np.log(model.weights)
        log_out = (
            math.log(model.outlier_weight / model.volume)
            if model.outlier_weight > 0.0
            else -np.inf
        )
    log_norms = -1.5 * np.log(2.0 * math.pi * variances)

    comp_tables = []
    out_columns = []
    for j, (pts, tf) in enumerate(zip(clouds, transforms)):
        moved = tf.apply(pts)
        d2 = _squared_distances(moved, model.centroids)
        log_terms = log_weights + log_norms - d2 / (2.0 * variances)
        peak = np.maximum(log_terms.max(axis=1), log_out)
        bad = ~np.isfinite(peak)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise NumericalError(
                f"cloud {j}, point {i}: no component or outlier density is representable"
            )
        scaled = np.exp(log_terms - peak[:, None])
        scaled_out = np.exp(log_out - peak)
        total = scaled.sum(axis=1) + scaled_out
        if np.any(total <= 0.0) or not np.all(np.isfinite(total)):
            i = int(np.argmax((total <= 0.0) | ~np.isfinite(total)))
            raise NumericalError(
                f"cloud {j}, point {i}: posterior normalizer vanished"
            )
        comp = scaled / total[:, None]
        out_col = scaled_out / total
        comp.setflags(write=False)
        out_col.setflags(write=False)
        comp_tables.append(comp)
        out_columns.append(out_col)
    return Posteriors(components=tuple(comp_tables), outlier=tuple(out_columns))
