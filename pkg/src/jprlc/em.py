"""Closed-form update blocks and the alternating registration solver.

One iteration estimates the posteriors of all points, then updates in
order: the pose of every cloud (rotation via an SVD solve on centered
coordinates, then the matching translation), the component centroids, the
variances, and the component weights. The objective being minimized is
the expected negative complete-data log-likelihood of the mixture plus a
weighted penalty on posterior disagreement between neighboring points.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DegenerateDataError, NumericalError, SolverError
from .geometry import RigidTransform, bounding_box_diagonal, bounding_sphere
from .mixture import MixtureModel, Posteriors, e_step, init_mixture, _squared_distances
from .neighbors import NeighborGraph
from .validation import check_cloud_set

# Components with less posterior mass than this keep their previous
# centroid and variance; their weight decays on its own.
MASS_EPS = 1e-12

# Relative factor applied to the bounding-box diagonal when deriving the
# default variance floor.
VARIANCE_FLOOR_REL = 1e-4


@dataclass(frozen=True)
class RegistrationConfig:
    """Solver settings.

    lam: weight of the neighbor-consistency penalty (0 disables it)
    iterations: fixed iteration count
    k_neighbors: directed k-NN graph size per point
    m_count: number of Gaussian components
    outlier_weight: fixed weight of the uniform outlier component
    initial_variance: starting isotropic variance, mm^2
    variance_floor: lower clamp for variances, mm^2; None derives
        (1e-4 x bounding-box diagonal)^2 from the data
    tol: optional relative objective change for early stopping; None runs
        all iterations
    """

    lam: float = 0.1
    iterations: int = 100
    k_neighbors: int = 5
    m_count: int = 1000
    outlier_weight: float = 0.1
    initial_variance: float = 1000.0
    variance_floor: float | None = None
    tol: float | None = None

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam >= 0.0):
            raise ConfigurationError(f"lam must be finite and >= 0, got {self.lam}")
        if self.iterations < 1:
            raise ConfigurationError(f"iterations must be >= 1, got {self.iterations}")
        if self.k_neighbors < 1:
            raise ConfigurationError(f"k_neighbors must be >= 1, got {self.k_neighbors}")
        if self.m_count < 1:
            raise ConfigurationError(f"m_count must be >= 1, got {self.m_count}")
        if not 0.0 <= self.outlier_weight < 1.0:
            raise ConfigurationError(
                f"outlier_weight must be in [0, 1), got {self.outlier_weight}"
            )
        if not self.initial_variance > 0.0:
            raise ConfigurationError(
                f"initial_variance must be positive, got {self.initial_variance}"
            )
        if self.variance_floor is not None and not self.variance_floor > 0.0:
            raise ConfigurationError(
                f"variance_floor must be positive, got {self.variance_floor}"
            )
        if self.tol is not None and not self.tol > 0.0:
            raise ConfigurationError(f"tol must be positive, got {self.tol}")


@dataclass(frozen=True)
class RegistrationResult:
    """Output of one registration run.

    objective_trace holds the objective after each iteration's updates;
    pre_update_trace holds it before the updates of the same iteration
    (same posteriors), which exposes the per-iteration improvement.
    """

    transforms: list[RigidTransform]
    model: MixtureModel
    objective_trace: np.ndarray
    pre_update_trace: np.ndarray
    iterations_run: int


def _table_edges(neighbor_table: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n, k = neighbor_table.shape
    return np.repeat(np.arange(n), k), neighbor_table.ravel()


def kl_similarity(clouds, transforms, model: MixtureModel, posteriors: Posteriors,
                  j: int, i: int, b: int) -> float:
    """Symmetrized divergence surrogate between the posteriors of points i and b.

    Measured through the squared distances of both transformed points to
    every centroid, weighted by the posterior difference per component.
    """
    p_i = posteriors.components[j][i]
    p_b = posteriors.components[j][b]
    moved_i = transforms[j].apply(clouds[j][i])
    moved_b = transforms[j].apply(clouds[j][b])
    d2_i = ((moved_i - model.centroids) ** 2).sum(axis=1)
    d2_b = ((moved_b - model.centroids) ** 2).sum(axis=1)
    return float(((p_i - p_b) / (4.0 * model.variances) * (d2_b - d2_i)).sum())


def objective(clouds, transforms, model: MixtureModel, posteriors: Posteriors,
              graph: NeighborGraph | None, lam: float) -> float:
    """Penalized negative log-likelihood expectation with posteriors held fixed."""
    inv_var = 1.0 / model.variances
    log_var = np.log(model.variances)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_w = np.log(model.weights)
    data_term = 0.0
    var_term = 0.0
    weight_term = 0.0
    consistency = 0.0
    for j, pts in enumerate(clouds):
        post = posteriors.components[j]
        moved = transforms[j].apply(pts)
        d2 = _squared_distances(moved, model.centroids)
        data_term += float((post * d2 * (0.5 * inv_var)).sum())
        var_term += 1.5 * float((post * log_var).sum())
        with np.errstate(invalid="ignore"):
            weight_term -= float(np.where(post > 0.0, post * log_w, 0.0).sum())
        if lam != 0.0 and graph is not None:
            src, dst = graph.edges(j)
            delta = post[src] - post[dst]
            delta_d2 = d2[dst] - d2[src]
            consistency += float(((delta * delta_d2) * (0.25 * inv_var)).sum())
    for name, value in (
        ("data", data_term),
        ("variance", var_term),
        ("weight", weight_term),
        ("consistency", consistency),
    ):
        if not np.isfinite(value):
            raise NumericalError(f"objective {name} term is not finite")
    return data_term + var_term + weight_term + lam * consistency


def _pose_stats(points, post, neighbor_table, model: MixtureModel, lam: float):
    """Accumulated moments shared by the translation and rotation updates."""
    inv_var = 1.0 / model.variances
    weighted = post * inv_var
    row_w = weighted.sum(axis=1)
    n_p = float(row_w.sum())
    mu_x = row_w @ points
    mu_y = weighted.sum(axis=0) @ model.centroids
    if lam != 0.0 and neighbor_table is not None:
        src, dst = _table_edges(neighbor_table)
        delta = post[src] - post[dst]
        scale = delta @ inv_var
        mu_x = mu_x + 0.5 * lam * (scale @ (points[dst] - points[src]))
    return mu_x, mu_y, n_p


def update_translation(points, post, neighbor_table, rotation, model: MixtureModel,
                       lam: float) -> np.ndarray:
    """Closed-form translation for one cloud, given its rotation."""
    mu_x, mu_y, n_p = _pose_stats(points, post, neighbor_table, model, lam)
    if n_p <= 0.0:
        raise DegenerateDataError(
            "cloud has no posterior mass on any mixture component"
        )
    return mu_y / n_p - rotation @ (mu_x / n_p)


def solve_rotation(correlation) -> np.ndarray:
    """Best proper rotation maximizing trace(R @ correlation).

    SVD solve with a determinant correction that excludes reflections.
    Warns when the correlation matrix is rank deficient, in which case the
    maximizer may not be unique.
    """
    h = np.asarray(correlation, dtype=np.float64)
    u, s, vt = np.linalg.svd(h)
    if s[0] <= 0.0 or s[-1] <= 1e-9 * s[0]:
        warnings.warn(
            "rank-deficient point correlation; rotation estimate may be ambiguous",
            RuntimeWarning,
            stacklevel=2,
        )
    sign = np.sign(np.linalg.det(vt.T @ u.T))
    if sign == 0.0:
        sign = 1.0
    return vt.T @ np.diag([1.0, 1.0, sign]) @ u.T


def update_rotation(points, post, neighbor_table, model: MixtureModel,
                    lam: float) -> np.ndarray:
    """Closed-form rotation for one cloud on translation-eliminated coordinates."""
    inv_var = 1.0 / model.variances
    mu_x, _, n_p = _pose_stats(points, post, neighbor_table, model, lam)
    if n_p <= 0.0:
        raise DegenerateDataError(
            "cloud has no posterior mass on any mixture component"
        )
    centered = points - mu_x / n_p
    weighted = post * inv_var
    h = centered.T @ (weighted @ model.centroids)
    if lam != 0.0 and neighbor_table is not None:
        src, dst = _table_edges(neighbor_table)
        reverse_delta = post[dst] - post[src]
        targets = (reverse_delta * inv_var) @ model.centroids
        h = h + 0.5 * lam * ((points[src] - points[dst]).T @ targets)
    return solve_rotation(h)


def update_centroids(clouds, posteriors: Posteriors, graph: NeighborGraph | None,
                     transforms, model: MixtureModel, lam: float) -> np.ndarray:
    """Posterior-weighted means of the transformed points, with the
    neighbor-difference correction; zero-mass components stay put."""
    inv_var = 1.0 / model.variances
    m = model.n_components
    numerator = np.zeros((m, 3))
    denominator = np.zeros(m)
    mass = np.zeros(m)
    for j, pts in enumerate(clouds):
        post = posteriors.components[j]
        weighted = post * inv_var
        numerator += weighted.T @ transforms[j].apply(pts)
        denominator += weighted.sum(axis=0)
        mass += post.sum(axis=0)
        if lam != 0.0 and graph is not None:
            src, dst = graph.edges(j)
            delta = post[src] - post[dst]
            diff_moved = (pts[src] - pts[dst]) @ transforms[j].rotation.T
            numerator -= 0.5 * lam * ((delta * inv_var).T @ diff_moved)
    new_centroids = np.array(model.centroids, copy=True)
    active = mass >= MASS_EPS
    new_centroids[active] = numerator[active] / denominator[active, None]
    return new_centroids


def update_variances(clouds, posteriors: Posteriors, graph: NeighborGraph | None,
                     transforms, centroids, lam: float, old_variances,
                     variance_floor: float) -> np.ndarray:
    """Residual-based variances with the neighbor term, clamped from below.

    Uses the already-updated centroids and poses; zero-mass components
    keep their previous variance.
    """
    centroids = np.asarray(centroids, dtype=np.float64)
    m = centroids.shape[0]
    base = np.zeros(m)
    consistency = np.zeros(m)
    mass = np.zeros(m)
    for j, pts in enumerate(clouds):
        post = posteriors.components[j]
        d2 = _squared_distances(transforms[j].apply(pts), centroids)
        base += (post * d2).sum(axis=0)
        mass += post.sum(axis=0)
        if lam != 0.0 and graph is not None:
            src, dst = graph.edges(j)
            delta = post[src] - post[dst]
            consistency += (delta * (d2[dst] - d2[src])).sum(axis=0)
    new_variances = np.array(old_variances, dtype=np.float64, copy=True)
    active = mass >= MASS_EPS
    new_variances[active] = (
        base[active] / (3.0 * mass[active])
        + lam * consistency[active] / (6.0 * mass[active])
    )
    return np.maximum(new_variances, variance_floor)


def update_weights(posteriors: Posteriors, outlier_weight: float) -> np.ndarray:
    """Component weights proportional to posterior mass, leaving the
    outlier share untouched."""
    mass = posteriors.component_mass()
    total = float(mass.sum())
    if total <= 0.0:
        raise DegenerateDataError("no posterior mass on any mixture component")
    return (1.0 - outlier_weight) * mass / total


def _run_block(iteration: int, name: str, fn):
    try:
        return fn()
    except (DegenerateDataError, NumericalError) as exc:
        raise SolverError(f"iteration {iteration}, block '{name}': {exc}") from exc


def run_registration(clouds, config: RegistrationConfig) -> RegistrationResult:
    """Register a set of clouds against a shared mixture.

    Poses start at identity rotations with center-difference translations;
    centroids start on the half-radius sphere. The neighbor graph is built
    once on the input coordinates. Each iteration runs the posterior
    estimation followed by all closed-form updates and records the
    objective before and after the updates.
    """
    clouds = check_cloud_set(clouds)
    graph = NeighborGraph.build(clouds, config.k_neighbors)
    model = init_mixture(
        clouds, config.m_count, config.outlier_weight, config.initial_variance
    )
    variance_floor = config.variance_floor
    if variance_floor is None:
        variance_floor = (VARIANCE_FLOOR_REL * bounding_box_diagonal(clouds)) ** 2
    center, _ = bounding_sphere(clouds)
    transforms = [
        RigidTransform(np.eye(3), center - pts.mean(axis=0)) for pts in clouds
    ]

    lam = config.lam
    pre_trace: list[float] = []
    post_trace: list[float] = []
    for iteration in range(1, config.iterations + 1):
        posteriors = _run_block(
            iteration, "posteriors", lambda: e_step(clouds, transforms, model)
        )
        pre_trace.append(
            objective(clouds, transforms, model, posteriors, graph, lam)
        )

        new_transforms = []
        for j, pts in enumerate(clouds):
            post = posteriors.components[j]
            table = graph.neighbors[j]
            rot = _run_block(
                iteration,
                f"rotation (cloud {j})",
                lambda p=pts, q=post, t=table: update_rotation(p, q, t, model, lam),
            )
            tr = _run_block(
                iteration,
                f"translation (cloud {j})",
                lambda p=pts, q=post, t=table, r=rot: update_translation(
                    p, q, t, r, model, lam
                ),
            )
            new_transforms.append(RigidTransform(rot, tr))
        transforms = new_transforms

        centroids = _run_block(
            iteration,
            "centroids",
            lambda: update_centroids(clouds, posteriors, graph, transforms, model, lam),
        )
        variances = _run_block(
            iteration,
            "variances",
            lambda: update_variances(
                clouds, posteriors, graph, transforms, centroids, lam,
                model.variances, variance_floor,
            ),
        )
        weights = _run_block(
            iteration,
            "weights",
            lambda: update_weights(posteriors, config.outlier_weight),
        )
        model = MixtureModel(
            centroids=centroids,
            variances=variances,
            weights=weights,
            outlier_weight=config.outlier_weight,
            volume=model.volume,
        )
        post_trace.append(
            objective(clouds, transforms, model, posteriors, graph, lam)
        )
        if (
            config.tol is not None
            and len(post_trace) >= 2
            and abs(post_trace[-1] - post_trace[-2])
            <= config.tol * abs(post_trace[-2])
        ):
            break

    return RegistrationResult(
        transforms=transforms,
        model=model,
        objective_trace=np.asarray(post_trace),
        pre_update_trace=np.asarray(pre_trace),
        iterations_run=len(post_trace),
    )
