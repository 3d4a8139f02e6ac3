"""Estimator-style front end for joint multi-cloud registration."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .em import RegistrationConfig, run_registration
from .errors import ConfigurationError
from .validation import check_cloud_set


class JointRegistration(TransformerMixin, BaseEstimator):
    """Jointly registers N rigid point clouds against a shared mixture.

    Follows the fit/transform convention: `fit` takes a sequence of
    (n_j, 3) arrays and estimates one rigid pose per cloud plus the fitted
    mixture; `transform` maps each cloud into the common frame with its
    fitted pose.

    Parameters
    ----------
    lam : float, weight of the neighbor-consistency penalty; 0 falls back
        to the plain mixture fit.
    n_components : int, number of Gaussian components.
    outlier_weight : float in [0, 1), fixed weight of the uniform
        outlier component.
    max_iter : int, number of alternating iterations.
    k_neighbors : int, directed k-NN graph size per point.
    initial_variance : float, starting variance in mm^2.
    variance_floor : float or None, lower clamp for variances; None
        derives it from the data extent.
    tol : float or None, relative objective change for early stopping;
        None always runs `max_iter` iterations.

    Attributes
    ----------
    transforms_ : list of fitted RigidTransform, one per input cloud.
    rotations_ : (n_clouds, 3, 3) array of fitted rotations.
    translations_ : (n_clouds, 3) array of fitted translations.
    mixture_ : the fitted MixtureModel.
    objective_trace_ : per-iteration objective values.
    n_iter_ : iterations actually run.
    """

    def __init__(
        self,
        lam: float = 0.1,
        n_components: int = 1000,
        outlier_weight: float = 0.1,
        max_iter: int = 100,
        k_neighbors: int = 5,
        initial_variance: float = 1000.0,
        variance_floor: float | None = None,
        tol: float | None = None,
    ):
        self.lam = lam
        self.n_components = n_components
        self.outlier_weight = outlier_weight
        self.max_iter = max_iter
        self.k_neighbors = k_neighbors
        self.initial_variance = initial_variance
        self.variance_floor = variance_floor
        self.tol = tol

    def _config(self) -> RegistrationConfig:
        return RegistrationConfig(
            lam=self.lam,
            iterations=self.max_iter,
            k_neighbors=self.k_neighbors,
            m_count=self.n_components,
            outlier_weight=self.outlier_weight,
            initial_variance=self.initial_variance,
            variance_floor=self.variance_floor,
            tol=self.tol,
        )

    def fit(self, X, y=None):
        """Estimate one rigid pose per cloud.

        X is a sequence of at least two (n_j, 3) arrays.
        """
        result = run_registration(X, self._config())
        self.transforms_ = result.transforms
        self.rotations_ = np.stack([t.rotation for t in result.transforms])
        self.translations_ = np.stack([t.translation for t in result.transforms])
        self.mixture_ = result.model
        self.objective_trace_ = result.objective_trace
        self.n_iter_ = result.iterations_run
        self.n_clouds_ = len(result.transforms)
        return self

    def transform(self, X) -> list[np.ndarray]:
        """Map every cloud into the common frame with its fitted pose."""
        check_is_fitted(self, "transforms_")
        clouds = check_cloud_set(X)
        if len(clouds) != self.n_clouds_:
            raise ConfigurationError(
                f"fitted on {self.n_clouds_} clouds, got {len(clouds)}"
            )
        return [t.apply(c) for t, c in zip(self.transforms_, clouds)]
