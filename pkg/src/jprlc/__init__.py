"""Joint rigid registration of multiple 3D point clouds.

All clouds are modeled as samples of one shared Gaussian mixture with a
uniform outlier component; poses and mixture parameters are estimated by
alternating closed-form updates. A neighbor-consistency penalty keeps the
posteriors of nearby points similar, which stabilizes the correspondences
under noise and outliers.
"""

from .bench import (
    SweepResult,
    SweepRow,
    TrialReport,
    TrialSpec,
    add_gaussian_noise,
    add_outliers,
    make_trial_clouds,
    random_rigid,
    run_sweep,
    run_trial,
    subsample,
    summarize_level,
    synthetic_surface,
)
from .em import (
    RegistrationConfig,
    RegistrationResult,
    kl_similarity,
    objective,
    run_registration,
    solve_rotation,
    update_centroids,
    update_rotation,
    update_translation,
    update_variances,
    update_weights,
)
from .errors import (
    ConfigurationError,
    DegenerateDataError,
    NumericalError,
    SolverError,
)
from .geometry import (
    RigidTransform,
    bounding_box_diagonal,
    bounding_box_volume,
    bounding_sphere,
    registration_rmse,
)
from .io import CloudFormatError, read_cloud, read_poses, write_cloud, write_poses
from .mixture import (
    MixtureModel,
    Posteriors,
    e_step,
    fibonacci_sphere,
    gaussian_density,
    init_mixture,
)
from .neighbors import NeighborGraph, knn_indices
from .registration import JointRegistration

__version__ = "0.1.0"

__all__ = [
    "CloudFormatError",
    "ConfigurationError",
    "DegenerateDataError",
    "JointRegistration",
    "MixtureModel",
    "NeighborGraph",
    "NumericalError",
    "Posteriors",
    "RegistrationConfig",
    "RegistrationResult",
    "RigidTransform",
    "SolverError",
    "SweepResult",
    "SweepRow",
    "TrialReport",
    "TrialSpec",
    "add_gaussian_noise",
    "add_outliers",
    "bounding_box_diagonal",
    "bounding_box_volume",
    "bounding_sphere",
    "e_step",
    "fibonacci_sphere",
    "gaussian_density",
    "init_mixture",
    "kl_similarity",
    "knn_indices",
    "make_trial_clouds",
    "objective",
    "random_rigid",
    "read_cloud",
    "read_poses",
    "registration_rmse",
    "run_registration",
    "run_sweep",
    "run_trial",
    "solve_rotation",
    "subsample",
    "summarize_level",
    "synthetic_surface",
    "update_centroids",
    "update_rotation",
    "update_translation",
    "update_variances",
    "update_weights",
    "write_cloud",
    "write_poses",
]
