"""Synthetic degradation protocol and the robustness experiment harness.

A trial takes one base cloud, draws per-cloud ground-truth poses, builds
misaligned degraded copies (subsample, inverse pose, noise, outliers),
runs the solver, and scores the recovered poses. Sweeps repeat trials
over one axis (noise level, outlier ratio, or penalty weight) with
repeat-paired seeds so levels stay comparable.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np

from .em import RegistrationConfig, run_registration
from .errors import ConfigurationError, SolverError
from .geometry import RigidTransform, registration_rmse
from .validation import check_cloud

SUCCESS_THRESHOLD_MM = 10.0
DEFAULT_CLOUD_SIZES = (1000, 700, 500, 300)
OUTLIER_BOX_INFLATION = 0.10

# Desk-scale solver settings keep a full sweep in the minutes range; the
# full-size configuration is RegistrationConfig() itself.
def _desk_config() -> RegistrationConfig:
    return RegistrationConfig(m_count=100)


SWEEP_AXES = ("noise", "outliers", "lambda")


def synthetic_surface(n_u: int = 40, n_v: int = 25) -> np.ndarray:
    """Deterministic curved sheet, about 300 mm across, n_u * n_v points.

    The twist term breaks the flip symmetry of a plain sinusoidal sheet
    so pose recovery has a unique answer.
    """
    u = np.linspace(0.0, 1.0, n_u)
    v = np.linspace(0.0, 1.0, n_v)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    x = 300.0 * uu
    y = 160.0 * (vv - 0.5)
    z = 40.0 * np.sin(math.pi * uu) + 12.0 * np.cos(2.0 * math.pi * vv) \
        + 0.08 * x * (vv - 0.5)
    return np.column_stack([x.ravel(), y.ravel(), z.ravel()])


def subsample(points, n: int, seed) -> np.ndarray:
    """Uniform sample of n points without replacement."""
    pts = check_cloud(points)
    if not 1 <= n <= pts.shape[0]:
        raise ConfigurationError(
            f"sample size must be in [1, {pts.shape[0]}], got {n}"
        )
    rng = np.random.default_rng(seed)
    idx = rng.choice(pts.shape[0], size=n, replace=False)
    return pts[idx]


def add_gaussian_noise(points, sigma: float, seed) -> np.ndarray:
    """Independent zero-mean normal perturbation of every coordinate."""
    pts = check_cloud(points)
    if sigma < 0.0:
        raise ConfigurationError(f"noise sigma must be >= 0, got {sigma}")
    if sigma == 0.0:
        return pts.copy()
    rng = np.random.default_rng(seed)
    return pts + sigma * rng.standard_normal(pts.shape)


def add_outliers(points, ratio: float, seed) -> np.ndarray:
    """Append ceil(ratio * n) uniform points inside the inflated bounding box.

    Original points are untouched and keep their positions at the front.
    """
    pts = check_cloud(points)
    if not 0.0 <= ratio < 1.0:
        raise ConfigurationError(f"outlier ratio must be in [0, 1), got {ratio}")
    count = math.ceil(ratio * pts.shape[0])
    if count == 0:
        return pts.copy()
    rng = np.random.default_rng(seed)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    pad = OUTLIER_BOX_INFLATION * (hi - lo)
    extras = rng.uniform(lo - pad, hi + pad, size=(count, 3))
    return np.vstack([pts, extras])


def random_rigid(rot_range_deg: float, trans_range_mm: float, seed) -> RigidTransform:
    """Random pose: per-axis uniform angles (intrinsic X-Y-Z) and offsets."""
    if rot_range_deg < 0.0 or trans_range_mm < 0.0:
        raise ConfigurationError("rotation and translation ranges must be >= 0")
    rng = np.random.default_rng(seed)
    ax, ay, az = np.deg2rad(rng.uniform(-rot_range_deg, rot_range_deg, 3))
    translation = rng.uniform(-trans_range_mm, trans_range_mm, 3)
    ca, sa = math.cos(ax), math.sin(ax)
    cb, sb = math.cos(ay), math.sin(ay)
    cc, sc = math.cos(az), math.sin(az)
    rx = np.array([[1.0, 0.0, 0.0], [0.0, ca, -sa], [0.0, sa, ca]])
    ry = np.array([[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]])
    rz = np.array([[cc, -sc, 0.0], [sc, cc, 0.0], [0.0, 0.0, 1.0]])
    return RigidTransform(rx @ ry @ rz, translation)


@dataclass(frozen=True)
class TrialSpec:
    """Everything one trial depends on; two equal specs give equal reports."""

    seed: int
    noise_sigma: float = 0.0
    outlier_ratio: float = 0.0
    rotation_range_deg: float = 60.0
    translation_range_mm: float = 40.0
    cloud_sizes: tuple[int, ...] = DEFAULT_CLOUD_SIZES
    config: RegistrationConfig = field(default_factory=_desk_config)

    def __post_init__(self):
        if self.noise_sigma < 0.0:
            raise ConfigurationError(f"noise sigma must be >= 0, got {self.noise_sigma}")
        if not 0.0 <= self.outlier_ratio < 1.0:
            raise ConfigurationError(
                f"outlier ratio must be in [0, 1), got {self.outlier_ratio}"
            )
        if self.rotation_range_deg < 0.0 or self.translation_range_mm < 0.0:
            raise ConfigurationError("pose ranges must be >= 0")
        if len(self.cloud_sizes) < 2 or any(n < 1 for n in self.cloud_sizes):
            raise ConfigurationError(
                f"need at least 2 cloud sizes, all >= 1, got {self.cloud_sizes}"
            )
        object.__setattr__(self, "cloud_sizes", tuple(int(n) for n in self.cloud_sizes))


@dataclass(frozen=True)
class TrialReport:
    """Outcome of one trial; success means the error beat the threshold."""

    rmse_mm: float
    success: bool
    objective_trace: tuple[float, ...]
    wall_time_s: float
    seed: int
    failure: str | None = None


def make_trial_clouds(spec: TrialSpec, base_cloud) -> tuple[list[np.ndarray], list[RigidTransform]]:
    """Degraded input clouds and the ground-truth poses that re-align them.

    Per cloud: subsample the base, move it by the inverse ground-truth
    pose, then add noise, then outliers. Every random step draws from its
    own child of the trial seed, so any prefix of the pipeline is stable
    when later stages change.
    """
    base = check_cloud(base_cloud)
    streams = np.random.SeedSequence(spec.seed).spawn(4 * len(spec.cloud_sizes))
    clouds = []
    truths = []
    for j, size in enumerate(spec.cloud_sizes):
        s_pose, s_sample, s_noise, s_outlier = streams[4 * j : 4 * j + 4]
        truth = random_rigid(spec.rotation_range_deg, spec.translation_range_mm, s_pose)
        pts = subsample(base, size, s_sample)
        pts = truth.inverse().apply(pts)
        pts = add_gaussian_noise(pts, spec.noise_sigma, s_noise)
        pts = add_outliers(pts, spec.outlier_ratio, s_outlier)
        clouds.append(pts)
        truths.append(truth)
    return clouds, truths


def run_trial(spec: TrialSpec, base_cloud,
              success_threshold_mm: float = SUCCESS_THRESHOLD_MM) -> TrialReport:
    """One degradation + registration + scoring round."""
    start = time.perf_counter()
    clouds, truths = make_trial_clouds(spec, base_cloud)
    try:
        result = run_registration(clouds, spec.config)
    except SolverError as exc:
        return TrialReport(
            rmse_mm=float("inf"),
            success=False,
            objective_trace=(),
            wall_time_s=time.perf_counter() - start,
            seed=spec.seed,
            failure=str(exc),
        )
    error = registration_rmse(result.transforms, truths, clouds)
    return TrialReport(
        rmse_mm=error,
        success=error < success_threshold_mm,
        objective_trace=tuple(float(v) for v in result.objective_trace),
        wall_time_s=time.perf_counter() - start,
        seed=spec.seed,
    )


@dataclass(frozen=True)
class SweepRow:
    """Aggregate of all trials at one sweep level.

    Mean and spread cover successful trials only; the success rate covers
    all trials. With no successful trial both statistics are NaN.
    """

    level: float
    trials: int
    success_rate: float
    mean_rmse_mm: float
    std_rmse_mm: float


def summarize_level(level: float, reports) -> SweepRow:
    reports = list(reports)
    if not reports:
        raise ConfigurationError("cannot summarize an empty trial list")
    successes = [r.rmse_mm for r in reports if r.success]
    if successes:
        mean = float(np.mean(successes))
        std = float(np.std(successes))
    else:
        mean = float("nan")
        std = float("nan")
    return SweepRow(
        level=float(level),
        trials=len(reports),
        success_rate=len(successes) / len(reports),
        mean_rmse_mm=mean,
        std_rmse_mm=std,
    )


def _spec_at_level(base_spec: TrialSpec, axis: str, level: float, seed: int) -> TrialSpec:
    if axis == "noise":
        return replace(base_spec, seed=seed, noise_sigma=float(level))
    if axis == "outliers":
        return replace(base_spec, seed=seed, outlier_ratio=float(level))
    if axis == "lambda":
        return replace(
            base_spec, seed=seed, config=replace(base_spec.config, lam=float(level))
        )
    raise ConfigurationError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


def trial_seed(seed: int, repeat: int) -> int:
    """Per-repeat trial seed, shared across levels so trials pair up."""
    return int(np.random.SeedSequence((seed, repeat)).generate_state(1)[0])


def resolve_workers(workers: int | None = None) -> int:
    """Worker count for sweep parallelism, capped by JPRLC_THREADS (0 = auto)."""
    cap_raw = os.environ.get("JPRLC_THREADS", "0")
    try:
        cap = int(cap_raw)
    except ValueError as exc:
        raise ConfigurationError(f"JPRLC_THREADS must be an integer, got {cap_raw!r}") from exc
    if cap <= 0:
        cap = os.cpu_count() or 1
    if workers is None or workers <= 0:
        workers = cap
    return max(1, min(workers, cap))


@dataclass(frozen=True)
class SweepResult:
    rows: list[SweepRow]
    reports: dict[float, list[TrialReport]]


def run_sweep(base_cloud, axis: str, levels, repeats: int = 10, seed: int = 0,
              base_spec: TrialSpec | None = None,
              success_threshold_mm: float = SUCCESS_THRESHOLD_MM,
              workers: int | None = None) -> SweepResult:
    """Repeat trials over one axis and aggregate per level.

    Results are keyed by (level, repeat) and aggregated in submission
    order, so the output does not depend on the worker count.
    """
    axis = str(axis)
    levels = [float(v) for v in levels]
    if not levels:
        raise ConfigurationError("sweep needs at least one level")
    if repeats < 1:
        raise ConfigurationError(f"repeats must be >= 1, got {repeats}")
    if axis not in SWEEP_AXES:
        raise ConfigurationError(
            f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}"
        )
    if base_spec is None:
        base_spec = TrialSpec(seed=0, noise_sigma=3.0, outlier_ratio=0.10)
    base = check_cloud(base_cloud)

    specs = [
        _spec_at_level(base_spec, axis, level, trial_seed(seed, rep))
        for level in levels
        for rep in range(repeats)
    ]
    n_workers = resolve_workers(workers)
    runner = partial(run_trial, base_cloud=base, success_threshold_mm=success_threshold_mm)
    if n_workers > 1 and len(specs) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            all_reports = list(pool.map(runner, specs))
    else:
        all_reports = [runner(s) for s in specs]

    rows = []
    reports: dict[float, list[TrialReport]] = {}
    for idx, level in enumerate(levels):
        level_reports = all_reports[idx * repeats : (idx + 1) * repeats]
        reports[level] = level_reports
        rows.append(summarize_level(level, level_reports))
    return SweepResult(rows=rows, reports=reports)
