"""Synthetic-data experiments: correlated designs, row-space targets,
SNR-calibrated noise, and replicated relative-prediction-error runs.

Randomness policy: every stream is a Philox counter-based generator keyed
by a SeedSequence spawn key (replication index, stage index) derived from
the experiment seed, so results are reproducible bit-for-bit regardless of
worker count and unaffected by which estimators are requested.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .cv import CvConfig, default_r_grid, kfold_cv_ridge
from .data import Dataset
from .exceptions import TridgeError
from .glm import GAUSSIAN, GlmFamily, family
from .ridge import fit_ridge
from .tridge import TridgeConfig, tridge_fit

KNOWN_ESTIMATORS = ("tridge", "cv5", "cv10", "mle")

# Stage indices for per-replication child streams.
_STAGE_DESIGN, _STAGE_BETA, _STAGE_OUTCOME, _STAGE_CV5, _STAGE_CV10 = range(5)


def rng_from(seed) -> np.random.Generator:
    """Build the package's Philox generator from a seed, SeedSequence, or
    pass an existing Generator through."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def _child(seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))


@dataclass(frozen=True)
class GaussianNoiseSpec:
    """Noise variance for Gaussian outcome sampling."""

    sigma2: float

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")


def generate_design(n: int, p: int, k: float, seed) -> np.ndarray:
    """Sample an n x p design with row covariance k^|u-v| and unit-norm columns.

    Each row follows the AR(1) recursion z_1 = eta_1,
    z_j = k z_{j-1} + sqrt(1 - k^2) eta_j with standard normal eta, whose
    stationary covariance is exactly k^|u-v| (k = 0 gives i.i.d. entries).
    Columns are rescaled to unit Euclidean norm afterwards.
    """
    if not 0.0 <= k < 1.0:
        raise ValueError(f"correlation magnitude k must be in [0, 1), got {k}")
    rng = rng_from(seed)
    eta = rng.standard_normal((n, p))
    X = np.empty((n, p))
    X[:, 0] = eta[:, 0]
    if p > 1:
        innovation = math.sqrt(1.0 - k * k)
        for j in range(1, p):
            X[:, j] = k * X[:, j - 1] + innovation * eta[:, j]
    X /= np.linalg.norm(X, axis=0)
    return X


def generate_beta(X: np.ndarray, seed) -> np.ndarray:
    """Draw standard normal coefficients and project them onto the row
    space of X (singular values below 1e-10 of the largest count as zero)."""
    X = np.asarray(X, dtype=float)
    rng = rng_from(seed)
    draw = rng.standard_normal(X.shape[1])
    _, s, Vt = np.linalg.svd(X, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        raise ValueError("X must be nonzero")
    keep = s > 1e-10 * s[0]
    V = Vt[keep].T
    return V @ (V.T @ draw)


def sigma_for_snr(X: np.ndarray, beta_star: np.ndarray, snr: float) -> GaussianNoiseSpec:
    """Invert the signal-to-noise definition for the realized linear
    predictors: sigma^2 = (sum z^2 - (sum z)^2 / n) / (snr (n - 1))."""
    if snr <= 0:
        raise ValueError(f"snr must be positive, got {snr}")
    z = np.asarray(X, dtype=float) @ np.asarray(beta_star, dtype=float)
    n = z.shape[0]
    if n < 2:
        raise ValueError("need at least two observations to calibrate noise")
    numerator = float(z @ z - z.sum() ** 2 / n)
    if numerator <= 0:
        raise ValueError("degenerate signal: centered sum of squares is not positive")
    return GaussianNoiseSpec(sigma2=numerator / (snr * (n - 1)))


def sample_outcomes(fam, X: np.ndarray, beta_star: np.ndarray,
                    noise: GaussianNoiseSpec | None = None, seed=0) -> np.ndarray:
    """Sample outcomes from the family's conditional model at beta_star.

    A noise spec is required for the Gaussian family and rejected
    otherwise.
    """
    fam = family(fam)
    X = np.asarray(X, dtype=float)
    z = X @ np.asarray(beta_star, dtype=float)
    rng = rng_from(seed)
    if fam.kind == "gaussian":
        if noise is None:
            raise ValueError("Gaussian sampling requires a GaussianNoiseSpec")
        return z + math.sqrt(noise.sigma2) * rng.standard_normal(z.shape[0])
    if noise is not None:
        raise ValueError(f"noise spec is only valid for the Gaussian family, not {fam.kind}")
    if fam.kind == "poisson":
        if np.any(z > 30.0):
            bad = int(np.argmax(z > 30.0))
            raise ValueError(
                f"Poisson mean overflow: linear predictor {z[bad]:.3f} > 30 at row {bad}"
            )
        return rng.poisson(np.exp(z)).astype(float)
    return rng.binomial(1, expit(z)).astype(float)


def relative_prediction_error(X: np.ndarray, beta_hat: np.ndarray,
                              beta_star: np.ndarray) -> float:
    """||X (beta_hat - beta_star)|| / ||X beta_star||."""
    X = np.asarray(X, dtype=float)
    signal = float(np.linalg.norm(X @ np.asarray(beta_star, dtype=float)))
    if signal == 0.0:
        raise ValueError("X beta_star must be nonzero")
    miss = float(np.linalg.norm(X @ (np.asarray(beta_hat, float) - np.asarray(beta_star, float))))
    return miss / signal


@dataclass(frozen=True)
class SimConfig:
    """One experiment cell: dimensions, correlation, family, and seeds."""

    family: GlmFamily
    n: int
    p: int
    k: float = 0.0
    snr: float = 10.0
    replications: int = 100
    seed: int = 0
    estimators: tuple = ("tridge", "cv5", "cv10")

    def __post_init__(self):
        object.__setattr__(self, "family", family(self.family))
        if self.n < 2 or self.p < 1:
            raise ValueError(f"need n >= 2 and p >= 1, got n={self.n}, p={self.p}")
        if not 0.0 <= self.k < 1.0:
            raise ValueError(f"k must be in [0, 1), got {self.k}")
        if self.snr <= 0:
            raise ValueError(f"snr must be positive, got {self.snr}")
        if self.replications < 1:
            raise ValueError("need at least one replication")
        estimators = tuple(self.estimators)
        for name in estimators:
            if name not in KNOWN_ESTIMATORS:
                raise ValueError(
                    f"unknown estimator {name!r}; expected a subset of {KNOWN_ESTIMATORS}"
                )
        if not estimators:
            raise ValueError("at least one estimator is required")
        object.__setattr__(self, "estimators", estimators)


def generate_replication(config: SimConfig, rep: int):
    """Data for one replication: (Dataset, beta_star). Depends only on
    (seed, rep), never on the estimator list."""
    X = generate_design(config.n, config.p, config.k,
                        _child(config.seed, rep, _STAGE_DESIGN))
    beta_star = generate_beta(X, _child(config.seed, rep, _STAGE_BETA))
    noise = None
    if config.family.kind == "gaussian":
        noise = sigma_for_snr(X, beta_star, config.snr)
    y = sample_outcomes(config.family, X, beta_star, noise,
                        _child(config.seed, rep, _STAGE_OUTCOME))
    return Dataset(X, y), beta_star


def _cv_seed(config: SimConfig, rep: int, stage: int) -> int:
    return int(_child(config.seed, rep, stage).generate_state(1)[0])


def _fit_one(name: str, config: SimConfig, data: Dataset, rep: int) -> np.ndarray:
    if name == "tridge":
        return tridge_fit(config.family, data, TridgeConfig()).beta
    if name in ("cv5", "cv10"):
        folds = 5 if name == "cv5" else 10
        stage = _STAGE_CV5 if name == "cv5" else _STAGE_CV10
        cv_config = CvConfig(folds=folds, r_grid=tuple(default_r_grid(data)),
                             seed=_cv_seed(config, rep, stage))
        return kfold_cv_ridge(config.family, data, cv_config).beta
    if name == "mle":
        return fit_ridge(config.family, data, 0.0).beta
    raise ValueError(f"unknown estimator {name!r}")


def _run_replication(config: SimConfig, rep: int):
    """Worker task: returns (rep, {estimator: error}, {estimator: message})."""
    data, beta_star = generate_replication(config, rep)
    errors: dict[str, float] = {}
    failures: dict[str, str] = {}
    for name in config.estimators:
        try:
            beta_hat = _fit_one(name, config, data, rep)
            errors[name] = relative_prediction_error(data.X, beta_hat, beta_star)
        except (TridgeError, ValueError, np.linalg.LinAlgError) as exc:
            failures[name] = f"{type(exc).__name__}: {exc}"
    return rep, errors, failures


def _worker_count(tasks: int) -> int:
    cpus = os.cpu_count() or 1
    cap = os.environ.get("TRIDGE_THREADS")
    if cap is not None:
        cpus = min(cpus, max(1, int(cap)))
    return max(1, min(cpus, tasks))


@dataclass
class EstimatorStats:
    estimator: str
    errors: list  # (replication, relative error) pairs, ordered
    failures: list  # (replication, message) pairs
    mean: float
    sd: float


@dataclass
class SimReport:
    """Aggregated experiment outcome; means and sds are recomputable from
    the stored raw errors."""

    config: SimConfig
    stats: dict[str, EstimatorStats]
    valid: bool
    runtime_seconds: float | None = None

    def csv_rows(self):
        rows = []
        for name in self.config.estimators:
            s = self.stats[name]
            rows.append((name, self.config.n, self.config.p, self.config.k,
                         s.mean, s.sd))
        return rows

    def to_dict(self, include_runtime: bool = False) -> dict:
        payload = {
            "config": {
                "family": self.config.family.kind,
                "n": self.config.n,
                "p": self.config.p,
                "k": self.config.k,
                "snr": self.config.snr,
                "replications": self.config.replications,
                "seed": self.config.seed,
                "estimators": list(self.config.estimators),
            },
            "valid": self.valid,
            "estimators": {
                name: {
                    "mean": _json_float(s.mean),
                    "sd": _json_float(s.sd),
                    "errors": [[rep, _json_float(err)] for rep, err in s.errors],
                    "failures": [[rep, msg] for rep, msg in s.failures],
                }
                for name, s in self.stats.items()
            },
        }
        if include_runtime and self.runtime_seconds is not None:
            payload["runtime_seconds"] = self.runtime_seconds
        return payload


def _json_float(x):
    return float(x) if math.isfinite(x) else None


def _aggregate(config: SimConfig, outcomes) -> SimReport:
    stats: dict[str, EstimatorStats] = {}
    for name in config.estimators:
        pairs = []
        failures = []
        for rep, errors, failed in outcomes:
            if name in errors:
                pairs.append((rep, errors[name]))
            elif name in failed:
                failures.append((rep, failed[name]))
        values = np.array([v for _, v in pairs])
        mean = float(values.mean()) if values.size else math.nan
        sd = float(values.std(ddof=1)) if values.size > 1 else math.nan
        stats[name] = EstimatorStats(estimator=name, errors=pairs,
                                     failures=failures, mean=mean, sd=sd)
    max_failures = max(len(s.failures) for s in stats.values())
    valid = max_failures <= 0.05 * config.replications
    return SimReport(config=config, stats=stats, valid=valid)


def run_experiment(config: SimConfig) -> SimReport:
    """Run all replications of an experiment cell and aggregate.

    Replications run in parallel processes when more than one worker is
    available (capped by the TRIDGE_THREADS environment variable); the
    reduction is ordered by replication index, so the report is identical
    for any worker count.
    """
    start = time.perf_counter()
    reps = range(config.replications)
    workers = _worker_count(config.replications)
    if workers == 1:
        outcomes = [_run_replication(config, rep) for rep in reps]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunk = max(1, config.replications // (4 * workers))
            outcomes = list(pool.map(_run_replication, [config] * config.replications,
                                     reps, chunksize=chunk))
    outcomes.sort(key=lambda item: item[0])
    report = _aggregate(config, outcomes)
    report.runtime_seconds = time.perf_counter() - start
    return report


@dataclass
class MleCurvePoint:
    n: int
    rel_error: float
    replications_used: int
    replications_failed: int


def mle_convergence_study(n_grid, p: int = 20, k: float = 0.0, seed: int = 0,
                          fam=GAUSSIAN, snr: float = 10.0,
                          replications: int = 10) -> list[MleCurvePoint]:
    """Distance between the tuning-free fit and the unregularized maximum
    likelihood fit, ||beta_tridge - beta_mle|| / ||beta_mle||, per sample
    size. Requires n > p so the MLE is well defined; replications with a
    failed MLE solve are skipped and counted.
    """
    fam = family(fam)
    points = []
    for n in n_grid:
        if n <= p:
            raise ValueError(f"every n must exceed p={p}, got n={n}")
        values = []
        failed = 0
        for rep in range(replications):
            X = generate_design(n, p, k, _child(seed, n, rep, _STAGE_DESIGN))
            beta_star = generate_beta(X, _child(seed, n, rep, _STAGE_BETA))
            noise = None
            if fam.kind == "gaussian":
                noise = sigma_for_snr(X, beta_star, snr)
            y = sample_outcomes(fam, X, beta_star, noise,
                                _child(seed, n, rep, _STAGE_OUTCOME))
            data = Dataset(X, y)
            try:
                mle = fit_ridge(fam, data, 0.0)
            except TridgeError:
                failed += 1
                continue
            tri = tridge_fit(fam, data)
            mle_norm = float(np.linalg.norm(mle.beta))
            values.append(float(np.linalg.norm(tri.beta - mle.beta)) / mle_norm)
        points.append(MleCurvePoint(
            n=int(n),
            rel_error=float(np.mean(values)) if values else math.nan,
            replications_used=len(values),
            replications_failed=failed,
        ))
    return points
