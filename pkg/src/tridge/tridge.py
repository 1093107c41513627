"""Tuning-free ridge estimation.

The estimator minimizes the scale-free objective

    f(beta) = L(beta) / ||s(beta)|| + ||beta||,

which is nonconvex but whose minimizer always lies on the ridge path. The
fit therefore proceeds in three steps: a Fletcher-Reeves search for a
stationary point of f, a remapping of that point onto a ridge parameter
r = ||s|| / (2 ||beta||), and a dense grid search over the ridge path in a
narrow window around that r.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .exceptions import AllGridFailedError, VanishingScoreError
from .glm import (
    GlmFamily,
    family,
    margin_constant,
    negative_loglik,
    score,
    score_zero_threshold,
)
from .ridge import RidgeProblem, RidgeSolution, edr_fit, ridge_path

FR_MAX_ITER = 200
FR_ARMIJO = 1e-4
FR_MAX_BACKTRACKS = 60

# Step 1 stops when the per-iteration relative objective decrease falls
# below this: the scale-free objective has descent valleys with no interior
# stationary point (kinks and unbounded ratios), and the narrowed grid of
# the main fit only needs the stall location, not a polished optimum.
FR_STALL_TOL = 1e-3

# Cap on |x_i'beta_0| for the initializer, keeping exponential-family
# cumulants well inside floating-point range at the starting point.
INIT_PREDICTOR_CAP = 20.0

# ||beta_sp|| below this (relative to the initializer scale) triggers the
# degenerate grid branch.
DEGENERATE_SP_TOL = 1e-10


@dataclass(frozen=True)
class TridgeConfig:
    """Grid-search parameters: half-width c, grid size m, and the floor /
    degenerate bounds applied to the ridge parameter window."""

    c: float = 0.1
    m: int = 1000
    r_floor: float = 0.05
    degenerate_r_min: float = 1e10
    degenerate_r_max: float = 1e11

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"grid half-width c must be positive, got {self.c}")
        if self.m < 2:
            raise ValueError(f"grid size m must be at least 2, got {self.m}")


@dataclass
class StationaryPointResult:
    """Outcome of the Fletcher-Reeves search."""

    beta: np.ndarray
    objective: float
    grad_norm: float
    converged: bool
    iterations: int


@dataclass
class TridgeFit:
    """Selected ridge-path point minimizing the scale-free objective."""

    beta: np.ndarray
    selected_r: float
    lambda_hat: float
    objective: float
    sp_beta: np.ndarray
    grid: tuple[float, float, int]
    datafit_sign: str
    datafit: float
    kkt_residual: float
    grid_failures: int = 0
    sp_result: StationaryPointResult | None = None


def default_init(fam, data: Dataset) -> np.ndarray:
    """Initializer for the stationary-point search: the score at the
    origin, rescaled when necessary so no initial linear predictor exceeds
    INIT_PREDICTOR_CAP in absolute value.

    Falls back to a uniform unit vector when the score at the origin is
    zero (e.g. all-zero outcomes under the Gaussian family).
    """
    fam = family(fam)
    s0 = data.X.T @ (data.y - fam.b_prime(np.zeros(data.n)))
    norm = float(np.linalg.norm(s0))
    if norm == 0.0:
        return np.ones(data.p) / math.sqrt(data.p)
    spread = float(np.max(np.abs(data.X @ s0)))
    if spread > INIT_PREDICTOR_CAP:
        return s0 * (INIT_PREDICTOR_CAP / spread)
    return s0


def _value_parts(fam: GlmFamily, data: Dataset, beta, guard):
    z = data.X @ beta
    s = data.X.T @ (data.y - fam.b_prime(z))
    s_norm = float(np.linalg.norm(s))
    if s_norm <= guard:
        raise VanishingScoreError(s_norm, guard)
    datafit = float(np.sum(fam.b(z)) - data.y @ z)
    beta_norm = float(np.linalg.norm(beta))
    value = datafit / s_norm + beta_norm
    return value, z, s, s_norm, datafit, beta_norm


def tridge_gradient(fam, data: Dataset, beta: np.ndarray) -> np.ndarray:
    """Analytic gradient of the scale-free objective.

    Assembled from grad L = -s, grad ||s|| = -H s / ||s|| with
    H = X' diag(b''(X beta)) X applied as two matrix-vector products, and
    grad ||beta|| = beta / ||beta||. Undefined at beta = 0 and where the
    score vanishes.
    """
    fam = family(fam)
    beta = data.check_beta(beta)
    guard = score_zero_threshold(data)
    _, z, s, s_norm, datafit, beta_norm = _value_parts(fam, data, beta, guard)
    if beta_norm == 0.0:
        raise ValueError("the objective gradient is undefined at beta = 0")
    hs = data.X.T @ (fam.b_double_prime(z) * (data.X @ s))
    # np.float64 power saturates to inf instead of raising on overflow
    return -s / s_norm + datafit * hs / np.float64(s_norm) ** 3 + beta / beta_norm


def fletcher_reeves_stationary_point(
    fam,
    data: Dataset,
    init=None,
    *,
    tol=None,
    max_iter=FR_MAX_ITER,
    stall_tol=FR_STALL_TOL,
) -> StationaryPointResult:
    """Nonlinear conjugate gradient search for a stationary point of the
    scale-free objective.

    Uses the Fletcher-Reeves coefficient ||g_k||^2 / ||g_{k-1}||^2 with
    backtracking Armijo line search and steepest-descent restarts every p
    iterations or on non-descent directions. Terminates on the gradient
    tolerance, on a progress stall (per-iteration relative decrease below
    ``stall_tol``; the objective often descends into kinks or unbounded
    ratio valleys where no stationary point exists), or on the iteration
    cap; in the latter two cases the current iterate is returned with
    ``converged=False``.
    """
    fam = family(fam)
    if init is None:
        init = default_init(fam, data)
    x = np.array(data.check_beta(init), copy=True)
    guard = score_zero_threshold(data)
    p = data.p

    def value(point):
        try:
            return _value_parts(fam, data, point, guard)[0]
        except VanishingScoreError:
            return math.inf

    def value_and_grad(point):
        val, z, s, s_norm, datafit, beta_norm = _value_parts(fam, data, point, guard)
        if beta_norm == 0.0:
            raise VanishingScoreError(0.0, guard)
        with np.errstate(over="ignore", invalid="ignore"):
            hs = data.X.T @ (fam.b_double_prime(z) * (data.X @ s))
            grad = (-s / s_norm + datafit * hs / np.float64(s_norm) ** 3
                    + point / beta_norm)
        return val, grad

    # The initializer may sit in the guard region; perturb once before
    # giving up.
    try:
        f, g = value_and_grad(x)
    except VanishingScoreError:
        rng = np.random.default_rng(0)
        x = x + 1e-6 * max(1.0, float(np.linalg.norm(x))) * rng.standard_normal(p)
        f, g = value_and_grad(x)

    if tol is None:
        tol = 1e-6 * max(1.0, abs(f))

    d = -g
    gg = float(g @ g)
    alpha_start = 1.0
    since_restart = 0
    for iteration in range(max_iter):
        grad_norm = math.sqrt(gg)
        if grad_norm <= tol:
            return StationaryPointResult(x, f, grad_norm, True, iteration)
        slope = float(g @ d)
        if slope >= 0.0 or since_restart >= p:
            d = -g
            slope = -gg
            since_restart = 0
        alpha = alpha_start
        accepted = False
        for _ in range(FR_MAX_BACKTRACKS):
            candidate = x + alpha * d
            f_candidate = value(candidate)
            if f_candidate <= f + FR_ARMIJO * alpha * slope:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            if since_restart == 0:
                # Line search failed along steepest descent: flat at this
                # scale, treat as a stall.
                return StationaryPointResult(x, f, grad_norm, False, iteration)
            d = -g
            since_restart = 0
            continue
        f_previous = f
        x = candidate
        try:
            f, g_new = value_and_grad(x)
        except VanishingScoreError:
            return StationaryPointResult(x, f_previous, grad_norm, False, iteration + 1)
        if not np.all(np.isfinite(g_new)):
            return StationaryPointResult(x, f, grad_norm, False, iteration + 1)
        gg_new = float(g_new @ g_new)
        if abs(f_previous - f) <= stall_tol * (abs(f) + stall_tol):
            return StationaryPointResult(x, f, math.sqrt(gg_new), False, iteration + 1)
        d = -g_new + (gg_new / gg) * d
        g, gg = g_new, gg_new
        since_restart += 1
        alpha_start = min(1.0, 2.0 * alpha)
    return StationaryPointResult(x, f, math.sqrt(gg), False, max_iter)


def tridge_fit(fam, data: Dataset, config: TridgeConfig | None = None, *,
               init=None, stationary_point=None) -> TridgeFit:
    """Run the full tuning-free fit.

    Step 1 finds a stationary point beta_sp of the scale-free objective
    (skipped when ``stationary_point`` is supplied). Step 2 maps it to the
    window [max(r_floor, r - c), r + c] around r = ||s(beta_sp)|| /
    (2 ||beta_sp||), falling back to [degenerate_r_min, degenerate_r_max]
    when beta_sp is numerically zero. Step 3 solves the m-point ridge grid
    over the window with warm starts and returns the grid point minimizing
    the objective; ties break toward smaller r.
    """
    fam = family(fam)
    if config is None:
        config = TridgeConfig()
    problem = RidgeProblem(fam, data)

    if init is None:
        init = default_init(fam, data)
    init = data.check_beta(init)

    sp_result = None
    if stationary_point is None:
        sp_result = fletcher_reeves_stationary_point(fam, data, init)
        sp_beta = sp_result.beta
    else:
        sp_beta = data.check_beta(stationary_point)

    sp_norm = float(np.linalg.norm(sp_beta))
    init_scale = max(1.0, float(np.linalg.norm(init)))
    if sp_norm <= DEGENERATE_SP_TOL * init_scale:
        r_min, r_max = config.degenerate_r_min, config.degenerate_r_max
    else:
        s_sp = score(fam, data, sp_beta)
        r_center = float(np.linalg.norm(s_sp)) / (2.0 * sp_norm)
        r_min = max(config.r_floor, r_center - config.c)
        r_max = r_center + config.c

    grid = r_min + (r_max - r_min) * np.arange(1, config.m + 1) / config.m
    path = ridge_path(fam, data, grid, warm_start=sp_beta, on_error="skip",
                      problem=problem)
    if not path.entries:
        raise AllGridFailedError(
            f"all {config.m} grid points failed over [{r_min:.6g}, {r_max:.6g}]"
        )

    X, y = data.X, data.y
    B = path.betas()
    Z = X @ B
    datafits = fam.b(Z).sum(axis=0) - y @ Z
    S = X.T @ (y[:, None] - fam.b_prime(Z))
    s_norms = np.linalg.norm(S, axis=0)
    beta_norms = np.linalg.norm(B, axis=0)
    guard = score_zero_threshold(data)
    with np.errstate(divide="ignore", invalid="ignore"):
        objectives = np.where(
            s_norms > guard, datafits / s_norms + beta_norms, math.inf
        )
    if not np.any(np.isfinite(objectives)):
        raise AllGridFailedError(
            "no grid point produced a valid objective (score vanished everywhere)"
        )

    pick = int(np.argmin(objectives))  # first minimum = smallest r on ties
    entry = path.entries[pick]
    datafit = float(datafits[pick])
    delta = 1e-8 * max(1.0, float(y @ y))
    if datafit > delta:
        sign = "positive"
    elif datafit < -delta:
        sign = "negative"
    else:
        sign = "zero"

    return TridgeFit(
        beta=entry.solution.beta,
        selected_r=entry.r,
        lambda_hat=float(s_norms[pick]),
        objective=float(objectives[pick]),
        sp_beta=sp_beta,
        grid=(float(r_min), float(r_max), config.m),
        datafit_sign=sign,
        datafit=datafit,
        kkt_residual=entry.solution.kkt_residual,
        grid_failures=len(path.failures),
        sp_result=sp_result,
    )


def lambda_order_diagnostic(fam, data: Dataset, fit: TridgeFit) -> str:
    """Sign test ordering the fitted tuning parameter against the oracle one.

    A positive data-fitting value at the fit implies lambda_hat >= the
    oracle lambda*, a negative value implies lambda_hat <= lambda*; values
    inside a scale-aware dead zone are reported as indeterminate.
    """
    fam = family(fam)
    datafit = negative_loglik(fam, data, fit.beta)
    delta = 1e-8 * max(1.0, float(data.y @ data.y))
    if datafit > delta:
        return "lambda_hat_geq_star"
    if datafit < -delta:
        return "lambda_hat_leq_star"
    return "indeterminate"


@dataclass
class BoundCheck:
    """One evaluated prediction-error bound: ||X(beta - beta*)||^2 <= rhs."""

    lam: float
    margin_c: float
    lhs: float
    rhs: float
    passed: bool
    vacuous: bool


@dataclass
class BoundReport:
    lambda_star: float
    lambda_hat: float
    tridge_bound: BoundCheck
    edr_bounds: list[BoundCheck]


def _bound_check(fam, data, beta_hat, beta_star, lam_bound, lam_label) -> BoundCheck:
    c = margin_constant(fam, data, beta_hat, beta_star)
    lhs = float(np.linalg.norm(data.X @ (beta_hat - beta_star)) ** 2)
    vacuous = math.isinf(c)
    rhs = math.inf if vacuous else 2.0 * c**2 * lam_bound * float(np.linalg.norm(beta_star))
    return BoundCheck(
        lam=lam_label,
        margin_c=c,
        lhs=lhs,
        rhs=rhs,
        passed=bool(lhs <= rhs),
        vacuous=vacuous,
    )


def verify_prediction_bounds(
    fam,
    data: Dataset,
    beta_star: np.ndarray,
    fit: TridgeFit,
    *,
    edr_multipliers=(1.0, 1.5, 2.0, 5.0, 10.0),
) -> BoundReport:
    """Evaluate the prediction-error guarantees on data with known truth.

    Checks the tuning-free bound ||X(beta_hat - beta*)||^2 <=
    2 C^2 max(lambda*, lambda_hat) ||beta*|| and, for each multiplier of
    lambda* = ||s(beta*)||, the corresponding bound for the
    unsquared-penalty fit at that tuning parameter. Bounds with an infinite
    margin constant are flagged vacuous.
    """
    fam = family(fam)
    beta_star = data.check_beta(beta_star)
    lambda_star = float(np.linalg.norm(score(fam, data, beta_star)))
    tridge_bound = _bound_check(
        fam, data, fit.beta, beta_star,
        max(lambda_star, fit.lambda_hat), max(lambda_star, fit.lambda_hat),
    )
    edr_bounds = []
    if lambda_star > 0:
        for mult in edr_multipliers:
            lam = mult * lambda_star
            solution = edr_fit(fam, data, lam)
            edr_bounds.append(_bound_check(fam, data, solution.beta, beta_star, lam, lam))
    return BoundReport(
        lambda_star=lambda_star,
        lambda_hat=fit.lambda_hat,
        tridge_bound=tridge_bound,
        edr_bounds=edr_bounds,
    )
