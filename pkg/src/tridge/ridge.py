"""Ridge solver: single fits, warm-started grids, and the path remapping
between the squared-norm penalty parameter r and the unsquared-penalty
parameter lambda = 2 r ||beta(r)||.

The stationarity condition for a ridge fit is s(beta) = 2 r beta, so every
solution records the residual ||s(beta) - 2 r beta|| as its quality
certificate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .data import Dataset, validate_outcomes
from .exceptions import (
    BracketFailureError,
    NonConvergenceError,
    PathFitError,
    SingularSystemError,
    TridgeError,
)
from .glm import GlmFamily, family

DEFAULT_MAX_ITER = 200
MAX_HALVINGS = 30

# Numerical floor applied to curvature weights before inversion in the
# dual (p > n) Newton step; observations below it are effectively inert.
CURVATURE_FLOOR = 1e-30

# Relative singular-value cutoff used to declare a rank-deficient design.
RANK_CUTOFF = 1e-10


@dataclass
class RidgeSolution:
    """A single ridge fit: parameter, coefficients, and KKT certificate."""

    r: float
    beta: np.ndarray
    kkt_residual: float
    iterations: int


@dataclass
class PathEntry:
    r: float
    solution: RidgeSolution
    lambda_edr: float


@dataclass
class RidgePath:
    """Ordered ridge fits with their induced unsquared-penalty parameters."""

    entries: list[PathEntry]
    failures: list[tuple[int, float, str]] = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def betas(self) -> np.ndarray:
        """Stack the solutions column-wise into a (p, len) matrix."""
        return np.column_stack([e.solution.beta for e in self.entries])


class RidgeProblem:
    """Per-dataset solver state shared across many ridge parameters.

    For the Gaussian family a thin SVD of X is computed once, after which
    each parameter costs O(n p). Other families use damped Newton with the
    Gram matrix X X' cached for the dual-space step when p > n.
    """

    def __init__(self, fam, data: Dataset, tol_kkt=None, max_iter=DEFAULT_MAX_ITER):
        self.family = family(fam)
        self.data = data
        validate_outcomes(self.family.kind, data.y)
        self.xty = data.X.T @ data.y
        if tol_kkt is None:
            tol_kkt = 1e-8 * max(1.0, float(np.linalg.norm(self.xty)))
        self.tol_kkt = tol_kkt
        self.max_iter = max_iter
        self._svd = None
        self._gram = None

    # -- cached factorizations -------------------------------------------

    def _svd_parts(self):
        if self._svd is None:
            U, s, Vt = np.linalg.svd(self.data.X, full_matrices=False)
            self._svd = (s, Vt, U.T @ self.data.y)
        return self._svd

    def _gram_matrix(self):
        if self._gram is None:
            self._gram = self.data.X @ self.data.X.T
        return self._gram

    # -- public entry ------------------------------------------------------

    def solve(self, r, warm_start=None, method="auto") -> RidgeSolution:
        """Minimize L(beta) + r ||beta||^2 for a single parameter r >= 0."""
        r = float(r)
        if r < 0:
            raise ValueError(f"ridge parameter must be non-negative, got {r}")
        if method == "auto":
            method = "spectral" if self.family.kind == "gaussian" else "newton"
        if method == "spectral":
            if self.family.kind != "gaussian":
                raise ValueError("the spectral solver applies to the Gaussian family only")
            return self._solve_spectral(r)
        if method == "newton":
            return self._solve_newton(r, warm_start)
        raise ValueError(f"unknown method {method!r}")

    # -- Gaussian closed form ----------------------------------------------

    def _solve_spectral(self, r) -> RidgeSolution:
        s, Vt, c = self._svd_parts()
        if r == 0.0:
            full_rank = (
                self.data.p <= self.data.n
                and s[-1] > RANK_CUTOFF * s[0]
            )
            if not full_rank:
                raise SingularSystemError(
                    "r = 0 requires a full-column-rank design; "
                    f"X is {self.data.n} x {self.data.p} with smallest "
                    f"singular value {s[-1]:.3e}"
                )
        beta = Vt.T @ (s * c / (s**2 + 2.0 * r))
        resid = self.xty - self.data.X.T @ (self.data.X @ beta) - 2.0 * r * beta
        return RidgeSolution(r=r, beta=beta, kkt_residual=float(np.linalg.norm(resid)), iterations=0)

    # -- damped Newton for the general case ---------------------------------

    def _penalized_value(self, z, beta, r):
        fit = float(np.sum(self.family.b(z)) - self.data.y @ z)
        return fit + r * float(beta @ beta)

    def _newton_direction(self, w, g, r):
        """Solve (X' diag(w) X + 2 r I) d = g, in primal or dual form."""
        X = self.data.X
        n, p = self.data.n, self.data.p
        if p <= n:
            H = X.T @ (w[:, None] * X)
            H[np.diag_indices_from(H)] += 2.0 * r
            try:
                return cho_solve(cho_factor(H, lower=True, check_finite=False), g,
                                 check_finite=False)
            except LinAlgError:
                if r == 0.0:
                    raise SingularSystemError(
                        "unpenalized Newton system is rank deficient; use r > 0"
                    ) from None
                return np.linalg.solve(H, g)
        if r <= 0.0:
            raise SingularSystemError("r = 0 with p > n has no unique minimizer")
        w_safe = np.maximum(w, CURVATURE_FLOOR)
        M = self._gram_matrix() + np.diag(2.0 * r / w_safe)
        u = cho_solve(cho_factor(M, lower=True, check_finite=False), X @ g,
                      check_finite=False)
        return (g - X.T @ u) / (2.0 * r)

    def _solve_newton(self, r, warm_start) -> RidgeSolution:
        X, y = self.data.X, self.data.y
        if warm_start is None:
            beta = np.zeros(self.data.p)
        else:
            beta = np.array(self.data.check_beta(warm_start), copy=True)
        z = X @ beta
        value = self._penalized_value(z, beta, r)
        grad_norm = math.inf
        for iteration in range(self.max_iter):
            g = self.xty - X.T @ self.family.b_prime(z) - 2.0 * r * beta
            grad_norm = float(np.linalg.norm(g))
            if grad_norm <= self.tol_kkt:
                return RidgeSolution(r=r, beta=beta, kkt_residual=grad_norm,
                                     iterations=iteration)
            w = self.family.b_double_prime(z)
            step = self._newton_direction(w, g, r)
            alpha = 1.0
            accepted = False
            for _ in range(MAX_HALVINGS):
                candidate = beta + alpha * step
                z_candidate = X @ candidate
                candidate_value = self._penalized_value(z_candidate, candidate, r)
                if candidate_value < value:
                    accepted = True
                    break
                alpha *= 0.5
            if not accepted:
                # Objective decreases are below float granularity near the
                # optimum; fall back to accepting the full step whenever it
                # shrinks the gradient residual.
                candidate = beta + step
                z_candidate = X @ candidate
                g_candidate = (self.xty - X.T @ self.family.b_prime(z_candidate)
                               - 2.0 * r * candidate)
                if float(np.linalg.norm(g_candidate)) < grad_norm:
                    candidate_value = self._penalized_value(z_candidate, candidate, r)
                else:
                    raise NonConvergenceError(
                        "Newton step produced no decrease after "
                        f"{MAX_HALVINGS} halvings at r={r:.6g}",
                        beta=beta, residual=grad_norm, iterations=iteration,
                    )
            beta, z, value = candidate, z_candidate, candidate_value
        g = self.xty - X.T @ self.family.b_prime(z) - 2.0 * r * beta
        grad_norm = float(np.linalg.norm(g))
        if grad_norm <= self.tol_kkt:
            return RidgeSolution(r=r, beta=beta, kkt_residual=grad_norm,
                                 iterations=self.max_iter)
        raise NonConvergenceError(
            f"ridge Newton did not converge at r={r:.6g}",
            beta=beta, residual=grad_norm, iterations=self.max_iter,
        )


def fit_ridge(fam, data: Dataset, r, warm_start=None, *, method="auto",
              tol_kkt=None, max_iter=DEFAULT_MAX_ITER) -> RidgeSolution:
    """Solve the ridge problem min L(beta) + r ||beta||^2 at one parameter.

    ``method="newton"`` forces the iterative solver for any family (used to
    cross-check the Gaussian closed form); otherwise Gaussian data is
    solved through the cached spectral factorization.
    """
    problem = RidgeProblem(fam, data, tol_kkt=tol_kkt, max_iter=max_iter)
    return problem.solve(r, warm_start=warm_start, method=method)


def _validate_grid(r_grid, data: Dataset):
    r_grid = np.asarray(r_grid, dtype=float)
    if r_grid.ndim != 1:
        raise ValueError("r grid must be one-dimensional")
    if r_grid.size == 0:
        return r_grid
    if np.any(r_grid < 0):
        raise ValueError("r grid entries must be non-negative")
    if r_grid.size > 1 and np.any(np.diff(r_grid) <= 0):
        raise ValueError("r grid must be strictly increasing")
    if data.p > data.n and r_grid[0] == 0.0:
        raise ValueError("r = 0 is not allowed on a grid when p > n")
    return r_grid


def ridge_path(fam, data: Dataset, r_grid, warm_start=None, *,
               on_error="raise", problem=None) -> RidgePath:
    """Solve a strictly increasing grid of ridge parameters with warm starts.

    Records lambda(r) = 2 r ||beta(r)|| for every grid point. With
    ``on_error="skip"`` failed grid points are collected in
    ``RidgePath.failures`` instead of aborting the path.
    """
    r_grid = _validate_grid(r_grid, data)
    if problem is None:
        problem = RidgeProblem(fam, data)
    entries: list[PathEntry] = []
    failures: list[tuple[int, float, str]] = []
    previous = warm_start
    for index, r in enumerate(r_grid):
        try:
            solution = problem.solve(r, warm_start=previous)
        except TridgeError as exc:
            if on_error == "raise":
                raise PathFitError(index, float(r), exc) from exc
            failures.append((index, float(r), str(exc)))
            continue
        previous = solution.beta
        entries.append(PathEntry(
            r=float(r),
            solution=solution,
            lambda_edr=2.0 * float(r) * float(np.linalg.norm(solution.beta)),
        ))
    return RidgePath(entries=entries, failures=failures)


def edr_fit(fam, data: Dataset, lam, *, r_lo=1e-8, r_hi_cap=1e12,
            max_bisections=200, problem=None) -> RidgeSolution:
    """Fit the unsquared-penalty estimator min L(beta) + lam ||beta||.

    The solution is found on the ridge path: bracketing plus bisection
    locates r* with 2 r* ||beta(r*)|| = lam, and the ridge fit at r* is
    returned. When lam >= ||s(0)|| the solution is exactly zero (the
    subgradient condition holds at the origin) and the returned r is the
    +inf sentinel.
    """
    lam = float(lam)
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    fam = family(fam)
    if problem is None:
        problem = RidgeProblem(fam, data)
    zero = np.zeros(data.p)
    s0 = float(np.linalg.norm(data.X.T @ (data.y - fam.b_prime(data.X @ zero))))
    if lam >= s0:
        return RidgeSolution(r=math.inf, beta=zero, kkt_residual=0.0, iterations=0)

    last_beta = None

    def lambda_at(r):
        nonlocal last_beta
        solution = problem.solve(r, warm_start=last_beta)
        last_beta = solution.beta
        return 2.0 * r * float(np.linalg.norm(solution.beta)), solution

    lo = r_lo
    lam_lo, sol_lo = lambda_at(lo)
    if lam_lo >= lam:
        raise BracketFailureError(
            f"lambda({lo:g}) = {lam_lo:.6g} already exceeds target {lam:.6g}"
        )
    hi = 1.0
    lam_hi, sol_hi = lambda_at(hi)
    while lam_hi < lam:
        hi *= 2.0
        if hi > r_hi_cap:
            raise BracketFailureError(
                f"could not bracket lambda = {lam:.6g} below r = {r_hi_cap:g}"
            )
        lam_hi, sol_hi = lambda_at(hi)

    best = min(((abs(lam_lo - lam), sol_lo), (abs(lam_hi - lam), sol_hi)),
               key=lambda t: t[0])
    tol = 1e-10 * max(1.0, lam)
    for _ in range(max_bisections):
        mid = 0.5 * (lo + hi)
        lam_mid, sol_mid = lambda_at(mid)
        gap = abs(lam_mid - lam)
        if gap < best[0]:
            best = (gap, sol_mid)
        if gap <= tol or (hi - lo) <= 1e-14 * max(1.0, hi):
            break
        if lam_mid < lam:
            lo = mid
        else:
            hi = mid
    return best[1]
