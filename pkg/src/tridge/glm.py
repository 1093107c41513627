"""GLM families and the primitives shared by every estimator.

Each family is defined by its cumulant function ``b``; the canonical
inverse link is ``b'`` and the likelihood curvature is ``b''``. The
data-fitting value used throughout the package is the negative
log-likelihood with dispersion constants dropped (they cancel from every
objective fitted here):

    L(beta) = -sum_i ( y_i * x_i'beta - b(x_i'beta) )

and the score is its negated gradient, s(beta) = X'(y - b'(X beta)).
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy.special import expit

from .data import Dataset
from .exceptions import SaturationWarning, VanishingScoreError

# Largest linear predictor fed to exp(); beyond this the Poisson cumulant
# saturates and a warning is emitted instead of overflowing.
EXP_CLAMP = 700.0

# Number of sample points used to lower-bound b'' along a segment when
# computing margin constants for non-Gaussian families.
MARGIN_SEGMENT_SAMPLES = 129


class GlmFamily:
    """Base class for the three supported exponential-family models."""

    kind: str = "base"

    def b(self, z):
        """Cumulant function, vectorized over z."""
        raise NotImplementedError

    def b_prime(self, z):
        """Derivative of the cumulant; equals the canonical inverse link."""
        raise NotImplementedError

    def b_double_prime(self, z):
        """Second derivative of the cumulant (conditional variance scale)."""
        raise NotImplementedError

    def __repr__(self):
        return f"GlmFamily({self.kind!r})"


class Gaussian(GlmFamily):
    kind = "gaussian"

    def b(self, z):
        return np.square(z) / 2.0

    def b_prime(self, z):
        return np.asarray(z, dtype=float)

    def b_double_prime(self, z):
        return np.ones_like(np.asarray(z, dtype=float))


class Poisson(GlmFamily):
    kind = "poisson"

    def _clamped(self, z):
        z = np.asarray(z, dtype=float)
        if np.any(z > EXP_CLAMP):
            warnings.warn(
                "Poisson linear predictor clamped at "
                f"{EXP_CLAMP:g} before exponentiation",
                SaturationWarning,
                stacklevel=3,
            )
            z = np.minimum(z, EXP_CLAMP)
        return z

    def b(self, z):
        return np.exp(self._clamped(z))

    def b_prime(self, z):
        return np.exp(self._clamped(z))

    def b_double_prime(self, z):
        return np.exp(self._clamped(z))


class Bernoulli(GlmFamily):
    kind = "bernoulli"

    def b(self, z):
        # log(1 + exp(z)) without overflow for large |z|
        return np.logaddexp(0.0, z)

    def b_prime(self, z):
        return expit(z)

    def b_double_prime(self, z):
        mu = expit(z)
        return mu * (1.0 - mu)


GAUSSIAN = Gaussian()
POISSON = Poisson()
BERNOULLI = Bernoulli()

_FAMILIES = {f.kind: f for f in (GAUSSIAN, POISSON, BERNOULLI)}


def family(kind) -> GlmFamily:
    """Return the family singleton for a kind string (or pass one through)."""
    if isinstance(kind, GlmFamily):
        return kind
    try:
        return _FAMILIES[kind]
    except KeyError:
        raise ValueError(
            f"unknown family {kind!r}; expected one of {sorted(_FAMILIES)}"
        ) from None


def cumulant(fam: GlmFamily, z):
    """b(z) for the given family."""
    return fam.b(z)


def inverse_link(fam: GlmFamily, z):
    """Canonical inverse link b'(z)."""
    return fam.b_prime(z)


def negative_loglik(fam: GlmFamily, data: Dataset, beta: np.ndarray) -> float:
    """Data-fitting value -sum_i (y_i x_i'beta - b(x_i'beta)).

    For the Gaussian family this equals (||y - X beta||^2 - ||y||^2) / 2.
    """
    beta = data.check_beta(beta)
    z = data.X @ beta
    return float(np.sum(fam.b(z)) - data.y @ z)


def score(fam: GlmFamily, data: Dataset, beta: np.ndarray) -> np.ndarray:
    """Score vector s(beta) = X'(y - b'(X beta)), the negated gradient of
    the data-fitting function."""
    beta = data.check_beta(beta)
    z = data.X @ beta
    return data.X.T @ (data.y - fam.b_prime(z))


def score_zero_threshold(data: Dataset) -> float:
    """Scale-aware guard below which a score norm is treated as zero."""
    return 1e-12 * max(1.0, float(np.linalg.norm(data.X.T @ data.y)))


def tridge_objective(fam: GlmFamily, data: Dataset, beta: np.ndarray) -> float:
    """Scale-free objective L(beta)/||s(beta)|| + ||beta||.

    Raises VanishingScoreError when ||s(beta)|| is below the zero guard:
    there the iterate is an unpenalized stationary point and the ratio is
    undefined.
    """
    beta = data.check_beta(beta)
    z = data.X @ beta
    s = data.X.T @ (data.y - fam.b_prime(z))
    s_norm = float(np.linalg.norm(s))
    guard = score_zero_threshold(data)
    if s_norm <= guard:
        raise VanishingScoreError(s_norm, guard)
    value = float(np.sum(fam.b(z)) - data.y @ z)
    return value / s_norm + float(np.linalg.norm(beta))


def margin_constant(
    fam: GlmFamily,
    data: Dataset,
    beta: np.ndarray,
    target: np.ndarray,
    tight: bool = False,
) -> float:
    """Margin constant C >= 0 valid for the pair (beta, target) on this data.

    The constant satisfies, for every observation i,

        b(x_i'beta) - b(x_i'target)
            >= b'(x_i'target) (x_i'(beta - target))
               + (1/C^2) (x_i'(beta - target))^2.

    For the Gaussian family the conventional value is 2; the tightest
    admissible constant is sqrt(2) (b'' is identically one, so 1/C^2 can
    be as large as 1/2) and is returned when ``tight`` is set. For Poisson
    and Bernoulli the constant is max_i sqrt(2 / min b'') with the minimum
    of b'' taken over each segment [x_i'target, x_i'beta] by dense
    sampling. Returns +inf when b'' vanishes numerically somewhere on a
    segment (the resulting bound is vacuous).
    """
    beta = data.check_beta(beta)
    target = data.check_beta(target)
    if fam.kind == "gaussian":
        return float(np.sqrt(2.0)) if tight else 2.0
    z_target = data.X @ target
    z_beta = data.X @ beta
    t = np.linspace(0.0, 1.0, MARGIN_SEGMENT_SAMPLES)
    segments = z_target[:, None] + t[None, :] * (z_beta - z_target)[:, None]
    min_curvature = float(fam.b_double_prime(segments).min())
    if min_curvature <= 0.0:
        return float("inf")
    return float(np.sqrt(2.0 / min_curvature))
