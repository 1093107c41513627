"""Regression dataset container and validation.

Coefficient vectors are plain 1-d float arrays of length p throughout the
package; no wrapper type is used for them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Dataset:
    """Design matrix X (n x p) paired with an outcome vector y (length n).

    Both arrays are coerced to float64 and checked for finiteness on
    construction. Family-specific outcome domains (binary outcomes for
    Bernoulli, non-negative integers for Poisson) are checked separately
    via :func:`validate_outcomes` because the family is not part of the
    container.
    """

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2:
            raise ValueError(f"X must be a 2-d matrix, got ndim={X.ndim}")
        if y.ndim != 1:
            raise ValueError(f"y must be a 1-d vector, got ndim={y.ndim}")
        n, p = X.shape
        if n < 1 or p < 1:
            raise ValueError(f"need n >= 1 and p >= 1, got shape {X.shape}")
        if y.shape[0] != n:
            raise ValueError(f"X has {n} rows but y has length {y.shape[0]}")
        if not np.all(np.isfinite(X)):
            raise ValueError("X contains non-finite entries")
        if not np.all(np.isfinite(y)):
            raise ValueError("y contains non-finite entries")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def check_beta(self, beta: np.ndarray) -> np.ndarray:
        """Coerce a coefficient vector and check it matches this dataset."""
        beta = np.asarray(beta, dtype=float)
        if beta.ndim != 1 or beta.shape[0] != self.p:
            raise ValueError(
                f"coefficient vector has shape {beta.shape}, expected ({self.p},)"
            )
        return beta


def validate_outcomes(family_kind: str, y: np.ndarray) -> None:
    """Check that outcomes lie in the family's support.

    Bernoulli outcomes must be exactly 0 or 1; Poisson outcomes must be
    non-negative and integer valued (as reals). Gaussian outcomes are
    unrestricted.
    """
    if family_kind == "bernoulli":
        if not np.all((y == 0.0) | (y == 1.0)):
            bad = int(np.argmax(~((y == 0.0) | (y == 1.0))))
            raise ValueError(f"Bernoulli outcomes must be 0 or 1; y[{bad}]={y[bad]!r}")
    elif family_kind == "poisson":
        if np.any(y < 0) or np.any(y != np.round(y)):
            bad = int(np.argmax((y < 0) | (y != np.round(y))))
            raise ValueError(
                f"Poisson outcomes must be non-negative integers; y[{bad}]={y[bad]!r}"
            )
