"""Dense symmetric linear algebra for Fréchet distances between Gaussians.

Everything goes through the symmetric eigendecomposition (``numpy.linalg.eigh``).
No Newton-Schulz iterations and no Schur form of the nonsymmetric product
``Sigma1 @ Sigma2``: the product square root is evaluated through the
congruent symmetric matrix ``S @ Sigma2 @ S`` with ``S = sqrt(Sigma1)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

# relative Frobenius asymmetry allowed before a matrix is rejected
SYMMETRY_RTOL = 1e-10
# eigenvalues in [-NEG_EIG_RTOL * lambda_max, 0) are round-off and clamped to 0
NEG_EIG_RTOL = 1e-8
# a covariance whose smallest eigenvalue is below COND_FLOOR * lambda_max
# gets REG_SCALE * lambda_max added to its diagonal before any square root
COND_FLOOR = 1e-10
REG_SCALE = 1e-6


@dataclass(frozen=True)
class GaussianSummary:
    """Mean and covariance of an embedding set.

    Attributes
    ----------
    mean : ndarray, shape (K,)
    cov : ndarray, shape (K, K)
        Unbiased sample covariance (``n_samples - 1`` denominator).
    n_samples : int
        Number of rows the summary was fitted to.
    """

    mean: np.ndarray
    cov: np.ndarray
    n_samples: int

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.cov, dtype=np.float64)
        if mean.ndim != 1:
            raise ValueError(f"mean must be a vector, got shape {mean.shape}")
        if cov.shape != (mean.size, mean.size):
            raise ValueError(
                f"cov shape {cov.shape} does not match mean length {mean.size}"
            )
        if self.n_samples < 2:
            raise ValueError("a GaussianSummary needs n_samples >= 2")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ValueError("GaussianSummary entries must be finite")
        _check_symmetric(cov)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


class FrechetTerms(NamedTuple):
    """Pieces of one Fréchet distance evaluation.

    ``value = max(mean_term + trace_term - 2 * cross_term, 0)``; ``clamped`` is
    set when the unclamped value was negative. ``eps1``/``eps2`` are the diagonal
    loadings applied to each covariance (0.0 when none was needed).
    """

    value: float
    mean_term: float
    trace_term: float
    cross_term: float
    clamped: bool
    eps1: float
    eps2: float


def _check_symmetric(m: np.ndarray) -> None:
    scale = np.linalg.norm(m)
    if scale == 0.0:
        return
    if np.linalg.norm(m - m.T) > SYMMETRY_RTOL * scale:
        raise ValueError("matrix is not symmetric within tolerance")


def mean_and_cov(samples) -> GaussianSummary:
    """Fit a :class:`GaussianSummary` to an ``I x K`` sample matrix.

    Uses the unbiased ``I - 1`` denominator. The covariance is averaged with
    its transpose so it is exactly symmetric.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"samples must be a 2-D matrix, got shape {x.shape}")
    n = x.shape[0]
    if n < 2:
        raise ValueError(f"need at least 2 samples to estimate a covariance, got {n}")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples contain non-finite values")
    mu = x.mean(axis=0)
    centred = np.ascontiguousarray(x - mu)
    cov = centred.T @ centred / (n - 1)
    cov = 0.5 * (cov + cov.T)
    return GaussianSummary(mean=mu, cov=cov, n_samples=n)


def _eigh_psd(m: np.ndarray):
    """eigh of a symmetric PSD matrix with the negative-eigenvalue check."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains non-finite values")
    _check_symmetric(m)
    w, v = np.linalg.eigh(0.5 * (m + m.T))
    lam_max = max(float(w[-1]), 0.0) if w.size else 0.0
    if w.size and w[0] < -NEG_EIG_RTOL * lam_max:
        raise ValueError(
            f"matrix is not positive semi-definite: eigenvalue {w[0]:.3e} "
            f"below tolerance (lambda_max={lam_max:.3e})"
        )
    return np.clip(w, 0.0, None), v


def sqrtm_psd(m) -> np.ndarray:
    """Principal square root of a symmetric positive semi-definite matrix.

    Small negative eigenvalues (down to ``-1e-8 * lambda_max``) are treated as
    round-off and clamped to zero; anything more negative raises ValueError.
    """
    w, v = _eigh_psd(m)
    r = (v * np.sqrt(w)) @ v.T
    return 0.5 * (r + r.T)


def regularize_cov(cov: np.ndarray) -> tuple[np.ndarray, float]:
    """Diagonal loading for near-singular covariances.

    Returns ``(cov + eps * I, eps)`` with ``eps = 1e-6 * lambda_max`` when the
    smallest eigenvalue is below ``1e-10 * lambda_max``, else ``(cov, 0.0)``.
    """
    w = np.linalg.eigvalsh(cov)
    lam_max = float(w[-1])
    if lam_max <= 0.0 or w[0] >= COND_FLOOR * lam_max:
        return cov, 0.0
    eps = REG_SCALE * lam_max
    return cov + eps * np.eye(cov.shape[0]), eps


def trace_sqrt_product(sigma1, sigma2) -> float:
    """``tr((sigma1 @ sigma2)^(1/2))`` for symmetric PSD inputs.

    Evaluated as ``tr((S sigma2 S)^(1/2))`` with ``S = sqrtm_psd(sigma1)``; the
    two matrices are similar so the traces of their square roots agree.
    """
    sigma2 = np.asarray(sigma2, dtype=np.float64)
    s = sqrtm_psd(sigma1)
    _eigh_psd(sigma2)
    if s.shape != sigma2.shape:
        raise ValueError(f"shape mismatch: {s.shape} vs {sigma2.shape}")
    m = s @ sigma2 @ s
    w = np.linalg.eigvalsh(0.5 * (m + m.T))
    return float(np.sum(np.sqrt(np.clip(w, 0.0, None))))


def frechet_terms(g1: GaussianSummary, g2: GaussianSummary) -> FrechetTerms:
    """Squared Fréchet distance between two Gaussians, split into its terms.

    mean_term = ||mu1 - mu2||^2, trace_term = tr(S1 + S2),
    cross_term = tr((S1 S2)^(1/2)). Covariances are regularized first when
    near-singular (see :func:`regularize_cov`), and the same loaded matrices
    feed both the trace and the cross term.
    """
    if g1.dim != g2.dim:
        raise ValueError(f"dimension mismatch: {g1.dim} vs {g2.dim}")
    diff = g1.mean - g2.mean
    mean_term = float(diff @ diff)
    c1, eps1 = regularize_cov(g1.cov)
    c2, eps2 = regularize_cov(g2.cov)
    trace_term = float(np.trace(c1) + np.trace(c2))
    cross_term = trace_sqrt_product(c1, c2)
    raw = mean_term + trace_term - 2.0 * cross_term
    if np.array_equal(g1.mean, g2.mean) and np.array_equal(g1.cov, g2.cov):
        # identical summaries: the distance is exactly zero, drop round-off
        raw = min(raw, 0.0)
    clamped = raw < 0.0
    return FrechetTerms(
        value=0.0 if clamped else raw,
        mean_term=mean_term,
        trace_term=trace_term,
        cross_term=cross_term,
        clamped=bool(clamped),
        eps1=eps1,
        eps2=eps2,
    )


def frechet_gaussian(g1: GaussianSummary, g2: GaussianSummary) -> float:
    """``||mu1 - mu2||^2 + tr(S1 + S2 - 2 (S1 S2)^(1/2))``, clamped at zero."""
    return frechet_terms(g1, g2).value
