"""FID over MC-dropout samples and the associated trust indicators.

Stochastic embedding sets are plain ``(I, J, K)`` float arrays: ``i`` indexes
the image, ``j`` the dropout evaluation pass and ``k`` the embedding element.
Deterministic embedding sets are ``(I, K)`` arrays.

All variances and covariances over ``j`` use the ``J - 1`` denominator.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from fidtrust.linalg import FrechetTerms, GaussianSummary, frechet_terms, mean_and_cov


def as_embedding_set(x, name="embeddings") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be an (I, K) matrix, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_stochastic_set(x, name="stochastic embeddings", min_images=2) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"{name} must be an (I, J, K) tensor, got shape {arr.shape}")
    n_img, n_pass, dim = arr.shape
    if n_img < min_images:
        raise ValueError(f"{name} needs I >= {min_images}, got {n_img}")
    if n_pass < 2:
        raise ValueError(f"{name} needs J >= 2 dropout passes, got {n_pass}")
    if dim < 1:
        raise ValueError(f"{name} needs K >= 1")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class FidDistribution:
    """FID evaluated once per dropout pass, plus summary statistics.

    ``terms_a[j] = ||mu_j - mu_ref||^2``, ``terms_b[j] = tr(S_j + S_ref)``,
    ``terms_c[j] = tr((S_j S_ref)^(1/2))`` so that
    ``fid_samples[j] = a + b - 2c`` (up to the clamp at zero).
    """

    fid_samples: np.ndarray
    mean_fid: float
    v_fid: float
    sigma_fid: float
    terms_a: np.ndarray
    terms_b: np.ndarray
    terms_c: np.ndarray
    n_clamped: int = 0
    eps_test: np.ndarray = field(default_factory=lambda: np.zeros(0))
    eps_reference: float = 0.0

    @property
    def n_passes(self) -> int:
        return self.fid_samples.size


@dataclass(frozen=True)
class VfidDecomposition:
    var_a: float
    var_b: float
    var_c: float
    cov_ab: float
    cov_ac: float
    cov_bc: float
    reconstructed_vfid: float
    residual: float

    def as_dict(self) -> dict:
        return {
            "var_a": self.var_a,
            "var_b": self.var_b,
            "var_c": self.var_c,
            "cov_ab": self.cov_ab,
            "cov_ac": self.cov_ac,
            "cov_bc": self.cov_bc,
        }


def fid_stats(samples) -> tuple[float, float, float]:
    """Return ``(mean, variance, std)`` of FID samples, ``J - 1`` denominator."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < 2:
        raise ValueError(f"need at least 2 FID samples, got {x.size}")
    mean = float(x.mean())
    if np.all(x == x[0]):
        return float(x[0]), 0.0, 0.0
    dev = x - mean
    var = float(dev @ dev) / (x.size - 1)
    return mean, var, float(np.sqrt(var))


def fid_samples(test, reference: GaussianSummary, threads: int = 1) -> FidDistribution:
    """FID of each dropout pass ``j`` of ``test`` against a fixed reference.

    Parameters
    ----------
    test : array_like, shape (I, J, K)
    reference : GaussianSummary
        Summary of the reference embeddings, dimension K.
    threads : int
        Passes are independent; with ``threads > 1`` they are evaluated in a
        thread pool. Results are placed by index so the output is unchanged.
    """
    x = as_stochastic_set(test, "test")
    if x.shape[2] != reference.dim:
        raise ValueError(
            f"dimension mismatch: test K={x.shape[2]}, reference K={reference.dim}"
        )

    def one(j: int) -> FrechetTerms:
        return frechet_terms(mean_and_cov(x[:, j, :]), reference)

    passes = range(x.shape[1])
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            terms = list(pool.map(one, passes))
    else:
        terms = [one(j) for j in passes]

    values = np.array([t.value for t in terms])
    mean, var, std = fid_stats(values)
    return FidDistribution(
        fid_samples=values,
        mean_fid=mean,
        v_fid=var,
        sigma_fid=std,
        terms_a=np.array([t.mean_term for t in terms]),
        terms_b=np.array([t.trace_term for t in terms]),
        terms_c=np.array([t.cross_term for t in terms]),
        n_clamped=sum(t.clamped for t in terms),
        eps_test=np.array([t.eps1 for t in terms]),
        eps_reference=terms[0].eps2,
    )


def _cov(u: np.ndarray, v: np.ndarray) -> float:
    return float((u - u.mean()) @ (v - v.mean())) / (u.size - 1)


def vfid_decomposition(dist: FidDistribution) -> VfidDecomposition:
    """Split vFID into variances and covariances of the a, b, c terms.

    ``vFID = Var(a) + Var(b) + 4 Var(c) + 2 Cov(a,b) - 4 Cov(a,c) - 4 Cov(b,c)``.
    The identity is exact for the unclamped samples ``a + b - 2c``; ``residual``
    reports how far the reconstruction is from ``dist.v_fid``.
    """
    a, b, c = (np.asarray(t, dtype=np.float64) for t in (dist.terms_a, dist.terms_b, dist.terms_c))
    if not (a.size == b.size == c.size):
        raise ValueError("a, b, c term vectors differ in length")
    if a.size < 2:
        raise ValueError(f"need J >= 2 passes, got {a.size}")
    var_a, var_b, var_c = _cov(a, a), _cov(b, b), _cov(c, c)
    cov_ab, cov_ac, cov_bc = _cov(a, b), _cov(a, c), _cov(b, c)
    recon = var_a + var_b + 4.0 * var_c + 2.0 * cov_ab - 4.0 * cov_ac - 4.0 * cov_bc
    return VfidDecomposition(
        var_a=var_a,
        var_b=var_b,
        var_c=var_c,
        cov_ab=cov_ab,
        cov_ac=cov_ac,
        cov_bc=cov_bc,
        reconstructed_vfid=recon,
        residual=recon - dist.v_fid,
    )


def pvar(test) -> float:
    """Mean over images of the normalised trace of the per-image covariance.

    ``(1/I) sum_i 1/(K (J-1)) sum_j ||l_ij - mean_j l_ij||^2``
    """
    x = as_stochastic_set(test, "test", min_images=1)
    n_img, n_pass, dim = x.shape
    # centring on the first pass first makes a pass-constant image exactly 0
    shifted = x - x[:, :1, :]
    dev = shifted - shifted.mean(axis=1, keepdims=True)
    per_image = np.einsum("ijk,ijk->i", dev, dev) / (dim * (n_pass - 1))
    return float(per_image.mean())


def _l2_normalise(x: np.ndarray, name: str) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms == 0.0):
        raise ValueError(f"{name} contains a zero-norm row; cannot L2-normalise")
    return x / norms[:, None]


def knn_distances(test, reference, k: int = 5, chunk: int = 64) -> np.ndarray:
    """Per-test-row mean distance to the k nearest L2-normalised reference rows.

    Exact brute force; ties resolve towards the smaller reference index. The
    reference is not de-duplicated against the test set, so self-matches count
    when the two sets share rows.
    """
    t = _l2_normalise(as_embedding_set(test, "test"), "test")
    r = _l2_normalise(as_embedding_set(reference, "reference"), "reference")
    if t.shape[1] != r.shape[1]:
        raise ValueError(f"dimension mismatch: test K={t.shape[1]}, reference K={r.shape[1]}")
    if k < 1:
        raise ValueError("k must be >= 1")
    if r.shape[0] < k:
        raise ValueError(f"reference has {r.shape[0]} rows, fewer than k={k}")
    out = np.empty(t.shape[0])
    for start in range(0, t.shape[0], chunk):
        block = t[start:start + chunk]
        diff = block[:, None, :] - r[None, :, :]
        dist = np.sqrt(np.einsum("abk,abk->ab", diff, diff))
        order = np.argsort(dist, axis=1, kind="stable")[:, :k]
        out[start:start + chunk] = np.take_along_axis(dist, order, axis=1).mean(axis=1)
    return out


def knn_ood_score(test, reference, k: int = 5) -> float:
    """Mean kNN distance of test rows to the reference set (larger = more OOD)."""
    return float(knn_distances(test, reference, k).mean())


def mean_embedding_norm(test) -> float:
    """Mean L2 norm of the embedding vectors over all images and passes."""
    x = np.asarray(test, dtype=np.float64)
    if x.size == 0:
        raise ValueError("empty embedding tensor")
    return float(np.linalg.norm(x, axis=-1).mean())


def mean_term_diagnostics(test, reference_mean) -> tuple[float, float]:
    """Mean-term diagnostics for a stochastic test set.

    Returns
    -------
    distance : float
        ``||mean_j(mu_j) - mu_ref||^2`` where ``mu_j`` is the test mean of pass j.
    spread : float
        Mean over embedding elements of the sample std (over j) of ``mu_j``.
    """
    x = as_stochastic_set(test, "test", min_images=1)
    ref = np.asarray(reference_mean, dtype=np.float64).ravel()
    if ref.size != x.shape[2]:
        raise ValueError(f"dimension mismatch: test K={x.shape[2]}, reference K={ref.size}")
    per_pass = x.mean(axis=0)  # (J, K)
    diff = per_pass.mean(axis=0) - ref
    spread = per_pass.std(axis=0, ddof=1).mean()
    return float(diff @ diff), float(spread)
