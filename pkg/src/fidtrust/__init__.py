"""Fréchet-distance metrics over stochastic (MC-dropout) embeddings.

Provides FID per dropout sample, its spread (vFID / sigma-FID) and variance
decomposition, the per-image predictive variance pVar, a kNN OOD score,
model-free image validators, augmentation pipelines and experiment runners.
"""

from fidtrust.linalg import (
    GaussianSummary,
    frechet_gaussian,
    frechet_terms,
    mean_and_cov,
    sqrtm_psd,
    trace_sqrt_product,
)
from fidtrust.metrics import (
    FidDistribution,
    VfidDecomposition,
    fid_samples,
    fid_stats,
    knn_ood_score,
    mean_embedding_norm,
    mean_term_diagnostics,
    pvar,
    vfid_decomposition,
)

__version__ = "0.1.0"

__all__ = [
    "GaussianSummary",
    "frechet_gaussian",
    "frechet_terms",
    "mean_and_cov",
    "sqrtm_psd",
    "trace_sqrt_product",
    "FidDistribution",
    "VfidDecomposition",
    "fid_samples",
    "fid_stats",
    "knn_ood_score",
    "mean_embedding_norm",
    "mean_term_diagnostics",
    "pvar",
    "vfid_decomposition",
]
