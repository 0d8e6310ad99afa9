"""Retrieval and distribution metrics over embedding sets.

All distances are Euclidean. Feature sets are plain ``(N, d)`` arrays.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, NotPSDError, NumericalError
from .rng import derive_rng

MM_GROUP_SIZE = 20


def _as_matrix(x, what):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError(f"{what} must be an (N, d) array, got shape {x.shape}")
    return x


def pairwise_distances(a, b, chunk=256):
    """Exact Euclidean distance matrix; identical rows give identical columns."""
    out = np.empty((a.shape[0], b.shape[0]))
    for i in range(0, a.shape[0], chunk):
        diff = a[i : i + chunk, None, :] - b[None, :, :]
        out[i : i + chunk] = np.sqrt((diff * diff).sum(axis=-1))
    return out


def r_precision(motion_feats, text_feats, pool_size=32, trials=1, seed=0, groups=None, top_k=3):
    """Top-1..top-k motion-to-text retrieval rates against sampled pools.

    Each probe motion ``i`` is ranked against its own text plus
    ``pool_size - 1`` distinct mismatched texts drawn uniformly. ``groups``
    labels texts that are the same description; such texts never serve as
    mismatches for each other. Ties in distance go to the lower row index.
    """
    m = _as_matrix(motion_feats, "motion_feats")
    t = _as_matrix(text_feats, "text_feats")
    if m.shape != t.shape:
        raise DimensionError(f"motion and text features differ in shape: {m.shape} vs {t.shape}")
    n = m.shape[0]
    if n < pool_size:
        raise ConfigError(f"r_precision needs at least pool_size={pool_size} samples, got {n}")
    groups = np.arange(n) if groups is None else np.asarray(groups)
    allowed = groups[:, None] != groups[None, :]
    short = np.flatnonzero(allowed.sum(axis=1) < pool_size - 1)
    if short.size:
        raise ConfigError(f"probe {int(short[0])} has fewer than {pool_size - 1} mismatched candidates")

    dist = pairwise_distances(m, t)
    d_gt = np.diag(dist)[:, None]
    rows = np.arange(n)[:, None]
    rng = derive_rng(seed, "r_precision")
    hits = np.zeros(top_k)
    for _ in range(trials):
        keys = rng.random((n, n))
        keys[~allowed] = np.inf
        cand = np.argpartition(keys, pool_size - 2, axis=1)[:, : pool_size - 1]
        dc = dist[rows, cand]
        ahead = (dc < d_gt) | ((dc == d_gt) & (cand < rows))
        rank = ahead.sum(axis=1)
        for k in range(top_k):
            hits[k] += np.count_nonzero(rank <= k)
    return tuple(float(h) / (n * trials) for h in hits)


# --------------------------------------------------------------------- FID


@dataclass
class GaussianStats:
    mean: np.ndarray
    cov: np.ndarray


def gaussian_stats(feats):
    x = _as_matrix(feats, "features")
    if x.shape[0] < 2:
        raise ConfigError("at least two samples are needed for a covariance estimate")
    return GaussianStats(x.mean(axis=0), np.cov(x, rowvar=False, ddof=1).reshape(x.shape[1], x.shape[1]))


def matrix_sqrt_psd(M, tol=1e-10):
    """Symmetric square root via eigendecomposition.

    Eigenvalues down to ``-tol * ||M||`` are treated as rounding noise and
    clamped to zero; anything more negative is an error.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"matrix_sqrt_psd needs a square matrix, got {M.shape}")
    asym = np.max(np.abs(M - M.T)) if M.size else 0.0
    if asym > 1e-9 * max(1.0, np.max(np.abs(M))):
        raise NotPSDError(f"matrix is not symmetric (max asymmetry {asym:.3g})")
    w, V = np.linalg.eigh((M + M.T) / 2)
    scale = max(np.max(np.abs(w)), 1e-300) if w.size else 1.0
    if w.size and w.min() < -tol * scale:
        raise NotPSDError(f"matrix has eigenvalue {w.min():.3g} below -{tol}*{scale:.3g}")
    root = np.sqrt(np.clip(w, 0.0, None))
    return (V * root) @ V.T


def fid_from_stats(mu1, sigma1, mu2, sigma2):
    """Frechet distance between two Gaussians, symmetric-product form."""
    mu1, mu2 = np.atleast_1d(np.asarray(mu1, float)), np.atleast_1d(np.asarray(mu2, float))
    s1, s2 = np.atleast_2d(np.asarray(sigma1, float)), np.atleast_2d(np.asarray(sigma2, float))
    if mu1.shape != mu2.shape or s1.shape != s2.shape or s1.shape != (mu1.size, mu1.size):
        raise DimensionError(f"inconsistent stats shapes: {mu1.shape}, {s1.shape}, {mu2.shape}, {s2.shape}")
    r1 = matrix_sqrt_psd(s1)
    inner = r1 @ s2 @ r1
    cross = matrix_sqrt_psd((inner + inner.T) / 2)
    diff = mu1 - mu2
    value = float(diff @ diff + np.trace(s1) + np.trace(s2) - 2.0 * np.trace(cross))
    if value < -1e-8:
        raise NumericalError(f"Frechet distance came out negative ({value:.3g})")
    return max(value, 0.0)


def fid(feats_a, feats_b):
    a, b = gaussian_stats(feats_a), gaussian_stats(feats_b)
    if a.mean.shape != b.mean.shape:
        raise DimensionError(f"feature widths differ: {a.mean.shape[0]} vs {b.mean.shape[0]}")
    return fid_from_stats(a.mean, a.cov, b.mean, b.cov)


# ------------------------------------------------------- distance statistics


def mm_dist(motion_feats, text_feats):
    """Mean distance between matched motion and text rows."""
    m = _as_matrix(motion_feats, "motion_feats")
    t = _as_matrix(text_feats, "text_feats")
    if m.shape != t.shape:
        raise DimensionError(f"mm_dist: shapes differ {m.shape} vs {t.shape}")
    return float(np.linalg.norm(m - t, axis=1).mean())


def diversity(feats, pair_count=None, seed=0):
    """Mean distance over randomly drawn disjoint row pairs."""
    x = _as_matrix(feats, "features")
    n = x.shape[0]
    if pair_count is None:
        pair_count = min(100, n // 2)
    if pair_count < 1 or n < 2 * pair_count:
        raise ConfigError(f"diversity needs at least {2 * max(pair_count, 1)} rows, got {n}")
    idx = derive_rng(seed, "diversity").choice(n, size=2 * pair_count, replace=False)
    a, b = x[idx[0::2]], x[idx[1::2]]
    return float(np.linalg.norm(a - b, axis=1).mean())


def multimodality(groups):
    """Mean distance over rows (1,2), (3,4), ... of each 20-row group, averaged over groups."""
    if not len(groups):
        raise ConfigError("multimodality needs at least one group")
    per_group = []
    for i, g in enumerate(groups):
        g = _as_matrix(g, f"group {i}")
        if g.shape[0] != MM_GROUP_SIZE:
            raise ConfigError(f"group {i} has {g.shape[0]} rows, expected {MM_GROUP_SIZE}")
        per_group.append(np.linalg.norm(g[0::2] - g[1::2], axis=1).mean())
    return float(np.mean(per_group))
