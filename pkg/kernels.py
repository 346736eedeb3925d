#!/usr/bin/env python3
"""
Kernel Statistics

Gaussian Gram matrices, the biased HSIC estimator, the kernel-based
conditional independence (KCI) test and the normalized-HSIC direction score
used to orient edges between nodes that both change with the root variable.

All functions are pure given their inputs and an explicit seed.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg, stats
from scipy.spatial.distance import pdist, squareform

from config import CAUSAL_ALPHA, CAUSAL_PERMUTATIONS, CAUSAL_RIDGE, CI_METHODS
from errors import DataError

logger = logging.getLogger(__name__)

MIN_TEST_SAMPLES = 10
# relative eigenvalue cut-off for the KCI null spectrum
EIG_THRESHOLD = 1e-5


@dataclass
class GramMatrix:
    entries: np.ndarray
    bandwidth: float

    @property
    def n(self) -> int:
        return self.entries.shape[0]


@dataclass
class IndependenceResult:
    statistic: float
    p_value: float
    independent: bool
    alpha: float
    method: str
    degenerate: bool = False


@dataclass
class DirectionScore:
    delta: float


def as_samples(values) -> np.ndarray:
    """Coerce a sample block to an n x d float matrix."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if values.ndim != 2:
        raise DataError(f"Sample block must be 1-D or 2-D, got shape {values.shape}")
    return values


def standardize(values: np.ndarray) -> np.ndarray:
    """Zero-mean, unit-variance columns; constant columns are only centered."""
    values = as_samples(values)
    sd = values.std(axis=0)
    return (values - values.mean(axis=0)) / np.where(sd > 0, sd, 1.0)


def is_degenerate(values: np.ndarray) -> bool:
    """True when all rows are identical."""
    return bool(np.all(values == values[0]))


def median_bandwidth(samples) -> float:
    """Median of pairwise Euclidean distances over distinct pairs; 1 if that median is 0."""
    samples = as_samples(samples)
    if samples.shape[0] < 2:
        raise DataError("median_bandwidth needs at least 2 samples")
    median = float(np.median(pdist(samples, 'euclidean')))
    return median if median > 0 else 1.0


def gram_gaussian(samples, bandwidth: float) -> GramMatrix:
    """Gaussian kernel exp(-|x_i - x_j|^2 / (2 bandwidth^2)) over all sample pairs."""
    if not bandwidth > 0:
        raise DataError(f"Kernel bandwidth must be positive, got {bandwidth}")
    samples = as_samples(samples)
    sq = squareform(pdist(samples, 'sqeuclidean'))
    return GramMatrix(np.exp(-sq / (2.0 * bandwidth ** 2)), float(bandwidth))


def gram_median(samples) -> GramMatrix:
    return gram_gaussian(samples, median_bandwidth(samples))


def center(K: np.ndarray) -> np.ndarray:
    """H K H with H = I - (1/n) 11^T."""
    return K - K.mean(axis=0, keepdims=True) - K.mean(axis=1, keepdims=True) + K.mean()


def hsic(K_x: GramMatrix, K_y: GramMatrix) -> float:
    """Biased empirical HSIC (1/n^2) trace(K_x H K_y H)."""
    if K_x.n != K_y.n:
        raise DataError(f"HSIC size mismatch: {K_x.n} vs {K_y.n}")
    if K_x.n < 2:
        raise DataError("HSIC needs at least 2 samples")
    n = K_x.n
    return float(np.sum(center(K_x.entries) * center(K_y.entries)) / (n * n))


def _gamma_pvalue(statistic: float, mean: float, var: float) -> float:
    if mean <= 0 or var <= 0:
        return 1.0
    shape = mean ** 2 / var
    scale = var / mean
    return float(np.clip(stats.gamma.sf(statistic, shape, loc=0, scale=scale), 0.0, 1.0))


def _null_spectrum(Kx: np.ndarray, Ky: np.ndarray) -> np.ndarray:
    """Gram matrix of elementwise products of scaled eigenvectors (KCI null construction)."""
    def top_eig(K):
        w, v = linalg.eigh(0.5 * (K + K.T))
        order = np.argsort(w)[::-1]
        w, v = w[order], v[:, order]
        keep = w > w[0] * EIG_THRESHOLD if w[0] > 0 else np.zeros_like(w, dtype=bool)
        return v[:, keep] * np.sqrt(w[keep])

    vx, vy = top_eig(Kx), top_eig(Ky)
    n = Kx.shape[0]
    uu = (vx[:, :, None] * vy[:, None, :]).reshape(n, -1)
    return uu @ uu.T if uu.shape[1] > n else uu.T @ uu


def kci_test(
    x,
    y,
    z=None,
    alpha: float = CAUSAL_ALPHA,
    method: str = 'gamma',
    n_permutations: int = CAUSAL_PERMUTATIONS,
    seed: int = 0,
    ridge: float = CAUSAL_RIDGE,
) -> IndependenceResult:
    """
    Kernel-based (conditional) independence test of x and y given z.

    Unconditional case: HSIC statistic tr(HKxH HKyH) against its null.
    Conditional case: Kx (on x jointly with z) and Ky are residualized on z by
    kernel ridge regression, R = lambda (Kz + lambda I)^-1 with
    lambda = ridge * n, and the statistic tr(R Kx R R Ky R) is compared with a
    weighted chi-square null.

    Args:
        x, y: Sample blocks (n x dx, n x dy)
        z: Optional conditioning block (n x dz)
        alpha: Significance level in (0, 1)
        method: "gamma" (moment-matched gamma) or "permutation"
        n_permutations: Null draws for the permutation method
        seed: Seed for the permutation method
        ridge: Ridge factor multiplied by n

    Returns:
        IndependenceResult: independent is True iff p_value > alpha
    """
    if not 0.0 < alpha < 1.0:
        raise DataError(f"alpha must lie in (0, 1), got {alpha}")
    if method not in CI_METHODS:
        raise DataError(f"Unknown CI method '{method}'")
    x, y = as_samples(x), as_samples(y)
    n = x.shape[0]
    if y.shape[0] != n or (z is not None and as_samples(z).shape[0] != n):
        raise DataError("kci_test blocks must share the sample count")
    if n < MIN_TEST_SAMPLES:
        raise DataError(f"kci_test needs at least {MIN_TEST_SAMPLES} samples, got {n}")

    if is_degenerate(x) or is_degenerate(y):
        return IndependenceResult(0.0, 1.0, True, alpha, method, degenerate=True)

    x, y = standardize(x), standardize(y)
    conditional = z is not None and as_samples(z).shape[1] > 0
    rng = np.random.default_rng(seed)

    if not conditional:
        Kx = center(gram_median(x).entries)
        Ky = center(gram_median(y).entries)
        statistic = float(np.sum(Kx * Ky))
        if method == 'gamma':
            mean = np.trace(Kx) * np.trace(Ky) / n
            var = 2.0 * np.sum(Kx ** 2) * np.sum(Ky ** 2) / (n * n)
            p_value = _gamma_pvalue(statistic, mean, var)
        else:
            null = np.empty(n_permutations)
            for b in range(n_permutations):
                perm = rng.permutation(n)
                null[b] = np.sum(Kx * Ky[np.ix_(perm, perm)])
            p_value = float((1 + np.sum(null >= statistic)) / (1 + n_permutations))
    else:
        z = standardize(z)
        xz = np.concatenate([x, 0.5 * z], axis=1)
        Kx = center(gram_median(xz).entries)
        Ky = center(gram_median(y).entries)
        Kz = center(gram_median(z).entries)
        lam = ridge * n
        Rz = lam * linalg.solve(Kz + lam * np.eye(n), np.eye(n), assume_a='sym')
        KxR = Rz @ Kx @ Rz
        KyR = Rz @ Ky @ Rz
        statistic = float(np.sum(KxR * KyR))
        uu_prod = _null_spectrum(KxR, KyR)
        if method == 'gamma':
            mean = np.trace(uu_prod)
            var = 2.0 * np.trace(uu_prod @ uu_prod)
            p_value = _gamma_pvalue(statistic, mean, var)
        else:
            eigvals = np.clip(linalg.eigvalsh(uu_prod), 0.0, None)
            draws = rng.chisquare(1, size=(eigvals.shape[0], n_permutations))
            null = eigvals @ draws
            p_value = float((1 + np.sum(null >= statistic)) / (1 + n_permutations))

    statistic = max(statistic, 0.0)
    return IndependenceResult(statistic, p_value, p_value > alpha, alpha, method)


def _conditional_embedding_gram(K_target: np.ndarray, K_given: np.ndarray, lam: float) -> np.ndarray:
    """Gram matrix of conditional mean embeddings M K_target M^T, M = K_given (K_given + lam I)^-1."""
    n = K_given.shape[0]
    M = linalg.solve(K_given + lam * np.eye(n), K_given, assume_a='sym').T
    return M @ K_target @ M.T


def direction_score(cause_block, effect_block, surrogate, ridge: float = CAUSAL_RIDGE) -> DirectionScore:
    """
    Normalized HSIC between the embeddings of p(cause | U) and p(effect | cause, U).

    The root series U stands in for the nonstationarity index. A lower
    delta means the hypothesized direction cause -> effect is more plausible.
    """
    cause, effect, u = as_samples(cause_block), as_samples(effect_block), as_samples(surrogate)
    n = cause.shape[0]
    if effect.shape[0] != n or u.shape[0] != n:
        raise DataError("direction_score blocks must share the sample count")
    if n < 2:
        raise DataError("direction_score needs at least 2 samples")
    if is_degenerate(cause) or is_degenerate(effect):
        raise DataError("direction_score received a degenerate (constant) block")

    cause, effect, u = standardize(cause), standardize(effect), standardize(u)
    lam = ridge * n
    K_u = gram_median(u).entries
    K_cause = gram_median(cause).entries
    K_effect = gram_median(effect).entries
    K_cause_u = gram_median(np.concatenate([cause, u], axis=1)).entries

    G_cause = center(_conditional_embedding_gram(K_cause, K_u, lam))
    G_effect = center(_conditional_embedding_gram(K_effect, K_cause_u, lam))

    norm = np.sqrt(np.sum(G_cause ** 2) * np.sum(G_effect ** 2))
    if norm <= 0:
        raise DataError("direction_score: embedding Gram matrix vanished")
    delta = float(np.sum(G_cause * G_effect) / norm)
    return DirectionScore(max(delta, 0.0))
