"""Adaptive noise by tempered importance resampling.

The noise density is moved toward the current model fit: with tempering
exponent alpha and a coefficient snapshot gamma_tilde, proposals from a
flat base measure q0 are importance-weighted toward

    q_alpha(x) proportional to exp(alpha * z(x) @ gamma_tilde),

m points are resampled as the new noise set, and the self-normalized
estimate of the q_alpha normalizer feeds the offsets.  The effective
sample size of the weights is the degeneracy diagnostic.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .expfam import Rectangle, Torus
from .rng import as_generator

__all__ = [
    "NoiseSpec",
    "NoiseAdaptConfig",
    "TemperedNoiseState",
    "ess",
    "log_weight_ess",
    "update_gamma_tilde",
    "tempered_resample",
]


@dataclass(frozen=True)
class NoiseSpec:
    """How noise points are produced for the classification likelihood.

    mode "fixed-set": ``points`` is the noise set for the whole run.
    mode "generator": ``sampler(m, gen)`` is called for fresh draws.
    mode "adaptive": tempered resampling; only ``m`` is needed here.
    ``log_density`` evaluates log q at pooled points (fixed-set/generator).
    """

    mode: str
    m: int
    log_density: Callable[[np.ndarray], np.ndarray] | None = None
    sampler: Callable[[int, np.random.Generator], np.ndarray] | None = None
    points: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in ("fixed-set", "generator", "adaptive"):
            raise ValueError(f"unknown noise mode {self.mode!r}")
        if self.m < 1:
            raise ValueError("noise count m must be at least 1")
        if self.mode == "fixed-set" and (self.points is None or self.log_density is None):
            raise ValueError("fixed-set mode needs points and log_density")
        if self.mode == "generator" and (self.sampler is None or self.log_density is None):
            raise ValueError("generator mode needs sampler and log_density")


@dataclass(frozen=True)
class NoiseAdaptConfig:
    """Tuning knobs for the tempered-resampling schedule."""

    alpha: float = 0.2
    batch: int = 50              # iterations between refreshes; also the
                                 # mini-batch length averaged into gamma_tilde
    proposal_factor: int = 50    # M = proposal_factor * m
    ess_warn_factor: float = 0.1  # warn when ESS < factor * M
    scheme: str = "multinomial"  # or "systematic"
    during: str = "all"          # or "burnin"

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        if self.batch < 1 or self.proposal_factor < 1:
            raise ValueError("batch and proposal_factor must be positive")
        if self.scheme not in ("multinomial", "systematic"):
            raise ValueError(f"unknown resampling scheme {self.scheme!r}")
        if self.during not in ("all", "burnin"):
            raise ValueError("during must be 'all' or 'burnin'")


@dataclass
class TemperedNoiseState:
    """Current tempered-noise distribution of one chain."""

    gamma_tilde: np.ndarray
    alpha: float
    n_proposals: int
    base: Rectangle | Torus
    last_ess: float = np.nan
    log_norm: float = np.nan  # log of the estimated q_alpha normalizer

    def log_density(self, Z: np.ndarray) -> np.ndarray:
        """log q_alpha at points given by their design rows."""
        if not np.isfinite(self.log_norm):
            raise ValueError("tempered state has no normalizer yet; resample first")
        return self.alpha * (Z @ self.gamma_tilde) - self.log_norm


def ess(weights) -> float:
    """(sum w)^2 / sum w^2 for nonnegative weights."""
    w = np.asarray(weights, float)
    if w.size == 0 or np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and nonnegative")
    total = w.sum()
    if total <= 0:
        raise ValueError("all weights are zero")
    return float(total * total / np.sum(w * w))


def log_weight_ess(log_w: np.ndarray) -> float:
    """ESS from log weights, stable under common shifts."""
    log_w = np.asarray(log_w, float)
    finite = np.isfinite(log_w)
    if not np.any(finite):
        raise ValueError("all weights are zero")
    a = log_w.max()
    return ess(np.exp(log_w - a))


def update_gamma_tilde(draws: np.ndarray) -> np.ndarray:
    """Componentwise mean of a mini-batch of coefficient draws."""
    draws = np.atleast_2d(np.asarray(draws, float))
    if draws.shape[0] == 0:
        raise ValueError("empty mini-batch")
    return draws.mean(axis=0)


def _resample_indices(probs, m, gen, scheme):
    if scheme == "multinomial":
        return gen.choice(probs.size, size=m, replace=True, p=probs)
    # systematic: one uniform offset, stratified positions
    positions = (gen.random() + np.arange(m)) / m
    return np.searchsorted(np.cumsum(probs), positions)


def tempered_resample(
    state: TemperedNoiseState,
    m: int,
    design_fn: Callable[[np.ndarray], np.ndarray],
    rng,
    scheme: str = "multinomial",
) -> tuple[np.ndarray, TemperedNoiseState]:
    """Draw M base proposals, weight toward q_alpha, resample m noise points.

    Returns the new noise set and the state updated with the ESS and the
    estimated log normalizer; ``state.log_density`` then evaluates the fitted
    noise density.  Raises ValueError when the weights are degenerate.
    """
    if m < 1:
        raise ValueError("need m >= 1 resampled points")
    gen = as_generator(rng)
    M = state.n_proposals
    if M < m:
        raise ValueError("proposal count must be at least m")
    X = state.base.sample(M, gen)
    Z = design_fn(X)
    log_w = state.alpha * (Z @ state.gamma_tilde) - state.base.log_uniform()
    if np.all(~np.isfinite(log_w)) or np.any(np.isnan(log_w)):
        raise ValueError("degenerate resampling weights")
    state.last_ess = log_weight_ess(log_w)
    # log Z_alpha_hat = log(mean of untilted weights)
    state.log_norm = float(logsumexp(log_w) - np.log(M))
    shifted = np.exp(log_w - log_w.max())
    probs = shifted / shifted.sum()
    idx = _resample_indices(probs, m, gen, scheme)
    return X[idx], state
