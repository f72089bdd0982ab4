"""Unnormalized exponential-family models and the classification likelihood.

A model supplies a sufficient-statistic map eta(x) in R^p and a log base
measure log h(x) on some domain.  Genuine data (label 1) and noise draws
(label 0) are pooled; each point x gets a design row z(x) = (eta(x), 1)
and an offset

    offset(x) = log(n) - log(m) + log h(x) - log q(x),

where q is the noise density.  With coefficients gamma = (theta, beta)
and beta standing in for minus the log normalizing constant, the
probability that x is genuine is the logistic transform of
psi = z(x) @ gamma + offset(x), and the labels are conditionally
independent Bernoullis.  Everything downstream (Gibbs sampling, adaptive
noise, shrinkage) works through these design rows and offsets.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from .rng import as_generator

__all__ = [
    "Rectangle",
    "Torus",
    "ExpFamModel",
    "CoefVector",
    "LabeledSample",
    "build_labeled",
    "stack_samples",
    "classifier_prob",
    "log_class_likelihood",
    "class_likelihood_grad",
]

# expit saturates to exactly 0/1 past +-37; the classifier probability is
# contractually inside the open interval, so clip to the nearest doubles.
_P_LO = np.finfo(float).tiny
_P_HI = 1.0 - 2.0**-53


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned box in R^k with uniform reference measure."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        lo = np.asarray(self.lo, float)
        hi = np.asarray(self.hi, float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lo and hi must be 1-d with equal length")
        if np.any(hi <= lo):
            raise ValueError("rectangle must have positive side lengths")
        object.__setattr__(self, "lo", tuple(float(v) for v in lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in hi))

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod(np.asarray(self.hi) - np.asarray(self.lo)))

    def contains(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, float))
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.all((X >= lo) & (X <= hi), axis=1)

    def sample(self, n: int, rng) -> np.ndarray:
        gen = as_generator(rng)
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return lo + (hi - lo) * gen.random((n, self.dim))

    def log_uniform(self) -> float:
        """log density of the uniform distribution on the box."""
        return -float(np.log(self.volume))

    def expand(self, frac: float) -> "Rectangle":
        """Box grown by ``frac`` of each side length, symmetrically."""
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        pad = 0.5 * frac * (hi - lo)
        return Rectangle(tuple(lo - pad), tuple(hi + pad))

    @staticmethod
    def around(X: np.ndarray, frac: float = 0.0) -> "Rectangle":
        """Bounding box of the points, optionally expanded."""
        X = np.atleast_2d(np.asarray(X, float))
        box = Rectangle(tuple(X.min(axis=0)), tuple(X.max(axis=0)))
        return box.expand(frac) if frac > 0 else box


@dataclass(frozen=True)
class Torus:
    """Product of circles [0, 2pi)^d."""

    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("torus dimension must be positive")

    @property
    def volume(self) -> float:
        return float((2.0 * np.pi) ** self.dim)

    def contains(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, float))
        return np.all((X >= 0.0) & (X < 2.0 * np.pi), axis=1)

    def sample(self, n: int, rng) -> np.ndarray:
        gen = as_generator(rng)
        return gen.random((n, self.dim)) * 2.0 * np.pi

    def log_uniform(self) -> float:
        return -self.dim * float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class ExpFamModel:
    """Sufficient statistics, base measure, and domain of an unnormalized model.

    ``suff_stat`` maps an (n, k) array of points to an (n, p) array;
    ``log_base`` maps points to (n,).  The trailing intercept column of the
    design is appended here, not by callers.
    """

    dim_param: int
    suff_stat: Callable[[np.ndarray], np.ndarray]
    domain: Rectangle | Torus
    log_base: Callable[[np.ndarray], np.ndarray] | None = None

    def design(self, X: np.ndarray) -> np.ndarray:
        """Design rows z(x) = (eta(x), 1) for each point, shape (n, p + 1)."""
        X = np.atleast_2d(np.asarray(X, float))
        Z = np.asarray(self.suff_stat(X), float)
        if Z.ndim != 2 or Z.shape != (X.shape[0], self.dim_param):
            raise ValueError(
                f"suff_stat returned shape {Z.shape}, expected "
                f"{(X.shape[0], self.dim_param)}"
            )
        return np.hstack([Z, np.ones((Z.shape[0], 1))])

    def log_h(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, float))
        if self.log_base is None:
            return np.zeros(X.shape[0])
        return np.asarray(self.log_base(X), float)

    def unnorm_log_density(self, theta: np.ndarray, X: np.ndarray) -> np.ndarray:
        """log p_tilde(x | theta) = eta(x) @ theta + log h(x)."""
        X = np.atleast_2d(np.asarray(X, float))
        return self.suff_stat(X) @ np.asarray(theta, float) + self.log_h(X)


@dataclass(frozen=True)
class CoefVector:
    """Model coefficients theta plus the intercept beta (= -log Z estimate)."""

    theta: np.ndarray
    beta: float

    def __post_init__(self):
        theta = np.asarray(self.theta, float)
        if theta.ndim != 1:
            raise ValueError("theta must be a vector")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def flat(self) -> np.ndarray:
        return np.append(self.theta, self.beta)

    @classmethod
    def from_flat(cls, gamma: np.ndarray) -> "CoefVector":
        gamma = np.asarray(gamma, float)
        if gamma.ndim != 1 or gamma.size < 1:
            raise ValueError("flat coefficient vector needs at least the intercept")
        return cls(theta=gamma[:-1], beta=float(gamma[-1]))


@dataclass(frozen=True)
class LabeledSample:
    """One pooled point: location, label (1 genuine, 0 noise), design row, offset."""

    x: np.ndarray
    label: int
    z: np.ndarray
    offset: float


def build_labeled(
    data: np.ndarray,
    noise: np.ndarray,
    model: ExpFamModel,
    log_noise_density: Callable[[np.ndarray], np.ndarray],
) -> list[LabeledSample]:
    """Pool genuine and noise points into labeled samples with offsets.

    Raises ValueError if any point falls outside the model domain or the
    noise density vanishes (offset undefined) at a pooled point.
    """
    data = np.atleast_2d(np.asarray(data, float))
    noise = np.atleast_2d(np.asarray(noise, float))
    n, m = data.shape[0], noise.shape[0]
    if n == 0 or m == 0:
        raise ValueError("need at least one genuine and one noise point")
    X = np.vstack([data, noise])
    inside = model.domain.contains(X)
    if not np.all(inside):
        raise ValueError(f"{int((~inside).sum())} point(s) outside the model domain")
    logq = np.asarray(log_noise_density(X), float)
    if np.any(~np.isfinite(logq)):
        raise ValueError("noise log density must be finite at every pooled point")
    Z = model.design(X)
    C = np.log(n) - np.log(m) + model.log_h(X) - logq
    s = np.concatenate([np.ones(n, int), np.zeros(m, int)])
    return [
        LabeledSample(x=X[i], label=int(s[i]), z=Z[i], offset=float(C[i]))
        for i in range(n + m)
    ]


def stack_samples(samples: Sequence[LabeledSample]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(Z, offsets, labels) arrays from a list of labeled samples."""
    if len(samples) == 0:
        raise ValueError("empty sample list")
    Z = np.stack([s.z for s in samples])
    C = np.array([s.offset for s in samples])
    lab = np.array([s.label for s in samples], float)
    return Z, C, lab


def _psi(gamma, Z, C):
    gamma = gamma.flat if isinstance(gamma, CoefVector) else np.asarray(gamma, float)
    return Z @ gamma + C


def classifier_prob(gamma, sample: LabeledSample) -> float:
    """P(label = 1 | x, gamma), strictly inside (0, 1)."""
    psi = _psi(gamma, sample.z[None, :], np.array([sample.offset]))[0]
    return float(np.clip(expit(psi), _P_LO, _P_HI))


def log_class_likelihood(gamma, samples: Sequence[LabeledSample]) -> float:
    """Joint Bernoulli log likelihood of the labels."""
    Z, C, lab = stack_samples(samples)
    return log_class_likelihood_arrays(gamma, Z, C, lab)


def log_class_likelihood_arrays(gamma, Z, C, labels) -> float:
    psi = _psi(gamma, Z, C)
    # s*psi - log(1 + e^psi), stable at both tails
    return float(np.sum(labels * psi - np.logaddexp(0.0, psi)))


def class_likelihood_grad(gamma, samples: Sequence[LabeledSample]) -> np.ndarray:
    """Gradient of the log classification likelihood in gamma."""
    Z, C, lab = stack_samples(samples)
    psi = _psi(gamma, Z, C)
    return Z.T @ (lab - expit(psi))
