"""Horseshoe-family shrinkage priors via inverse-gamma auxiliaries.

Half-Cauchy local and global scales are represented by the standard
inverse-gamma mixture, so every hyperparameter update is an exact
inverse-gamma draw.  Grouped mode shares one scale u2 across the four
coefficients of an edge; regularized mode adds a finite slab 1/c^2 to
the prior precision while leaving the scale conditionals untouched.

Every scale draw is clipped into a bounded band (``SCALE_LIMS`` by
default).  The coupled global-local scale chains have no stationary
distribution in weakly identified classification fits: the global
variance drifts geometrically toward zero, and any coefficient group
whose scale follows is frozen there for the rest of the run.  Bounding
the draws keeps every group within reach of the likelihood while
leaving identified, well-scaled coefficients untouched.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import as_generator, sample_inv_gamma

__all__ = [
    "CoefLayout",
    "HorseshoeState",
    "SCALE_LIMS",
    "ShrinkagePrior",
    "ShrinkageTrace",
    "init_horseshoe",
    "update_local",
    "update_group",
    "update_global",
    "prior_precision",
    "fixed_tau_value",
]

# Default variance band for drawn scales and auxiliaries.  The floor must
# stay within a few orders of magnitude of the likelihood scale or a group
# shrunk during a global excursion can never climb back.
SCALE_LIMS = (1e-3, 1e3)


def _clip_scale(state, x):
    return np.clip(x, state.scale_lims[0], state.scale_lims[1])


@dataclass(frozen=True)
class CoefLayout:
    """Which flat coefficient positions are shrunk individually, in groups,
    or held under a fixed Gaussian prior (the intercept)."""

    local_idx: np.ndarray
    group_idx: np.ndarray | None = None  # (groups, group size)
    beta_idx: int | None = None
    beta_var: float = 1e3

    def __post_init__(self):
        object.__setattr__(self, "local_idx", np.asarray(self.local_idx, int))
        if self.group_idx is not None:
            gi = np.asarray(self.group_idx, int)
            if gi.ndim != 2:
                raise ValueError("group_idx must be (groups, group_size)")
            object.__setattr__(self, "group_idx", gi)
        used = set(self.local_idx.tolist())
        if self.group_idx is not None:
            used |= set(self.group_idx.ravel().tolist())
        if self.beta_idx is not None:
            used.add(int(self.beta_idx))
        if len(used) != self.size:
            raise ValueError("layout indices overlap")
        if used != set(range(self.size)):
            raise ValueError("layout indices must cover 0..size-1")

    @property
    def n_shrunk(self) -> int:
        g = 0 if self.group_idx is None else self.group_idx.size
        return self.local_idx.size + g

    @property
    def size(self) -> int:
        return self.n_shrunk + (0 if self.beta_idx is None else 1)


@dataclass
class HorseshoeState:
    """Scale variables of one horseshoe prior (all variances, not sds)."""

    lam2: np.ndarray
    nu: np.ndarray
    tau2: float
    xi: float
    u2: np.ndarray | None = None
    t: np.ndarray | None = None
    slab: float = np.inf  # slab width c; inf disables the regularization
    tau_fixed: bool = False
    scale_lims: tuple[float, float] = SCALE_LIMS

    @property
    def grouped(self) -> bool:
        return self.u2 is not None


def init_horseshoe(
    layout: CoefLayout,
    slab: float = np.inf,
    tau_fixed: bool = False,
    tau2: float = 1.0,
    scale_lims: tuple[float, float] = SCALE_LIMS,
) -> HorseshoeState:
    """All scales and auxiliaries start at 1 (tau2 overridable for fixed-tau)."""
    if slab <= 0:
        raise ValueError("slab width must be positive")
    lo, hi = scale_lims
    if not (0 < lo < hi):
        raise ValueError("scale_lims must satisfy 0 < lo < hi")
    n_loc = layout.local_idx.size
    grouped = layout.group_idx is not None
    return HorseshoeState(
        lam2=np.ones(n_loc),
        nu=np.ones(n_loc),
        tau2=float(tau2),
        xi=1.0,
        u2=np.ones(layout.group_idx.shape[0]) if grouped else None,
        t=np.ones(layout.group_idx.shape[0]) if grouped else None,
        slab=float(slab),
        tau_fixed=tau_fixed,
        scale_lims=(float(lo), float(hi)),
    )


def update_local(state: HorseshoeState, phi, rng) -> HorseshoeState:
    """lam2_k ~ IG(1, phi_k^2/(2 tau2) + 1/nu_k); nu_k ~ IG(1, 1 + 1/lam2_k)."""
    gen = as_generator(rng)
    phi = np.asarray(phi, float)
    if phi.shape != state.lam2.shape:
        raise ValueError("phi length disagrees with the number of local scales")
    if not np.all(np.isfinite(phi)):
        raise ValueError("non-finite coefficients")
    state.lam2 = _clip_scale(
        state, sample_inv_gamma(1.0, 0.5 * phi * phi / state.tau2 + 1.0 / state.nu, gen)
    )
    state.nu = _clip_scale(state, sample_inv_gamma(1.0, 1.0 + 1.0 / state.lam2, gen))
    return state


def update_group(state: HorseshoeState, phi_groups, rng) -> HorseshoeState:
    """u2 ~ IG(5/2, sum of the edge's squared phis/(2 tau2) + 1/t); t ~ IG(1, 1 + 1/u2)."""
    if not state.grouped:
        raise ValueError("state has no group scales")
    gen = as_generator(rng)
    phi_groups = np.asarray(phi_groups, float)
    if phi_groups.ndim != 2 or phi_groups.shape[0] != state.u2.shape[0]:
        raise ValueError("phi_groups must be (groups, group_size)")
    if not np.all(np.isfinite(phi_groups)):
        raise ValueError("non-finite coefficients")
    ss = np.sum(phi_groups * phi_groups, axis=1)
    state.u2 = _clip_scale(
        state,
        sample_inv_gamma(
            0.5 * (phi_groups.shape[1] + 1), 0.5 * ss / state.tau2 + 1.0 / state.t, gen
        ),
    )
    state.t = _clip_scale(state, sample_inv_gamma(1.0, 1.0 + 1.0 / state.u2, gen))
    return state


def update_global(state: HorseshoeState, phi_local, phi_groups, rng) -> HorseshoeState:
    """tau2 ~ IG((K+1)/2, scaled sum of squares + 1/xi) over all K shrunk
    coefficients; no-op when tau is fixed."""
    if state.tau_fixed:
        return state
    gen = as_generator(rng)
    phi_local = np.asarray(phi_local, float)
    ss = float(np.sum(phi_local * phi_local / state.lam2))
    count = phi_local.size
    if state.grouped:
        phi_groups = np.asarray(phi_groups, float)
        ss += float(np.sum(phi_groups * phi_groups / state.u2[:, None]))
        count += phi_groups.size
    state.tau2 = float(
        _clip_scale(
            state, sample_inv_gamma(0.5 * (count + 1), 0.5 * ss + 1.0 / state.xi, gen)
        )
    )
    state.xi = float(
        _clip_scale(state, sample_inv_gamma(1.0, 1.0 + 1.0 / state.tau2, gen))
    )
    return state


def prior_precision(state: HorseshoeState, layout: CoefLayout) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal prior precision over the flat coefficient vector, zero mean.

    Shrunk entries get 1/c^2 + 1/(scale * tau2); the intercept slot gets its
    fixed Gaussian precision.
    """
    if layout.local_idx.size != state.lam2.size or (
        (layout.group_idx is None) != (state.u2 is None)
    ):
        raise ValueError("state and layout disagree")
    inv_slab2 = 0.0 if np.isinf(state.slab) else 1.0 / (state.slab * state.slab)
    prec = np.empty(layout.size)
    prec[layout.local_idx] = inv_slab2 + 1.0 / (state.lam2 * state.tau2)
    if layout.group_idx is not None:
        prec[layout.group_idx] = (inv_slab2 + 1.0 / (state.u2 * state.tau2))[:, None]
    if layout.beta_idx is not None:
        prec[layout.beta_idx] = 1.0 / layout.beta_var
    return prec, np.zeros(layout.size)


def fixed_tau_value(d: int, n: int, m: int) -> float:
    """Plug-in global scale tau = p0 / (sqrt(n+m) (2 d^2 - p0)), p0 = floor(1.7 d^2 + 0.5)."""
    if d < 1 or n < 1 or m < 1:
        raise ValueError("d, n, m must be positive")
    p0 = int(np.floor(1.7 * d * d + 0.5))
    if p0 >= 2 * d * d:
        raise ValueError("fixed-tau rule needs 2 d^2 > p0 (d >= 2)")
    return p0 / (np.sqrt(n + m) * (2 * d * d - p0))


@dataclass
class ShrinkageTrace:
    tau2: np.ndarray
    lam2: np.ndarray
    u2: np.ndarray | None


@dataclass
class ShrinkagePrior:
    """Adapter giving the Gibbs engine a per-iteration shrinkage prior.

    ``gibbs_update`` runs the S-step conditionals on the current draw and
    optionally records the scale trajectory.
    """

    layout: CoefLayout
    state: HorseshoeState
    record: bool = False
    _tau2_trace: list = field(default_factory=list, repr=False)
    _lam2_trace: list = field(default_factory=list, repr=False)
    _u2_trace: list = field(default_factory=list, repr=False)

    def initial_coef(self) -> np.ndarray:
        return np.zeros(self.layout.size)

    def precision_natmean(self) -> tuple[np.ndarray, np.ndarray]:
        return prior_precision(self.state, self.layout)

    def gibbs_update(self, gamma: np.ndarray, gen) -> None:
        phi_local = gamma[self.layout.local_idx]
        phi_groups = (
            gamma[self.layout.group_idx] if self.layout.group_idx is not None else None
        )
        update_local(self.state, phi_local, gen)
        if self.state.grouped:
            update_group(self.state, phi_groups, gen)
        update_global(self.state, phi_local, phi_groups, gen)
        if self.record:
            self._tau2_trace.append(self.state.tau2)
            self._lam2_trace.append(self.state.lam2.copy())
            if self.state.grouped:
                self._u2_trace.append(self.state.u2.copy())

    def trace(self) -> ShrinkageTrace | None:
        if not self.record or not self._tau2_trace:
            return None
        return ShrinkageTrace(
            tau2=np.array(self._tau2_trace),
            lam2=np.stack(self._lam2_trace),
            u2=np.stack(self._u2_trace) if self._u2_trace else None,
        )
