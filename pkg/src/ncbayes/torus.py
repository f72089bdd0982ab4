"""Sparse torus-graph models for multivariate circular data.

The unnormalized density on [0, 2pi)^d couples angles through
per-node terms (cos x_j, sin x_j) and pairwise terms
(cos(x_j - x_k), sin(x_j - x_k), cos(x_j + x_k), sin(x_j + x_k)).
Zero pairwise coefficients encode conditional independence, so edge
recovery is read off the posterior of the coupling coefficients.
Includes data generators for the simulation designs, classification-
posterior fitting with shrinkage priors, edge-decision rules, recovery
metrics, and graph/phase-file I/O.
"""
from __future__ import annotations

import csv
import itertools
import json
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .expfam import ExpFamModel, Torus
from .gibbs import (
    GaussianPrior,
    GibbsConfig,
    PosteriorDraws,
    run_adaptive_noise,
    run_fixed_noise,
    run_refreshed_noise,
)
from .noise import NoiseAdaptConfig, NoiseSpec
from .rng import as_generator
from .shrinkage import (
    CoefLayout,
    ShrinkagePrior,
    ShrinkageTrace,
    fixed_tau_value,
    init_horseshoe,
)

__all__ = [
    "TorusGraphParams",
    "EdgeDecisionReport",
    "GraphMetrics",
    "edge_pairs",
    "torus_suff_stat",
    "torus_design",
    "torus_model",
    "torus_layout",
    "chain_truth",
    "generate_vm_chain",
    "cycle5_params",
    "generate_cycle_rejection",
    "er_params",
    "vm_conditional",
    "generate_er_gibbs",
    "fit_torus_ncbayes",
    "detect_edges_median",
    "detect_edges_ci",
    "graph_metrics",
    "true_edge_mask",
    "write_edge_csv",
    "write_dot",
    "write_interval_csv",
    "load_phase_csv",
    "save_phase_csv",
]

PRIOR_MODES = ("gaussian", "horseshoe", "grouped", "regularized-grouped")


def edge_pairs(d: int) -> list[tuple[int, int]]:
    """Canonical 0-indexed edge order (0,1), (0,2), ..., (d-2, d-1)."""
    return list(itertools.combinations(range(d), 2))


def _wrap_angles(X: np.ndarray) -> np.ndarray:
    if np.any((X < 0) | (X >= 2 * np.pi)):
        warnings.warn("angles outside [0, 2pi) were wrapped", stacklevel=3)
        return np.mod(X, 2 * np.pi)
    return X


def _torus_stats(X: np.ndarray) -> np.ndarray:
    """(n, 2d^2) sufficient statistics, nodes first then edges."""
    X = np.atleast_2d(np.asarray(X, float))
    n, d = X.shape
    pairs = edge_pairs(d)
    out = np.empty((n, 2 * d * d))
    out[:, 0 : 2 * d : 2] = np.cos(X)
    out[:, 1 : 2 * d : 2] = np.sin(X)
    if pairs:
        J = np.array([j for j, _ in pairs])
        K = np.array([k for _, k in pairs])
        diff = X[:, J] - X[:, K]
        tot = X[:, J] + X[:, K]
        eb = out[:, 2 * d :]
        eb[:, 0::4] = np.cos(diff)
        eb[:, 1::4] = np.sin(diff)
        eb[:, 2::4] = np.cos(tot)
        eb[:, 3::4] = np.sin(tot)
    return out


def torus_design(X: np.ndarray) -> np.ndarray:
    """Design rows (stats, 1) for a batch of angle vectors, with wrapping."""
    X = _wrap_angles(np.atleast_2d(np.asarray(X, float)))
    S = _torus_stats(X)
    return np.hstack([S, np.ones((S.shape[0], 1))])


def torus_suff_stat(x: np.ndarray) -> np.ndarray:
    """Length 2d^2 + 1 statistic vector of one angle vector."""
    return torus_design(np.atleast_2d(np.asarray(x, float)))[0]


def torus_model(d: int) -> ExpFamModel:
    if d < 1:
        raise ValueError("need at least one node")
    return ExpFamModel(
        dim_param=2 * d * d,
        suff_stat=lambda X: _torus_stats(_wrap_angles(np.atleast_2d(np.asarray(X, float)))),
        domain=Torus(d),
    )


@dataclass(frozen=True)
class TorusGraphParams:
    """Node pairs, edge quadruples (canonical order), and the intercept."""

    phi_node: np.ndarray  # (d, 2)
    phi_edge: np.ndarray  # (E, 4)
    beta: float = 0.0

    def __post_init__(self):
        pn = np.atleast_2d(np.asarray(self.phi_node, float))
        pe = np.asarray(self.phi_edge, float).reshape(-1, 4)
        d = pn.shape[0]
        if pn.shape != (d, 2) or pe.shape[0] != d * (d - 1) // 2:
            raise ValueError("inconsistent node/edge coefficient shapes")
        object.__setattr__(self, "phi_node", pn)
        object.__setattr__(self, "phi_edge", pe)
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def d(self) -> int:
        return self.phi_node.shape[0]

    @property
    def flat(self) -> np.ndarray:
        """All 2d^2 coupling coefficients, without the intercept."""
        return np.concatenate([self.phi_node.ravel(), self.phi_edge.ravel()])

    @property
    def gamma(self) -> np.ndarray:
        return np.append(self.flat, self.beta)

    @classmethod
    def from_flat(cls, flat: np.ndarray, beta: float = 0.0) -> "TorusGraphParams":
        flat = np.asarray(flat, float)
        d = int(round(np.sqrt(flat.size / 2)))
        if 2 * d * d != flat.size:
            raise ValueError("flat length is not 2 d^2")
        return cls(
            phi_node=flat[: 2 * d].reshape(d, 2),
            phi_edge=flat[2 * d :].reshape(-1, 4),
            beta=beta,
        )

    def unnorm_log_density(self, X: np.ndarray) -> np.ndarray:
        return _torus_stats(np.atleast_2d(np.asarray(X, float))) @ self.flat


def torus_layout(d: int, grouped: bool, with_beta: bool = True, beta_var: float = 1e3) -> CoefLayout:
    """Shrinkage layout over the flat coefficient order of torus models."""
    E = d * (d - 1) // 2
    if grouped:
        local = np.arange(2 * d)
        groups = (2 * d + np.arange(4 * E)).reshape(E, 4) if E else np.empty((0, 4), int)
    else:
        local = np.arange(2 * d * d)
        groups = None
    return CoefLayout(
        local_idx=local,
        group_idx=groups,
        beta_idx=2 * d * d if with_beta else None,
        beta_var=beta_var,
    )


# ---------------------------------------------------------------- generators

def chain_truth(d: int, mu: float = np.pi / 6, kappa: float = 2.0) -> TorusGraphParams:
    """Coefficients implied by the Markov-chain construction: the first node
    carries the marginal direction, consecutive pairs carry the coupling."""
    pn = np.zeros((d, 2))
    pn[0] = kappa * np.cos(mu), kappa * np.sin(mu)
    pairs = edge_pairs(d)
    pe = np.zeros((len(pairs), 4))
    for e, (j, k) in enumerate(pairs):
        if k == j + 1:
            pe[e] = kappa * np.cos(mu), -kappa * np.sin(mu), 0.0, 0.0
    return TorusGraphParams(phi_node=pn, phi_edge=pe)


def generate_vm_chain(
    d: int, n: int, mu: float = np.pi / 6, kappa: float = 2.0, seed: int = 0
) -> np.ndarray:
    """x_1 ~ vM(mu, kappa); x_j | x_{j-1} ~ vM(x_{j-1} + mu, kappa)."""
    if d < 2:
        raise ValueError("chain needs d >= 2")
    gen = as_generator(seed)
    X = np.empty((n, d))
    X[:, 0] = gen.vonmises(mu, kappa, size=n)
    for j in range(1, d):
        X[:, j] = gen.vonmises(X[:, j - 1] + mu, kappa, size=n)
    return np.mod(X, 2 * np.pi)


def cycle5_params(strength: float = 0.3) -> TorusGraphParams:
    """Fixed 5-node design: edges (1,3),(1,4),(2,4),(2,5),(3,5), all four
    trigonometric components equal."""
    d = 5
    pairs = edge_pairs(d)
    pe = np.zeros((len(pairs), 4))
    for e, (j, k) in enumerate(pairs):
        if (j + 1, k + 1) in [(1, 3), (1, 4), (2, 4), (2, 5), (3, 5)]:
            pe[e] = strength
    return TorusGraphParams(phi_node=np.zeros((d, 2)), phi_edge=pe)


def generate_cycle_rejection(
    n: int, seed: int = 0, params: TorusGraphParams | None = None
) -> tuple[np.ndarray, float]:
    """Exact draws by rejection from the uniform envelope.

    The log-density bound is the l1 norm of all coefficients (each statistic
    is in [-1, 1]), so candidates are accepted with exp(U(x) - U_max).
    Returns the sample and the observed acceptance rate.
    """
    params = params or cycle5_params()
    if n < 1:
        raise ValueError("n must be positive")
    gen = as_generator(seed)
    u_max = float(np.sum(np.abs(params.flat)))
    out = []
    proposed = 0
    batch = max(4 * n, 10_000)
    while sum(len(o) for o in out) < n:
        X = gen.random((batch, params.d)) * 2 * np.pi
        logu = params.unnorm_log_density(X)
        keep = gen.random(batch) < np.exp(logu - u_max)
        out.append(X[keep])
        proposed += batch
    X = np.vstack(out)[:n]
    return X, len(np.vstack(out)) / proposed


def er_params(
    d: int = 30,
    edge_prob: float = 0.1,
    seed: int = 0,
    coefs: tuple[float, float, float, float] = (0.3, 0.3, 0.0, 0.0),
) -> TorusGraphParams:
    """Erdos-Renyi edge set fixed by the seed; rotational couplings only
    by default."""
    if d < 2 or not 0.0 <= edge_prob <= 1.0:
        raise ValueError("need d >= 2 and edge_prob in [0, 1]")
    gen = as_generator(seed)
    pairs = edge_pairs(d)
    present = gen.random(len(pairs)) < edge_prob
    pe = np.zeros((len(pairs), 4))
    pe[present] = np.asarray(coefs, float)
    return TorusGraphParams(phi_node=np.zeros((d, 2)), phi_edge=pe)


def vm_conditional(params: TorusGraphParams, x: np.ndarray, k: int) -> tuple[float, float]:
    """Coefficients (a, b) of cos x_k and sin x_k in the log density given
    the other angles; the full conditional is von Mises with direction
    atan2(b, a) and concentration hypot(a, b).

    Derived by expanding the pairwise statistics: the rotational components
    are antisymmetric in the edge orientation, the reflectional ones are
    symmetric.
    """
    x = np.asarray(x, float)
    a, b = params.phi_node[k]
    for e, (i, j) in enumerate(edge_pairs(params.d)):
        p1, p2, p3, p4 = params.phi_edge[e]
        if k == j:
            other = x[i]
            a += p1 * np.cos(other) + p2 * np.sin(other)
            b += p1 * np.sin(other) - p2 * np.cos(other)
        elif k == i:
            other = x[j]
            a += p1 * np.cos(other) - p2 * np.sin(other)
            b += p1 * np.sin(other) + p2 * np.cos(other)
        else:
            continue
        a += p3 * np.cos(other) + p4 * np.sin(other)
        b += -p3 * np.sin(other) + p4 * np.cos(other)
    return float(a), float(b)


def _neighbor_table(params: TorusGraphParams):
    """Per-node list of (other node, edge quadruple, k-is-first-flag) over
    edges with any nonzero coupling."""
    tab: list[list] = [[] for _ in range(params.d)]
    for e, (i, j) in enumerate(edge_pairs(params.d)):
        p = params.phi_edge[e]
        if np.any(p):
            tab[i].append((j, p, True))
            tab[j].append((i, p, False))
    return tab


def generate_er_gibbs(
    d: int = 30,
    edge_prob: float = 0.1,
    n: int = 1000,
    burn: int = 2000,
    seed: int = 0,
    params: TorusGraphParams | None = None,
) -> tuple[np.ndarray, TorusGraphParams]:
    """Single-site Gibbs sweeps over the angles; one kept sample per sweep
    after burn-in.  Returns (samples, generating parameters)."""
    if n < 1 or burn < 0:
        raise ValueError("need n >= 1 and burn >= 0")
    gen = as_generator(seed)
    if params is None:
        params = er_params(d, edge_prob, seed=seed)
    d = params.d
    tab = _neighbor_table(params)
    x = gen.random(d) * 2 * np.pi
    out = np.empty((n, d))
    for sweep in range(burn + n):
        for k in range(d):
            a, b = params.phi_node[k]
            for other, p, k_first in tab[k]:
                c, s = np.cos(x[other]), np.sin(x[other])
                if k_first:
                    a += p[0] * c - p[1] * s
                    b += p[0] * s + p[1] * c
                else:
                    a += p[0] * c + p[1] * s
                    b += p[0] * s - p[1] * c
                a += p[2] * c + p[3] * s
                b += -p[2] * s + p[3] * c
            x[k] = gen.vonmises(np.arctan2(b, a), np.hypot(a, b)) % (2 * np.pi)
        if sweep >= burn:
            out[sweep - burn] = x
    return out, params


# ------------------------------------------------------------------- fitting

def _make_prior(d: int, prior_mode: str, tau_fixed: bool, tau2: float,
                slab: float, beta_var: float, record: bool):
    if prior_mode == "gaussian":
        return GaussianPrior.iso(2 * d * d + 1, var=100.0)
    grouped = prior_mode in ("grouped", "regularized-grouped")
    layout = torus_layout(d, grouped=grouped, with_beta=True, beta_var=beta_var)
    state = init_horseshoe(
        layout,
        slab=slab if prior_mode == "regularized-grouped" else np.inf,
        tau_fixed=tau_fixed,
        tau2=tau2,
    )
    return ShrinkagePrior(layout=layout, state=state, record=record)


def fit_torus_ncbayes(
    data: np.ndarray,
    prior_mode: str,
    cfg: GibbsConfig,
    m: int | None = None,
    noise_update: str = "off",
    adapt: NoiseAdaptConfig | None = None,
    tau_fixed: bool = False,
    slab: float = 1.0,
    beta_var: float = 1e3,
    record_shrinkage: bool = False,
) -> tuple[PosteriorDraws, ShrinkageTrace | None]:
    """NC-Bayes fit of a torus graph.

    noise_update "off" redraws uniform torus noise every iteration;
    "on" / "burnin" run tempered adaptive noise throughout or only during
    burn-in.  ``tau_fixed`` plugs in the sparsity-informed global scale.
    Returns the kept draws and, when recorded, the shrinkage trajectory
    (one entry per iteration including burn-in).
    """
    if prior_mode not in PRIOR_MODES:
        raise ValueError(f"prior_mode must be one of {PRIOR_MODES}")
    if noise_update not in ("off", "on", "burnin"):
        raise ValueError("noise_update must be off, on, or burnin")
    data = np.atleast_2d(np.asarray(data, float))
    n, d = data.shape
    model = torus_model(d)
    m = n if m is None else int(m)
    if m < 1:
        raise ValueError("noise count must be positive")
    if tau_fixed and prior_mode == "gaussian":
        raise ValueError("tau_fixed needs a shrinkage prior")
    tau2 = fixed_tau_value(d, n, m) ** 2 if tau_fixed else 1.0
    prior = _make_prior(d, prior_mode, tau_fixed, tau2, slab, beta_var, record_shrinkage)

    if noise_update == "off":
        spec = NoiseSpec(
            mode="generator",
            m=m,
            sampler=lambda k, gen: gen.random((k, d)) * 2 * np.pi,
            log_density=lambda X: np.full(
                np.atleast_2d(X).shape[0], model.domain.log_uniform()
            ),
        )
        draws = run_refreshed_noise(model, data, spec, prior, cfg)
    else:
        adapt = replace(
            adapt or NoiseAdaptConfig(),
            during="burnin" if noise_update == "burnin" else "all",
        )
        cfg = replace(cfg, adapt=adapt)
        draws = run_adaptive_noise(model, data, m, prior, cfg)
    trace = prior.trace() if isinstance(prior, ShrinkagePrior) else None
    return draws, trace


# ------------------------------------------------------------ edge decisions

@dataclass
class EdgeDecisionReport:
    """Per-edge decisions under one detection rule."""

    d: int
    rule: str            # "median-threshold" | "ci-level"
    value: float
    decisions: np.ndarray   # (E,) bool
    strengths: np.ndarray   # (E,) sum of |median| over the 4 components
    medians: np.ndarray     # (E, 4)

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return edge_pairs(self.d)


@dataclass
class GraphMetrics:
    recall: float
    precision: float
    accuracy: float
    cp_phi: float = np.nan


def _coef_draws(draws) -> np.ndarray:
    """(k, 2d^2) coupling draws from PosteriorDraws or a raw array."""
    A = draws.draws if isinstance(draws, PosteriorDraws) else np.asarray(draws, float)
    if A.ndim != 2:
        raise ValueError("draws must be a matrix")
    w = A.shape[1]
    if w % 2 == 1:  # trailing intercept column
        A = A[:, :-1]
        w -= 1
    d = int(round(np.sqrt(w / 2)))
    if 2 * d * d != w:
        raise ValueError("draw width is not a torus coefficient count")
    return A


def _edge_block(A: np.ndarray) -> np.ndarray:
    d = int(round(np.sqrt(A.shape[1] / 2)))
    return A[:, 2 * d :].reshape(A.shape[0], -1, 4)


def detect_edges_median(draws, threshold: float = 0.100) -> EdgeDecisionReport:
    """Edge present iff some |posterior median| of its four components
    strictly exceeds the threshold."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    A = _coef_draws(draws)
    d = int(round(np.sqrt(A.shape[1] / 2)))
    med = np.median(_edge_block(A), axis=0)           # (E, 4)
    return EdgeDecisionReport(
        d=d,
        rule="median-threshold",
        value=float(threshold),
        decisions=np.max(np.abs(med), axis=1) > threshold,
        strengths=np.sum(np.abs(med), axis=1),
        medians=med,
    )


def detect_edges_ci(draws, level: float = 0.90) -> EdgeDecisionReport:
    """Edge present iff any component's equal-tailed credible interval
    excludes zero."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    A = _coef_draws(draws)
    d = int(round(np.sqrt(A.shape[1] / 2)))
    eb = _edge_block(A)
    a = 0.5 * (1 - level)
    lo = np.quantile(eb, a, axis=0)
    hi = np.quantile(eb, 1 - a, axis=0)
    med = np.median(eb, axis=0)
    return EdgeDecisionReport(
        d=d,
        rule="ci-level",
        value=float(level),
        decisions=np.any((lo > 0) | (hi < 0), axis=1),
        strengths=np.sum(np.abs(med), axis=1),
        medians=med,
    )


def true_edge_mask(params: TorusGraphParams) -> np.ndarray:
    return np.any(params.phi_edge != 0.0, axis=1)


def graph_metrics(
    report: EdgeDecisionReport,
    true_edges: np.ndarray,
    draws=None,
    true_params: TorusGraphParams | None = None,
    level: float = 0.90,
) -> GraphMetrics:
    """Confusion-matrix scores of the edge decisions, plus coverage of all
    coupling coefficients when draws and the generating parameters are given.

    With no detections, precision is 1.0 only in the vacuous no-true-edge
    case and NaN otherwise (excluded from averages); recall is NaN when
    there are no true edges.
    """
    truth = np.asarray(true_edges, bool)
    dec = report.decisions
    if truth.shape != dec.shape:
        raise ValueError("edge count mismatch")
    tp = int(np.sum(dec & truth))
    fp = int(np.sum(dec & ~truth))
    fn = int(np.sum(~dec & truth))
    tn = int(np.sum(~dec & ~truth))
    recall = tp / (tp + fn) if (tp + fn) else np.nan
    if tp + fp:
        precision = tp / (tp + fp)
    else:
        precision = 1.0 if (tp + fn) == 0 else np.nan
    accuracy = (tp + tn) / truth.size
    cp = np.nan
    if draws is not None and true_params is not None:
        A = _coef_draws(draws)
        a = 0.5 * (1 - level)
        lo = np.quantile(A, a, axis=0)
        hi = np.quantile(A, 1 - a, axis=0)
        t = true_params.flat
        cp = 100.0 * float(np.mean((lo <= t) & (t <= hi)))
    return GraphMetrics(recall=recall, precision=precision, accuracy=accuracy, cp_phi=cp)


# ---------------------------------------------------------------------- I/O

def write_edge_csv(path, report: EdgeDecisionReport, labels=None) -> None:
    """Edge list rows (j, k, strength, decision), 1-indexed or labeled."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["j", "k", "strength", "decision"])
        for e, (j, k) in enumerate(report.pairs):
            a = labels[j] if labels else j + 1
            b = labels[k] if labels else k + 1
            w.writerow([a, b, f"{report.strengths[e]:.6f}", int(report.decisions[e])])


def write_dot(path, report: EdgeDecisionReport, labels=None) -> None:
    """Undirected DOT graph of the detected edges."""
    lines = ["graph torus {"]
    for j in range(report.d):
        name = labels[j] if labels else str(j + 1)
        lines.append(f'  "{name}";')
    for e, (j, k) in enumerate(report.pairs):
        if report.decisions[e]:
            a = labels[j] if labels else str(j + 1)
            b = labels[k] if labels else str(k + 1)
            lines.append(f'  "{a}" -- "{b}" [weight={report.strengths[e]:.4f}];')
    lines.append("}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_interval_csv(path, draws, report: EdgeDecisionReport,
                       level: float = 0.5, labels=None) -> None:
    """Posterior medians and equal-tailed intervals for every component of
    the selected edges (four rows per edge)."""
    A = _coef_draws(draws)
    eb = _edge_block(A)
    a = 0.5 * (1 - level)
    lo = np.quantile(eb, a, axis=0)
    hi = np.quantile(eb, 1 - a, axis=0)
    med = np.median(eb, axis=0)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["j", "k", "component", "median", "lo", "hi"])
        for e, (j, k) in enumerate(report.pairs):
            if not report.decisions[e]:
                continue
            a_lab = labels[j] if labels else j + 1
            b_lab = labels[k] if labels else k + 1
            for c in range(4):
                w.writerow(
                    [a_lab, b_lab, c + 1, f"{med[e, c]:.6f}",
                     f"{lo[e, c]:.6f}", f"{hi[e, c]:.6f}"]
                )


def save_phase_csv(path, X: np.ndarray, channels=None) -> None:
    """n x d angle matrix in radians; channel names go to a JSON sidecar."""
    X = np.atleast_2d(np.asarray(X, float))
    np.savetxt(path, X, delimiter=",", fmt="%.8f")
    if channels is not None:
        sidecar = Path(path).with_suffix(".json")
        sidecar.write_text(json.dumps({"channels": list(channels)}, indent=2))


def load_phase_csv(path) -> tuple[np.ndarray, list[str] | None]:
    """Phase matrix plus channel names from the optional JSON sidecar."""
    X = np.atleast_2d(np.loadtxt(path, delimiter=","))
    sidecar = Path(path).with_suffix(".json")
    channels = None
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
        channels = list(meta.get("channels", [])) or None
        if channels is not None and len(channels) != X.shape[1]:
            raise ValueError("sidecar channel count disagrees with the CSV")
    return X, channels
