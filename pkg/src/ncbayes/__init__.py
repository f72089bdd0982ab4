"""Noise-contrastive Bayesian inference for unnormalized models.

The classification trick turns an intractable normalizer into a logistic
regression intercept; Polya-Gamma augmentation then gives closed-form
Gibbs updates.  Submodules: ``pg`` (the augmentation sampler), ``expfam``
(models and the classification likelihood), ``noise`` (noise refresh and
tempered adaptation), ``gibbs`` (the samplers), ``shrinkage`` (horseshoe
variants), ``tvdensity`` and ``torus`` (the two applications), ``hscore``
(a score-matching generalized posterior for comparison), ``experiments``
(table reproduction), and ``cli``.
"""
from .errors import NumericalError
from .expfam import ExpFamModel, Rectangle, Torus
from .experiments import TABLE_IDS, ExperimentPlan, reproduce
from .gibbs import (
    GaussianPrior,
    GibbsConfig,
    PosteriorDraws,
    run_adaptive_noise,
    run_fixed_noise,
    run_hierarchical,
    run_refreshed_noise,
)
from .hscore import HBayesConfig, run_hbayes
from .manifest import RunManifest, read_draws_csv, write_draws_csv
from .noise import NoiseAdaptConfig, NoiseSpec
from .pg import pg1_density, pg1_mean, pg1_var, sample_pg1, sample_pg1_batch
from .rng import RandomStream, as_generator, spawn_seeds
from .shrinkage import SCALE_LIMS, CoefLayout, ShrinkagePrior, init_horseshoe
from .torus import (
    TorusGraphParams,
    detect_edges_ci,
    detect_edges_median,
    fit_torus_ncbayes,
    generate_vm_chain,
    graph_metrics,
)
from .tvdensity import TVModelSpec, TVNoise, run_tv_gibbs

__version__ = "0.1.0"

__all__ = [
    "NumericalError",
    "ExpFamModel",
    "Rectangle",
    "Torus",
    "TABLE_IDS",
    "ExperimentPlan",
    "reproduce",
    "GaussianPrior",
    "GibbsConfig",
    "PosteriorDraws",
    "run_adaptive_noise",
    "run_fixed_noise",
    "run_hierarchical",
    "run_refreshed_noise",
    "HBayesConfig",
    "run_hbayes",
    "RunManifest",
    "read_draws_csv",
    "write_draws_csv",
    "NoiseAdaptConfig",
    "NoiseSpec",
    "pg1_density",
    "pg1_mean",
    "pg1_var",
    "sample_pg1",
    "sample_pg1_batch",
    "RandomStream",
    "as_generator",
    "spawn_seeds",
    "SCALE_LIMS",
    "CoefLayout",
    "ShrinkagePrior",
    "init_horseshoe",
    "TorusGraphParams",
    "detect_edges_ci",
    "detect_edges_median",
    "fit_torus_ncbayes",
    "generate_vm_chain",
    "graph_metrics",
    "TVModelSpec",
    "TVNoise",
    "run_tv_gibbs",
    "__version__",
]
