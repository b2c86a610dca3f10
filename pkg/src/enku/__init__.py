"""Affine ensemble updates for likelihood-free Bayesian inversion.

The package builds the Ensemble Kalman Update and its square-root
alternatives from ensemble moments, samples structured joint laws with
known posteriors, and scores analysis ensembles with an exact discrete
2-Wasserstein solver.
"""

from .diagnostics import SymmetryReport, cov_rank_check, cyclic_symmetry_stat, translation_residual
from .ensemble import Ensemble, Moments, moments, moments_from_blocks, read_ensemble, write_ensemble
from .errors import (
    EnkuError,
    ExperimentError,
    InsufficientSamplesError,
    InvalidInputError,
    NotPSDError,
    ParseError,
    SolverError,
)
from .generators import (
    Gaussian,
    GaussianMixture,
    JointModel,
    Ring,
    Scalar1D,
    SdecSpec,
    sample,
    sample_joint,
    sample_posterior,
    sample_product_model,
    sample_random_mixture_params,
    sample_sdec_z,
)
from .harness import (
    ExperimentConfig,
    RunResult,
    emit,
    fit_convergence,
    load_preset,
    obsdep_map,
    run_experiment,
    sdec_alt_map,
)
from .updates import (
    AffineConditioningMap,
    AnalysisEnsemble,
    apply_map,
    eakf_svd_update,
    enku_map,
    etkf_transform,
    ld_map,
    lot_map,
)
from .wasserstein import PointCloud, W2Result, w2_exact

__version__ = "0.1.0"
