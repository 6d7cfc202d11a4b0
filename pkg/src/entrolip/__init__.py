"""Entropic optimal transport between log-concave measures with Lipschitz-bound verification."""

__version__ = "0.1.0"

from .bounds import (
    CommutingBoundReport,
    PointwiseInequalityReport,
    SpectralBoundReport,
    commuting_bound,
    lower_bound,
    upper_bound,
    verify_commuting_bound,
    verify_hessian_bounds,
    verify_pointwise_inequalities,
)
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .cov_inequalities import (
    PsdMarginReport,
    brascamp_lieb_check,
    covariance_of,
    cramer_rao_check,
    score_identity_residual,
)
from .entropic_maps import (
    ConditionalLaw,
    Side,
    conditional_law,
    conditional_logdensity_hessian,
    entropic_hessian,
    entropic_map,
    entropic_potential,
    hessians_at,
)
from .estimator import EntropicBrenierMap
from .experiments import convergence_study, run_experiment
from .gaussian_oracle import entropic_gaussian_hessian, gelbrich_hessian, quantile_map_1d, sqrtm_spd
from .measures import (
    CertificationError,
    DiscreteMeasure,
    Potential,
    certify_bounds,
    convolved_hessian,
    discretize,
    make_gaussian_potential,
    make_perturbed_potential,
    make_quartic_potential,
    make_separable_perturbed_potential,
)
from .sinkhorn import (
    DualPotentials,
    SinkhornNonConvergence,
    dual_objective,
    plan_weight,
    primal_objective,
    solve,
)
