"""Quantum non-Gaussianity witnessing from multichannel click statistics.

The package decides whether measured photon-coincidence statistics certify
quantum non-Gaussian light: it computes the exact Gaussian-mixture threshold
curves and their analytic approximations, verifies them by Monte-Carlo
sampling, evaluates measured counts with Bayesian uncertainty, and models
the loss robustness of merged heralded-photon sources.
"""

from ._util import PACKAGE_VERSION as __version__
from .errors import (
    DomainError,
    PrecisionError,
    QngError,
    SolverError,
    ThresholdRangeError,
    TruncationError,
    UnsupportedParameterError,
)
from .gaussian import (
    GaussianModeParams,
    MultimodeGaussianState,
    PhotonDistribution,
    coherent_limit_photodistribution,
    coherent_mean_photons,
    gaussian_photodistribution,
    vacuum_probability,
    vacuum_probability_multimode,
)
from .detector import (
    ClickPair,
    DetectorConfig,
    attenuate,
    click_probabilities,
    click_probabilities_gaussian,
    merge,
    transfer_matrix_closed_form,
    transfer_matrix_element,
)
from .threshold import (
    CurvePoint,
    FunctionalVerdict,
    HermiteAnchor,
    ThresholdCurve,
    default_curve,
    default_grid,
    dual_witness_parameter,
    functional_check,
    hermite_anchor,
    hermite_eval,
    threshold_closed_form,
    threshold_exact,
    threshold_param_approx,
    threshold_point,
)
from .montecarlo import McReport, boundary_probe, verify
from .witness import (
    CountRecord,
    IntervalEstimate,
    RateEstimates,
    Verdict,
    VerdictState,
    attenuation_path,
    bayes_interval,
    classify,
    estimate_rates,
    fock_single_criterion_transmittance,
    qng_depth,
    qng_depth_from_point,
)
from .sources import (
    ExperimentModel,
    HeraldedSourceModel,
    SuiteEntry,
    merged_state,
    reproduce_experiment_suite,
    simulate_counts,
)

__all__ = [name for name in dir() if not name.startswith("_")]
