"""Compressive averaged-periodogram estimation from multi-coset samples."""

from .analysis import (
    DetectorSpec,
    RocCurve,
    VarianceReport,
    analytical_gaussian_covariance,
    mc_caps,
    nmse,
    nyquist_ap,
    propagate_variance,
    roc_harness,
    whitenoise_variance_closed_form,
)
from .estimator import (
    CAP_CB,
    CAP_UB,
    NAP,
    CosetCorrelationVector,
    CovarianceStack,
    IdentifiabilityError,
    Periodogram,
    assemble_cap,
    estimate_correlated_bins,
    estimate_multicluster,
    ls_reconstruct_rbar,
    reconstruct_cap,
    sample_covariance,
)
from .patterns import (
    CosetPattern,
    ModularDifferenceSet,
    PatternFamily,
    RulerSearchResult,
    design_pair_cover_family,
    exhaustive_minimal_ruler,
    is_circular_sparse_ruler,
    minimal_circular_sparse_ruler,
    modular_difference_set,
    verify_pair_coverage,
)
from .sensing import (
    CosetObservationSet,
    ScenarioConfig,
    SensingRun,
    UserSpec,
    coset_dtft,
    dbm_to_linear,
    extract_coset_observations,
    generate_user_signal,
    linear_density,
    synthesize_observations,
)
from .structure import (
    ModulationMatrix,
    PsiMatrix,
    RepetitionMatrix,
    SystemMatrixRc,
    build_modulation_matrix,
    build_psi,
    build_repetition_matrix,
    build_system_matrix,
    check_identifiability,
)

__version__ = "0.1.0"
