"""Contraction rates for kinetic Langevin dynamics via reflection/synchronous coupling.

Constant pipelines (drift, geometry, rate, concave metric), a coupled
Euler-Maruyama simulator with numba and numpy backends, and ensemble audits.
"""
from .bundle import ModelBundle, build_bundle
from .coupling import (
    CoupledState,
    CouplingControls,
    NoiseIncrement,
    PairTrajectory,
    coupled_step,
    draw_noise,
    evaluate_K,
    k_inequality_check,
    rc_sc,
    simulate_pair,
)
from .drift import (
    DriftConstants,
    generator_apply_H,
    lyapunov_H,
    simplified_to_general,
    verify_lyapunov_drift,
)
from .errors import (
    BlowUpError,
    ConfigurationError,
    DimensionError,
    EnvelopeError,
    FitDomainError,
    InadmissibleRateError,
    InconsistentParametersError,
    KineticCouplerError,
    NumericError,
    OutOfRegimeError,
)
from .mc import (
    DecaySeries,
    EnsembleConfig,
    contraction_audit,
    fit_decay_rate,
    run_ensemble,
    scaling_scan,
)
from .metric import (
    CouplingGeometry,
    MetricTable,
    RateConstants,
    build_metric_table,
    check_rate_admissible,
    closed_form_rate,
    corollary_rate,
    gaussian_spectral_gap,
    make_rate_constants,
    optimize_rate,
    rho_semimetric,
    solve_geometry,
    wasserstein2_constant,
)
from .model import (
    ModelParams,
    PhaseState,
    Potential,
    PotentialSpec,
    check_assumptions,
    make_potential,
    potential_eval,
    sample_stationary,
)

__version__ = "0.1.0"
