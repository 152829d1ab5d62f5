"""Superradiant emission from NV-centre ensembles in nanodiamonds.

Dicke-ladder rate model with local dephasing and intersystem crossing,
ensemble averaging over collective domains, photon statistics, decay-curve
fitting and an exact small-N reference engine.
"""
from .coherence import (
    G2Curve,
    ensemble_g2_time_integrated,
    g2_delayed,
    g2_time_integrated,
    g2_zero_allup,
    g2_zero_ensemble,
    g2_zero_from_state,
    g2_zero_gaussian,
    g2_zero_mixed,
)
from .ensemble import (
    DomainEnsemble,
    DomainSets,
    GaussianDomainSpec,
    domain_ensemble,
    ensemble_from_gaussian,
    ensemble_from_sets,
    ensemble_observables,
    total_fluorescence,
)
from .errors import CapabilityError, DomainError, FitError, NumericalError, SuperradError, ValidationError
from .fitting import (
    DecayTrace,
    FitConfig,
    FitResult,
    Loss,
    ModelComparison,
    compare_models,
    fit_biexponential,
    fit_deformed_exponential,
    fit_superradiant,
    lifetime_1e,
    simulate_trace,
    tail_fit_gamma,
    uniform_edges,
)
from .io import emit_results, ingest_decay_csv, scatter_analysis, write_decay_csv
from .ladder import (
    ALL_UP,
    MIXED,
    InitialKind,
    InitialStateSpec,
    LadderIndex,
    LadderState,
    RateParams,
    build_index,
    build_rate_matrix,
    collective_rate,
    initial_state,
)
from .physics import DipoleGeometry, dipole_dipole_strength, isc_lifetime_ratio, mean_separation
from .propagate import IrfSpec, TimeGrid, evolve, fluorescence, fluorescence_series, observe
from .samples import REFERENCE_SAMPLES, reference_sample

__version__ = "0.1.0"
