"""Filter-function noise spectroscopy workbench.

Sequence descriptions, analytic and numeric filter functions, a forward
dephasing model with an independent Monte Carlo oracle, spectrum
reconstruction, parameter fits, and file/CLI plumbing.
"""

from .errors import CoverageError, NumericError, ValidationError
from .sequences import (
    BandwidthReport,
    Family,
    SensitivityTrace,
    SequenceSpec,
    bandwidth_report,
    build_trace,
)
from .filters import (
    FFSource,
    FilterFunction,
    PeakStats,
    cpmg_ff,
    default_cpmg_omegas,
    default_continuous_omegas,
    dysco_ff,
    numeric_ff,
    peak_stats,
)
from .noise import (
    ComponentKind,
    NoiseSpectrum,
    SpectralComponent,
    composite,
    default_experiment_spectrum,
    gaussian_peak,
    lorentzian_dc,
    tabulated,
)
from .forward import (
    AbscissaKind,
    CoherenceCurve,
    Provenance,
    Sampling,
    add_measurement_noise,
    chi,
    chi_detailed,
    synth_cpmg_family,
    synth_dysco_sweep,
)
from .oracle import McConfig, McResult, mc_coherence
from .reconstruct import (
    FLAG_CLIPPED,
    FLAG_OK,
    CpmgFilterProvider,
    DynamicRange,
    Method,
    ReconstructedSpectrum,
    cpmg_sd,
    direct_extract,
    dynamic_range,
    plateau_contrast,
)
from .fitting import (
    FitResult,
    fit_envelope,
    fit_gaussian_peak,
    fit_noise_params,
    fit_revival_comb,
)
from .fileio import (
    CurveSchema,
    config_digest,
    ingest_curve,
    read_curve,
    read_spectrum_csv,
    spectrum_model_from_dict,
    spectrum_model_to_dict,
    write_curve,
    write_ff_csv,
    write_manifest,
    write_reconstruction,
    write_trace_csv,
)
from .study import (
    MethodPeak,
    PeakStudyResult,
    SdStudyResult,
    peak_study,
    peak_study_curves,
    sd_study,
    sd_time_grids,
)

__version__ = "0.1.0"

__all__ = [
    "AbscissaKind",
    "BandwidthReport",
    "CoherenceCurve",
    "ComponentKind",
    "CoverageError",
    "CpmgFilterProvider",
    "CurveSchema",
    "config_digest",
    "DynamicRange",
    "FFSource",
    "FLAG_CLIPPED",
    "FLAG_OK",
    "Family",
    "FilterFunction",
    "FitResult",
    "McConfig",
    "McResult",
    "Method",
    "MethodPeak",
    "NoiseSpectrum",
    "NumericError",
    "PeakStats",
    "PeakStudyResult",
    "Provenance",
    "ReconstructedSpectrum",
    "Sampling",
    "SdStudyResult",
    "SensitivityTrace",
    "SequenceSpec",
    "SpectralComponent",
    "ValidationError",
    "add_measurement_noise",
    "bandwidth_report",
    "build_trace",
    "chi",
    "chi_detailed",
    "composite",
    "cpmg_ff",
    "cpmg_sd",
    "default_continuous_omegas",
    "default_cpmg_omegas",
    "default_experiment_spectrum",
    "direct_extract",
    "dynamic_range",
    "plateau_contrast",
    "dysco_ff",
    "fit_envelope",
    "fit_gaussian_peak",
    "fit_noise_params",
    "fit_revival_comb",
    "gaussian_peak",
    "ingest_curve",
    "lorentzian_dc",
    "mc_coherence",
    "numeric_ff",
    "peak_stats",
    "peak_study",
    "peak_study_curves",
    "read_curve",
    "read_spectrum_csv",
    "spectrum_model_from_dict",
    "spectrum_model_to_dict",
    "sd_study",
    "sd_time_grids",
    "synth_cpmg_family",
    "synth_dysco_sweep",
    "tabulated",
    "write_curve",
    "write_ff_csv",
    "write_manifest",
    "write_reconstruction",
    "write_trace_csv",
]
