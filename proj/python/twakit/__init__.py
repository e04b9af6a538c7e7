"""Synthetic alternans ECG toolkit.

Thin Python surface over the C++ core: beat-template fitting, ECG synthesis
with controllable T-wave alternans, noise mixing, detection, and evaluation.
"""

from ._twakit import (
    AverageBeat,
    DataError,
    DatasetConfig,
    EcgRecord,
    FitResult,
    GaussianKernel,
    LeadTemplate,
    Metrics,
    MorphologyTemplate,
    RhythmConfig,
    RocPoint,
    SynthesisConfig,
    TwaMeasurement,
    analyze_record,
    apply_twa,
    bin_features,
    builtin_templates,
    chi2_independence,
    compute_average_beat,
    derive_seed,
    detect_qrs,
    dower_transform,
    evaluate_lead,
    feature_names,
    fit_template,
    generate_dataset,
    generate_tachogram,
    load_dataset_config,
    load_record,
    measure_qt,
    measure_snr_db,
    mix_noise,
    mma_twa,
    phase_grid,
    qtc_bazett,
    rate_adapted,
    remove_baseline,
    render_record,
    roc_metrics,
    sliding_twa,
    sqi,
    validate_qtc,
)

__all__ = [
    "AverageBeat",
    "DataError",
    "DatasetConfig",
    "EcgRecord",
    "FitResult",
    "GaussianKernel",
    "LeadTemplate",
    "Metrics",
    "MorphologyTemplate",
    "RhythmConfig",
    "RocPoint",
    "SynthesisConfig",
    "TwaMeasurement",
    "analyze_record",
    "apply_twa",
    "bin_features",
    "builtin_templates",
    "chi2_independence",
    "compute_average_beat",
    "derive_seed",
    "detect_qrs",
    "dower_transform",
    "evaluate_lead",
    "feature_names",
    "fit_template",
    "generate_dataset",
    "generate_tachogram",
    "load_dataset_config",
    "load_record",
    "measure_qt",
    "measure_snr_db",
    "mix_noise",
    "mma_twa",
    "phase_grid",
    "qtc_bazett",
    "rate_adapted",
    "remove_baseline",
    "render_record",
    "roc_metrics",
    "sliding_twa",
    "sqi",
    "validate_qtc",
]

__version__ = "0.1.0"
