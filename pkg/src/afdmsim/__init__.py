"""Chirp-multicarrier link simulation over multi-scale multi-lag channels.

The package covers the full pipeline: DAFT-based (de)modulation with
waveform presets, per-path channel operators with Doppler time scaling,
transform-domain response analysis (path positions, overlap probability,
diversity and coherence metrics), three channel estimators and a
reproducible Monte-Carlo link harness with CSV/figure reporting.
"""

__version__ = "0.1.0"

from .transforms import (
    WaveformParams,
    build_daft_matrix,
    chirp_diagonal,
    demodulate,
    modulate,
    preset_params,
    strip_prefix,
)
from .channel import (
    ChannelConfig,
    Path,
    apply_channel,
    build_path_matrix,
    carrier_for_doppler_order,
    doppler_from_dfs,
    path_from_grid,
    sample_random_channel,
    unit_path_matrix,
)
from .cfr import (
    CfrMatrix,
    compute_path_cfr,
    compute_total_cfr,
    cop_enumerate,
    cop_estimate,
    loc_index,
    off_loc_mass,
    unit_path_cfr,
)
from .metrics import (
    DiversityResult,
    ErrorMeasure,
    diversity_study,
    error_measure,
    mip,
    pep_upper_bound,
    sample_error_vector,
    signal_copy_matrix,
)
from .estimators import (
    DEFAULT_PILOT_SEED,
    AmbiguityError,
    Dictionary,
    EstimationResult,
    IndexMatrices,
    PilotSpec,
    RecoveredPath,
    build_dictionary,
    build_index_matrices,
    dictionary_for_grid,
    ece_estimate,
    imi_estimate,
    load_dictionary_csv,
    omp_estimate,
    save_dictionary_csv,
)
from .linksim import (
    ExperimentConfig,
    ExperimentResult,
    demap_symbols,
    map_symbols,
    mmse_equalize,
    nmse,
    run_experiment,
)
from .config import ConfigError, MetricsOptions, load_config, parse_config

__all__ = [name for name in dir() if not name.startswith("_")]
