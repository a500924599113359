"""Link-level Monte-Carlo simulator for fluid-antenna multiple access."""

from famasim.fas_channel import (
    ChannelDrop,
    CorrelationModel,
    FasGeometry,
    build_correlation,
    sample_channel_row,
    sample_drop,
)
from famasim.harness import (
    ExperimentConfig,
    SerRecord,
    export_dataset,
    run_experiment,
    run_sweep,
    wilson_interval,
)
from famasim.phy_signal import (
    PortObservations,
    SymbolBlock,
    average_snr,
    constellation,
    demodulate_qpsk,
    instantaneous_sinr,
    modulate_qpsk,
    receive,
)
from famasim.port_select import (
    SelectionConfig,
    Shortlist,
    candidate_set,
    deviation_probability,
    deviation_probability_bound,
    fixed_spacing_select,
    normalized_deviation,
    predicted_desired_power,
    sdm_select,
    shortlist,
)
from famasim.schemes import (
    AllPortMrc,
    FastFamaOracle,
    ReceiverScheme,
    TurboFrontEnd,
    detect_qpsk,
    fast_fama_select,
    mrc_combine,
    run_symbol,
)

__version__ = "0.1.0"

__all__ = [
    "AllPortMrc",
    "ChannelDrop",
    "CorrelationModel",
    "ExperimentConfig",
    "FasGeometry",
    "FastFamaOracle",
    "PortObservations",
    "ReceiverScheme",
    "SelectionConfig",
    "SerRecord",
    "Shortlist",
    "SymbolBlock",
    "TurboFrontEnd",
    "average_snr",
    "build_correlation",
    "candidate_set",
    "constellation",
    "demodulate_qpsk",
    "detect_qpsk",
    "deviation_probability",
    "deviation_probability_bound",
    "export_dataset",
    "fast_fama_select",
    "fixed_spacing_select",
    "instantaneous_sinr",
    "modulate_qpsk",
    "mrc_combine",
    "normalized_deviation",
    "predicted_desired_power",
    "receive",
    "run_experiment",
    "run_symbol",
    "run_sweep",
    "sample_channel_row",
    "sample_drop",
    "sdm_select",
    "shortlist",
    "wilson_interval",
]
