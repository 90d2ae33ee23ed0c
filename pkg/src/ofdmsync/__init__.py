"""OFDM baseband simulator: CFO estimators and tracking loops."""

from .config import FrameConfig, PilotLayout, clustered_layout, conventional_layout
from .channel import (
    ChannelRealization,
    CfoSpec,
    apply_cfo,
    apply_channel,
    awgn,
    ebn0_to_noise_var,
    equalize,
    ici_coefficient,
    rayleigh_realize,
    snr_loss_cfo,
    snr_loss_cp,
)
from .modem import (
    add_cp,
    build_frame,
    demap_symbols,
    dft,
    idft,
    map_bits,
    papr,
    remove_cp,
)
from .loops import (
    DualBwConfig,
    LoopGains,
    LoopState,
    acquisition_time_pred,
    dual_bw_step,
    lock_detect,
    noise_bandwidth,
    transfer_eval,
    type1_step,
    type2_gains,
    type2_step,
)
from .harness import (
    BerPoint,
    ChannelSpec,
    ExperimentSpec,
    ber_awgn_theory,
    ber_rayleigh_theory,
    capture_constellation,
    measure_acquisition,
    run_ber_point,
    run_ber_sweep,
)

__version__ = "0.1.0"
