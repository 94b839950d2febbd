"""Delay-Doppler modulation lab: ODDM/OTFS channels, detectors and diversity bounds."""

from .channel import (
    ChannelPath,
    ChannelRealization,
    apply_channel,
    fixed_tap_channel,
    ntn_tdl_like,
    random_channel,
)
from .constellation import Constellation, DDFrame, FrameDims, bpsk, demap_hard, make_constellation, modulate_bits, qam
from .effective import (
    EffectiveChannel,
    build_effective_channel_oddm,
    build_effective_channel_otfs,
    build_phi,
    build_xi,
)
from . import analysis, detect, harness, waveform
from .analysis import bound_report, diversity_order, pair_spectrum, rank1_census, rank1_lower_bound
from .detect import detect_lmmse, detect_ml, detect_mpa, detect_oamp
from .harness import IterationConfig, PsdConfig, SimConfig, run_ber_sweep, run_iteration_study, run_psd_study
from .waveform import PulseConfig, estimate_psd, synthesize_oddm, synthesize_otfs

__version__ = "0.1.0"
