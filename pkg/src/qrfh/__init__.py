"""Massive-MIMO uplink fronthaul compression and link-level simulation.

A pivoted-QR low-rank codec for per-user frequency-domain receive matrices,
a bit-matched truncated-SVD baseline, the closed-form compression-ratio
budget, and a Monte-Carlo BER harness tying them together.
"""

from ._kernels import BACKEND, HAVE_NUMBA
from .channel import (ChannelRealization, NoiseSpec, TdlProfile, apply_channel,
                      awgn_profile, desk_profile, distinct_sample_delays,
                      exp_correlation_sqrt, freq_response, generate_channel,
                      load_profile, named_profile, tdla30_profile)
from .codec import (CompressedPayload, CrReport, QuantizerSpec, UserRecord,
                    compress_qr, compress_svd_baseline, compression_ratio,
                    decompress, dequantize, payload_report, quantize)
from .config import SimConfig, allocate_rbs_paper, full_scale, parse_config
from .errors import (ConfigError, ConvergenceError, InfeasibleBudgetError,
                     InvalidInputError, PayloadFormatError, QrfhError,
                     RankDeficiencyError)
from .harness import (benchmark_compressors, benchmark_kernels,
                      denoising_report, equalize_zf, run_sweep, run_trial,
                      wilson_interval)
from .linalg import (QrFactors, SvdFactors, column_norms, frobenius_error,
                     pivoted_qr_approx, qr_reconstruct, svd_reconstruct,
                     truncated_svd)
from .ofdm import (OfdmGrid, UserAllocation, demap_subcarriers, map_subcarriers,
                   ofdm_demodulate, ofdm_modulate, qam_demodulate, qam_modulate)

__version__ = "0.1.0"
