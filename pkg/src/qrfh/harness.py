"""Monte-Carlo link-level BER harness.

One trial = one CP-bearing uplink OFDM symbol: random bits per user -> QAM ->
subcarrier mapping -> OFDM -> correlated TDL channel + AWGN -> fronthaul
compression (pivoted QR, bit-matched SVD baseline, or none) -> per-subcarrier
zero-forcing combining with the exact channel response -> hard demap.

Per-trial randomness derives from (seed, snr_index, trial_index) only, so
trials are reproducible, independent of worker count, and paired across
compressor choices.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from math import log2, sqrt
from statistics import median

import numpy as np

from . import _kernels
from .channel import NoiseSpec, apply_channel, freq_response, generate_channel
from .codec import (CrReport, QuantizerSpec, compress_qr,
                    compress_svd_baseline, compression_ratio, decompress,
                    perm_index_width)
from .config import SimConfig
from .errors import InvalidInputError
from .ofdm import (demap_subcarriers, map_subcarriers, ofdm_demodulate,
                   ofdm_modulate, qam_demodulate, qam_modulate)

__all__ = [
    "CSV_COLUMNS",
    "equalize_zf",
    "wilson_interval",
    "run_trial",
    "denoising_report",
    "run_sweep",
    "write_csv",
    "sweep_bit_report",
    "benchmark_compressors",
    "benchmark_kernels",
]

CSV_COLUMNS = ("snr_db", "compressor", "l_u", "trials", "tx_bits",
               "bit_errors", "ber", "ber_ci_low", "ber_ci_high", "cr",
               "b_org", "b_cmp", "b_ovh", "median_compress_us")


def equalize_zf(y_u: np.ndarray, h_u: np.ndarray) -> np.ndarray:
    """Per-subcarrier zero-forcing combining for a single-stream user.

    ``s_hat[f] = h[f]^H y[f] / (h[f]^H h[f])`` for row f of the
    ``(n_f_u, n_r)`` inputs.  Raises if the channel energy of any subcarrier
    is exactly zero.
    """
    y_u = np.asarray(y_u, dtype=np.complex128)
    h_u = np.asarray(h_u, dtype=np.complex128)
    if y_u.shape != h_u.shape or y_u.ndim != 2:
        raise InvalidInputError(
            f"y_u {y_u.shape} and h_u {h_u.shape} must be matching 2-D matrices")
    den = np.einsum("fr,fr->f", h_u.conj(), h_u).real
    dead = np.flatnonzero(den == 0.0)
    if dead.size:
        raise InvalidInputError(f"zero channel energy at subcarrier {int(dead[0])}")
    num = np.einsum("fr,fr->f", h_u.conj(), y_u)
    return num / den


def wilson_interval(errors: int, total: int, z: float = 1.96):
    """Wilson score interval for a binomial proportion."""
    if total <= 0:
        return 0.0, 1.0
    p = errors / total
    z2 = z * z
    denom = 1.0 + z2 / total
    center = (p + z2 / (2 * total)) / denom
    half = z * sqrt(p * (1 - p) / total + z2 / (4 * total * total)) / denom
    return max(0.0, center - half), min(1.0, center + half)


# ---------------------------------------------------------------------------
# single trial
# ---------------------------------------------------------------------------

def _trial_streams(seed: int, snr_idx: int, trial_idx: int):
    ss = np.random.SeedSequence((seed, snr_idx, trial_idx))
    return tuple(np.random.default_rng(s) for s in ss.spawn(3))


def _user_gains(cfg: SimConfig) -> np.ndarray:
    """Per-user amplitude factors implementing the SNR offsets."""
    steps = np.arange(cfg.users) * cfg.snr_offset_db
    return 10.0 ** (steps / 20.0)


def _svd_params(cfg: SimConfig):
    """(rank k, matched bit budget) for the SVD baseline."""
    symbol_len = cfg.n_fft + cfg.cp_len
    l_value = cfg.resolved_l_u()
    report = compression_ratio(
        symbol_len, cfg.n_r, 2 * cfg.quantizer_bits,
        [(a.n_subcarriers, l_value) for a in cfg.allocations()])
    k = min(cfg.channel_rank() * cfg.users, cfg.n_r, symbol_len)
    return k, report.b_cmp + report.b_ovh


def run_trial(cfg: SimConfig, snr_db: float, snr_idx: int = 0,
              trial_idx: int = 0):
    """Run one OFDM symbol end to end.

    Returns ``(bit_errors, tx_bits, compress_seconds)``.  ``snr_db = inf``
    gives a noiseless trial.
    """
    grid = cfg.grid()
    allocs = cfg.allocations()
    profile = cfg.profile()
    bps = int(log2(cfg.modulation_order))
    gains = _user_gains(cfg)
    bits_rng, chan_rng, noise_rng = _trial_streams(cfg.seed, snr_idx, trial_idx)

    tx_bits = {}
    x = np.empty((cfg.users, grid.symbol_len), dtype=np.complex128)
    for u, alloc in enumerate(allocs):
        bits = bits_rng.integers(0, 2, size=alloc.n_subcarriers * bps, dtype=np.int8)
        tx_bits[alloc.user_id] = bits
        syms = qam_modulate(bits, cfg.modulation_order)
        x[u] = gains[u] * ofdm_modulate(map_subcarriers([syms], [alloc], grid))

    ch = generate_channel(profile, cfg.users, cfg.n_r, cfg.rho,
                          cfg.sample_rate_hz, chan_rng)
    sigma2 = 0.0 if np.isinf(snr_db) else 10.0 ** (-snr_db / 10.0)
    noise = NoiseSpec(sigma2) if sigma2 > 0 else None
    y = apply_channel(x, ch, cfg.cp_len, noise, noise_rng)

    quant = QuantizerSpec(cfg.quantizer_bits)
    compress_seconds = 0.0
    if cfg.compressor == "qr":
        t0 = time.perf_counter()
        payload = compress_qr(y, allocs, cfg.resolved_l_u(), quant, grid)
        compress_seconds = time.perf_counter() - t0
        y_users = decompress(payload)
    elif cfg.compressor == "svd-baseline":
        k, target_bits = _svd_params(cfg)
        t0 = time.perf_counter()
        payload = compress_svd_baseline(y, k, target_bits, grid)
        compress_seconds = time.perf_counter() - t0
        y_hat = decompress(payload)[0]
        yf = ofdm_demodulate(y_hat, grid)
        y_users = {a.user_id: demap_subcarriers(yf, a, grid) for a in allocs}
    else:
        yf = ofdm_demodulate(y, grid)
        y_users = {a.user_id: demap_subcarriers(yf, a, grid) for a in allocs}

    bit_errors = 0
    total_bits = 0
    for u, alloc in enumerate(allocs):
        bins = grid.bin_index(alloc.subcarriers)
        h_u = gains[u] * freq_response(ch, bins, grid.n_fft)[:, :, u]
        s_hat = equalize_zf(y_users[alloc.user_id], h_u)
        rx = qam_demodulate(s_hat, cfg.modulation_order)
        bit_errors += int(np.count_nonzero(rx != tx_bits[alloc.user_id]))
        total_bits += rx.size
    return bit_errors, total_bits, compress_seconds


def _trial_task(args):
    cfg, snr_db, snr_idx, trial_idx = args
    return snr_idx, run_trial(cfg, snr_db, snr_idx, trial_idx)


def denoising_report(cfg: SimConfig, snr_db: float, trials: int,
                     snr_idx: int = 0) -> dict:
    """Reconstruction-error statistics of the pivoted-QR path.

    Runs `trials` paired trials at one SNR and accumulates, per user matrix,
    the squared Frobenius error of the compressed reconstruction against the
    clean (noise-free) receive matrix, next to the raw noise energy.  Also
    counts paired-seed bit errors with and without compression.  Returns a
    dict with ``ratio`` (E||Yhat - S||^2 / E||Y - S||^2), ``ber_qr`` and
    ``ber_none``.
    """
    grid = cfg.grid()
    allocs = cfg.allocations()
    bps = int(log2(cfg.modulation_order))
    gains = _user_gains(cfg)
    quant = QuantizerSpec(cfg.quantizer_bits)
    sigma2 = 10.0 ** (-snr_db / 10.0)

    err_energy = noise_energy = 0.0
    errs = {"qr": 0, "none": 0}
    total = 0
    for trial_idx in range(trials):
        bits_rng, chan_rng, noise_rng = _trial_streams(cfg.seed, snr_idx, trial_idx)
        tx_bits = {}
        x = np.empty((cfg.users, grid.symbol_len), dtype=np.complex128)
        for u, alloc in enumerate(allocs):
            bits = bits_rng.integers(0, 2, size=alloc.n_subcarriers * bps,
                                     dtype=np.int8)
            tx_bits[alloc.user_id] = bits
            syms = qam_modulate(bits, cfg.modulation_order)
            x[u] = gains[u] * ofdm_modulate(map_subcarriers([syms], [alloc], grid))
        ch = generate_channel(cfg.profile(), cfg.users, cfg.n_r, cfg.rho,
                              cfg.sample_rate_hz, chan_rng)
        clean = apply_channel(x, ch, cfg.cp_len, None, None)
        y = apply_channel(x, ch, cfg.cp_len, NoiseSpec(sigma2), noise_rng)
        sf = ofdm_demodulate(clean, grid)
        yf = ofdm_demodulate(y, grid)
        recon = decompress(compress_qr(y, allocs, cfg.resolved_l_u(), quant, grid))
        for u, alloc in enumerate(allocs):
            s_u = demap_subcarriers(sf, alloc, grid)
            y_u = demap_subcarriers(yf, alloc, grid)
            err_energy += float(np.sum(np.abs(recon[alloc.user_id] - s_u) ** 2))
            noise_energy += float(np.sum(np.abs(y_u - s_u) ** 2))
            bins = grid.bin_index(alloc.subcarriers)
            h_u = gains[u] * freq_response(ch, bins, grid.n_fft)[:, :, u]
            for key, mat in (("qr", recon[alloc.user_id]), ("none", y_u)):
                rx = qam_demodulate(equalize_zf(mat, h_u), cfg.modulation_order)
                errs[key] += int(np.count_nonzero(rx != tx_bits[alloc.user_id]))
            total += alloc.n_subcarriers * bps
    return {"ratio": err_energy / noise_energy,
            "ber_qr": errs["qr"] / total,
            "ber_none": errs["none"] / total}


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def sweep_bit_report(cfg: SimConfig) -> CrReport:
    """Bit accounting of the configured compressor (one OFDM symbol)."""
    symbol_len = cfg.n_fft + cfg.cp_len
    b_ref = 2 * cfg.quantizer_bits
    b_org = symbol_len * cfg.n_r * b_ref
    if cfg.compressor == "qr":
        l_value = cfg.resolved_l_u()
        return compression_ratio(symbol_len, cfg.n_r, b_ref,
                                 [(a.n_subcarriers, l_value) for a in cfg.allocations()])
    if cfg.compressor == "svd-baseline":
        k, target_bits = _svd_params(cfg)
        b = min(target_bits // (2 * k * (symbol_len + cfg.n_r)), 16)
        return CrReport(b_org=b_org,
                        b_cmp=k * (symbol_len + cfg.n_r) * 2 * b,
                        b_ovh=cfg.n_r * perm_index_width(cfg.n_r))
    return CrReport(b_org=b_org, b_cmp=b_org, b_ovh=0)


def run_sweep(cfg: SimConfig, out_path=None, parallel: int = 1):
    """Monte-Carlo BER sweep over the configured SNR grid.

    Returns one row dict per SNR point (see ``CSV_COLUMNS``); writes them as
    CSV when ``out_path`` is given.  ``parallel`` distributes trials over
    worker processes without changing any result except wall-clock timing.
    """
    report = sweep_bit_report(cfg)
    l_value = cfg.resolved_l_u()
    tasks = [(cfg, snr, i, t) for i, snr in enumerate(cfg.snr_db)
             for t in range(cfg.trials)]
    per_point = {i: [] for i in range(len(cfg.snr_db))}
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            for snr_idx, stats in pool.map(_trial_task, tasks, chunksize=8):
                per_point[snr_idx].append(stats)
    else:
        for args in tasks:
            snr_idx, stats = _trial_task(args)
            per_point[snr_idx].append(stats)

    rows = []
    for i, snr in enumerate(cfg.snr_db):
        stats = per_point[i]
        errors = sum(s[0] for s in stats)
        bits = sum(s[1] for s in stats)
        ber = errors / bits if bits else 0.0
        lo, hi = wilson_interval(errors, bits)
        med_us = median(s[2] for s in stats) * 1e6 if cfg.compressor != "none" else 0.0
        rows.append({
            "snr_db": snr, "compressor": cfg.compressor, "l_u": l_value,
            "trials": cfg.trials, "tx_bits": bits, "bit_errors": errors,
            "ber": ber, "ber_ci_low": lo, "ber_ci_high": hi,
            "cr": report.cr, "b_org": report.b_org, "b_cmp": report.b_cmp,
            "b_ovh": report.b_ovh, "median_compress_us": med_us,
        })
    if out_path is not None:
        write_csv(rows, out_path, metadata=_csv_metadata(cfg))
    return rows


def _csv_metadata(cfg: SimConfig) -> dict:
    return {
        "n_fft": cfg.n_fft, "cp_len": cfg.cp_len, "n_active": cfg.n_active,
        "center_offset": cfg.center_offset, "n_r": cfg.n_r,
        "profile": cfg.channel_profile, "rho": cfg.rho,
        "modulation_order": cfg.modulation_order,
        "rb_allocation": ",".join(str(r) for r in cfg.rb_allocation),
        "snr_offset_db": cfg.snr_offset_db, "quantizer_bits": cfg.quantizer_bits,
        "seed": cfg.seed, "backend": _kernels.BACKEND,
    }


def _fmt(key: str, value) -> str:
    if key in ("ber", "ber_ci_low", "ber_ci_high"):
        return f"{value:.10g}"
    if key == "cr":
        return f"{value:.8g}"
    if key == "median_compress_us":
        return f"{value:.3f}"
    if key == "snr_db":
        return f"{value:g}"
    return str(value)


def write_csv(rows, path, metadata: dict | None = None):
    """Write sweep rows with ``# key=value`` metadata comment lines on top."""
    lines = []
    for key, value in (metadata or {}).items():
        lines.append(f"# {key}={value}")
    lines.append(",".join(CSV_COLUMNS))
    for row in rows:
        lines.append(",".join(_fmt(col, row[col]) for col in CSV_COLUMNS))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# benchmarks
# ---------------------------------------------------------------------------

def _median_seconds(fn, repeats: int) -> float:
    fn()  # warm-up (JIT compilation, caches)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return median(times)


def benchmark_compressors(cfg: SimConfig, repeats: int = 10, l_values=None):
    """Median wall-clock per compression call, QR vs full truncated SVD.

    One representative noisy receive matrix is generated at the configured
    scale and compressed repeatedly.
    """
    from .linalg import truncated_svd

    grid = cfg.grid()
    allocs = cfg.allocations()
    quant = QuantizerSpec(cfg.quantizer_bits)
    rank = cfg.channel_rank()
    if l_values is None:
        l_values = (rank, 2 * rank)
    bits_rng, chan_rng, noise_rng = _trial_streams(cfg.seed, 0, 0)
    gains = _user_gains(cfg)
    bps = int(log2(cfg.modulation_order))
    x = np.empty((cfg.users, grid.symbol_len), dtype=np.complex128)
    for u, alloc in enumerate(allocs):
        bits = bits_rng.integers(0, 2, size=alloc.n_subcarriers * bps, dtype=np.int8)
        syms = qam_modulate(bits, cfg.modulation_order)
        x[u] = gains[u] * ofdm_modulate(map_subcarriers([syms], [alloc], grid))
    ch = generate_channel(cfg.profile(), cfg.users, cfg.n_r, cfg.rho,
                          cfg.sample_rate_hz, chan_rng)
    y = apply_channel(x, ch, cfg.cp_len, NoiseSpec(10.0 ** -1.0), noise_rng)

    rows = []
    for l in l_values:
        sec = _median_seconds(
            lambda l=l: compress_qr(y, allocs, l, quant, grid), repeats)
        rows.append({"algorithm": "qr", "l_u": l, "median_us": sec * 1e6})
    k = min(rank * cfg.users, cfg.n_r, grid.symbol_len)
    sec = _median_seconds(lambda: truncated_svd(y, k), repeats)
    rows.append({"algorithm": "svd-full-matrix", "l_u": k, "median_us": sec * 1e6})
    return rows


def benchmark_kernels(repeats: int = 5):
    """Compare the numpy and numba kernel backends on representative sizes."""
    rng = np.random.default_rng(7)
    a = rng.standard_normal((480, 256)) + 1j * rng.standard_normal((480, 256))
    a = np.ascontiguousarray(a)
    codes = rng.integers(0, 2 ** 15, size=500_000).astype(np.uint64)
    out = np.zeros((codes.size * 15 + 7) // 8 + 8, dtype=np.uint8)

    variants = {"numpy": (_kernels.mgs_orthonormalize_numpy,
                          _kernels.pack_into_numpy, _kernels.unpack_from_numpy)}
    if _kernels.HAVE_NUMBA:
        variants["numba"] = (_kernels.mgs_orthonormalize_numba,
                             _kernels.pack_into_numba, _kernels.unpack_from_numba)
    rows = []
    for backend, (mgs, pack, unpack) in variants.items():
        sec = _median_seconds(lambda: mgs(a, 24, 1e-30), repeats)
        rows.append({"kernel": "mgs_orthonormalize(480x256, l=24)",
                     "backend": backend, "median_us": sec * 1e6})
        sec = _median_seconds(lambda: pack(np.zeros_like(out), 3, codes, 15), repeats)
        rows.append({"kernel": "pack_into(500k codes, 15 bit)",
                     "backend": backend, "median_us": sec * 1e6})
        sec = _median_seconds(lambda: unpack(out, 3, codes.size, 15), repeats)
        rows.append({"kernel": "unpack_from(500k codes, 15 bit)",
                     "backend": backend, "median_us": sec * 1e6})
    return rows
