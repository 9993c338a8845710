"""Acceptance gate: one test per primary deliverable criterion.

Each test prints one ``[ACCEPTANCE] PASS/FAIL: <label>`` line via the hook in
``conftest.py``.  Two criteria are currently expected to fail at the desk
scale — the paired-seed BER clauses of ``denoising-gain`` and
``baseline-ordering`` — because zero-forcing combining with perfect channel
knowledge gains an array factor of N_r against independent noise but only
l_u against noise replicated inside a rank-l_u basis, so any low-rank
reconstruction raises the post-combining noise floor.  The energy clause of
``denoising-gain`` and the wideband ordering (see
``test_harness.TestSingleTrial::test_wideband_qr_beats_bit_matched_svd``)
hold as stated; README.md discusses the measured behavior.
"""

import dataclasses
import re
import warnings

import numpy as np
import pytest

from qrfh.cli import main
from qrfh.codec import (CompressedPayload, QuantizerSpec, compress_qr,
                        compression_ratio, perm_index_width)
from qrfh.config import SimConfig, full_scale
from qrfh.harness import benchmark_compressors, denoising_report, run_trial
from qrfh.linalg import frobenius_error, pivoted_qr_approx, truncated_svd
from qrfh.ofdm import (OfdmGrid, UserAllocation, map_subcarriers,
                       ofdm_demodulate, ofdm_modulate, qam_demodulate,
                       qam_modulate)

# Published targets (5% tolerance) and the exact closed-form regression
# baselines for the wideband compression-ratio table.
CR_CASES = [
    # users, l_u, target, exact
    (8, 12, 17.4, 17.775375050682523),
    (8, 24, 8.9, 8.926292927921814),
    (12, 12, 14.5, 15.172175116802215),
    (12, 24, 7.3, 7.628327823212111),
]

MID_RANGE_SNRS_DB = (-2.0, 0.0, 2.0)


def test_compression_ratio_reference(tmp_path, capsys):
    """analyze-cr reproduces the published wideband ratios within 5% and the
    closed-form values exactly."""
    for users, l_u, target, exact in CR_CASES:
        cfg = tmp_path / f"cr-{users}-{l_u}.cfg"
        cfg.write_text(f"users = {users}\nrb_allocation = paper\nl_u = {l_u}\n")
        assert main(["analyze-cr", "--full-scale", "--config", str(cfg)]) == 0
        out = capsys.readouterr().out
        match = re.search(r"CR = ([0-9.]+)", out)
        assert match, out
        printed = float(match.group(1))
        assert printed == pytest.approx(exact, abs=5e-5)  # printed at 4 dp
        assert abs(printed - target) / target <= 0.05
        # Independent arithmetic for the same configuration.
        blocks = range(26, 41, 2) if users == 8 else range(10, 33, 2)
        report = compression_ratio(4384, 256, 30,
                                   [(rb * 12, l_u) for rb in blocks])
        assert report.cr == pytest.approx(exact, rel=1e-12)


def test_payload_bit_exactness():
    """Serialized length equals the closed-form B_cmp + B_ovh plus the
    documented framing (30-byte header; 128 fixed bits, the permutation
    indices, and byte padding per user record) on 20 random configurations."""
    rng = np.random.default_rng(2026)
    grid = OfdmGrid(n_fft=512, cp_len=36, n_active=432)
    for _ in range(20):
        n_r = int(rng.integers(2, 33))
        users = int(rng.integers(1, 5))
        counts = rng.integers(1, 7, size=users)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        allocations = tuple(
            UserAllocation(u, int(starts[u]), int(counts[u]))
            for u in range(users))
        l_u = int(rng.integers(1, min(12 * counts.min(), n_r) + 1))
        bits = int(rng.integers(2, 17))
        y = (rng.standard_normal((grid.symbol_len, n_r))
             + 1j * rng.standard_normal((grid.symbol_len, n_r)))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            payload = compress_qr(y, allocations, l_u, QuantizerSpec(bits),
                                  grid)
        blob = payload.to_bytes()
        report = compression_ratio(grid.symbol_len, n_r, payload.b_q,
                                   [(a.n_subcarriers, l_u)
                                    for a in allocations])
        framing = 30 * 8
        width = perm_index_width(n_r)
        for alloc in allocations:
            body = 128 + n_r * width + l_u * (alloc.n_subcarriers + n_r) * payload.b_q
            framing += ((body + 7) & ~7) - (body - 128)
        assert len(blob) * 8 == report.b_cmp + report.b_ovh + framing
        assert payload.sample_bits() == report.b_cmp
        assert payload.perm_bits() == report.b_ovh
        assert CompressedPayload.from_bytes(blob) == payload


def test_low_rank_factorization_accuracy():
    """100 random exact-rank-r matrices: relative reconstruction error below
    1e-10 at l = r, and never better than the truncated SVD below r."""
    rng = np.random.default_rng(314)
    for _ in range(100):
        r = int(rng.integers(1, 13))
        n_f = int(rng.integers(r, 513))
        n_r = int(rng.integers(r, 65))
        a = ((rng.standard_normal((n_f, r)) + 1j * rng.standard_normal((n_f, r)))
             @ (rng.standard_normal((r, n_r)) + 1j * rng.standard_normal((r, n_r))))
        factors = pivoted_qr_approx(a, r)
        recon = np.empty_like(a)
        recon[:, factors.perm] = factors.q @ factors.r
        assert frobenius_error(a, recon) < 1e-10
        if r > 1:
            l = int(rng.integers(1, r))
            partial = pivoted_qr_approx(a, l)
            approx = np.empty_like(a)
            approx[:, partial.perm] = partial.q @ partial.r
            svd = truncated_svd(a, l)
            best = (svd.u * svd.s) @ svd.v.conj().T
            qr_err = np.linalg.norm(a - approx)
            svd_err = np.linalg.norm(a - best)
            assert qr_err >= svd_err * (1 - 1e-12)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_denoising_gain():
    """Desk scale, basis size = channel rank, mid-range SNR: reconstruction
    error energy at most half the raw noise energy over 200 trials, and
    paired-seed BER with compression no worse than without."""
    cfg = SimConfig(l_u="rank")
    reports = {}
    for snr_idx, snr_db in enumerate(MID_RANGE_SNRS_DB):
        reports[snr_db] = denoising_report(cfg, snr_db, trials=200,
                                           snr_idx=snr_idx)
    for snr_db, report in reports.items():
        assert report["ratio"] <= 0.5, (
            f"error-energy ratio {report['ratio']:.4f} > 0.5 at {snr_db} dB")
    violations = [
        f"{snr_db} dB: BER(qr)={report['ber_qr']:.5f} > "
        f"BER(none)={report['ber_none']:.5f}"
        for snr_db, report in reports.items()
        if report["ber_qr"] > report["ber_none"]]
    assert not violations, (
        "paired-seed BER with compression exceeds uncompressed at: "
        + "; ".join(violations))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_baseline_ordering():
    """Desk scale, equal payload bits, 500 paired trials per mid-range SNR
    point: pivoted QR at twice the channel rank no worse than the SVD
    baseline."""
    base = SimConfig(l_u=22)
    violations = []
    for snr_idx, snr_db in enumerate((0.0, 2.0)):
        ber = {}
        for compressor in ("qr", "svd-baseline"):
            cfg = dataclasses.replace(base, compressor=compressor)
            errors = bits = 0
            for trial in range(500):
                e, b, _ = run_trial(cfg, snr_db, snr_idx, trial)
                errors += e
                bits += b
            ber[compressor] = errors / bits
        if ber["qr"] > ber["svd-baseline"]:
            violations.append(
                f"{snr_db} dB: BER(qr)={ber['qr']:.5f} > "
                f"BER(svd)={ber['svd-baseline']:.5f}")
    assert not violations, "; ".join(violations)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_complexity_scaling():
    """Median of 10 runs at the wideband scale: doubling the basis size costs
    at most 2.5x, and QR stays faster than full-matrix truncated SVD."""
    cfg = full_scale(SimConfig())
    rank = cfg.channel_rank()
    rows = benchmark_compressors(cfg, repeats=10, l_values=(rank, 2 * rank))
    by_key = {(r["algorithm"], r["l_u"]): r["median_us"] for r in rows}
    t_rank = by_key[("qr", rank)]
    t_double = by_key[("qr", 2 * rank)]
    (svd_key,) = [k for k in by_key if k[0] == "svd-full-matrix"]
    t_svd = by_key[svd_key]
    assert t_double <= 2.5 * t_rank, (
        f"QR time {t_double:.0f}us at l={2 * rank} exceeds 2.5x "
        f"{t_rank:.0f}us at l={rank}")
    assert t_double < t_svd, (
        f"QR {t_double:.0f}us not faster than SVD {t_svd:.0f}us")
    assert t_rank < t_svd


def test_chain_sanity():
    """Noiseless uncompressed chain is error-free over 10 trials, and the
    lossless round-trip layers agree to 1e-10."""
    cfg = SimConfig(compressor="none")
    for trial in range(10):
        errors, total, _ = run_trial(cfg, float("inf"), 0, trial)
        assert total > 0
        assert errors == 0, f"noiseless trial {trial}: {errors} bit errors"

    rng = np.random.default_rng(77)
    for order in (4, 16, 64, 256):
        bits = rng.integers(0, 2, size=240 * int(np.log2(order)),
                            dtype=np.int8)
        symbols = qam_modulate(bits, order)
        assert np.array_equal(qam_demodulate(symbols, order), bits)
    grid = OfdmGrid(n_fft=512, cp_len=36, n_active=432)
    allocation = UserAllocation(0, 3, 5)
    symbols = (rng.standard_normal(allocation.n_subcarriers)
               + 1j * rng.standard_normal(allocation.n_subcarriers))
    loaded = map_subcarriers([symbols], [allocation], grid)
    time_samples = ofdm_modulate(loaded)
    recovered = ofdm_demodulate(time_samples, grid)
    assert np.max(np.abs(recovered - loaded.values)) < 1e-10
    assert np.max(np.abs(
        recovered[grid.bin_index(allocation.subcarriers)] - symbols)) < 1e-10
