"""Tapped-delay-line MIMO channel with exponential receive correlation.

Tap gains are i.i.d. circular complex Gaussian across users and taps, colored
across receive antennas by the exponential correlation model
``R[i, j] = rho**|i - j|``.  Tap delays are rounded to the nearest sample at
the configured rate; taps landing on the same sample merge by complex
addition, so the effective number of delay taps (and hence the per-user
signal rank) can be smaller than the profile's row count.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, InvalidInputError

__all__ = [
    "TdlProfile",
    "NoiseSpec",
    "ChannelRealization",
    "tdla30_profile",
    "desk_profile",
    "awgn_profile",
    "named_profile",
    "load_profile",
    "exp_correlation_sqrt",
    "distinct_sample_delays",
    "generate_channel",
    "apply_channel",
    "freq_response",
]


@dataclass(frozen=True)
class TdlProfile:
    """Tapped-delay-line power/delay profile.

    ``fading=False`` marks a deterministic profile whose gains are the fixed
    square roots of the tap powers (used for AWGN-only sanity runs).
    """

    name: str
    delays_ns: np.ndarray
    powers_db: np.ndarray
    fading: bool = True

    def __post_init__(self):
        d = np.asarray(self.delays_ns, dtype=float)
        p = np.asarray(self.powers_db, dtype=float)
        if d.ndim != 1 or d.shape != p.shape or d.size == 0:
            raise InvalidInputError("profile needs matching 1-D delay/power arrays")
        if np.any(d < 0) or not np.all(np.isfinite(d)) or not np.all(np.isfinite(p)):
            raise InvalidInputError("profile delays/powers must be finite, delays >= 0")
        object.__setattr__(self, "delays_ns", d)
        object.__setattr__(self, "powers_db", p)

    @property
    def n_taps(self) -> int:
        return self.delays_ns.size

    def normalized_powers(self) -> np.ndarray:
        """Linear tap powers normalized to unit total."""
        p = 10.0 ** (self.powers_db / 10.0)
        return p / p.sum()

    def rms_delay_spread_ns(self) -> float:
        p = self.normalized_powers()
        mean = float(np.dot(p, self.delays_ns))
        return float(np.sqrt(np.dot(p, (self.delays_ns - mean) ** 2)))

    def scale_delays(self, factor: float, name: str | None = None) -> "TdlProfile":
        return TdlProfile(name or f"{self.name}-x{factor:g}",
                          self.delays_ns * factor, self.powers_db, self.fading)


# 3GPP normative short-delay profile, 30 ns RMS delay spread.
_TDLA30_DELAYS_NS = np.array(
    [0.0, 10.0, 15.0, 20.0, 25.0, 50.0, 65.0, 75.0, 105.0, 135.0, 150.0, 290.0])
_TDLA30_POWERS_DB = np.array(
    [-15.5, 0.0, -5.1, -5.1, -9.6, -8.2, -13.1, -11.5, -11.0, -16.2, -16.6, -26.2])


def tdla30_profile() -> TdlProfile:
    """The 12-tap, 30 ns RMS delay-spread TDL-A conformance profile."""
    return TdlProfile("tdla30", _TDLA30_DELAYS_NS, _TDLA30_POWERS_DB)


def desk_profile() -> TdlProfile:
    """TDLA30 with delays stretched 7x to span a 36-sample CP at 15.36 Msps."""
    return tdla30_profile().scale_delays(7.0, name="tdla30-desk")


def awgn_profile() -> TdlProfile:
    """Deterministic single-tap unit-gain profile (no fading)."""
    return TdlProfile("awgn", np.array([0.0]), np.array([0.0]), fading=False)


def named_profile(name: str) -> TdlProfile:
    """Resolve a profile by registry name or by path to a profile table."""
    registry = {"tdla30": tdla30_profile, "tdla30-desk": desk_profile,
                "awgn": awgn_profile}
    if name in registry:
        return registry[name]()
    if os.path.exists(name):
        return load_profile(name)
    raise ConfigError(f"unknown channel profile {name!r} "
                      f"(known: {sorted(registry)} or a profile-table path)")


def load_profile(path) -> TdlProfile:
    """Load a profile from a plain-text table.

    Each non-comment line reads ``<name> <delay_ns> <power_db>`` (whitespace
    or comma separated); every line must carry the same profile name.
    """
    names, delays, powers = [], [], []
    with open(path) as fh:
        for ln, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 3:
                raise ConfigError(f"{path}:{ln}: expected 'name delay_ns power_db'")
            names.append(parts[0])
            try:
                delays.append(float(parts[1]))
                powers.append(float(parts[2]))
            except ValueError as exc:
                raise ConfigError(f"{path}:{ln}: {exc}") from exc
    if not names:
        raise ConfigError(f"{path}: no profile rows found")
    if len(set(names)) != 1:
        raise ConfigError(f"{path}: inconsistent profile names {sorted(set(names))}")
    return TdlProfile(names[0], np.array(delays), np.array(powers))


@dataclass(frozen=True)
class NoiseSpec:
    """Per-sample complex noise variance (split equally over I and Q)."""

    variance: float

    def __post_init__(self):
        if not (np.isfinite(self.variance) and self.variance > 0):
            raise InvalidInputError(f"noise variance must be > 0, got {self.variance}")


@dataclass(frozen=True)
class ChannelRealization:
    """One draw of the channel: per-tap sample delays and gain matrices."""

    taps: tuple  # of (delay_samples, gains ndarray (n_r, n_u))
    sample_rate_hz: float
    rho: float
    profile_name: str = ""
    _shape: tuple = field(init=False, repr=False)

    def __post_init__(self):
        shapes = {g.shape for _, g in self.taps}
        if len(shapes) != 1:
            raise InvalidInputError("all tap gain matrices must share one shape")
        object.__setattr__(self, "_shape", shapes.pop())

    @property
    def n_r(self) -> int:
        return self._shape[0]

    @property
    def n_u(self) -> int:
        return self._shape[1]

    @property
    def delays(self) -> np.ndarray:
        return np.array([d for d, _ in self.taps], dtype=np.int64)

    @property
    def n_taps(self) -> int:
        return len(self.taps)


def exp_correlation_sqrt(rho: float, n_r: int) -> np.ndarray:
    """Lower Cholesky factor of ``R[i, j] = rho**|i - j|``.

    ``rho = 0`` yields the identity.  Requires ``0 <= rho < 1`` so that R is
    positive definite.
    """
    if not (np.isfinite(rho) and 0.0 <= rho < 1.0):
        raise InvalidInputError(f"correlation rho must be in [0, 1), got {rho}")
    if n_r < 1:
        raise InvalidInputError(f"n_r must be >= 1, got {n_r}")
    idx = np.arange(n_r)
    corr = rho ** np.abs(idx[:, None] - idx[None, :])
    return np.linalg.cholesky(corr)


def distinct_sample_delays(profile: TdlProfile, sample_rate_hz: float) -> np.ndarray:
    """Sorted distinct tap delays in samples after nearest-sample rounding.

    The length of this array is the per-user signal rank a noiseless receive
    matrix attains over one of this profile's channels.
    """
    if sample_rate_hz <= 0:
        raise InvalidInputError("sample_rate_hz must be positive")
    samples = np.rint(profile.delays_ns * 1e-9 * sample_rate_hz).astype(np.int64)
    return np.unique(samples)


def generate_channel(profile: TdlProfile, n_u: int, n_r: int, rho: float,
                     sample_rate_hz: float, rng: np.random.Generator) -> ChannelRealization:
    """Draw one channel realization.

    Tap powers are normalized to unit total before the draw, so the expected
    received power per (antenna, user) pair is one.  Colliding sample delays
    merge by complex addition of their gain matrices.
    """
    if n_u < 1 or n_r < 1:
        raise InvalidInputError(f"need n_u >= 1 and n_r >= 1, got {n_u}, {n_r}")
    powers = profile.normalized_powers()
    delays = np.rint(profile.delays_ns * 1e-9 * sample_rate_hz).astype(np.int64)
    corr_sqrt = exp_correlation_sqrt(rho, n_r)
    merged: dict[int, np.ndarray] = {}
    for p_i, d_i in zip(powers, delays):
        if profile.fading:
            z = rng.standard_normal((n_r, n_u)) + 1j * rng.standard_normal((n_r, n_u))
            gains = corr_sqrt @ (np.sqrt(p_i / 2.0) * z)
        else:
            gains = np.full((n_r, n_u), np.sqrt(p_i), dtype=np.complex128)
        if int(d_i) in merged:
            merged[int(d_i)] += gains
        else:
            merged[int(d_i)] = gains
    taps = tuple((d, merged[d]) for d in sorted(merged))
    return ChannelRealization(taps=taps, sample_rate_hz=sample_rate_hz,
                              rho=rho, profile_name=profile.name)


def apply_channel(x, ch: ChannelRealization, cp_len: int,
                  noise: NoiseSpec | None = None,
                  rng: np.random.Generator | None = None) -> np.ndarray:
    """Propagate per-user time signals through the channel.

    Parameters
    ----------
    x : array_like
        ``(n_u, n_samples)`` per-user CP-bearing symbol, or ``(n_samples,)``
        for a single user.  Delays act as circular shifts over the full
        CP-extended symbol, which matches linear convolution everywhere past
        the CP.
    ch : ChannelRealization
    cp_len : int
        Cyclic-prefix length; every tap delay must stay below it.
    noise : NoiseSpec, optional
        When given, adds circular complex Gaussian noise (requires ``rng``).

    Returns
    -------
    ndarray, shape (n_samples, n_r)
    """
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[0] != ch.n_u:
        raise InvalidInputError(
            f"x must be (n_u={ch.n_u}, n_samples), got {x.shape}")
    max_delay = int(ch.delays.max())
    if max_delay >= cp_len:
        raise ConfigError(
            f"tap delay {max_delay} samples >= cp_len {cp_len}: "
            "the model is only valid for delays inside the cyclic prefix")
    n_samples = x.shape[1]
    acc = np.zeros((ch.n_r, n_samples), dtype=np.complex128)
    for d, gains in ch.taps:
        acc += gains @ np.roll(x, d, axis=1)
    y = acc.T.copy()
    if noise is not None:
        if rng is None:
            raise InvalidInputError("rng is required when noise is requested")
        sigma = np.sqrt(noise.variance / 2.0)
        y += sigma * (rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape))
    return y


def freq_response(ch: ChannelRealization, bins, n_fft: int) -> np.ndarray:
    """Exact per-bin frequency response of a realization.

    Returns ``H`` of shape ``(len(bins), n_r, n_u)`` with
    ``H[f] = sum_i gains_i * exp(-2j*pi*bins[f]*d_i/n_fft)``, consistent with
    :func:`apply_channel` followed by CP removal and the unitary DFT.
    """
    bins = np.asarray(bins, dtype=np.int64)
    if bins.ndim != 1:
        raise InvalidInputError("bins must be a 1-D index array")
    h = np.zeros((bins.size, ch.n_r, ch.n_u), dtype=np.complex128)
    for d, gains in ch.taps:
        phase = np.exp(-2j * np.pi * bins * d / n_fft)
        h += phase[:, None, None] * gains[None, :, :]
    return h
