"""OFDM grid handling and square-QAM bit mapping.

Gray-coded square QAM follows the 5G NR uplink constellation definition
(unit average symbol energy; even-indexed bits drive the in-phase axis,
odd-indexed bits the quadrature axis).  OFDM transforms are unitary
(``1/sqrt(n_fft)`` in both directions) with a classic cyclic prefix.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import InvalidInputError

__all__ = [
    "RB_SIZE",
    "OfdmGrid",
    "UserAllocation",
    "qam_modulate",
    "qam_demodulate",
    "map_subcarriers",
    "demap_subcarriers",
    "ofdm_modulate",
    "ofdm_demodulate",
]

#: subcarriers per resource block
RB_SIZE = 12

_QAM_ORDERS = (4, 16, 64, 256)


@dataclass(frozen=True)
class UserAllocation:
    """Contiguous resource-block allocation of one user."""

    user_id: int
    rb_start: int
    rb_count: int

    def __post_init__(self):
        if self.rb_start < 0 or self.rb_count < 1:
            raise InvalidInputError(
                f"user {self.user_id}: bad allocation ({self.rb_start}, {self.rb_count})")

    @property
    def n_subcarriers(self) -> int:
        return self.rb_count * RB_SIZE

    @property
    def subcarriers(self) -> np.ndarray:
        """Active-subcarrier indices covered by this allocation."""
        lo = self.rb_start * RB_SIZE
        return np.arange(lo, lo + self.n_subcarriers)


@dataclass(frozen=True)
class OfdmGrid:
    """One OFDM symbol's frequency grid.

    ``n_active`` subcarriers are centered in the ``n_fft`` grid (DC bin
    included in the count); ``center_offset`` shifts the whole active block
    and is recorded in simulation output metadata.  Inactive bins are
    implicitly zero.
    """

    n_fft: int = 4096
    cp_len: int = 288
    n_active: int = 3276
    center_offset: int = 0
    values: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.n_fft < 1 or not 0 <= self.cp_len < self.n_fft:
            raise InvalidInputError(f"bad n_fft={self.n_fft}, cp_len={self.cp_len}")
        if not 1 <= self.n_active <= self.n_fft:
            raise InvalidInputError(f"n_active={self.n_active} outside 1..n_fft")
        if self.values is None:
            object.__setattr__(self, "values",
                               np.zeros(self.n_fft, dtype=np.complex128))
        elif self.values.shape != (self.n_fft,):
            raise InvalidInputError(
                f"values must have shape ({self.n_fft},), got {self.values.shape}")

    @property
    def symbol_len(self) -> int:
        """Samples per CP-bearing OFDM symbol."""
        return self.n_fft + self.cp_len

    @property
    def max_rbs(self) -> int:
        return self.n_active // RB_SIZE

    def bin_index(self, active_subcarriers) -> np.ndarray:
        """FFT bin index for each active-subcarrier index."""
        k = np.asarray(active_subcarriers)
        if np.any(k < 0) or np.any(k >= self.n_active):
            raise InvalidInputError("active subcarrier index out of range")
        return (k - self.n_active // 2 + self.center_offset) % self.n_fft


# ---------------------------------------------------------------------------
# QAM
# ---------------------------------------------------------------------------

def _axis_levels(bits2d: np.ndarray) -> np.ndarray:
    """Gray PAM level for each row of per-axis bits (odd integers, unscaled)."""
    n_bits = bits2d.shape[1]
    mag = np.ones(bits2d.shape[0])
    for j in range(n_bits - 1, 0, -1):
        mag = 2 ** (n_bits - j) - (1 - 2 * bits2d[:, j]) * mag
    return (1 - 2 * bits2d[:, 0]) * mag


def _qam_tables(order: int):
    """(axis bit LUT indexed by level rank, amplitude scale) for one order."""
    bits_per_axis = int(np.log2(order)) // 2
    scale = np.sqrt(2.0 / 3.0 * (order - 1))
    combos = np.array(
        [[(i >> (bits_per_axis - 1 - j)) & 1 for j in range(bits_per_axis)]
         for i in range(2 ** bits_per_axis)], dtype=np.int8)
    levels = _axis_levels(combos)
    side = int(np.sqrt(order))
    lut = np.zeros((side, bits_per_axis), dtype=np.int8)
    lut[((levels + side - 1) // 2).astype(int)] = combos
    return lut, scale


_TABLE_CACHE: dict = {}


def _tables(order: int):
    if order not in _QAM_ORDERS:
        raise InvalidInputError(f"unsupported QAM order {order}; expected one of {_QAM_ORDERS}")
    if order not in _TABLE_CACHE:
        _TABLE_CACHE[order] = _qam_tables(order)
    return _TABLE_CACHE[order]


def qam_modulate(bits, order: int = 64) -> np.ndarray:
    """Map a bit vector onto Gray-coded square-QAM symbols.

    Parameters
    ----------
    bits : array_like of {0, 1}
        Length must be a multiple of ``log2(order)``.
    order : {4, 16, 64, 256}

    Returns
    -------
    ndarray of complex128
        Unit-average-energy symbols, ``len(bits) / log2(order)`` of them.
    """
    _, scale = _tables(order)
    bits = np.asarray(bits)
    if bits.ndim != 1 or bits.size % int(np.log2(order)) != 0:
        raise InvalidInputError(
            f"bit count {bits.size} not a multiple of log2({order})")
    if bits.size and not np.isin(bits, (0, 1)).all():
        raise InvalidInputError("bits must be 0 or 1")
    bps = int(np.log2(order))
    b = bits.reshape(-1, bps).astype(np.int8)
    re = _axis_levels(b[:, 0::2])
    im = _axis_levels(b[:, 1::2])
    return (re + 1j * im) / scale


def qam_demodulate(symbols, order: int = 64) -> np.ndarray:
    """Hard-decision demap to bits (exact nearest-constellation-point rule).

    Square QAM separates per axis, so the joint nearest-point decision
    reduces to two independent nearest-PAM-level decisions.
    """
    lut, scale = _tables(order)
    symbols = np.asarray(symbols, dtype=np.complex128).ravel()
    side = int(np.sqrt(order))

    def axis_rank(v):
        lvl = np.clip(2 * np.round((v * scale - 1) / 2) + 1, -(side - 1), side - 1)
        return ((lvl + side - 1) // 2).astype(int)

    bits_i = lut[axis_rank(symbols.real)]
    bits_q = lut[axis_rank(symbols.imag)]
    out = np.empty((symbols.size, bits_i.shape[1] * 2), dtype=np.int8)
    out[:, 0::2] = bits_i
    out[:, 1::2] = bits_q
    return out.ravel()


# ---------------------------------------------------------------------------
# Subcarrier mapping and the OFDM transform pair
# ---------------------------------------------------------------------------

def _check_allocations(allocations: Sequence[UserAllocation], grid: OfdmGrid):
    used = np.zeros(grid.max_rbs, dtype=bool)
    for alloc in allocations:
        if alloc.rb_start + alloc.rb_count > grid.max_rbs:
            raise InvalidInputError(
                f"user {alloc.user_id}: allocation exceeds grid "
                f"({alloc.rb_start}+{alloc.rb_count} > {grid.max_rbs} RBs)")
        span = used[alloc.rb_start:alloc.rb_start + alloc.rb_count]
        if span.any():
            raise InvalidInputError(f"user {alloc.user_id}: allocation overlaps another user")
        span[:] = True


def map_subcarriers(symbol_vectors: Sequence[np.ndarray],
                    allocations: Sequence[UserAllocation],
                    grid: OfdmGrid) -> OfdmGrid:
    """Place per-user symbol vectors onto (a copy of) the frequency grid.

    Guard/unallocated bins remain exactly zero.
    """
    if len(symbol_vectors) != len(allocations):
        raise InvalidInputError("one symbol vector per allocation required")
    _check_allocations(allocations, grid)
    values = np.zeros(grid.n_fft, dtype=np.complex128)
    for syms, alloc in zip(symbol_vectors, allocations):
        syms = np.asarray(syms, dtype=np.complex128).ravel()
        if syms.size != alloc.n_subcarriers:
            raise InvalidInputError(
                f"user {alloc.user_id}: {syms.size} symbols for "
                f"{alloc.n_subcarriers} subcarriers")
        values[grid.bin_index(alloc.subcarriers)] = syms
    return replace(grid, values=values)


def demap_subcarriers(freq_values: np.ndarray, allocation: UserAllocation,
                      grid: OfdmGrid) -> np.ndarray:
    """Extract one user's subcarrier values from a full frequency grid.

    ``freq_values`` may be 1-D ``(n_fft,)`` or 2-D ``(n_fft, n_cols)``; rows
    are selected, preserving trailing dimensions.
    """
    freq_values = np.asarray(freq_values)
    if freq_values.shape[0] != grid.n_fft:
        raise InvalidInputError(
            f"frequency grid has {freq_values.shape[0]} bins, expected {grid.n_fft}")
    return freq_values[grid.bin_index(allocation.subcarriers)]


def ofdm_modulate(grid: OfdmGrid) -> np.ndarray:
    """Unitary inverse DFT plus cyclic prefix.

    Returns ``symbol_len`` time samples; the first ``cp_len`` samples repeat
    the last ``cp_len``.
    """
    core = np.fft.ifft(grid.values, norm="ortho")
    if grid.cp_len == 0:
        return core
    return np.concatenate([core[-grid.cp_len:], core])


def ofdm_demodulate(samples: np.ndarray, grid: OfdmGrid) -> np.ndarray:
    """Drop the cyclic prefix and apply the unitary forward DFT.

    Accepts ``(symbol_len,)`` or ``(symbol_len, n_cols)`` input and transforms
    along the time axis.
    """
    samples = np.asarray(samples, dtype=np.complex128)
    if samples.shape[0] != grid.symbol_len:
        raise InvalidInputError(
            f"expected {grid.symbol_len} time samples, got {samples.shape[0]}")
    return np.fft.fft(samples[grid.cp_len:], norm="ortho", axis=0)
