"""Numerical kernels with selectable numpy / numba backends.

The two hot loops of the codec live here: the Gram-Schmidt orthonormalization
at the heart of the column-pivoted QR, and the bit-level packing/unpacking of
quantized payloads.  Each kernel has a pure-numpy implementation and a
numba ``@njit`` implementation; the active backend is chosen at import time
from the ``QRFH_BACKEND`` environment variable:

* ``QRFH_BACKEND=numpy``  -- force the vectorized numpy path
* ``QRFH_BACKEND=numba``  -- require numba (ImportError if unavailable)
* unset or ``auto``       -- use numba when importable, else numpy

Both variants of every kernel remain importable (``mgs_orthonormalize_numpy``,
``mgs_orthonormalize_numba``, ...) so tests can assert equivalence and
``qrfh bench`` can time them against each other.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = [
    "BACKEND",
    "HAVE_NUMBA",
    "mgs_orthonormalize",
    "pack_into",
    "unpack_from",
]


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def mgs_orthonormalize_numpy(a_perm: np.ndarray, l: int, tol: float):
    """Orthonormalize the first ``l`` columns of ``a_perm``.

    Gram-Schmidt with a second re-orthogonalization pass ("twice is enough"),
    which keeps ``q^H q`` within ~1e-14 of identity even for nearly dependent
    columns.  Returns ``(q, fail_step)`` where ``fail_step`` is -1 on success
    or the index of the first column whose residual norm fell below ``tol``.
    """
    m = a_perm.shape[0]
    q = np.zeros((m, l), dtype=np.complex128)
    for i in range(l):
        v = a_perm[:, i].astype(np.complex128, copy=True)
        if i > 0:
            basis = q[:, :i]
            for _ in range(2):
                v -= basis @ (basis.conj().T @ v)
        nrm = np.linalg.norm(v)
        if nrm < tol:
            return q, i
        q[:, i] = v / nrm
    return q, -1


def pack_into_numpy(out: np.ndarray, bit_offset: int, codes: np.ndarray,
                    width: int) -> int:
    """Append ``codes`` (``width`` bits each, LSB-first) to buffer ``out``.

    ``out`` must be a zero-initialized uint8 buffer that is only ever written
    sequentially; returns the new bit offset.
    """
    if width == 0 or codes.size == 0:
        return bit_offset
    codes = codes.astype(np.uint64, copy=False)
    shifts = np.arange(width, dtype=np.uint64)
    bits = ((codes[:, None] >> shifts) & np.uint64(1)).astype(np.uint8).ravel()
    lead = bit_offset & 7
    if lead:
        bits = np.concatenate([np.zeros(lead, dtype=np.uint8), bits])
    packed = np.packbits(bits, bitorder="little")
    start = bit_offset >> 3
    out[start] |= packed[0]
    out[start + 1:start + packed.size] = packed[1:]
    return bit_offset + codes.size * width


def unpack_from_numpy(buf: np.ndarray, bit_offset: int, count: int,
                      width: int):
    """Read ``count`` unsigned ``width``-bit values starting at ``bit_offset``.

    Returns ``(codes, new_bit_offset)`` with ``codes`` as uint64.
    """
    if width == 0 or count == 0:
        return np.zeros(count, dtype=np.uint64), bit_offset
    end_bit = bit_offset + count * width
    span = buf[bit_offset >> 3:(end_bit + 7) >> 3]
    bits = np.unpackbits(span, bitorder="little")
    lead = bit_offset & 7
    sel = bits[lead:lead + count * width].reshape(count, width).astype(np.uint64)
    shifts = np.arange(width, dtype=np.uint64)
    codes = (sel << shifts).sum(axis=1, dtype=np.uint64)
    return codes, end_bit


# ---------------------------------------------------------------------------
# numba implementations (compiled lazily on first call)
# ---------------------------------------------------------------------------

def _build_numba_kernels():
    import numba

    @numba.njit(cache=True)
    def _mgs(a_perm, l, tol):  # pragma: no cover - exercised via wrapper
        m = a_perm.shape[0]
        q = np.zeros((m, l), dtype=np.complex128)
        v = np.empty(m, dtype=np.complex128)
        for i in range(l):
            for t in range(m):
                v[t] = a_perm[t, i]
            for _ in range(2):
                for j in range(i):
                    c = 0j
                    for t in range(m):
                        c += np.conj(q[t, j]) * v[t]
                    for t in range(m):
                        v[t] -= c * q[t, j]
            acc = 0.0
            for t in range(m):
                acc += v[t].real * v[t].real + v[t].imag * v[t].imag
            nrm = np.sqrt(acc)
            if nrm < tol:
                return q, i
            inv = 1.0 / nrm
            for t in range(m):
                q[t, i] = v[t] * inv
        return q, -1

    @numba.njit(cache=True)
    def _pack(out, bit_offset, codes, width):  # pragma: no cover
        pos = bit_offset
        mask = (np.uint64(1) << np.uint64(width)) - np.uint64(1)
        for k in range(codes.size):
            word = codes[k] & mask
            nleft = width
            while nleft > 0:
                byte_i = pos >> 3
                bit_i = pos & 7
                take = 8 - bit_i
                if take > nleft:
                    take = nleft
                chunk = word & ((np.uint64(1) << np.uint64(take)) - np.uint64(1))
                out[byte_i] |= np.uint8(chunk << np.uint64(bit_i))
                word >>= np.uint64(take)
                pos += take
                nleft -= take
        return pos

    @numba.njit(cache=True)
    def _unpack(buf, bit_offset, count, width):  # pragma: no cover
        codes = np.zeros(count, dtype=np.uint64)
        pos = bit_offset
        for k in range(count):
            got = 0
            word = np.uint64(0)
            while got < width:
                byte_i = pos >> 3
                bit_i = pos & 7
                take = 8 - bit_i
                if take > width - got:
                    take = width - got
                chunk = (np.uint64(buf[byte_i]) >> np.uint64(bit_i)) & (
                    (np.uint64(1) << np.uint64(take)) - np.uint64(1))
                word |= chunk << np.uint64(got)
                got += take
                pos += take
            codes[k] = word
        return codes, pos

    def mgs_orthonormalize_numba(a_perm, l, tol):
        return _mgs(np.asfortranarray(a_perm, dtype=np.complex128), l, tol)

    def pack_into_numba(out, bit_offset, codes, width):
        if width == 0 or codes.size == 0:
            return bit_offset
        return _pack(out, bit_offset, codes.astype(np.uint64, copy=False), width)

    def unpack_from_numba(buf, bit_offset, count, width):
        if width == 0 or count == 0:
            return np.zeros(count, dtype=np.uint64), bit_offset
        return _unpack(buf, bit_offset, count, width)

    return mgs_orthonormalize_numba, pack_into_numba, unpack_from_numba


_requested = os.environ.get("QRFH_BACKEND", "auto").strip().lower() or "auto"
if _requested not in ("auto", "numpy", "numba"):
    raise ValueError(f"QRFH_BACKEND must be 'numpy', 'numba' or 'auto', got {_requested!r}")

mgs_orthonormalize_numba = None
pack_into_numba = None
unpack_from_numba = None
HAVE_NUMBA = False

if _requested in ("auto", "numba"):
    try:
        (mgs_orthonormalize_numba, pack_into_numba,
         unpack_from_numba) = _build_numba_kernels()
        HAVE_NUMBA = True
    except ImportError:
        if _requested == "numba":
            raise

if HAVE_NUMBA and _requested != "numpy":
    BACKEND = "numba"
    mgs_orthonormalize = mgs_orthonormalize_numba
    pack_into = pack_into_numba
    unpack_from = unpack_from_numba
else:
    BACKEND = "numpy"
    mgs_orthonormalize = mgs_orthonormalize_numpy
    pack_into = pack_into_numpy
    unpack_from = unpack_from_numpy
