"""Counter-based random streams for the trajectory kernels.

Every draw is ``Philox4x32-10(counter, key)``: the key is the 64-bit seed,
the counter packs a block number, a purpose tag and the 64-bit trajectory
index. A trajectory therefore owns its stream outright and its output does
not depend on which worker ran it or in what order.

Normals use the 128-layer ziggurat, one 32-bit word per draw on the fast
path, generated in batches (:func:`refill_normals`).
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint32(0x9E3779B9)
_W1 = np.uint32(0xBB67AE85)
_LO = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)

PURPOSE_MOTION = 0
PURPOSE_START = 1
PURPOSE_TAIL = 2
NORMAL_BATCH = 256

# stream state layout (uint32): key0 key1 idx_lo idx_hi blk_lo blk_hi purpose pos buf0..buf3
STATE_SIZE = 12


@njit(cache=True, nogil=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    for _ in range(10):
        p0 = np.uint64(c0) * _M0
        p1 = np.uint64(c2) * _M1
        hi0 = np.uint32(p0 >> _S32)
        lo0 = np.uint32(p0 & _LO)
        hi1 = np.uint32(p1 >> _S32)
        lo1 = np.uint32(p1 & _LO)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        k0 = np.uint32(k0 + _W0)
        k1 = np.uint32(k1 + _W1)
    return c0, c1, c2, c3


def split_seed(seed: int) -> tuple[np.uint32, np.uint32]:
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.uint32(seed & 0xFFFFFFFF), np.uint32(seed >> 32)


@njit(cache=True, nogil=True)
def stream_init(st, k0, k1, idx, purpose):
    st[0] = k0
    st[1] = k1
    st[2] = np.uint32(idx & np.uint64(0xFFFFFFFF))
    st[3] = np.uint32(idx >> np.uint64(32))
    st[4] = 0
    st[5] = 0
    st[6] = np.uint32(purpose)
    st[7] = 4


@njit(cache=True, nogil=True)
def next_u32(st):
    if st[7] >= 4:
        c1 = st[5] | (st[6] << np.uint32(28))
        b0, b1, b2, b3 = philox4x32(st[4], c1, st[2], st[3], st[0], st[1])
        st[8] = b0
        st[9] = b1
        st[10] = b2
        st[11] = b3
        st[7] = 0
        st[4] = np.uint32(st[4] + np.uint32(1))
        if st[4] == 0:
            st[5] = np.uint32(st[5] + np.uint32(1))
    v = st[8 + st[7]]
    st[7] += 1
    return v


@njit(cache=True, nogil=True)
def uniform(st):
    """Uniform on the open interval (0, 1)."""
    return (np.float64(next_u32(st)) + 0.5) * 2.3283064365386963e-10


def _ziggurat_tables():
    m1 = 2147483648.0
    dn = 3.442619855899
    tn = dn
    vn = 9.91256303526217e-3
    kn = np.zeros(128)
    wn = np.zeros(128)
    fn = np.zeros(128)
    q = vn / math.exp(-0.5 * dn * dn)
    kn[0] = (dn / q) * m1
    kn[1] = 0.0
    wn[0] = q / m1
    wn[127] = dn / m1
    fn[0] = 1.0
    fn[127] = math.exp(-0.5 * dn * dn)
    for i in range(126, 0, -1):
        dn = math.sqrt(-2.0 * math.log(vn / dn + math.exp(-0.5 * dn * dn)))
        kn[i + 1] = (dn / tn) * m1
        tn = dn
        fn[i] = math.exp(-0.5 * dn * dn)
        wn[i] = dn / m1
    return kn, wn, fn


ZIG_K, ZIG_W, ZIG_F = _ziggurat_tables()
_ZIG_R = 3.442619855899


@njit(cache=True, nogil=True)
def _signed(u):
    v = np.int64(u)
    return v - np.int64(4294967296) if v >= np.int64(2147483648) else v


@njit(cache=True, nogil=True)
def refill_normals(buf, k0, k1, idx, purpose, block, tail):
    """Fill ``buf`` with normals from blocks ``block, block+1, ...``; returns the next block.

    The ziggurat fast path reads one word per normal straight from Philox
    output; the rare rejections draw from the separate stream ``tail``.
    Leftover words of the last block are dropped, so the sequence depends
    only on (key, idx, purpose) and the batch size.
    """
    c2 = np.uint32(idx & np.uint64(0xFFFFFFFF))
    c3 = np.uint32(idx >> np.uint64(32))
    tag = np.uint32(purpose) << np.uint32(28)
    b0 = b1 = b2 = b3 = np.uint32(0)
    pos = 4
    i = 0
    n = buf.size
    while i < n:
        if pos == 4:
            b0, b1, b2, b3 = philox4x32(
                np.uint32(block & np.uint64(0xFFFFFFFF)),
                np.uint32(block >> np.uint64(32)) | tag, c2, c3, k0, k1,
            )
            block += np.uint64(1)
            pos = 0
        if pos == 0:
            u = b0
        elif pos == 1:
            u = b1
        elif pos == 2:
            u = b2
        else:
            u = b3
        pos += 1
        hz = _signed(u)
        iz = hz & 127
        if abs(hz) < ZIG_K[iz]:
            buf[i] = hz * ZIG_W[iz]
        else:
            buf[i] = _normal_tail(hz, iz, tail)
        i += 1
    return block


@njit(cache=True, nogil=True)
def _normal_tail(hz, iz, st):
    while True:
        x = hz * ZIG_W[iz]
        if iz == 0:
            while True:
                x = -math.log(uniform(st)) / _ZIG_R
                y = -math.log(uniform(st))
                if y + y >= x * x:
                    break
            return _ZIG_R + x if hz > 0 else -_ZIG_R - x
        if ZIG_F[iz] + uniform(st) * (ZIG_F[iz - 1] - ZIG_F[iz]) < math.exp(-0.5 * x * x):
            return x
        hz = _signed(next_u32(st))
        iz = hz & 127
        if abs(hz) < ZIG_K[iz]:
            return hz * ZIG_W[iz]


@njit(cache=True, nogil=True)
def fill_normals(k0, k1, idx, purpose, out):
    tail = np.empty(STATE_SIZE, dtype=np.uint32)
    stream_init(tail, k0, k1, idx, PURPOSE_TAIL)
    buf = np.empty(NORMAL_BATCH)
    block = np.uint64(0)
    i = 0
    while i < out.size:
        block = refill_normals(buf, k0, k1, idx, purpose, block, tail)
        m = min(NORMAL_BATCH, out.size - i)
        out[i:i + m] = buf[:m]
        i += m


@njit(cache=True, nogil=True)
def fill_uniforms(k0, k1, idx, purpose, out):
    st = np.empty(STATE_SIZE, dtype=np.uint32)
    stream_init(st, k0, k1, idx, purpose)
    for i in range(out.size):
        out[i] = uniform(st)
