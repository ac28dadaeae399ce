"""Counter-based random streams (Philox4x64-10).

A stream is addressed by ``(seed, stream_id)``; draws are a pure function of
that key and a block counter, so a particle history reproduces the same
sequence no matter which worker runs it or in what order.
"""

from __future__ import annotations

import numba as nb
import numpy as np
from llvmlite import ir
from numba import types
from numba.extending import intrinsic

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_MASK64 = (1 << 64) - 1

# Counter word 1 separates independent uses of the same (seed, stream_id).
TAG_TRANSPORT = 0
TAG_SOURCE = 1
TAG_GENERIC = 2

_TO_UNIT = 1.0 / 9007199254740992.0  # 2**-53


@intrinsic
def _mulhi64(typingctx, a, b):
    sig = types.uint64(types.uint64, types.uint64)

    def codegen(context, builder, signature, args):
        wide = ir.IntType(128)
        prod = builder.mul(builder.zext(args[0], wide), builder.zext(args[1], wide))
        return builder.trunc(builder.lshr(prod, ir.Constant(wide, 64)), ir.IntType(64))

    return sig, codegen


@nb.njit(nogil=True, cache=True, inline="always")
def philox4x64(c0, c1, c2, c3, k0, k1):
    """Ten-round Philox bijection of a 256-bit counter under a 128-bit key."""
    for r in range(10):
        if r > 0:
            k0 = k0 + _W0
            k1 = k1 + _W1
        hi0 = _mulhi64(_M0, c0)
        lo0 = _M0 * c0
        hi1 = _mulhi64(_M1, c2)
        lo1 = _M1 * c2
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


@nb.njit(nogil=True, cache=True, inline="always")
def to_unit(r):
    """Top 53 bits of a 64-bit word as a double in [0, 1)."""
    return np.float64(r >> np.uint64(11)) * _TO_UNIT


@nb.njit(nogil=True, cache=True, inline="always")
def uniform_block(seed, stream_id, tag, block):
    """Four uniforms in [0, 1) for one counter block of a stream."""
    r0, r1, r2, r3 = philox4x64(
        np.uint64(block), np.uint64(tag), np.uint64(0), np.uint64(0), np.uint64(seed), np.uint64(stream_id)
    )
    return to_unit(r0), to_unit(r1), to_unit(r2), to_unit(r3)


@nb.njit(nogil=True, cache=True)
def _fill_uniforms(seed, stream_id, tag, first_block, out):
    n = out.size
    nblocks = (n + 3) // 4
    for b in range(nblocks):
        u0, u1, u2, u3 = uniform_block(seed, stream_id, tag, first_block + b)
        j = 4 * b
        out[j] = u0
        if j + 1 < n:
            out[j + 1] = u1
        if j + 2 < n:
            out[j + 2] = u2
        if j + 3 < n:
            out[j + 3] = u3


class RandomStream:
    """Sequential view of one counter-based stream.

    Uniforms are served four per counter block; ``next_block`` always starts a
    fresh block, which is how transport consumes one block per flight.
    """

    def __init__(self, seed: int, stream_id: int, tag: int = TAG_GENERIC, block: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        self.tag = int(tag)
        self.block = int(block)
        self._buffer: list[float] = []

    def __repr__(self) -> str:
        return f"RandomStream(seed={self.seed}, stream_id={self.stream_id}, tag={self.tag}, block={self.block})"

    def next_block(self) -> tuple[float, float, float, float]:
        self._buffer.clear()
        out = uniform_block(self.seed, self.stream_id, self.tag, self.block)
        self.block += 1
        return out

    def uniform(self) -> float:
        if not self._buffer:
            self._buffer.extend(reversed(self.next_block()))
        return self._buffer.pop()

    def uniforms(self, n: int) -> np.ndarray:
        """``n`` uniforms from fresh blocks (any buffered values are dropped)."""
        self._buffer.clear()
        out = np.empty(n)
        _fill_uniforms(self.seed, self.stream_id, self.tag, self.block, out)
        self.block += (n + 3) // 4
        return out
