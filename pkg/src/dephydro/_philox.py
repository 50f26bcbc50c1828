"""Philox4x64-10 counter-based generator, compiled with numba.

Bit-compatible with ``numpy.random.Philox`` (which applies the block function
to ``counter + 1``), so numpy serves as an independent reference in tests.
"""

import numpy as np
from llvmlite import ir
from numba import njit, types
from numba.extending import intrinsic

_S11 = np.uint64(11)
_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_INV53 = 1.0 / 9007199254740992.0


@intrinsic
def _mulhi(typingctx, a, b):
    """High 64 bits of the 128-bit product, as one native multiply."""
    sig = types.uint64(types.uint64, types.uint64)

    def codegen(context, builder, signature, args):
        wide = ir.IntType(128)
        prod = builder.mul(builder.zext(args[0], wide), builder.zext(args[1], wide))
        return builder.trunc(builder.lshr(prod, ir.Constant(wide, 64)), ir.IntType(64))

    return sig, codegen


@njit(inline="always", cache=True)
def _round(c0, c1, c2, c3, k0, k1):
    return (_mulhi(_M1, c2) ^ c1 ^ k0, _M1 * c2, _mulhi(_M0, c0) ^ c3 ^ k1, _M0 * c0)


# the rounds are unrolled by hand: a loop here costs 4x in throughput
@njit(inline="always", cache=True)
def philox4x64(c0, c1, c2, c3, k0, k1):
    """Ten-round Philox block: four 64-bit words from (counter, key)."""
    c0 = np.uint64(c0)
    c1 = np.uint64(c1)
    c2 = np.uint64(c2)
    c3 = np.uint64(c3)
    k0 = np.uint64(k0)
    k1 = np.uint64(k1)
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0 += _W0
    k1 += _W1
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0 += _W0
    k1 += _W1
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0 += _W0
    k1 += _W1
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0 += _W0
    k1 += _W1
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0 += _W0
    k1 += _W1
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0 += _W0
    k1 += _W1
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0 += _W0
    k1 += _W1
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0 += _W0
    k1 += _W1
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0 += _W0
    k1 += _W1
    return _round(c0, c1, c2, c3, k0, k1)


@njit(inline="always", cache=True)
def to_unit(u):
    """Map a 64-bit word to a double in [0, 1) using its top 53 bits."""
    return float(np.int64(u >> _S11)) * _INV53


@njit(cache=True)
def philox_block(c0, c1, c2, c3, k0, k1):
    """Out-of-line entry point for Python callers and tests."""
    return philox4x64(c0, c1, c2, c3, k0, k1)
