"""Arithmetic in GF(2^8) with the 0x11D reduction polynomial.

Scalar helpers work on Python ints; the ``*_vec`` helpers operate on numpy
uint8 arrays so that whole stripes are processed at once.
"""

from __future__ import annotations

import numpy as np

POLY = 0x11D

EXP = np.zeros(512, dtype=np.int32)
LOG = np.zeros(256, dtype=np.int32)

_x = 1
for _i in range(255):
    EXP[_i] = _x
    LOG[_x] = _i
    _x <<= 1
    if _x & 0x100:
        _x ^= POLY
EXP[255:510] = EXP[0:255]
del _x, _i

_EXP = [int(v) for v in EXP]
_LOG = [int(v) for v in LOG]


def mul(a: int, b: int) -> int:
    if a == 0 or b == 0:
        return 0
    return _EXP[_LOG[a] + _LOG[b]]


def inv(a: int) -> int:
    if a == 0:
        raise ZeroDivisionError("0 has no inverse in GF(256)")
    return _EXP[255 - _LOG[a]]


def div(a: int, b: int) -> int:
    return mul(a, inv(b))


def scale_vec(c: int, vec: np.ndarray) -> np.ndarray:
    """Multiply every byte of ``vec`` by the scalar ``c``."""
    if c == 0:
        return np.zeros_like(vec)
    if c == 1:
        return vec.copy()
    out = EXP[LOG[vec] + _LOG[c]].astype(np.uint8)
    out[vec == 0] = 0
    return out


def lagrange_coefficients(xs: list[int], x: int) -> list[int]:
    """Coefficients c_i with P(x) = sum c_i * P(xs[i]) for deg P < len(xs)."""
    coeffs = []
    for i, xi in enumerate(xs):
        num, den = 1, 1
        for m, xm in enumerate(xs):
            if m == i:
                continue
            num = mul(num, x ^ xm)
            den = mul(den, xi ^ xm)
        coeffs.append(div(num, den))
    return coeffs


def interpolate(xs: list[int], ys: list[np.ndarray], targets: list[int]) -> list[np.ndarray]:
    """Evaluate, at each target point, the polynomial through (xs, ys) stripe-wise."""
    known = dict(zip(xs, ys))
    out = []
    for t in targets:
        if t in known:
            out.append(known[t].copy())
            continue
        acc = np.zeros_like(ys[0])
        for c, y in zip(lagrange_coefficients(xs, t), ys):
            acc ^= scale_vec(c, y)
        out.append(acc)
    return out
