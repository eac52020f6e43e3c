"""Numerical substrate: Gauss hypergeometric 2F1, adaptive Gauss-Kronrod
quadrature and Richardson-extrapolated finite differences."""

from __future__ import annotations

import heapq
import math
from typing import Callable

import numpy as np

__all__ = [
    "DomainError",
    "QuadratureError",
    "hyp2f1",
    "gauss_kronrod",
    "derivative",
]


class DomainError(ValueError):
    """Raised when a special function is asked for a value it cannot produce."""


class QuadratureError(RuntimeError):
    """Raised when adaptive quadrature misses its tolerance."""

    def __init__(self, message: str, value: float, error: float):
        super().__init__(message)
        self.value = value
        self.error = error


# --------------------------------------------------------------------------- 2F1

_SERIES_CHUNK = 4096
_MAX_TERMS = 4_000_000


def _series(a: float, b: float, c: float, z: float, rtol: float) -> float:
    # Terms are generated in chunks with cumulative products of the term ratio.
    total = 0.0
    term = 1.0
    n0 = 0
    while n0 < _MAX_TERMS:
        n = np.arange(n0, n0 + _SERIES_CHUNK, dtype=float)
        ratios = (a + n) * (b + n) / ((c + n) * (n + 1.0)) * z
        terms = term * np.concatenate(([1.0], np.cumprod(ratios[:-1])))
        chunk_sum = float(np.sum(terms))
        total += chunk_sum
        term = float(terms[-1] * ratios[-1])
        if term == 0.0:
            return total
        # Remaining tail is bounded by a geometric series once ratios shrink below 1.
        r = abs(float(ratios[-1]))
        if r < 1.0:
            tail = abs(term) / (1.0 - r)
            if tail <= rtol * abs(total):
                return total
        n0 += _SERIES_CHUNK
    raise DomainError(f"2F1({a}, {b}; {c}; {z}) series did not converge")


_FAR_Z = 1e3


def _euler_integral(a: float, b: float, c: float, z: float, rtol: float) -> float:
    # Pfaff's series in z/(z-1) crawls as that argument nears 1, so for very
    # negative z integrate Euler's representation on a grid that resolves the
    # peak of (1 - z t)^-a near t = 1/|z|.
    def f(t):
        return t ** (b - 1.0) * (1.0 - t) ** (c - b - 1.0) * (1.0 - z * t) ** (-a)

    edges = [0.0]
    t = 1.0 / abs(z)
    while t < 0.5:
        edges.append(t)
        t *= 8.0
    edges.append(1.0)
    total = math.fsum(
        gauss_kronrod(f, lo, hi, atol=0.0, rtol=rtol, max_intervals=400)[0]
        for lo, hi in zip(edges[:-1], edges[1:])
    )
    log_norm = math.lgamma(c) - math.lgamma(b) - math.lgamma(c - b)
    return math.exp(log_norm) * total


def hyp2f1(a: float, b: float, c: float, z: float, rtol: float = 1e-13) -> float:
    """Gauss hypergeometric function for real arguments.

    Uses the power series for ``|z| < 0.5``, the Pfaff transformation
    ``2F1(a,b;c;z) = (1-z)^-a 2F1(a, c-b; c; z/(z-1))`` for ``z <= -0.5`` and
    Euler's integral once ``z <= -1000`` (when ``c > b > 0``).
    """
    a, b, c, z = float(a), float(b), float(c), float(z)
    if c <= 0.0 and c == math.floor(c):
        raise DomainError(f"2F1 undefined for non-positive integer c={c}")
    if z == 0.0:
        return 1.0
    if abs(z) < 0.5:
        return _series(a, b, c, z, rtol)
    if z <= -_FAR_Z and c > b > 0.0:
        return _euler_integral(a, b, c, z, rtol)
    if z < 0.0:
        w = z / (z - 1.0)
        return (1.0 - z) ** (-a) * _series(a, c - b, c, w, rtol)
    if z < 1.0:
        # 0.5 <= z < 1 is outside every use here; plain series is still valid.
        return _series(a, b, c, z, rtol)
    raise DomainError(f"2F1 not implemented for z={z} >= 1")


# --------------------------------------------------------------------- quadrature

# Gauss-Kronrod 15-point nodes on [0, 1] (symmetric half) and weights.
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
_NODES = np.concatenate((-_XGK[:-1], _XGK[::-1]))
_KWEIGHTS = np.concatenate((_WGK[:-1], _WGK[::-1]))
# Gauss points are the odd-indexed Kronrod nodes (1, 3, 5, 7 of the half).
_GWEIGHTS = np.zeros(15)
_GWEIGHTS[[1, 3, 5, 7, 9, 11, 13]] = np.concatenate((_WG[:-1], _WG[::-1]))


def _gk_segment(f: Callable[[np.ndarray], np.ndarray], lo: float, hi: float):
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    fx = np.asarray(f(mid + half * _NODES), dtype=float)
    k = half * float(np.dot(_KWEIGHTS, fx))
    g = half * float(np.dot(_GWEIGHTS, fx))
    return k, abs(k - g)


def gauss_kronrod(
    f: Callable[[np.ndarray], np.ndarray],
    lo: float,
    hi: float,
    atol: float = 1e-8,
    rtol: float = 0.0,
    max_intervals: int = 2000,
) -> tuple[float, float]:
    """Adaptive 15/7 Gauss-Kronrod integration of a vectorised integrand.

    Returns ``(value, error_estimate)``. Raises :class:`QuadratureError` when the
    subdivision budget runs out before ``error <= max(atol, rtol*|value|)``.
    """
    if hi == lo:
        return 0.0, 0.0
    sign = 1.0
    if hi < lo:
        lo, hi, sign = hi, lo, -1.0
    value, err = _gk_segment(f, lo, hi)
    heap = [(-err, lo, hi, value)]
    total, total_err = value, err
    n = 1
    while total_err > max(atol, rtol * abs(total)):
        if n >= max_intervals:
            raise QuadratureError(
                f"quadrature did not reach tolerance after {n} intervals "
                f"(achieved {total_err:.3g})",
                sign * total,
                total_err,
            )
        neg_err, a, b, v = heapq.heappop(heap)
        m = 0.5 * (a + b)
        v1, e1 = _gk_segment(f, a, m)
        v2, e2 = _gk_segment(f, m, b)
        total += v1 + v2 - v
        total_err += e1 + e2 + neg_err
        heapq.heappush(heap, (-e1, a, m, v1))
        heapq.heappush(heap, (-e2, m, b, v2))
        n += 1
    # Re-sum to shed accumulated rounding from the running updates.
    total = math.fsum(item[3] for item in heap)
    total_err = math.fsum(-item[0] for item in heap)
    return sign * total, total_err


# -------------------------------------------------------------------- derivatives

_FD_STENCILS = {
    # central difference coefficients on offsets -k..k (second-order accurate)
    1: (np.array([-1.0, 0.0, 1.0]) / 2.0, 1),
    2: (np.array([1.0, -2.0, 1.0]), 1),
    3: (np.array([-1.0, 2.0, 0.0, -2.0, 1.0]) / 2.0, 2),
}


def _central(f: Callable[[float], float], x: float, k: int, h: float) -> float:
    coeffs, reach = _FD_STENCILS[k]
    offsets = np.arange(-reach, reach + 1)
    vals = np.array([f(x + o * h) for o in offsets])
    return float(np.dot(coeffs, vals)) / h**k


def derivative(
    f: Callable[[float], float],
    x: float,
    k: int,
    step: float | None = None,
    levels: int = 4,
) -> float:
    """k-th derivative (k <= 3) by central differences with Richardson extrapolation.

    The step halves at each level and the O(h^2) error terms are eliminated
    with the usual Neville tableau.
    """
    if k == 0:
        return float(f(x))
    if k not in _FD_STENCILS:
        raise ValueError(f"derivative order {k} not supported")
    h = step if step is not None else 0.1 * max(abs(x), 1e-8)
    table = [[_central(f, x, k, h / 2**i)] for i in range(levels)]
    for j in range(1, levels):
        factor = 4.0**j
        for i in range(j, levels):
            prev = table[i][j - 1]
            table[i].append((factor * prev - table[i - 1][j - 1]) / (factor - 1.0))
    return table[-1][-1]
