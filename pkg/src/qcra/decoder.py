"""Flooding belief-propagation decoding on the Tanner graph of ``H``.

The graph is taken from ``code.parity_check_matrix`` (CSR, one edge per
nonzero), so the same decoder serves base codes and extended codes.

LLR convention: ``ln P(bit=0 | y) / P(bit=1 | y)``; a negative posterior
decides 1, zero decides 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit
from numpy.typing import ArrayLike, NDArray

LLR_CLAMP = 30.0
MIN_SUM_SCALE = 0.8
VARIANTS = ("sum-product", "min-sum")

# tanh product bound; 2*atanh of this is ~30.6, clipped to LLR_CLAMP afterwards
_TANH_LIMIT = 1.0 - 1e-13


@dataclass(frozen=True)
class DecodeResult:
    bits: NDArray[np.uint8]
    converged: bool
    iterations_used: int
    variant: str = "sum-product"

    @property
    def detected_failure(self) -> bool:
        return not self.converged


@njit(cache=True)
def _half_var_to_check(post, c2v, edge_var, out):
    lim = LLR_CLAMP
    for e in range(edge_var.size):
        x = post[edge_var[e]] - c2v[e]
        if x > lim:
            x = lim
        elif x < -lim:
            x = -lim
        out[e] = 0.5 * x


@njit(cache=True)
def _var_to_check(post, c2v, edge_var, out):
    lim = LLR_CLAMP
    for e in range(edge_var.size):
        x = post[edge_var[e]] - c2v[e]
        if x > lim:
            x = lim
        elif x < -lim:
            x = -lim
        out[e] = x


@njit(cache=True)
def _exclusive_products(t, chk_ptr, out):
    lim = _TANH_LIMIT
    for c in range(chk_ptr.size - 1):
        a = chk_ptr[c]
        b = chk_ptr[c + 1]
        acc = 1.0
        for e in range(a, b):
            out[e] = acc
            acc *= t[e]
        acc = 1.0
        for e in range(b - 1, a - 1, -1):
            p = out[e] * acc
            acc *= t[e]
            if p > lim:
                p = lim
            elif p < -lim:
                p = -lim
            out[e] = p


@njit(cache=True)
def _scaled_min_sum(v2c, chk_ptr, scale, out):
    for c in range(chk_ptr.size - 1):
        a = chk_ptr[c]
        b = chk_ptr[c + 1]
        min1 = np.inf
        min2 = np.inf
        arg = -1
        neg = False
        for e in range(a, b):
            x = v2c[e]
            if x < 0:
                neg = not neg
                x = -x
            if x < min1:
                min2 = min1
                min1 = x
                arg = e
            elif x < min2:
                min2 = x
        for e in range(a, b):
            mag = min2 if e == arg else min1
            if mag > LLR_CLAMP:
                mag = LLR_CLAMP
            s = neg != (v2c[e] < 0)
            out[e] = -scale * mag if s else scale * mag


@njit(cache=True)
def _posterior(llr, c2v, edge_var, out):
    for v in range(llr.size):
        out[v] = llr[v]
    for e in range(edge_var.size):
        out[edge_var[e]] += c2v[e]


@njit(cache=True)
def _all_checks_satisfied(post, chk_ptr, edge_var):
    for c in range(chk_ptr.size - 1):
        odd = False
        for e in range(chk_ptr[c], chk_ptr[c + 1]):
            if post[edge_var[e]] < 0:
                odd = not odd
        if odd:
            return False
    return True


def variant_label(variant: str, min_sum_scale: float = MIN_SUM_SCALE) -> str:
    """Name recorded in results, e.g. ``sum-product`` or ``min-sum(scale=0.8)``."""
    return f"min-sum(scale={min_sum_scale:g})" if variant == "min-sum" else variant


def check_node_update(inbound: Sequence[float]) -> list[float]:
    """Sum-product check update: ``out_i = 2 atanh(prod_{j != i} tanh(in_j / 2))``."""
    x = np.asarray(inbound, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("check update needs at least two inbound messages")
    t = np.tanh(0.5 * np.clip(x, -LLR_CLAMP, LLR_CLAMP))
    out = np.empty_like(t)
    _exclusive_products(t, np.array([0, t.size], dtype=np.int64), out)
    return [float(v) for v in np.clip(2.0 * np.arctanh(out), -LLR_CLAMP, LLR_CLAMP)]


class BeliefPropagationDecoder:
    """Reusable decoder bound to one code.

    Scratch buffers live on the instance, so one instance must not be shared
    between threads; build one per worker.
    """

    def __init__(self, code, variant: str = "sum-product", min_sum_scale: float = MIN_SUM_SCALE):
        if variant not in VARIANTS:
            raise ValueError(f"unknown decoder variant {variant!r}; choose from {VARIANTS}")
        h = code.parity_check_matrix
        self.n = code.n
        self.variant = variant
        self.min_sum_scale = float(min_sum_scale)
        self._chk_ptr = np.ascontiguousarray(h.indptr, dtype=np.int64)
        self._edge_var = np.ascontiguousarray(h.indices, dtype=np.int64)
        edges = self._edge_var.size
        self._c2v = np.empty(edges)
        self._v2c = np.empty(edges)
        self._post = np.empty(self.n)

    @property
    def label(self) -> str:
        return variant_label(self.variant, self.min_sum_scale)

    def decode(self, llrs: ArrayLike, max_iterations: int = 100) -> DecodeResult:
        llr = np.ascontiguousarray(llrs, dtype=np.float64)
        if llr.ndim != 1 or llr.size != self.n:
            raise ValueError(f"expected {self.n} LLRs, got shape {llr.shape}")
        if not np.all(np.isfinite(llr)):
            raise ValueError("LLRs must be finite")
        if max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")

        c2v, v2c, post = self._c2v, self._v2c, self._post
        chk_ptr, edge_var = self._chk_ptr, self._edge_var
        c2v[:] = 0.0
        post[:] = llr
        sum_product = self.variant == "sum-product"
        converged = False
        it = 0
        for it in range(1, max_iterations + 1):
            if sum_product:
                _half_var_to_check(post, c2v, edge_var, v2c)
                np.tanh(v2c, out=v2c)
                _exclusive_products(v2c, chk_ptr, c2v)
                np.arctanh(c2v, out=c2v)
                c2v *= 2.0
                np.clip(c2v, -LLR_CLAMP, LLR_CLAMP, out=c2v)
            else:
                _var_to_check(post, c2v, edge_var, v2c)
                _scaled_min_sum(v2c, chk_ptr, self.min_sum_scale, c2v)
            _posterior(llr, c2v, edge_var, post)
            if _all_checks_satisfied(post, chk_ptr, edge_var):
                converged = True
                break
        bits = (post < 0).astype(np.uint8)
        return DecodeResult(bits, converged, it, self.label)


def decode(code, llrs: ArrayLike, max_iterations: int = 100, variant: str = "sum-product") -> DecodeResult:
    """One-shot decode; allocates its own scratch space."""
    return BeliefPropagationDecoder(code, variant).decode(llrs, max_iterations)
