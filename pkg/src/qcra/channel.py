"""BI-AWGN channel: BPSK transmission, LLRs, capacity and reconciliation efficiency.

SNR convention: unit-energy BPSK (bit 0 -> +1, bit 1 -> -1), ``s = 1/sigma^2``
per symbol.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import brentq

CAPACITY_MODELS = ("gaussian", "bi_awgn")
GAUSS_HERMITE_NODES = 160


def snr_db(s: float) -> float:
    return 10.0 * math.log10(s)


def snr_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class ChannelParams:
    snr_linear: float

    def __post_init__(self):
        if not self.snr_linear > 0:
            raise ValueError(f"SNR must be positive, got {self.snr_linear}")

    @classmethod
    def from_db(cls, db: float) -> "ChannelParams":
        return cls(snr_linear(db))

    @property
    def noise_variance(self) -> float:
        return 1.0 / self.snr_linear

    @property
    def snr_db(self) -> float:
        return snr_db(self.snr_linear)


def trial_rng(master_seed: int, trial_index: int) -> np.random.Generator:
    """Philox stream for one trial, keyed on ``(master_seed, trial_index)``."""
    seq = np.random.SeedSequence(master_seed & (2**64 - 1), spawn_key=(trial_index,))
    return np.random.Generator(np.random.Philox(seq))


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def bpsk(bits: ArrayLike) -> NDArray[np.float64]:
    return 1.0 - 2.0 * np.asarray(bits, dtype=np.float64)


def llr_from_observation(y: ArrayLike, noise_variance: float, amplitude: float = 1.0) -> NDArray[np.float64]:
    """``2 a y / sigma^2`` for antipodal symbols ``+-a``; unchanged if ``a``, ``y`` and ``sigma`` scale together."""
    return 2.0 * amplitude * np.asarray(y, dtype=np.float64) / noise_variance


def transmit(codeword: ArrayLike, params: ChannelParams, rng_seed=None, *, repeats: int = 1) -> NDArray[np.float64]:
    """Send ``codeword`` over BPSK/AWGN and return channel LLRs.

    With ``repeats > 1`` every bit is sent that many times and the result has
    shape ``(n, repeats)``, one column per independent observation.
    """
    rng = _rng(rng_seed)
    x = bpsk(codeword)
    sigma2 = params.noise_variance
    shape = x.shape if repeats == 1 else x.shape + (repeats,)
    noise = rng.normal(0.0, math.sqrt(sigma2), size=shape)
    y = (x if repeats == 1 else x[:, None]) + noise
    return llr_from_observation(y, sigma2)


def capacity_gaussian(s: ArrayLike):
    """Shannon capacity ``0.5 log2(1 + s)`` in bits per real symbol."""
    return 0.5 * np.log2(1.0 + np.asarray(s, dtype=np.float64))


@lru_cache(maxsize=4)
def _hermite(nodes: int):
    return np.polynomial.hermite.hermgauss(nodes)


def capacity_bi_awgn(s: ArrayLike, nodes: int = GAUSS_HERMITE_NODES):
    """Mutual information of equiprobable BPSK over AWGN at SNR ``s``.

    ``1 - E[log2(1 + exp(-L))]`` with ``L ~ N(2s, 4s)`` the LLR given bit 0,
    integrated by Gauss-Hermite quadrature. With 160 nodes the absolute error
    is below 1e-8 for ``1e-3 <= s <= 100``.
    """
    s_arr = np.asarray(s, dtype=np.float64)
    if np.any(s_arr <= 0):
        raise ValueError("SNR must be positive")
    x, w = _hermite(nodes)
    llr = 2.0 * s_arr[..., None] + np.sqrt(8.0 * s_arr[..., None]) * x
    loss = np.logaddexp(0.0, -llr) / math.log(2.0)
    out = 1.0 - (loss * w).sum(axis=-1) / math.sqrt(math.pi)
    return out if out.ndim else float(out)


def capacity(s, model: str = "gaussian"):
    if model == "gaussian":
        return capacity_gaussian(s)
    if model == "bi_awgn":
        return capacity_bi_awgn(s)
    raise ValueError(f"unknown capacity model {model!r}; choose from {CAPACITY_MODELS}")


def snr_for_capacity(c: float, model: str = "gaussian") -> float:
    """Inverse of :func:`capacity`: the SNR at which capacity equals ``c``."""
    if model == "gaussian":
        if c <= 0:
            raise ValueError("capacity must be positive")
        return 2.0 ** (2.0 * c) - 1.0
    if not 0 < c < 1:
        raise ValueError("BI-AWGN capacity lies in (0, 1)")
    return brentq(lambda s: capacity_bi_awgn(s) - c, 1e-9, 1e4, xtol=1e-14, rtol=1e-13)


@dataclass(frozen=True)
class EfficiencyResult:
    code_rate: Fraction
    capacity_model: str
    c_of_s: float
    beta: float
    snr_at_measurement: float
    wer_at_measurement: float | None = None

    @property
    def snr_db(self) -> float:
        return snr_db(self.snr_at_measurement)

    @property
    def exceeds_capacity(self) -> bool:
        """Set when ``beta > 1``, i.e. the measurement is inconsistent with the capacity model."""
        return self.beta > 1.0

    def as_dict(self) -> dict:
        d = asdict(self)
        d["code_rate"] = str(self.code_rate)
        d["snr_db"] = self.snr_db
        d["exceeds_capacity"] = self.exceeds_capacity
        return d


def efficiency(rate, s: float, model: str = "gaussian", wer: float | None = None) -> EfficiencyResult:
    """Reconciliation efficiency ``beta = R / C(s)``."""
    if not s > 0:
        raise ValueError("SNR must be positive")
    rate = Fraction(rate)
    c = float(capacity(s, model))
    return EfficiencyResult(rate, model, c, float(rate) / c, float(s), wer)
