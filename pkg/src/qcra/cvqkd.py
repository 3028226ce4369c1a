"""Secret key rate of Gaussian-modulated coherent-state CV-QKD.

Homodyne detection, reverse reconciliation, collective attacks, asymptotic
key length. The detector's inefficiency and electronic noise are trusted.
All variances are in shot-noise units and rates in bits per symbol.

Mutual information and Holevo bound as given in Lodewyck et al., PRA 76,
042305 (2007) and Fossier et al., J. Phys. B 42, 114014 (2009). Tests check
them against a covariance-matrix computation built from scratch::

    V       = V_A + 1
    chi_line = 1/T - 1 + eps
    chi_hom  = (1 + v_el)/eta - 1
    chi_tot  = chi_line + chi_hom / T
    I_AB    = 1/2 log2((V + chi_tot) / (1 + chi_tot))

    A = V^2 (1 - 2T) + 2T + T^2 (V + chi_line)^2
    B = T^2 (V chi_line + 1)^2
    C = (V sqrt(B) + T (V + chi_line) + A chi_hom) / (T (V + chi_tot))
    D = sqrt(B) (V + sqrt(B) chi_hom) / (T (V + chi_tot))
    lambda_{1,2}^2 = (A +- sqrt(A^2 - 4B)) / 2
    lambda_{3,4}^2 = (C +- sqrt(C^2 - 4D)) / 2,   lambda_5 = 1
    I_E = G((l1-1)/2) + G((l2-1)/2) - G((l3-1)/2) - G((l4-1)/2)
    G(x) = (x+1) log2(x+1) - x log2 x
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import Sequence


class DomainError(ValueError):
    """Parameters outside the physical range."""


@dataclass(frozen=True)
class CvqkdParams:
    modulation_variance: float
    transmission: float
    excess_noise: float = 0.01
    detector_efficiency: float = 0.6
    electronic_noise: float = 0.01
    attenuation_db_per_km: float = 0.2

    def validate(self) -> "CvqkdParams":
        if not self.modulation_variance > 0:
            raise DomainError(f"V_A must be positive, got {self.modulation_variance}")
        if not 0 < self.transmission <= 1:
            raise DomainError(f"T must lie in (0, 1], got {self.transmission}")
        if self.excess_noise < 0:
            raise DomainError(f"excess noise must be >= 0, got {self.excess_noise}")
        if not 0 < self.detector_efficiency <= 1:
            raise DomainError(f"eta must lie in (0, 1], got {self.detector_efficiency}")
        if self.electronic_noise < 0:
            raise DomainError(f"v_el must be >= 0, got {self.electronic_noise}")
        if self.attenuation_db_per_km <= 0:
            raise DomainError("attenuation must be positive")
        return self

    @property
    def distance_km(self) -> float:
        return -10.0 * math.log10(self.transmission) / self.attenuation_db_per_km

    def at_distance(self, km: float) -> "CvqkdParams":
        return replace(self, transmission=transmission_at(km, self.attenuation_db_per_km))


def transmission_at(distance_km: float, attenuation_db_per_km: float = 0.2) -> float:
    if distance_km < 0:
        raise DomainError("distance must be >= 0")
    return 10.0 ** (-attenuation_db_per_km * distance_km / 10.0)


def snr_from_params(p: CvqkdParams) -> float:
    """Channel SNR seen by reconciliation: ``eta T V_A / (1 + v_el + eta T eps)``."""
    p.validate()
    et = p.detector_efficiency * p.transmission
    return et * p.modulation_variance / (1.0 + p.electronic_noise + et * p.excess_noise)


def modulation_variance_for_snr(s: float, p: CvqkdParams) -> float:
    """``V_A`` that puts the channel at SNR ``s`` (inverse of :func:`snr_from_params`)."""
    if not s > 0:
        raise DomainError("SNR must be positive")
    et = p.detector_efficiency * p.transmission
    return s * (1.0 + p.electronic_noise + et * p.excess_noise) / et


def _g(x: float) -> float:
    if x <= 0.0:
        return 0.0
    return (x + 1.0) * math.log2(x + 1.0) - x * math.log2(x)


def _pair(a: float, b: float) -> tuple[float, float]:
    """Symplectic eigenvalues from trace-like ``a`` and determinant-like ``b``."""
    disc = math.sqrt(max(a * a - 4.0 * b, 0.0))
    return math.sqrt(max(0.5 * (a + disc), 0.0)), math.sqrt(max(0.5 * (a - disc), 0.0))


def mutual_information(p: CvqkdParams) -> float:
    p.validate()
    v = p.modulation_variance + 1.0
    chi_line = 1.0 / p.transmission - 1.0 + p.excess_noise
    chi_hom = (1.0 + p.electronic_noise) / p.detector_efficiency - 1.0
    chi_tot = chi_line + chi_hom / p.transmission
    return 0.5 * math.log2((v + chi_tot) / (1.0 + chi_tot))


def symplectic_eigenvalues(p: CvqkdParams) -> tuple[float, float, float, float]:
    """``(l1, l2, l3, l4)``: AB state, then A conditioned on Bob's measurement."""
    p.validate()
    t = p.transmission
    v = p.modulation_variance + 1.0
    chi_line = 1.0 / t - 1.0 + p.excess_noise
    chi_hom = (1.0 + p.electronic_noise) / p.detector_efficiency - 1.0
    chi_tot = chi_line + chi_hom / t
    a = v * v * (1.0 - 2.0 * t) + 2.0 * t + t * t * (v + chi_line) ** 2
    b = t * t * (v * chi_line + 1.0) ** 2
    sb = math.sqrt(b)
    c = (v * sb + t * (v + chi_line) + a * chi_hom) / (t * (v + chi_tot))
    d = sb * (v + sb * chi_hom) / (t * (v + chi_tot))
    return (*_pair(a, b), *_pair(c, d))


def holevo_bound(p: CvqkdParams) -> float:
    l1, l2, l3, l4 = symplectic_eigenvalues(p)
    return max(_g((l1 - 1) / 2) + _g((l2 - 1) / 2) - _g((l3 - 1) / 2) - _g((l4 - 1) / 2), 0.0)


@dataclass(frozen=True)
class KeyRatePoint:
    distance_km: float
    transmission: float
    modulation_variance: float
    snr_linear: float
    beta: float
    p_fail: float
    i_ab: float
    i_e: float
    delta_i: float
    feasible: bool = True

    @property
    def delta_i_floored(self) -> float:
        return max(self.delta_i, 0.0) if self.feasible else 0.0

    def as_row(self) -> dict:
        d = asdict(self)
        return {
            "distance_km": repr(d["distance_km"]),
            "T": repr(d["transmission"]),
            "V_A": repr(d["modulation_variance"]),
            "snr": repr(d["snr_linear"]),
            "beta": repr(d["beta"]),
            "p_fail": repr(d["p_fail"]),
            "i_ab": repr(d["i_ab"]),
            "i_e": repr(d["i_e"]),
            "delta_i": repr(d["delta_i"]),
            "delta_i_floored": repr(self.delta_i_floored),
            "feasible": int(self.feasible),
        }


def key_rate(p: CvqkdParams, beta: float, p_fail: float) -> KeyRatePoint:
    """``(beta I_AB - I_E)(1 - p_fail)`` with its ingredients."""
    if not 0 < beta <= 1:
        raise DomainError(f"beta must lie in (0, 1], got {beta}")
    if not 0 <= p_fail <= 1:
        raise DomainError(f"p_fail must lie in [0, 1], got {p_fail}")
    i_ab = mutual_information(p)
    i_e = holevo_bound(p)
    delta = (beta * i_ab - i_e) * (1.0 - p_fail)
    return KeyRatePoint(p.distance_km, p.transmission, p.modulation_variance, snr_from_params(p),
                        beta, p_fail, i_ab, i_e, delta)


@dataclass(frozen=True)
class CodeProfile:
    """Operating point of a reconciliation code, normally taken from a threshold measurement."""

    name: str
    rate: float
    operating_snr: float
    beta: float
    p_fail: float


def key_rate_vs_distance(profile: CodeProfile, template: CvqkdParams, distances_km: Sequence[float],
                         v_a_cap: float = 100.0) -> list[KeyRatePoint]:
    """Hold the channel at the code's operating SNR by re-solving ``V_A`` at each distance.

    Distances where the required ``V_A`` exceeds ``v_a_cap`` are returned
    with ``feasible=False`` and NaN rates.
    """
    if any(b <= a for a, b in zip(distances_km, distances_km[1:])):
        raise ValueError("distance grid must be strictly increasing")
    out = []
    for km in distances_km:
        p = template.at_distance(km)
        va = modulation_variance_for_snr(profile.operating_snr, p)
        if not 0 < va <= v_a_cap:
            nan = float("nan")
            out.append(KeyRatePoint(km, p.transmission, va, profile.operating_snr, profile.beta,
                                    profile.p_fail, nan, nan, nan, feasible=False))
            continue
        pt = key_rate(replace(p, modulation_variance=va), profile.beta, profile.p_fail)
        out.append(replace(pt, distance_km=km))
    return out


def max_positive_distance(points: Sequence[KeyRatePoint]) -> float | None:
    """Largest grid distance with a feasible, strictly positive key rate."""
    ok = [p.distance_km for p in points if p.feasible and p.delta_i > 0]
    return max(ok) if ok else None
