"""Rate adaptation around a base code: hop, puncture, extend, repeat.

Puncturing withholds parity bits (the decoder sees LLR 0), extending appends
weight-2 checks on message bits with one fresh parity bit each, and
repetition sends every codeword bit ``k`` times and adds the LLRs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, partial
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from numpy.typing import ArrayLike, NDArray

from .codebook import QcRaCode

KINDS = ("hop", "puncture", "extend", "repeat")
PUNCTURE_RULE = "parity-even-v1"
EXTENSION_RULE = "weight2-cyclic-v1"
MODES = {
    "hop": ("hop", "repeat"),
    "adapt": ("hop", "puncture", "extend"),
    "all": KINDS,
}


class InfeasibleSchemeError(RuntimeError):
    """No scheme in the bank reaches the requested SNR."""


def puncture_positions(k: int, m: int, count: int) -> NDArray[np.int64]:
    """``count`` parity positions spread evenly along the accumulator chain."""
    if not 0 <= count <= m:
        raise ValueError(f"can puncture between 0 and {m} parity bits, asked for {count}")
    i = np.arange(count, dtype=np.int64)
    return k + (i * m) // count if count else i


@dataclass(frozen=True)
class RateAdaptScheme:
    kind: str
    n: int
    k: int
    puncture_count: int = 0
    extension_count: int = 0
    repeat_factor: int = 1
    base_name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown scheme kind {self.kind!r}")
        if self.kind == "puncture" and not 0 < self.puncture_count <= self.n - self.k:
            raise ValueError("puncture count must lie in [1, M]")
        if self.kind == "extend" and self.extension_count < 1:
            raise ValueError("extension count must be >= 1")
        if self.kind == "repeat" and self.repeat_factor < 2:
            raise ValueError("repeat factor must be >= 2")

    @property
    def base_rate(self) -> Fraction:
        return Fraction(self.k, self.n)

    @property
    def transmitted_bits(self) -> int:
        """Channel uses per codeword."""
        if self.kind == "puncture":
            return self.n - self.puncture_count
        if self.kind == "extend":
            return self.n + self.extension_count
        if self.kind == "repeat":
            return self.n * self.repeat_factor
        return self.n

    @property
    def overall_rate(self) -> Fraction:
        return Fraction(self.k, self.transmitted_bits)

    @property
    def puncture_pattern(self) -> NDArray[np.int64]:
        if self.kind != "puncture":
            return np.empty(0, dtype=np.int64)
        return puncture_positions(self.k, self.n - self.k, self.puncture_count)

    @property
    def label(self) -> str:
        if self.kind == "puncture":
            return f"puncture({self.puncture_count})"
        if self.kind == "extend":
            return f"extend({self.extension_count})"
        if self.kind == "repeat":
            return f"repeat({self.repeat_factor})"
        return "hop"

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind,
            "base": self.base_name,
            "n": self.n,
            "k": self.k,
            "overall_rate": str(self.overall_rate),
        }
        if self.kind == "puncture":
            d.update(puncture_count=self.puncture_count, puncture_rule=PUNCTURE_RULE)
        elif self.kind == "extend":
            d.update(extension_count=self.extension_count, extension_rule=EXTENSION_RULE)
        elif self.kind == "repeat":
            d.update(repeat_factor=self.repeat_factor)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RateAdaptScheme":
        return cls(
            kind=d["kind"],
            n=int(d["n"]),
            k=int(d["k"]),
            puncture_count=int(d.get("puncture_count", 0)),
            extension_count=int(d.get("extension_count", 0)),
            repeat_factor=int(d.get("repeat_factor", 1)),
            base_name=d.get("base", ""),
        )


def hop(code: QcRaCode) -> RateAdaptScheme:
    return RateAdaptScheme("hop", code.n, code.k, base_name=code.name)


def puncture(code: QcRaCode, count: int) -> RateAdaptScheme:
    return RateAdaptScheme("puncture", code.n, code.k, puncture_count=count, base_name=code.name)


def extend(code: QcRaCode, m_e: int) -> RateAdaptScheme:
    return RateAdaptScheme("extend", code.n, code.k, extension_count=m_e, base_name=code.name)


def repeat(code: QcRaCode, factor: int) -> RateAdaptScheme:
    return RateAdaptScheme("repeat", code.n, code.k, repeat_factor=factor, base_name=code.name)


def puncture_count_for_rate(n: int, k: int, rate) -> int:
    """Largest puncture count whose overall rate does not exceed ``rate``."""
    return max(0, math.floor(n - k / Fraction(rate)))


def extension_count_for_rate(n: int, k: int, rate) -> int:
    """Smallest extension whose overall rate does not exceed ``rate``."""
    return max(0, math.ceil(k / Fraction(rate) - n))


def puncture_llrs(llrs: ArrayLike, pattern: Iterable[int]) -> NDArray[np.float64]:
    """Copy of ``llrs`` with the punctured positions erased (LLR 0)."""
    out = np.array(llrs, dtype=np.float64)
    idx = np.fromiter(pattern, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= out.size):
        raise ValueError("puncture position out of range")
    out[idx] = 0.0
    return out


def combine_repeated_llrs(llr_groups: ArrayLike | Sequence[Sequence[float]]) -> NDArray[np.float64]:
    """Sum each group of ``k`` independent LLR observations of the same bit."""
    try:
        arr = np.asarray(llr_groups, dtype=np.float64)
    except ValueError:
        raise ValueError("repetition groups must all have the same size") from None
    if arr.ndim != 2:
        raise ValueError("repetition groups must all have the same size")
    if arr.shape[1] < 2:
        raise ValueError("repetition factor must be >= 2")
    return arr.sum(axis=1)


@dataclass(frozen=True, eq=False)
class ExtendedCode:
    """``[[H1, A, 0], [E, 0, I]]``: the base code plus ``m_e`` weight-2 checks.

    ``e_cols[i]`` holds the two message columns of extra row ``i``; extra
    parity bit ``i`` is their XOR and is appended after the base codeword.
    """

    base: QcRaCode
    e_cols: NDArray[np.int64]

    @property
    def m_e(self) -> int:
        return int(self.e_cols.shape[0])

    @property
    def n(self) -> int:
        return self.base.n + self.m_e

    @property
    def k(self) -> int:
        return self.base.k

    @property
    def m_checks(self) -> int:
        return self.base.m + self.m_e

    @property
    def rate(self) -> Fraction:
        return Fraction(self.k, self.n)

    @property
    def name(self) -> str:
        return f"{self.base.name}+ext{self.m_e}"

    def extra_parity(self, msg: NDArray[np.uint8]) -> NDArray[np.uint8]:
        return msg[self.e_cols[:, 0]] ^ msg[self.e_cols[:, 1]]

    @cached_property
    def parity_check_matrix(self) -> sp.csr_matrix:
        b = self.base
        me = self.m_e
        rows = np.repeat(np.arange(me), 2)
        e = sp.csr_matrix((np.ones(2 * me, dtype=np.uint8), (rows, self.e_cols.ravel())), shape=(me, b.k))
        top = sp.hstack([b.parity_check_matrix, sp.csr_matrix((b.m, me), dtype=np.uint8)])
        bottom = sp.hstack([e, sp.csr_matrix((me, b.m), dtype=np.uint8), sp.eye(me, dtype=np.uint8)])
        h = sp.vstack([top, bottom], format="csr", dtype=np.uint8)
        h.sort_indices()
        return h


def build_extended(code: QcRaCode, m_e: int) -> ExtendedCode:
    """Row ``i`` of ``E`` joins message columns ``i mod K`` and ``(i + 1 + i//K) mod K``."""
    if m_e < 1:
        raise ValueError("m_e must be >= 1")
    k = code.k
    i = np.arange(m_e, dtype=np.int64)
    j1 = i % k
    j2 = (i + 1 + i // k) % k
    if np.any(j1 == j2):
        bad = int(i[j1 == j2][0])
        raise ValueError(f"extension row {bad} would join column {j1[bad]} to itself")
    pairs = np.stack([j1, j2], axis=1)
    canon = np.sort(pairs, axis=1)
    if np.unique(canon, axis=0).shape[0] != m_e:
        raise ValueError(f"m_e = {m_e} produces repeated extension rows for K = {k}")
    pairs.setflags(write=False)
    return ExtendedCode(code, pairs)


# -- scheme selection ---------------------------------------------------------


@dataclass(frozen=True)
class CodebankEntry:
    """Measured thresholds for one base code at one WER target.

    ``puncture_points`` and ``extend_points`` are ``(overall_rate,
    threshold_snr)`` pairs; thresholds for rates in between are interpolated
    linearly in dB, and nothing is extrapolated beyond the measured range.
    """

    name: str
    n: int
    k: int
    threshold_snr: float
    wer_target: float
    puncture_points: tuple[tuple[Fraction, float], ...] = ()
    extend_points: tuple[tuple[Fraction, float], ...] = ()

    @property
    def rate(self) -> Fraction:
        return Fraction(self.k, self.n)

    def curve(self, kind: str) -> list[tuple[float, float]]:
        pts = self.puncture_points if kind == "puncture" else self.extend_points
        base = (float(self.rate), 10 * math.log10(self.threshold_snr))
        out = [base] + [(float(r), 10 * math.log10(t)) for r, t in pts]
        return sorted(set(out))


def _max_rate_on_curve(curve: list[tuple[float, float]], s_db: float) -> float | None:
    """Largest rate on a piecewise-linear (rate, threshold_dB) curve with threshold <= s_db."""
    best = None
    for r, t in curve:
        if t <= s_db:
            best = r if best is None else max(best, r)
    for (r0, t0), (r1, t1) in zip(curve, curve[1:]):
        lo, hi = min(t0, t1), max(t0, t1)
        if lo <= s_db <= hi and t1 != t0:
            r = r0 + (s_db - t0) * (r1 - r0) / (t1 - t0)
            best = r if best is None else max(best, r)
    return best


def _interp_threshold_db(curve: list[tuple[float, float]], rate: float) -> float:
    rs = [r for r, _ in curve]
    ts = [t for _, t in curve]
    return float(np.interp(rate, rs, ts))


@dataclass(frozen=True)
class Selection:
    scheme: RateAdaptScheme
    entry: CodebankEntry
    predicted_threshold_snr: float

    @property
    def overall_rate(self) -> Fraction:
        return self.scheme.overall_rate


_PREFERENCE = {"hop": 0, "puncture": 1, "extend": 1, "repeat": 2}


def candidate_schemes(entry: CodebankEntry, target_snr: float, kinds: Sequence[str], max_repeat: int = 16) -> list[Selection]:
    s_db = 10 * math.log10(target_snr)
    thr = entry.threshold_snr
    out = []
    mk = partial(RateAdaptScheme, n=entry.n, k=entry.k, base_name=entry.name)
    if "hop" in kinds and target_snr >= thr:
        out.append(Selection(mk(kind="hop"), entry, thr))
    if "repeat" in kinds:
        for f in range(2, max_repeat + 1):
            if target_snr * f >= thr:
                out.append(Selection(mk(kind="repeat", repeat_factor=f), entry, thr / f))
                break
    for kind in ("puncture", "extend"):
        if kind not in kinds:
            continue
        curve = entry.curve(kind)
        if len(curve) < 2:
            continue
        r = _max_rate_on_curve(curve, s_db)
        if r is None:
            continue
        if kind == "puncture":
            count = puncture_count_for_rate(entry.n, entry.k, r)
            count = min(count, entry.n - entry.k)
            if count < 1:
                continue
            sch = mk(kind="puncture", puncture_count=count)
        else:
            count = extension_count_for_rate(entry.n, entry.k, r)
            if count < 1:
                continue
            sch = mk(kind="extend", extension_count=count)
        pred = 10 ** (_interp_threshold_db(curve, float(sch.overall_rate)) / 10)
        out.append(Selection(sch, entry, pred))
    return out


def select_scheme(
    target_snr: float,
    wer_target: float,
    codebank: Sequence[CodebankEntry],
    mode: str = "all",
    max_repeat: int = 16,
) -> Selection:
    """Highest-rate scheme whose predicted threshold does not exceed ``target_snr``.

    ``mode`` restricts the kinds considered: ``"hop"`` (hopping plus
    repetition), ``"adapt"`` (hopping plus puncture/extend) or ``"all"``.
    Ties go to plain hopping, then puncture/extend, then repetition.
    """
    if not 0 < wer_target < 1:
        raise ValueError("wer_target must lie in (0, 1)")
    kinds = MODES[mode]
    bank = [e for e in codebank if math.isclose(e.wer_target, wer_target)]
    if not bank:
        raise ValueError(f"no codebank entry measured at WER {wer_target}")
    cands = [c for e in bank for c in candidate_schemes(e, target_snr, kinds, max_repeat)]
    if not cands:
        raise InfeasibleSchemeError(
            f"SNR {target_snr:.4g} is below the reach of every scheme in mode {mode!r}"
        )
    return max(cands, key=lambda c: (c.overall_rate, -_PREFERENCE[c.scheme.kind]))
