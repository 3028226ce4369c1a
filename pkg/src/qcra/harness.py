"""Monte-Carlo WER estimation, threshold search and efficiency sweeps.

Every trial draws its message and noise from a Philox stream keyed on
``(seed, trial_index)``, and stopping decisions only ever look at outcomes in
trial-index order. Results are therefore a pure function of the
configuration and seed, whatever the worker count or block size.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import multiprocessing as mp
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from . import __version__
from .channel import (
    ChannelParams,
    capacity,
    efficiency,
    snr_db,
    snr_for_capacity,
    snr_linear,
    transmit,
    trial_rng,
)
from .codebook import QcRaCode
from .decoder import BeliefPropagationDecoder, variant_label
from .encoder import encode
from .rate_adapt import (
    CodebankEntry,
    InfeasibleSchemeError,
    RateAdaptScheme,
    build_extended,
    combine_repeated_llrs,
    hop,
    select_scheme,
)

log = logging.getLogger(__name__)

DEFAULT_MAX_ITERATIONS = 100
WER_TARGETS = (0.5, 0.1, 0.01, 0.001)


class ThresholdRangeError(RuntimeError):
    """The configured SNR range does not bracket the WER target."""


# -- statistics ----------------------------------------------------------------


def wilson_interval(errors: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval; with zero errors, the exact one-sided upper bound instead."""
    if trials <= 0:
        return 0.0, 1.0
    if errors == 0:
        return 0.0, 1.0 - (1.0 - confidence) ** (1.0 / trials)
    z = stats.norm.ppf(0.5 + confidence / 2)
    p = errors / trials
    denom = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


# -- records -------------------------------------------------------------------


@dataclass(frozen=True)
class StopRule:
    """Stop at ``min_errors`` word errors or ``max_trials`` trials.

    With ``separate_from`` set, also stop at any multiple of ``check_every``
    trials once the 95% interval excludes that WER.
    """

    min_errors: int = 50
    max_trials: int = 10_000
    separate_from: float | None = None
    check_every: int = 50


@dataclass(frozen=True)
class WerPoint:
    snr_linear: float
    trials: int
    word_errors: int
    undetected_errors: int
    wer: float
    wilson_ci_95: tuple[float, float]
    max_iterations: int
    decoder_variant: str
    seed: int
    avg_iterations: float
    scheme: dict = field(default_factory=dict)
    code_id: str = ""

    @property
    def snr_db(self) -> float:
        return snr_db(self.snr_linear)

    @property
    def detected_failures(self) -> int:
        return self.word_errors - self.undetected_errors

    def as_row(self) -> dict:
        lo, hi = self.wilson_ci_95
        return {
            "code_id": self.code_id,
            "scheme": self.scheme.get("kind", "hop"),
            "overall_rate": self.scheme.get("overall_rate", ""),
            "snr_linear": repr(self.snr_linear),
            "snr_db": repr(self.snr_db),
            "trials": self.trials,
            "word_errors": self.word_errors,
            "undetected_errors": self.undetected_errors,
            "wer": repr(self.wer),
            "ci_low": repr(lo),
            "ci_high": repr(hi),
            "avg_iterations": repr(self.avg_iterations),
            "max_iterations": self.max_iterations,
            "decoder_variant": self.decoder_variant,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class ThresholdResult:
    wer_target: float
    snr_at_target: float
    bracket_db: tuple[float, float]
    points: tuple[WerPoint, ...]
    separated: bool

    @property
    def snr_db(self) -> float:
        return snr_db(self.snr_at_target)

    @property
    def bracket_linear(self) -> tuple[float, float]:
        return snr_linear(self.bracket_db[0]), snr_linear(self.bracket_db[1])

    @property
    def certified_linear(self) -> tuple[float, float]:
        """``(highest SNR whose WER is significantly above target, lowest SNR significantly below)``.

        Each end is backed by its own 95% interval, so the true threshold lies
        between them unless that probe's interval missed. Falls back to the
        bracket end when no probe on that side separated.
        """
        above = [p.snr_linear for p in self.points if _side(p, self.wer_target) == 1]
        below = [p.snr_linear for p in self.points if _side(p, self.wer_target) == -1]
        lo, hi = self.bracket_linear
        return (max(above) if above else lo), (min(below) if below else hi)

    def as_dict(self) -> dict:
        return {
            "wer_target": self.wer_target,
            "snr_at_target": self.snr_at_target,
            "snr_db": self.snr_db,
            "bracket_db": list(self.bracket_db),
            "separated": self.separated,
            "points": [p.as_row() for p in self.points],
        }


# -- trial execution -------------------------------------------------------------


class _PreparedScheme:
    """Code, decoder and scheme parameters ready for repeated trials."""

    def __init__(self, code: QcRaCode, scheme: RateAdaptScheme, variant: str):
        self.scheme = scheme
        self.sim_code = build_extended(code, scheme.extension_count) if scheme.kind == "extend" else code
        self.decoder = BeliefPropagationDecoder(self.sim_code, variant)
        self.pattern = scheme.puncture_pattern
        self.repeats = scheme.repeat_factor if scheme.kind == "repeat" else 1

    def trial(self, snr: float, max_iterations: int, seed: int, index: int) -> tuple[bool, bool, int]:
        """Returns ``(word_error, undetected, iterations)`` for one codeword."""
        rng = trial_rng(seed, index)
        msg = rng.integers(0, 2, size=self.sim_code.k, dtype=np.uint8)
        cw = encode(self.sim_code, msg)
        llr = transmit(cw, ChannelParams(snr), rng, repeats=self.repeats)
        if self.repeats > 1:
            llr = combine_repeated_llrs(llr)
        if self.pattern.size:
            llr[self.pattern] = 0.0
        res = self.decoder.decode(llr, max_iterations)
        wrong = not np.array_equal(res.bits, cw)
        return (not res.converged) or wrong, res.converged and wrong, res.iterations_used


_WORKER: _PreparedScheme | None = None


def _init_worker(code, scheme, variant):
    global _WORKER
    _WORKER = _PreparedScheme(code, scheme, variant)


def _run_chunk(args):
    snr, max_iterations, seed, indices = args
    return [_WORKER.trial(snr, max_iterations, seed, i) for i in indices]


class Simulator:
    """Runs WER estimates for one (code, scheme, decoder variant).

    Use as a context manager when ``workers > 1`` so the process pool is
    released.
    """

    def __init__(self, code: QcRaCode, scheme: RateAdaptScheme | None = None, *,
                 variant: str = "sum-product", workers: int = 1, block_size: int = 50):
        self.code = code
        self.scheme = scheme or hop(code)
        self.variant = variant
        self.workers = max(1, int(workers))
        self.block_size = block_size
        self._local = _PreparedScheme(code, self.scheme, variant) if self.workers == 1 else None
        self._pool = None
        if self.workers > 1:
            ctx = mp.get_context("fork")
            self._pool = ProcessPoolExecutor(self.workers, mp_context=ctx, initializer=_init_worker,
                                             initargs=(code, self.scheme, variant))

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    @property
    def decoder_label(self) -> str:
        return variant_label(self.variant)

    def _run_block(self, snr, max_iterations, seed, indices: list[int]):
        if self._pool is None:
            return [self._local.trial(snr, max_iterations, seed, i) for i in indices]
        chunks = [indices[w :: self.workers] for w in range(self.workers)]
        results = self._pool.map(_run_chunk, [(snr, max_iterations, seed, c) for c in chunks if c])
        by_index = {}
        for chunk, res in zip([c for c in chunks if c], results):
            by_index.update(zip(chunk, res))
        return [by_index[i] for i in indices]

    def wer(self, snr: float, max_iterations: int = DEFAULT_MAX_ITERATIONS,
            stop: StopRule = StopRule(), seed: int = 0) -> WerPoint:
        if not snr > 0:
            raise ValueError("SNR must be positive")
        errors = undetected = iterations = n = 0
        done = False
        next_index = 0
        while not done:
            block = list(range(next_index, min(next_index + self.block_size, stop.max_trials)))
            next_index += len(block)
            for err, und, its in self._run_block(snr, max_iterations, seed, block):
                n += 1
                errors += err
                undetected += und
                iterations += its
                if errors >= stop.min_errors or n >= stop.max_trials:
                    done = True
                elif stop.separate_from is not None and n % stop.check_every == 0:
                    lo, hi = wilson_interval(errors, n)
                    done = lo > stop.separate_from or hi < stop.separate_from
                if done:
                    break
        return WerPoint(
            snr_linear=float(snr), trials=n, word_errors=errors, undetected_errors=undetected,
            wer=errors / n, wilson_ci_95=wilson_interval(errors, n), max_iterations=max_iterations,
            decoder_variant=self.decoder_label, seed=seed, avg_iterations=iterations / n,
            scheme=self.scheme.to_dict(), code_id=self.code.fingerprint(),
        )


def estimate_wer(code: QcRaCode, snr: float, *, scheme: RateAdaptScheme | None = None,
                 max_iterations: int = DEFAULT_MAX_ITERATIONS, stop: StopRule = StopRule(),
                 seed: int = 0, workers: int = 1, variant: str = "sum-product",
                 block_size: int = 50) -> WerPoint:
    """Encode random messages, transmit, adapt, decode; count word errors."""
    with Simulator(code, scheme, variant=variant, workers=workers, block_size=block_size) as sim:
        return sim.wer(snr, max_iterations, stop, seed)


# -- threshold search ----------------------------------------------------------------


def _smoothed_log_wer(p: WerPoint) -> float:
    return math.log((p.word_errors + 0.5) / (p.trials + 1.0))


def _side(p: WerPoint, target: float) -> int:
    """+1 if WER is significantly above target, -1 if below, 0 if unresolved."""
    lo, hi = p.wilson_ci_95
    if lo > target:
        return 1
    if hi < target:
        return -1
    return 0


def find_snr_at_wer(code: QcRaCode, wer_target: float, *, scheme: RateAdaptScheme | None = None,
                    lo_db: float, hi_db: float, tolerance_db: float = 0.05,
                    max_iterations: int = DEFAULT_MAX_ITERATIONS, stop: StopRule | None = None,
                    seed: int = 0, workers: int = 1, variant: str = "sum-product",
                    simulator: Simulator | None = None) -> ThresholdResult:
    """Bisect in dB for the SNR where the WER crosses ``wer_target``.

    Each probe runs until its 95% interval excludes the target or the stop
    rule's error/trial budget is spent. A probe that stays unresolved moves
    the bracket by its point estimate and clears ``separated``. The
    returned SNR interpolates log-WER linearly in dB between the final
    bracket ends. All probes share one seed (common random numbers).
    """
    if not 0 < wer_target < 1:
        raise ValueError("wer_target must lie in (0, 1)")
    if not hi_db > lo_db:
        raise ValueError("need lo_db < hi_db")
    if tolerance_db <= 0:
        raise ValueError("tolerance_db must be positive")
    stop = replace(stop or StopRule(), separate_from=wer_target)
    own = simulator is None
    sim = simulator or Simulator(code, scheme, variant=variant, workers=workers)
    try:
        def probe(db):
            return sim.wer(snr_linear(db), max_iterations, stop, seed)

        points = {}
        lo_pt = points[lo_db] = probe(lo_db)
        if lo_pt.wer <= wer_target:
            raise ThresholdRangeError(
                f"WER {lo_pt.wer:.3g} at {lo_db} dB is already below target {wer_target}")
        hi_pt = points[hi_db] = probe(hi_db)
        if hi_pt.wer >= wer_target:
            raise ThresholdRangeError(
                f"WER {hi_pt.wer:.3g} at {hi_db} dB is still above target {wer_target}")
        lo, hi = lo_db, hi_db
        while hi - lo > tolerance_db:
            mid = 0.5 * (lo + hi)
            p = points[mid] = probe(mid)
            log.info("probe %.4f dB: %d/%d errors", mid, p.word_errors, p.trials)
            if p.wer >= wer_target:
                lo = mid
            else:
                hi = mid
        separated = _side(points[lo], wer_target) == 1 and _side(points[hi], wer_target) == -1
        a, b = points[lo], points[hi]
        la, lb = _smoothed_log_wer(a), _smoothed_log_wer(b)
        lt = math.log(wer_target)
        x = lo if la == lb else lo + (la - lt) * (hi - lo) / (la - lb)
        x = min(max(x, lo), hi)
        ordered = tuple(points[k] for k in sorted(points))
        return ThresholdResult(wer_target, snr_linear(x), (lo, hi), ordered, separated)
    finally:
        if own:
            sim.close()


# -- efficiency sweeps -------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    code: str
    scheme: dict
    wer_target: float
    threshold: ThresholdResult
    capacity_model: str = "gaussian"

    @property
    def efficiency(self):
        return efficiency(Fraction(self.scheme["overall_rate"]), self.threshold.snr_at_target, self.capacity_model, self.wer_target)

    def as_row(self) -> dict:
        e = self.efficiency
        lo, hi = self.threshold.bracket_linear
        return {
            "code": self.code,
            "scheme": self.scheme["kind"],
            "overall_rate": self.scheme["overall_rate"],
            "wer_target": self.wer_target,
            "snr_linear": repr(e.snr_at_measurement),
            "snr_db": repr(e.snr_db),
            "snr_bracket_low": repr(lo),
            "snr_bracket_high": repr(hi),
            "capacity_model": e.capacity_model,
            "capacity": repr(e.c_of_s),
            "beta": repr(e.beta),
            "beta_low": repr(float(e.code_rate) / float(capacity(hi, self.capacity_model))),
            "beta_high": repr(float(e.code_rate) / float(capacity(lo, self.capacity_model))),
            "separated": self.threshold.separated,
        }


def efficiency_sweep(code: QcRaCode, schemes: Sequence[RateAdaptScheme], wer_targets: Sequence[float],
                     snr_grid_db: Sequence[float], *, max_iterations: int = DEFAULT_MAX_ITERATIONS,
                     stop: StopRule | None = None, seed: int = 0, workers: int = 1,
                     tolerance_db: float = 0.05, variant: str = "sum-product",
                     capacity_model: str = "gaussian") -> list[SweepRow]:
    """Threshold and efficiency of each scheme at each WER target.

    ``snr_grid_db`` must be increasing; the bracket for each search is the
    tightest pair of adjacent grid points whose probes straddle the target.
    """
    grid = list(snr_grid_db)
    if len(grid) < 2 or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("snr_grid_db must be strictly increasing with at least two points")
    rows = []
    for scheme in schemes:
        with Simulator(code, scheme, variant=variant, workers=workers) as sim:
            for target in wer_targets:
                lo_db, hi_db = _grid_bracket(sim, grid, target, max_iterations, stop, seed)
                thr = find_snr_at_wer(code, target, scheme=scheme, lo_db=lo_db, hi_db=hi_db,
                                      tolerance_db=tolerance_db, max_iterations=max_iterations,
                                      stop=stop, seed=seed, simulator=sim)
                rows.append(SweepRow(code.name, scheme.to_dict(), target, thr, capacity_model))
    return rows


def _grid_bracket(sim: Simulator, grid, target, max_iterations, stop, seed) -> tuple[float, float]:
    rule = replace(stop or StopRule(), separate_from=target)
    prev = None
    for db in grid:
        p = sim.wer(snr_linear(db), max_iterations, rule, seed)
        if p.wer < target:
            if prev is None:
                raise ThresholdRangeError(f"WER already below {target} at the lowest grid SNR {db} dB")
            return prev, db
        prev = db
    raise ThresholdRangeError(f"WER still above {target} at the highest grid SNR {grid[-1]} dB")


# -- hop vs. adapt comparison ----------------------------------------------------------


@dataclass(frozen=True)
class AdaptationComparison:
    snr_db: float
    hop: str
    hop_rate: Fraction | None
    hop_beta: float
    adapt: str
    adapt_rate: Fraction | None
    adapt_beta: float

    @property
    def adapt_not_worse(self) -> bool:
        return self.adapt_beta >= self.hop_beta

    def as_row(self) -> dict:
        return {
            "snr_db": repr(self.snr_db),
            "snr_linear": repr(snr_linear(self.snr_db)),
            "hop_scheme": self.hop,
            "hop_rate": str(self.hop_rate or ""),
            "hop_beta": repr(self.hop_beta),
            "adapt_scheme": self.adapt,
            "adapt_rate": str(self.adapt_rate or ""),
            "adapt_beta": repr(self.adapt_beta),
        }


def codebank_entry(name: str, code: QcRaCode, wer_target: float, base: ThresholdResult,
                   ladder: Iterable[tuple[RateAdaptScheme, ThresholdResult]], bound: str = "point") -> CodebankEntry:
    """Build a codebank entry from threshold measurements.

    ``bound`` picks the threshold used for every scheme, base code included:
    the interpolated ``"point"`` estimate, or the ``"low"``/``"high"`` end of
    :attr:`ThresholdResult.certified_linear`.
    """
    pick = {
        "point": lambda t: t.snr_at_target,
        "low": lambda t: t.certified_linear[0],
        "high": lambda t: t.certified_linear[1],
    }[bound]
    punct, ext = [], []
    for scheme, thr in ladder:
        target = punct if scheme.kind == "puncture" else ext if scheme.kind == "extend" else None
        if target is None:
            raise ValueError(f"ladder scheme must puncture or extend, got {scheme.kind}")
        target.append((scheme.overall_rate, pick(thr)))
    return CodebankEntry(name, code.n, code.k, pick(base), wer_target, tuple(punct), tuple(ext))


def ladder_search_range(rate, span_db: float = 3.0) -> tuple[float, float]:
    """Bisection range for a scheme of the given overall rate.

    Starts at the Shannon limit, where a finite-length code cannot reach
    any useful WER, and extends ``span_db`` above it.
    """
    lo = snr_db(snr_for_capacity(float(rate)))
    return lo, lo + span_db


def measure_ladder(code: QcRaCode, wer_target: float, schemes: Sequence[RateAdaptScheme], *,
                   span_db: float = 3.0, tolerance_db: float = 0.05,
                   max_iterations: int = DEFAULT_MAX_ITERATIONS, stop: StopRule | None = None,
                   seed: int = 0, workers: int = 1, variant: str = "sum-product",
                   ) -> list[tuple[RateAdaptScheme, ThresholdResult]]:
    """Threshold of each puncture/extend scheme, searched from its Shannon limit upward."""
    out = []
    for scheme in schemes:
        lo, hi = ladder_search_range(scheme.overall_rate, span_db)
        thr = find_snr_at_wer(code, wer_target, scheme=scheme, lo_db=lo, hi_db=hi,
                              tolerance_db=tolerance_db, max_iterations=max_iterations,
                              stop=stop, seed=seed, workers=workers, variant=variant)
        log.info("%s: threshold %.3f dB", scheme.label, thr.snr_db)
        out.append((scheme, thr))
    return out


def compare_rate_adaptation(snr_grid_db: Sequence[float], wer_target: float,
                            hop_bank: Sequence[CodebankEntry], adapt_bank: Sequence[CodebankEntry],
                            capacity_model: str = "gaussian", max_repeat: int = 16) -> list[AdaptationComparison]:
    """Efficiency of hop/repeat vs. hop/puncture/extend at each grid SNR.

    Passing optimistic thresholds in ``hop_bank`` and conservative ones in
    ``adapt_bank`` (``bound="low"`` and ``"high"`` in :func:`codebank_entry`)
    turns ``adapt_not_worse`` into a one-sided test at the confidence of the
    probes that certified those thresholds.
    """
    out = []
    for db in snr_grid_db:
        s = snr_linear(db)
        cols = []
        for bank, mode in ((hop_bank, "hop"), (adapt_bank, "adapt")):
            try:
                sel = select_scheme(s, wer_target, bank, mode=mode, max_repeat=max_repeat)
            except InfeasibleSchemeError:
                cols.append(("infeasible", None, 0.0))
                continue
            beta = efficiency(sel.overall_rate, s, capacity_model).beta
            cols.append((f"{sel.entry.name}:{sel.scheme.label}", sel.overall_rate, beta))
        out.append(AdaptationComparison(db, *cols[0], *cols[1]))
    return out


# -- persistence ---------------------------------------------------------------------


def provenance(config: dict, **extra) -> dict:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return {
        "config_sha256": hashlib.sha256(blob).hexdigest()[:16],
        "qcra_version": __version__,
        "numpy_version": np.__version__,
        "python_version": platform.python_version(),
        **extra,
        "config": config,
    }


def csv_text(rows: Sequence[dict]) -> str:
    """CSV body only; byte-identical for identical rows."""
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return buf.getvalue()


def write_csv(path: str | Path, rows: Sequence[dict], prov: dict) -> None:
    """Write ``# key: value`` provenance lines, then the CSV body."""
    header = dict(prov)
    header.setdefault("created", time.strftime("%Y-%m-%dT%H:%M:%S"))
    lines = [f"# {k}: {json.dumps(v, sort_keys=True, default=str)}" for k, v in header.items()]
    Path(path).write_text("\n".join(lines) + "\n" + csv_text(rows), encoding="utf-8")


def read_csv_body(path: str | Path) -> str:
    text = Path(path).read_text(encoding="utf-8")
    return "".join(line for line in text.splitlines(keepends=True) if not line.startswith("#"))


def write_json(path: str | Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")


def wer_point_dict(p: WerPoint) -> dict:
    d = asdict(p)
    d["snr_db"] = p.snr_db
    return d


def threshold_to_json(thr: ThresholdResult) -> dict:
    """Lossless JSON form of a threshold search (inverse of :func:`threshold_from_json`)."""
    return {
        "wer_target": thr.wer_target,
        "snr_at_target": thr.snr_at_target,
        "bracket_db": list(thr.bracket_db),
        "separated": thr.separated,
        "points": [asdict(p) for p in thr.points],
    }


def threshold_from_json(d: dict) -> ThresholdResult:
    points = tuple(WerPoint(**{**p, "wilson_ci_95": tuple(p["wilson_ci_95"])}) for p in d["points"])
    return ThresholdResult(d["wer_target"], d["snr_at_target"], tuple(d["bracket_db"]), points, d["separated"])
