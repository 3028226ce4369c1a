"""Command-line entry point: ``qcra <command> [--config FILE] [flags]``.

Each command starts from built-in defaults, applies the JSON config file,
then any flags given on the command line. The resulting effective config is
written into the provenance header of every output. Relative config paths
that do not exist are also looked up in ``$QCRA_CONFIG_DIR``.

Exit codes: 0 success, 2 configuration or input error, 3 infeasible request
(threshold outside the search range, no scheme reaches the SNR).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from . import harness as hs
from . import rate_adapt as ra
from .channel import CAPACITY_MODELS, capacity_gaussian, snr_linear
from .codebook import TableError, load_code
from .cvqkd import CodeProfile, CvqkdParams, DomainError, key_rate_vs_distance
from .decoder import VARIANTS, BeliefPropagationDecoder
from .encoder import encode, pack_bits, unpack_bits

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 2, 3
CONFIG_DIR_ENV = "QCRA_CONFIG_DIR"

log = logging.getLogger("qcra")


class ConfigError(ValueError):
    pass


_COMMON = {"code": "builtin:r1_10", "seed": 0, "workers": 1, "max_iterations": 100,
           "variant": "sum-product", "out": None}

DEFAULTS = {
    "build-code": {"code": "builtin:r1_10", "out": None},
    "encode": {"code": "builtin:r1_10", "seed": 0, "input": None, "out": None},
    "decode": {"code": "builtin:r1_10", "max_iterations": 100, "variant": "sum-product",
               "input": None, "out": None},
    "simulate": {**_COMMON, "scheme": {"kind": "hop"}, "snr_db": None, "wer_target": None,
                 "lo_db": None, "hi_db": None, "tolerance_db": 0.05, "min_errors": 50,
                 "max_trials": 10_000, "capacity_model": "gaussian"},
    "sweep": {**_COMMON, "schemes": [{"kind": "hop"}], "wer_targets": [0.1], "snr_grid_db": None,
              "tolerance_db": 0.05, "min_errors": 50, "max_trials": 10_000,
              "capacity_model": "gaussian", "compare": None},
    "keyrate": {"profiles": None, "excess_noise": 0.01, "detector_efficiency": 0.6,
                "electronic_noise": 0.01, "attenuation_db_per_km": 0.2, "distances_km": None,
                "distance_range": None, "v_a_cap": 100.0, "p_fail_override": None, "out": None},
}

# flag dest -> config key
_FLAG_KEYS = {"code": "code", "snr_db": "snr_db", "wer_target": "wer_target",
              "max_iter": "max_iterations", "seed": "seed", "workers": "workers",
              "out": "out", "variant": "variant", "input": "input"}


# -- config ---------------------------------------------------------------------


def _resolve_config_path(path: str) -> Path:
    p = Path(path)
    if not p.exists() and not p.is_absolute() and os.environ.get(CONFIG_DIR_ENV):
        alt = Path(os.environ[CONFIG_DIR_ENV]) / p
        if alt.exists():
            return alt
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    return p


def effective_config(command: str, args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS[command])
    if getattr(args, "config", None):
        path = _resolve_config_path(args.config)
        try:
            loaded = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON: {e}") from None
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: top level must be an object")
        unknown = sorted(set(loaded) - set(cfg))
        if unknown:
            raise ConfigError(f"{path}: unknown keys for {command}: {', '.join(unknown)}")
        cfg.update(loaded)
    for dest, key in _FLAG_KEYS.items():
        val = getattr(args, dest, None)
        if val is not None and key in cfg:
            cfg[key] = val
    return cfg


def _require(cfg: dict, *keys):
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise ConfigError(f"missing required setting(s): {', '.join(missing)}")


def _check_common(cfg: dict):
    if "variant" in cfg and cfg["variant"] not in VARIANTS:
        raise ConfigError(f"variant must be one of {VARIANTS}")
    if "capacity_model" in cfg and cfg["capacity_model"] not in CAPACITY_MODELS:
        raise ConfigError(f"capacity_model must be one of {CAPACITY_MODELS}")
    if cfg.get("max_iterations") is not None and int(cfg["max_iterations"]) < 1:
        raise ConfigError("max_iterations must be >= 1")
    if cfg.get("workers") is not None and int(cfg["workers"]) < 1:
        raise ConfigError("workers must be >= 1")


def _scheme_from_config(code, d: dict) -> ra.RateAdaptScheme:
    kind = d.get("kind", "hop")
    if kind == "hop":
        return ra.hop(code)
    if kind == "repeat":
        return ra.repeat(code, int(d["factor"]))
    if kind == "puncture":
        count = d.get("count")
        if count is None:
            count = ra.puncture_count_for_rate(code.n, code.k, Fraction(d["rate"]))
        return ra.puncture(code, int(count))
    if kind == "extend":
        count = d.get("count")
        if count is None:
            count = ra.extension_count_for_rate(code.n, code.k, Fraction(d["rate"]))
        return ra.extend(code, int(count))
    raise ConfigError(f"unknown scheme kind {kind!r}")


def _stop(cfg: dict) -> hs.StopRule:
    return hs.StopRule(min_errors=int(cfg["min_errors"]), max_trials=int(cfg["max_trials"]))


def _emit(rows: list[dict], cfg: dict, command: str, **extra):
    prov = hs.provenance(cfg, command=command, seed=cfg.get("seed"), **extra)
    if cfg.get("out"):
        hs.write_csv(cfg["out"], rows, prov)
        print(f"wrote {len(rows)} rows to {cfg['out']}")
    else:
        for k, v in prov.items():
            print(f"# {k}: {json.dumps(v, sort_keys=True, default=str)}")
        sys.stdout.write(hs.csv_text(rows))


def _sidecar(path: str) -> Path:
    return Path(str(path) + ".json")


# -- commands ---------------------------------------------------------------------


def cmd_build_code(cfg: dict) -> int:
    code = load_code(cfg["code"])
    summ = code.summary()
    weights = ", ".join(f"{w}x{c}" for w, c in sorted(summ["column_weights"].items()))
    print(f"N={code.n} K={code.k} M={code.m} groups={len(code.table.groups)}")
    print(f"rate={code.rate} q={code.expansion_step_q} h1_ones={code.h1_ones}")
    print(f"info column weights: {weights}")
    print(f"density={summ['h_density']:.6g} table_sha256={summ['table_sha256']}")
    if cfg.get("out"):
        h = code.parity_check_matrix
        np.savez_compressed(cfg["out"], indptr=h.indptr, indices=h.indices, shape=np.array(h.shape),
                            summary=json.dumps(summ, default=str))
        print(f"wrote expanded parity-check matrix to {cfg['out']}")
    return EXIT_OK


def cmd_encode(cfg: dict) -> int:
    _require(cfg, "out")
    code = load_code(cfg["code"])
    if cfg.get("input"):
        meta = json.loads(_sidecar(cfg["input"]).read_text(encoding="utf-8"))
        if int(meta["length"]) != code.k:
            raise ConfigError(f"message length {meta['length']} does not match K={code.k}")
        msg = unpack_bits(Path(cfg["input"]).read_bytes(), code.k)
    else:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(cfg["seed"]))))
        msg = rng.integers(0, 2, code.k, dtype=np.uint8)
    cw = encode(code, msg)
    Path(cfg["out"]).write_bytes(pack_bits(cw))
    hs.write_json(_sidecar(cfg["out"]), {"length": int(cw.size), "bit_order": "lsb-first",
                                         "provenance": hs.provenance(cfg, command="encode")})
    print(f"encoded {code.k} -> {cw.size} bits into {cfg['out']}")
    return EXIT_OK


def cmd_decode(cfg: dict) -> int:
    _require(cfg, "input", "out")
    _check_common(cfg)
    code = load_code(cfg["code"])
    llr = np.load(cfg["input"])
    dec = BeliefPropagationDecoder(code, cfg["variant"])
    res = dec.decode(llr, int(cfg["max_iterations"]))
    Path(cfg["out"]).write_bytes(pack_bits(res.bits))
    hs.write_json(_sidecar(cfg["out"]), {
        "length": int(res.bits.size), "bit_order": "lsb-first", "converged": res.converged,
        "iterations_used": res.iterations_used, "variant": res.variant,
        "provenance": hs.provenance(cfg, command="decode"),
    })
    print(f"converged={res.converged} iterations={res.iterations_used}")
    return EXIT_OK


def cmd_simulate(cfg: dict) -> int:
    _check_common(cfg)
    code = load_code(cfg["code"])
    scheme = _scheme_from_config(code, cfg["scheme"])
    common = dict(max_iterations=int(cfg["max_iterations"]), seed=int(cfg["seed"]),
                  workers=int(cfg["workers"]), variant=cfg["variant"])
    if cfg.get("wer_target") is not None:
        _require(cfg, "lo_db", "hi_db")
        thr = hs.find_snr_at_wer(code, float(cfg["wer_target"]), scheme=scheme,
                                 lo_db=float(cfg["lo_db"]), hi_db=float(cfg["hi_db"]),
                                 tolerance_db=float(cfg["tolerance_db"]), stop=_stop(cfg), **common)
        row = hs.SweepRow(code.name, scheme.to_dict(), thr.wer_target, thr, cfg["capacity_model"])
        _emit([p.as_row() for p in thr.points], cfg, "simulate", threshold=row.as_row())
        print(f"threshold {thr.snr_db:.4f} dB, beta={row.efficiency.beta:.4f}", file=sys.stderr)
        return EXIT_OK
    _require(cfg, "snr_db")
    dbs = cfg["snr_db"] if isinstance(cfg["snr_db"], list) else [cfg["snr_db"]]
    rows = []
    with hs.Simulator(code, scheme, variant=cfg["variant"], workers=int(cfg["workers"])) as sim:
        for db in dbs:
            p = sim.wer(snr_linear(float(db)), common["max_iterations"], _stop(cfg), common["seed"])
            rows.append(p.as_row())
    _emit(rows, cfg, "simulate")
    return EXIT_OK


def _compare(cfg: dict, code) -> list[dict]:
    cmp_cfg = cfg["compare"]
    target = float(cmp_cfg.get("wer_target", cfg["wer_targets"][0]))
    common = dict(max_iterations=int(cfg["max_iterations"]), stop=_stop(cfg), seed=int(cfg["seed"]),
                  workers=int(cfg["workers"]), variant=cfg["variant"])
    span = float(cmp_cfg.get("span_db", 3.0))
    lo, hi = hs.ladder_search_range(code.rate, span)
    base = hs.find_snr_at_wer(code, target, lo_db=lo, hi_db=hi,
                              tolerance_db=float(cfg["tolerance_db"]), **common)
    ladder_schemes = [ra.puncture(code, ra.puncture_count_for_rate(code.n, code.k, Fraction(r)))
                      for r in cmp_cfg.get("puncture_rates", [])]
    ladder_schemes += [ra.extend(code, ra.extension_count_for_rate(code.n, code.k, Fraction(r)))
                       for r in cmp_cfg.get("extend_rates", [])]
    ladder = hs.measure_ladder(code, target, ladder_schemes, span_db=span,
                               tolerance_db=float(cfg["tolerance_db"]), **common)
    hop_bank = [hs.codebank_entry(code.name, code, target, base, [], "low")]
    adapt_bank = [hs.codebank_entry(code.name, code, target, base, ladder, "high")]
    comp = hs.compare_rate_adaptation(cmp_cfg["grid_db"], target, hop_bank, adapt_bank,
                                      cfg["capacity_model"], int(cmp_cfg.get("max_repeat", 16)))
    return [c.as_row() for c in comp]


def cmd_sweep(cfg: dict) -> int:
    _check_common(cfg)
    code = load_code(cfg["code"])
    if cfg.get("compare"):
        _require(cfg["compare"], "grid_db")
        _emit(_compare(cfg, code), cfg, "sweep")
        return EXIT_OK
    _require(cfg, "snr_grid_db")
    schemes = [_scheme_from_config(code, d) for d in cfg["schemes"]]
    rows = hs.efficiency_sweep(code, schemes, [float(w) for w in cfg["wer_targets"]],
                               [float(x) for x in cfg["snr_grid_db"]],
                               max_iterations=int(cfg["max_iterations"]), stop=_stop(cfg),
                               seed=int(cfg["seed"]), workers=int(cfg["workers"]),
                               tolerance_db=float(cfg["tolerance_db"]), variant=cfg["variant"],
                               capacity_model=cfg["capacity_model"])
    _emit([r.as_row() for r in rows], cfg, "sweep")
    return EXIT_OK


def _profile(d: dict, p_fail_override) -> CodeProfile:
    try:
        rate = float(Fraction(str(d["rate"])))
        if "operating_snr" in d:
            s = float(d["operating_snr"])
        else:
            s = snr_linear(float(d["operating_snr_db"]))
        p_fail = float(d["p_fail"] if p_fail_override is None else p_fail_override)
    except KeyError as e:
        raise ConfigError(f"profile {d.get('name', '?')!r} lacks {e.args[0]}") from None
    if not s > 0:
        raise ConfigError("operating SNR must be positive")
    beta = float(d.get("beta", rate / float(capacity_gaussian(s))))
    return CodeProfile(str(d.get("name", f"R={d['rate']}")), rate, s, beta, p_fail)


def cmd_keyrate(cfg: dict) -> int:
    _require(cfg, "profiles")
    if cfg.get("distances_km") is not None:
        dist = [float(x) for x in cfg["distances_km"]]
    elif cfg.get("distance_range") is not None:
        r = cfg["distance_range"]
        dist = [float(x) for x in np.arange(r["start"], r["stop"] + 0.5 * r["step"], r["step"])]
    else:
        raise ConfigError("set distances_km or distance_range")
    template = CvqkdParams(1.0, 1.0, float(cfg["excess_noise"]), float(cfg["detector_efficiency"]),
                           float(cfg["electronic_noise"]), float(cfg["attenuation_db_per_km"])).validate()
    rows = []
    for d in cfg["profiles"]:
        prof = _profile(d, cfg.get("p_fail_override"))
        for pt in key_rate_vs_distance(prof, template, dist, float(cfg["v_a_cap"])):
            rows.append({"profile": prof.name, "rate": repr(prof.rate), **pt.as_row()})
    _emit(rows, cfg, "keyrate")
    return EXIT_OK


COMMANDS = {
    "build-code": cmd_build_code,
    "encode": cmd_encode,
    "decode": cmd_decode,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "keyrate": cmd_keyrate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qcra", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"qcra {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "build-code": "expand a circulant table and print its structure",
        "encode": "encode a packed message file (or a random message)",
        "decode": "decode an .npy file of channel LLRs",
        "simulate": "WER at fixed SNRs, or a threshold search with --wer-target",
        "sweep": "efficiency sweep, or hop vs. puncture/extend comparison",
        "keyrate": "secret key rate against distance for code profiles",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--code", help="table path or builtin:<name>")
        p.add_argument("--out", help="output path")
        if name in ("encode", "decode"):
            p.add_argument("--in", dest="input", help="input file")
        if name in ("encode", "simulate", "sweep"):
            p.add_argument("--seed", type=int)
        if name in ("decode", "simulate", "sweep"):
            p.add_argument("--max-iter", type=int)
            p.add_argument("--variant", choices=VARIANTS)
        if name in ("simulate", "sweep"):
            p.add_argument("--workers", type=int)
        if name == "simulate":
            p.add_argument("--snr-db", type=float)
            p.add_argument("--wer-target", type=float)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        cfg = effective_config(args.command, args)
        return COMMANDS[args.command](cfg)
    except (hs.ThresholdRangeError, ra.InfeasibleSchemeError) as e:
        print(f"infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, TableError, DomainError, ValueError, KeyError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
