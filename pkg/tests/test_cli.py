from __future__ import annotations

import csv
import io
import json

import numpy as np
import pytest

from qcra import harness as hs
from qcra.cli import main
from qcra.codebook import format_table, load_code, random_table
from qcra.encoder import encode, pack_bits, syndrome_weight, unpack_bits


@pytest.fixture
def toy_file(tmp_path):
    path = tmp_path / "toy.txt"
    path.write_text(format_table(random_table(7200, "1/4", [12, 12, 3, 3, 3], seed=1)))
    return path


def _csv_rows(text: str) -> list[dict]:
    body = "".join(l for l in text.splitlines(keepends=True) if not l.startswith("#"))
    return list(csv.DictReader(io.StringIO(body)))


def _config(tmp_path, name, cfg) -> str:
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def test_build_code_builtin(capsys):
    assert main(["build-code"]) == 0
    out = capsys.readouterr().out
    assert "N=64800 K=6480 M=58320 groups=18" in out
    assert "h1_ones=59760" in out


def test_build_code_writes_matrix(toy_file, tmp_path, capsys):
    out = tmp_path / "h.npz"
    assert main(["build-code", "--code", str(toy_file), "--out", str(out)]) == 0
    z = np.load(out)
    assert tuple(z["shape"]) == (5400, 7200)


def test_bad_table_reports_line(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    text = format_table(random_table(7200, "1/4", [12, 12, 3, 3, 3], seed=1)).splitlines()
    idx = next(i for i, l in enumerate(text) if l[:1].isdigit())
    text[idx] = text[idx] + " 999999"
    bad.write_text("\n".join(text) + "\n")
    assert main(["build-code", "--code", str(bad)]) == 2
    assert f"line {idx + 1}" in capsys.readouterr().err


def test_encode_decode_round_trip(toy_file, tmp_path):
    cw_path = tmp_path / "cw.bin"
    assert main(["encode", "--code", str(toy_file), "--seed", "5", "--out", str(cw_path)]) == 0
    meta = json.loads((tmp_path / "cw.bin.json").read_text())
    cw = unpack_bits(cw_path.read_bytes(), meta["length"])
    code = load_code(str(toy_file))
    assert syndrome_weight(code, cw) == 0

    rng = np.random.default_rng(0)
    llr = 4.0 * (1.0 - 2.0 * cw) + rng.normal(0, 1.0, cw.size)
    np.save(tmp_path / "llr.npy", llr)
    dec_path = tmp_path / "dec.bin"
    assert main(["decode", "--code", str(toy_file), "--in", str(tmp_path / "llr.npy"), "--out", str(dec_path)]) == 0
    dec_meta = json.loads((tmp_path / "dec.bin.json").read_text())
    assert dec_meta["converged"]
    assert np.array_equal(unpack_bits(dec_path.read_bytes(), dec_meta["length"]), cw)


def test_encode_reads_packed_message(toy_file, tmp_path):
    msg = np.random.default_rng(3).integers(0, 2, 1800, dtype=np.uint8)
    (tmp_path / "m.bin").write_bytes(pack_bits(msg))
    (tmp_path / "m.bin.json").write_text(json.dumps({"length": 1800}))
    out = tmp_path / "c.bin"
    assert main(["encode", "--code", str(toy_file), "--in", str(tmp_path / "m.bin"), "--out", str(out)]) == 0
    cw = unpack_bits(out.read_bytes(), 7200)
    assert np.array_equal(cw, encode(load_code(str(toy_file)), msg))


def test_encode_rejects_wrong_length(toy_file, tmp_path):
    (tmp_path / "m.bin").write_bytes(b"\x00" * 10)
    (tmp_path / "m.bin.json").write_text(json.dumps({"length": 80}))
    assert main(["encode", "--code", str(toy_file), "--in", str(tmp_path / "m.bin"),
                 "--out", str(tmp_path / "c.bin")]) == 2


def test_simulate_is_deterministic_across_workers(toy_file, tmp_path):
    cfg = _config(tmp_path, "sim.json", {"code": str(toy_file), "snr_db": [-2.0, -1.0],
                                         "min_errors": 10, "max_trials": 100, "seed": 4})
    bodies = []
    for w in (1, 2):
        out = tmp_path / f"w{w}.csv"
        assert main(["simulate", "--config", cfg, "--workers", str(w), "--out", str(out)]) == 0
        bodies.append(hs.read_csv_body(out))
    assert bodies[0] == bodies[1]
    text = (tmp_path / "w1.csv").read_text()
    assert text.startswith("# config_sha256:")
    assert '"seed": 4' in text


def test_simulate_to_stdout_has_provenance(toy_file, capsys):
    assert main(["simulate", "--code", str(toy_file), "--snr-db", "0", "--max-iter", "20"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("#")
    rows = _csv_rows(out)
    assert len(rows) == 1 and rows[0]["max_iterations"] == "20"


def test_threshold_outside_range_is_infeasible(toy_file, tmp_path):
    cfg = _config(tmp_path, "t.json", {"code": str(toy_file), "wer_target": 0.1, "lo_db": 10.0,
                                       "hi_db": 12.0, "min_errors": 5, "max_trials": 50})
    assert main(["simulate", "--config", cfg]) == 3


def test_unknown_config_key(tmp_path, capsys):
    cfg = _config(tmp_path, "x.json", {"snr_db": 1.0, "iterations": 5})
    assert main(["simulate", "--config", cfg]) == 2
    assert "iterations" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "nope.json")]) == 2


def test_config_dir_lookup(tmp_path, monkeypatch, capsys):
    (tmp_path / "kr.json").write_text(json.dumps(
        {"profiles": [{"name": "a", "rate": "1/10", "operating_snr": 0.18, "p_fail": 0.1}],
         "distances_km": [0, 10]}))
    monkeypatch.setenv("QCRA_CONFIG_DIR", str(tmp_path))
    monkeypatch.chdir(tmp_path.parent)
    assert main(["keyrate", "--config", "kr.json"]) == 0
    assert len(_csv_rows(capsys.readouterr().out)) == 2


def _keyrate(tmp_path, capsys, **extra) -> list[dict]:
    cfg = {"profiles": [{"name": "r1_10", "rate": "1/10", "operating_snr_db": -7.45, "p_fail": 0.1},
                        {"name": "r1_2", "rate": 0.5, "operating_snr": 1.2, "p_fail": 0.1, "beta": 0.9}],
           "distance_range": {"start": 0, "stop": 50, "step": 5}, **extra}
    assert main(["keyrate", "--config", _config(tmp_path, "kr.json", cfg)]) == 0
    return _csv_rows(capsys.readouterr().out)


def test_keyrate_columns(tmp_path, capsys):
    rows = _keyrate(tmp_path, capsys)
    assert len(rows) == 22
    assert {"profile", "distance_km", "T", "V_A", "beta", "i_ab", "i_e", "delta_i", "feasible"} <= set(rows[0])
    assert float(rows[11]["beta"]) == 0.9


def test_keyrate_total_failure_override(tmp_path, capsys):
    rows = _keyrate(tmp_path, capsys, p_fail_override=1.0)
    assert all(float(r["delta_i"]) == 0.0 for r in rows)


def test_keyrate_more_excess_noise_lowers_rate(tmp_path, capsys):
    base = _keyrate(tmp_path, capsys, excess_noise=0.01)
    noisy = _keyrate(tmp_path, capsys, excess_noise=0.02)
    assert all(float(b["delta_i"]) < float(a["delta_i"]) for a, b in zip(base, noisy))


def test_keyrate_profile_missing_field(tmp_path):
    cfg = _config(tmp_path, "kr.json", {"profiles": [{"rate": 0.1, "operating_snr": 0.2}], "distances_km": [0]})
    assert main(["keyrate", "--config", cfg]) == 2


def test_keyrate_domain_error(tmp_path):
    cfg = _config(tmp_path, "kr.json", {"profiles": [{"rate": 0.1, "operating_snr": 0.2, "p_fail": 0.1}],
                                        "distances_km": [0], "detector_efficiency": 1.5})
    assert main(["keyrate", "--config", cfg]) == 2
