import json
import subprocess
import sys

import pytest

from fockhankel.cli import SUBCOMMANDS, main

SCEN = {"id": "fz", "weight": "gaussian", "d": 1, "m": 1, "symbol": "z", "N": 8,
        "grid": {"radii": [0.01, 3, 4], "directions": 4}, "pairs": 2, "mc_samples": 50}


def write(tmp_path, scenarios, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps({"seed": 3, "out_dir": str(tmp_path / "out"), "scenarios": scenarios}))
    return str(p)


def strip_runtime(x):
    if isinstance(x, dict):
        return {k: strip_runtime(v) for k, v in x.items() if k != "runtime_s"}
    if isinstance(x, list):
        return [strip_runtime(v) for v in x]
    return x


def test_report_fields_and_exit_zero(tmp_path, capsys):
    assert main(["hankel", "--config", write(tmp_path, [SCEN])]) == 0
    rep = json.loads((tmp_path / "out" / "hankel.json").read_text())
    assert set(rep) == {"tool", "version", "subcommand", "seed", "config", "scenarios", "summary", "runtime_s"}
    sc = rep["scenarios"][0]
    assert set(sc) == {"id", "weight", "d", "m", "symbol", "N", "seed", "results", "checks", "error",
                       "runtime_s"}
    assert set(rep["summary"]) == {"scenarios", "checks", "failed_asserts", "failed_bands", "passed"}
    assert set(sc["checks"][0]) == {"name", "kind", "passed", "value", "tolerance", "detail"}
    assert (tmp_path / "out" / "hankel_spectra.csv").exists()
    assert "[PASS]" in capsys.readouterr().out


def test_deterministic_reports(tmp_path):
    cfgp = write(tmp_path, [SCEN])
    reps = []
    for out in ("a", "b"):
        assert main(["bloch", "--config", cfgp, "--out", str(tmp_path / out)]) == 0
        reps.append(strip_runtime(json.loads((tmp_path / out / "bloch.json").read_text())))
    assert reps[0] == reps[1]


def test_seed_flag_recorded(tmp_path):
    main(["moments", "--config", write(tmp_path, [SCEN]), "--seed", "11"])
    rep = json.loads((tmp_path / "out" / "moments.json").read_text())
    assert rep["seed"] == 11 and rep["scenarios"][0]["seed"] == [11, 0]


def test_bad_config_exits_two(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"scenarios": [')
    assert main(["moments", "--config", str(p)]) == 2
    assert "bad.json:1:" in capsys.readouterr().err
    assert main(["moments", "--config", write(tmp_path, [dict(SCEN, d=9)])]) == 2


def test_failed_assert_exits_one(tmp_path):
    # an impossible Fejer target turns the assert red
    sc = dict(SCEN, symbol="z^3", weight="power-2", tolerances={"fejer_target": 1e-12})
    assert main(["fejer", "--config", write(tmp_path, [sc])]) == 1


def test_strict_fails_on_bands(tmp_path):
    # a band that cannot pass: the stabilisation of an unbounded symbol
    sc = dict(SCEN, weight="power-2", symbol="z^3", N=10, N_list=[6, 8, 10])
    cfgp = write(tmp_path, [sc])
    assert main(["hankel", "--config", cfgp]) == 0
    rep = json.loads((tmp_path / "out" / "hankel.json").read_text())
    assert rep["summary"]["failed_bands"] > 0
    assert main(["hankel", "--config", cfgp, "--strict"]) == 1


def test_constant_symbol_hankel(tmp_path):
    sc = dict(SCEN, m=2, symbol=[{"index": [0], "matrix": [[1, 2], [3, 4]]}])
    assert main(["hankel", "--config", write(tmp_path, [sc])]) == 0
    rep = json.loads((tmp_path / "out" / "hankel.json").read_text())
    res = rep["scenarios"][0]["results"]
    assert res["s_max"] == 0.0
    assert any(c["name"] == "constant_symbol_zero" and c["passed"] for c in rep["scenarios"][0]["checks"])


def test_compare_monotone(tmp_path):
    small = write(tmp_path, [dict(SCEN, weight="power-2", N=4, N_list=[2, 4])], "small.json")
    big = write(tmp_path, [dict(SCEN, weight="power-2", N=10, N_list=[6, 10])], "big.json")
    assert main(["hankel", "--config", small, "--out", str(tmp_path / "s")]) == 0
    assert main(["hankel", "--config", big, "--out", str(tmp_path / "b"),
                 "--compare", str(tmp_path / "s" / "hankel.json")]) == 0
    rep = json.loads((tmp_path / "b" / "hankel.json").read_text())
    assert any(c["name"] == "cross_run_monotone" and c["passed"] for c in rep["scenarios"][0]["checks"])
    assert main(["hankel", "--config", big, "--compare", str(tmp_path / "nope.json")]) == 2


def test_parallel_matches_serial(tmp_path):
    scs = [SCEN, dict(SCEN, id="p2", weight="power-2")]
    cfgp = write(tmp_path, scs)
    main(["hankel", "--config", cfgp, "--out", str(tmp_path / "s")])
    main(["hankel", "--config", cfgp, "--out", str(tmp_path / "p"), "--jobs", "2"])
    a, b = (strip_runtime(json.loads((tmp_path / d / "hankel.json").read_text())) for d in "sp")
    assert a == b


def test_unknown_subcommand_and_help():
    with pytest.raises(SystemExit):
        main(["frobnicate", "--config", "x"])
    out = subprocess.run([sys.executable, "-m", "fockhankel", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    assert all(s in out.stdout for s in SUBCOMMANDS)
