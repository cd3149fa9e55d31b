import subprocess
import sys

import pytest

from holofield import experiments as ex
from holofield import xcli

CRITERIA = {
    1: "ccr_mean_scalar",
    2: "h_position_fft",
    3: "wick_exactness",
    4: "ccr_violation_terms",
    5: "no_go_channel",
    6: "outer_pairing_suppression",
    7: "stationary_phase_suppression",
    8: "counting_laws",
    9: "phase_matching_survivors",
    10: "product_identity",
    11: "mixing_series",
    12: "polar_v",
    13: "microlocal_inverse_exponent",
    14: "fock_factorization",
    15: "determinism",
}


def test_registry_covers_criteria_in_stable_order():
    names = [e.name for e in ex.list_experiments()]
    assert names == sorted(names)
    assert len(names) >= 14
    assert {e.criterion: e.name for e in ex.criterion_experiments()} == CRITERIA
    for e in ex.list_experiments():
        if e.name != "determinism":
            assert e.anchor


def test_config_parsing_and_errors():
    cfg = ex.parse_config("[experiment]\nname = no_go_channel\nseed = 4\n[sweep]\ntrials = 3\n[output]\npath = out.csv\n")
    assert cfg.seed == 4 and cfg.sweep == {"trials": 3} and cfg.output_path == "out.csv"
    with pytest.raises(ex.ConfigError, match="experiment.name, experiment.seed"):
        ex.parse_config("[grid]\npoints = 4\n")
    with pytest.raises(ex.ConfigError, match="experiment.seed"):
        ex.parse_config("[experiment]\nname = polar_v\n")
    with pytest.raises(ex.ConfigError, match="unknown experiment"):
        ex.parse_config("[experiment]\nname = nope\nseed = 1\n")
    with pytest.raises(ex.ConfigError, match="unknown parameters"):
        ex.run_experiment(ex.parse_config("[experiment]\nname = no_go_channel\nseed = 1\n[grid]\nbogus = 1\n"))


def test_csv_dialect():
    rows = [ex.ResultRow("e", "p", "m", 0.1, 1 / 3, "anchor, with comma")]
    text = ex.rows_to_csv(rows)
    assert text.splitlines()[0] == ",".join(ex.CSV_HEADER)
    assert "\r" not in text and text.endswith("\n")
    assert "0.10000000000000001" in text and '"anchor, with comma"' in text


def test_one_point_sweep_reports_nonconvergent_fit():
    cfg = ex.parse_config("[experiment]\nname = counting_laws\nseed = 2\n[sweep]\nK = 100\ntrials = 8\n")
    with pytest.raises(ex.FitError):
        ex.run_experiment(cfg)


def test_rerun_is_byte_identical():
    cfg = ex.parse_config("[experiment]\nname = wick_exactness\nseed = 9\n[params]\nmc_samples = 1000\nreplicates = 2\nmax_labels = 4\n")
    a = ex.rows_to_csv(ex.run_experiment(cfg)[0]).encode()
    b = ex.rows_to_csv(ex.run_experiment(cfg)[0]).encode()
    assert a == b


def test_cli_exit_codes(tmp_path, capsys, monkeypatch):
    good = tmp_path / "good.ini"
    good.write_text(f"[experiment]\nname = no_go_channel\nseed = 1\n[output]\npath = {tmp_path / 'out' / 'r.csv'}\n")
    assert xcli.main(["run", str(good)]) == 0
    assert (tmp_path / "out" / "r.csv").read_text().startswith("experiment,")
    fail = tmp_path / "fail.ini"
    fail.write_text("[experiment]\nname = counting_laws\nseed = 1\n[sweep]\nK = 100, 200\ntrials = 4\n")
    assert xcli.main(["run", str(fail), "-q"]) == 2
    bad = tmp_path / "bad.ini"
    bad.write_text("[experiment]\nname = polar_v\n")
    assert xcli.main(["run", str(bad)]) == 1
    assert "experiment.seed" in capsys.readouterr().err
    assert xcli.main(["describe", "nope"]) == 1
    assert xcli.main(["run", str(tmp_path / "missing.ini")]) == 1
    monkeypatch.setenv("HOLOFIELD_THREADS", "zero")
    assert xcli.main(["list"]) == 1


def test_cli_list_and_describe(capsys):
    assert xcli.main(["list"]) == 0
    out = capsys.readouterr().out
    assert "ccr_mean_scalar" in out and "microlocal_inverse_exponent" in out
    assert xcli.main(["describe", "polar_v"]) == 0
    assert "acceptance criterion: 12" in capsys.readouterr().out


def test_threads_env_reaches_subprocess():
    code = "import os, sys; from holofield.xcli import main; main(['list']); print(os.environ['OMP_NUM_THREADS'], file=sys.stderr)"
    env = {"HOLOFIELD_THREADS": "3", "PATH": ""}
    r = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert r.returncode == 0 and r.stderr.strip() == "3"
