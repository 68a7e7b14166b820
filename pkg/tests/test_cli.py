import json
import shutil
import subprocess
import textwrap

import pytest

from mmp.cli import ConfigError, load_config, main, validate

STATIONARITY = """
    task = "stationarity"
    [family]
    name = "mmzrp_from_marginal"
    c = "inv"
    [marginal]
    kind = "ex4"
    b = "2"
    [params]
    L = 3
    N = 5
"""


def _write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return str(p)


def _run(tmp_path, task, text, *extra):
    out = tmp_path / "out"
    code = main([task, "--config", _write(tmp_path, text), "--out", str(out), *extra])
    return code, out


def test_stationarity_residual_zero(tmp_path):
    code, out = _run(tmp_path, "stationarity", STATIONARITY)
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["passed"] and rep["record"]["reports"][0]["residual"] == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["config"]["params"] == {"L": 3, "N": 5} and "numpy" in man["versions"]


def test_f_scan_sign_change(tmp_path):
    code, out = _run(tmp_path, "f_scan", """
        [params]
        b = "2"
        alpha_max = 40
    """)
    assert code == 0
    rows = [line.split() for line in (out / "f_scan.dat").read_text().splitlines()]
    first_negative = next(int(a) for a, v in rows if v.startswith("-"))
    assert first_negative < 11
    assert [int(a) for a, _ in rows] == list(range(2, 41))


def test_missing_seed_is_validation_error(tmp_path):
    code, out = _run(tmp_path, "simulate", """
        [family]
        name = "ex1_h"
        [params]
        L = 8
        events = 100
        N = 4
    """)
    assert code == 2 and not out.exists()


def test_validation_messages():
    with pytest.raises(ConfigError, match="params.L"):
        validate({"task": "canonical", "marginal": {"kind": "ex4", "b": 2}, "params": {"N": 3}})
    with pytest.raises(ConfigError, match="unknown top-level"):
        validate({"task": "f_scan", "bogus": 1, "params": {"b": 2, "alpha_max": 4}})
    with pytest.raises(ConfigError, match="task"):
        validate({"task": "canonical"}, task="thermo")
    with pytest.raises(ConfigError, match="seed"):
        validate({"task": "simulate", "family": {"name": "stick"}, "params": {"L": 2, "events": 1}, "seed": -1})


def test_toml_syntax_error_reported(tmp_path):
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, "task = \n"))


def test_property_failure_exit_code(tmp_path):
    code, out = _run(tmp_path, "check_attractiveness", """
        [family]
        name = "ex1_h"
        h = "k_then_inv:3"
    """)
    assert code == 1
    assert "witness" in (out / "summary.txt").read_text()


def test_guard_exit_code(tmp_path):
    code, out = _run(tmp_path, "stationarity", """
        [family]
        name = "stick"
        [marginal]
        kind = "geometric"
        ratio = "1/2"
        [params]
        L = 8
        N = 20
        guard = 100
    """)
    assert code == 3
    assert json.loads((out / "report.json").read_text())["record"]["guard"] == "state_space"


def test_invariance_and_coupling_tasks(tmp_path):
    code, out = _run(tmp_path, "check_invariance", """
        [family]
        name = "ex1_h"
        [marginal]
        kind = "geometric"
        ratio = "1/3"
        [params]
        cutoff = 8
    """)
    assert code == 0 and (out / "A_matrix.dat").exists()
    code, _ = _run(tmp_path, "coupling_verify", """
        [family]
        name = "qhahn"
        q = "1/2"
        [params]
        quad_cutoff = 3
    """)
    assert code == 0


def test_condensation_tasks(tmp_path):
    code, out = _run(tmp_path, "canonical", """
        mode = "exact"
        [marginal]
        kind = "geometric"
        ratio = "1/2"
        [params]
        L = 2
        N = 4
    """)
    assert code == 0
    assert any(p.name.endswith(".dat") for p in out.iterdir())
    code, out = _run(tmp_path, "fixed_volume", """
        [marginal]
        kind = "ex4"
        b = "3/2"
        [params]
        L = 3
        N_list = [20, 40]
    """)
    assert code in (0, 1)
    code, out = _run(tmp_path, "thermo", """
        [marginal]
        kind = "ex4"
        b = "4"
        [params]
        rho = "1/4"
        L_list = [10, 20]
    """)
    assert code in (0, 1)
    assert json.loads((out / "report.json").read_text())["task"] == "thermo"


SIM = """
    seed = 3
    [family]
    name = "ex1_h"
    [params]
    L = 16
    N = 8
    events = 20000
    burn_in = 1000
    checkpoints = [5000, 10000]
    target = "geometric:1/3"
"""


def test_simulate_outputs_and_replay(tmp_path):
    code, out = _run(tmp_path, "simulate", SIM)
    assert code in (0, 1)
    files = {p.name for p in out.iterdir()}
    assert {"report.json", "summary.txt", "manifest.json"} <= files
    assert any(name.startswith("histogram") for name in files)
    out2 = tmp_path / "replay"
    assert main(["simulate", "--config", str(out / "manifest.json"), "--out", str(out2)]) == code
    assert (out / "report.json").read_bytes() == (out2 / "report.json").read_bytes()


def test_seed_override_changes_result(tmp_path):
    _, out = _run(tmp_path, "simulate", SIM)
    out2 = tmp_path / "other"
    main(["simulate", "--config", _write(tmp_path, SIM, "b.toml"), "--out", str(out2), "--seed", "4"])
    assert (out / "report.json").read_bytes() != (out2 / "report.json").read_bytes()


def test_simulate_coupled_task(tmp_path):
    code, out = _run(tmp_path, "simulate_coupled", """
        seed = 1
        [family]
        name = "ex1_h"
        [params]
        L = 16
        N = 8
        extra = 4
        events = 10000
        replicas = 3
    """)
    assert code == 0
    assert json.loads((out / "report.json").read_text())["record"]["order_violations"] == 0


def test_output_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv("MMP_OUTPUT_ROOT", str(tmp_path / "root"))
    assert main(["stationarity", "--config", _write(tmp_path, STATIONARITY)]) == 0
    assert (tmp_path / "root" / "stationarity" / "report.json").exists()


@pytest.mark.skipif(shutil.which("mmp") is None, reason="console script not installed")
def test_console_script(tmp_path):
    cfg = _write(tmp_path, STATIONARITY)
    r = subprocess.run(["mmp", "stationarity", "--config", cfg, "--out", str(tmp_path / "o")],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "residual 0" in r.stdout
