import csv
import json

import numpy as np
import pytest

from nctorus.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, dump_json, load_config, main, ConfigError
from nctorus.heat_kernel import golden_b2


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_dump_json_is_fixed_precision():
    assert dump_json({"a": 0.1, "b": [1, 2.0], "c": True}) == '{"a": 0.10000000000000001, "b": [1, 2.0], "c": true}\n'
    assert json.loads(dump_json({"x": 1 / 3}))["x"] == 1 / 3


def test_b2_verify_clean(tmp_path, capsys):
    assert main(["b2-verify", "--out", str(tmp_path)]) == EXIT_OK
    assert "120 terms matched" in capsys.readouterr().out
    assert (tmp_path / "b2_report.txt").exists()


def test_b2_verify_flat(tmp_path, capsys):
    assert main(["b2-verify", "--preset", "flat", "--out", str(tmp_path)]) == EXIT_OK
    assert "0 terms, trivially matched" in capsys.readouterr().out


def test_b2_verify_detects_injected_fault(tmp_path, capsys):
    raw = golden_b2(raw=True)
    lines = [t.text() for t in raw]
    victim = raw[41]
    lines[41] = lines[41].replace(lines[41].split()[0], "+99", 1)
    bad = write(tmp_path, "bad.txt", "\n".join(lines) + "\n")
    assert main(["b2-verify", "--golden", str(bad), "--out", str(tmp_path)]) == EXIT_FAIL
    out = capsys.readouterr().out
    assert out.startswith("1 mismatching terms")
    assert " ".join(a.text() for a in victim.word[:3]) in out


def test_config_errors_are_line_anchored(tmp_path, capsys):
    cfg = write(tmp_path, "c.yaml", "theta:\n  '12': 0.3\nbox:\n  N: -2\n")
    assert main(["weyl", "--config", str(cfg)]) == EXIT_CONFIG
    assert "line 4" in capsys.readouterr().err


def test_config_unknown_section(tmp_path):
    cfg = write(tmp_path, "c.yaml", "box:\n  N: 2\nbogus: 1\n")
    with pytest.raises(ConfigError, match="line 3"):
        load_config(cfg)


def test_config_rejects_nonselfadjoint_h(tmp_path):
    text = "h:\n  coefficients:\n    - {alpha: [1, 0, 0, 0], re: 0.1}\n"
    with pytest.raises(ConfigError, match="line 1.*selfadjoint"):
        load_config(write(tmp_path, "c.yaml", text))


def test_config_rejects_non_skew_theta(tmp_path):
    text = "theta: [[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]]\n"
    with pytest.raises(ConfigError, match="line 1"):
        load_config(write(tmp_path, "c.yaml", text))


def test_config_syntax_error(tmp_path):
    with pytest.raises(ConfigError, match="line"):
        load_config(write(tmp_path, "c.yaml", "box: [1, 2\n"))


def test_config_coefficients(tmp_path):
    text = ("theta:\n  '12': 0.25\nh:\n  coefficients:\n"
            "    - {alpha: [1, 0, 0, 0], re: 0.05}\n    - {alpha: [-1, 0, 0, 0], re: 0.05}\n")
    cfg = load_config(write(tmp_path, "c.yaml", text))
    h = cfg.h()
    assert h.is_selfadjoint() and len(h) == 2
    assert cfg.theta[0, 1] == 0.25


def test_curvature_functions_csv(tmp_path):
    cfg = write(tmp_path, "c.yaml", "grid: {s_min: -1.0, s_max: 1.0, s_points: 5, t_points: 3}\n")
    assert main(["curvature-functions", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
    with open(tmp_path / "K.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["s", "value"]
    k0 = [float(v) for s, v in rows[1:] if float(s) == 0.0]
    assert abs(k0[0] - 0.5) < 1e-10
    with open(tmp_path / "H.csv") as fh:
        assert next(csv.reader(fh)) == ["s", "t", "value"]


def test_weyl_flat_report(tmp_path):
    assert main(["weyl", "--preset", "flat", "--n-box", "3", "--out", str(tmp_path)]) == EXIT_OK
    rep = json.loads((tmp_path / "weyl.json").read_text())
    assert rep["endpoint_rel_dev"] == pytest.approx(0.063, abs=5e-4)
    assert rep["rel_dev"] < 0.12


def test_eh_action_flat(tmp_path):
    assert main(["eh-action", "--preset", "flat", "--out", str(tmp_path)]) == EXIT_OK
    rep = json.loads((tmp_path / "eh_action.json").read_text())
    assert rep["action"] == 0.0 and rep["max_attained"] is True


def test_eh_action_bump_small_box(tmp_path):
    code = main(["eh-action", "--preset", "bump", "--n-box", "1", "--out", str(tmp_path)])
    rep = json.loads((tmp_path / "eh_action.json").read_text())
    assert rep["action"] < -1e-10 and rep["max_attained"] is False
    # N = 1 is too small for the two evaluations to agree to 1e-8
    assert code == (EXIT_OK if rep["methods_agree"] else EXIT_FAIL)


def test_outputs_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["residue", "--out", str(a)]) == EXIT_OK
    assert main(["residue", "--out", str(b)]) == EXIT_OK
    assert (a / "residue.json").read_bytes() == (b / "residue.json").read_bytes()


def test_heat_trace_csv(tmp_path):
    assert main(["heat-trace", "--preset", "flat", "--n-box", "2", "--out", str(tmp_path)]) == EXIT_OK
    header = (tmp_path / "heat_trace.csv").read_text().splitlines()[0]
    assert header == "t,trace,t2_trace"


def test_bad_n_box(tmp_path):
    assert main(["weyl", "--n-box", "0", "--out", str(tmp_path)]) == EXIT_CONFIG
