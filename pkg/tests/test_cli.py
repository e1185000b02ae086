import csv
import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lhy_lab import cli
from lhy_lab.acceptance import fit_exponent


def write_ini(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def config_code(path):
    with pytest.raises(cli.ConfigError) as err:
        cli.load_config(path)
    return err.value


def test_default_config():
    cfg = cli.load_config()
    assert cfg.kappa == 0.55 and cfg.eps == 0.01 and cfg.ell == 0.4
    assert cfg.get("model", "n_values") == (1e3, 1e4, 1e5, 1e6)


def test_overlay_keeps_defaults(tmp_path):
    cfg = cli.load_config(write_ini(tmp_path, "[model]\nkappa = 0.6\n"))
    assert cfg.kappa == 0.6 and cfg.eps == 0.01


def test_kappa_outside_window(tmp_path):
    err = config_code(write_ini(tmp_path, "[model]\nkappa = 0.7\n"))
    assert err.code == "constraint" and err.key == "model.kappa"


def test_eps_too_large(tmp_path):
    err = config_code(write_ini(tmp_path, "[model]\neps = 0.1\n"))
    assert err.code == "constraint"


def test_distinct_error_codes(tmp_path):
    codes = {
        config_code(str(tmp_path / "absent.ini")).code,
        config_code(write_ini(tmp_path, "not an ini [", "bad.ini")).code,
        config_code(write_ini(tmp_path, "[model]\nbogus = 1\n", "key.ini")).code,
        config_code(write_ini(tmp_path, "[nowhere]\nx = 1\n", "sec.ini")).code,
        config_code(write_ini(tmp_path, "[model]\nkappa = abc\n", "val.ini")).code,
    }
    assert codes == {"missing-file", "parse-error", "unknown-key", "unknown-section", "bad-value"}


def test_n_values_must_ascend(tmp_path):
    assert config_code(write_ini(tmp_path, "[model]\nn_values = 1e4, 1e3, 1e5\n")).code == "constraint"


def test_fit_exponent_exact_power():
    fit = fit_exponent([(n, n**2) for n in (1e3, 1e4, 1e5)])
    assert fit["slope"] == pytest.approx(2.0, abs=1e-12) and fit["r2"] == pytest.approx(1.0, abs=1e-12)


def test_fit_exponent_with_correction():
    fit = fit_exponent([(n, n**2 * (1 + 1 / n)) for n in (1e3, 1e4, 1e5, 1e6)])
    assert fit["slope"] == pytest.approx(2.0, abs=0.01)


@given(st.floats(-3, 3), st.floats(0.1, 10))
def test_fit_exponent_recovers_power(p, c):
    fit = fit_exponent([(n, c * n**p) for n in (10.0, 100.0, 1000.0, 1e4)])
    assert fit["slope"] == pytest.approx(p, abs=1e-9)
    assert math.exp(fit["intercept"]) == pytest.approx(c, rel=1e-8)


def test_fit_exponent_errors():
    with pytest.raises(ValueError):
        fit_exponent([(1e3, 1.0), (1e4, 2.0)])
    with pytest.raises(ValueError, match="1e\\+?0?4|10000"):
        fit_exponent([(1e3, 1.0), (1e4, 0.0), (1e5, 2.0)])


def test_csv_text_quoting():
    text = cli.csv_text(["class", "x"], [["L\\S", 0.1], ['a,"b"', 2]])
    assert text.endswith("\r\n") and "\r\n" in text
    rows = list(csv.reader(io.StringIO(text, newline="")))
    assert rows[1] == ["L\\S", "0.1"] and rows[2] == ['a,"b"', "2"]


def test_json_schema_and_order():
    text = cli.write_json(None, {"b": 1.0, "a": float("inf"), "c": np.float64(2.5)})
    obj = json.loads(text)
    assert obj["schema"] == 1 and obj["a"] == "inf" and obj["c"] == 2.5
    assert list(obj) == sorted(obj)


def run_main(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr().out
    return code, json.loads(out)


def test_lhy_command(tmp_path, capsys):
    code, payload = run_main(["--out", str(tmp_path), "lhy", "--h-sequence", "0.4,0.2"], capsys)
    assert code == 0 and payload["schema"] == 1
    assert [r["h"] for r in payload["rows"]] == [0.4, 0.2]
    raw = (tmp_path / "lhy.csv").read_bytes()
    assert raw.startswith(b"h,riemann_sum,closed_form,deviation,certificate,shells\r\n")


def test_scatter_and_coeffs_commands(tmp_path, capsys):
    code, payload = run_main(["--out", str(tmp_path), "scatter", "--N", "1e3"], capsys)
    assert code == 0 and (tmp_path / "scatter_N1000.csv").exists()
    square = 1.0 - math.tanh(1.0) / 1.0
    assert payload["rows"][0]["a"] == pytest.approx(square, rel=1e-2)
    code, payload = run_main(["--out", str(tmp_path), "coeffs", "--N", "1e3"], capsys)
    assert code == 0 and (tmp_path / "norms_N1000.json").exists()


def test_sweep_command(tmp_path, capsys):
    code, payload = run_main(["--out", str(tmp_path), "sweep", "--N", "1e3,1e4,1e5",
                              "--quantity", "sigma_L_sq"], capsys)
    assert code == 0 and payload["fit_uses_absolute_value"]
    assert payload["fit"]["slope"] == pytest.approx(0.825, abs=0.15)


def test_bad_sweep_quantity(tmp_path, capsys):
    code, payload = run_main(["--out", str(tmp_path), "sweep", "--quantity", "nope"], capsys)
    assert code == 2 and payload["code"] == "bad-value"


def test_config_error_exit(tmp_path, capsys):
    ini = write_ini(tmp_path, "[model]\nkappa = 0.7\n")
    code, payload = run_main(["--config", ini, "--out", str(tmp_path), "lhy"], capsys)
    assert code == 2 and payload["error"] == "config" and payload["key"] == "model.kappa"


def test_cubic_refusal_exit(tmp_path, capsys):
    code, payload = run_main(["--out", str(tmp_path), "cubic", "--N", "100"], capsys)
    assert code == 3 and "632" in payload["message"]


def test_verify_all_subset(tmp_path, capsys):
    code = cli.main(["--out", str(tmp_path), "verify-all", "--only", "1,3"])
    captured = capsys.readouterr()
    assert code == 0
    assert captured.err.count("PASS") == 2
    obj = json.loads((tmp_path / "verify-all.json").read_text())
    assert obj["passed"] and [c["id"] for c in obj["criteria"]] == [1, 3]


def test_verify_all_unknown_criterion(tmp_path, capsys):
    code, payload = run_main(["--out", str(tmp_path), "verify-all", "--only", "12"], capsys)
    assert code == 2
