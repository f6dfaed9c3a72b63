import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stochburgers.config import SimConfig, parse_config, parse_initial
from stochburgers.errors import ConfigError
from stochburgers.observables import MIXING_BATTERY, observable
from stochburgers.report import RunManifest, file_digest, format_value, parse_value, read_report, write_report


def test_minimal_config():
    cfg = parse_config("")
    assert cfg == SimConfig()
    cfg = parse_config("alpha = 1.2  # comment\nobservables = norm0, cos2\nr_truncation = none\n")
    assert cfg.alpha == 1.2 and cfg.observables == ("norm0", "cos2") and cfg.r_truncation is None
    assert cfg.n_steps == 1000


@pytest.mark.parametrize("text,match", [
    ("alpha = 2.5", "alpha in \\(1,2\\)"),
    ("alpha = 1.0", "alpha"),
    ("bogus = 1", "unknown key"),
    ("seed = 1\nseed = 2", "duplicate key"),
    ("n_modes = x", "cannot parse"),
    ("nonlinearity = truncated", "r_truncation"),
    ("theta = 1.5\ntheta_prime = 1.75", "theta >= theta_prime"),
    ("observables = norm7", "unknown observable"),
    ("initial = sin40:1", "outside"),
    ("sample_scale = 0", "sample_scale"),
    ("just text", "key = value"),
])
def test_config_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def test_ergodicity_constraint():
    parse_config("theta_prime = 1.4\ntheta = 1.75")
    with pytest.raises(ConfigError, match="3/2"):
        parse_config("theta_prime = 1.4\ntheta = 1.75", suites=("ergodicity",))
    with pytest.raises(ConfigError, match="below 2"):
        parse_config("theta_prime = 1.75\ntheta = 2.0", suites=("ergodicity",))


def test_initial_components():
    u = parse_initial("sin1:5, cos2:0.1", 4)
    assert u.coeffs[1, 0] == pytest.approx(5 * math.sqrt(math.pi))
    assert u.coeffs[0, 1] == pytest.approx(0.1 * math.sqrt(math.pi))
    assert parse_initial("zero", 3).norm() == 0
    with pytest.raises(ConfigError):
        parse_initial("tan1:1", 3)


def test_snapshot_is_plain():
    snap = parse_config("suites = a, b").snapshot()
    assert snap["suites"] == "a,b" and snap["r_truncation"] == "none"


def test_observables():
    c = np.zeros((2, 3))
    c[0, 0] = 4.0
    assert observable("cos1")(c) == 1.0
    assert observable("raw_cos1")(c) == 4.0
    assert observable("cos5")(c) == 0.0
    assert observable("norm0:8")(c) == 0.5
    assert observable("const")(np.zeros((5, 2, 3))).shape == (5,)
    assert math.isinf(observable("raw_norm1").bound)
    assert all(observable(o).bound == 1.0 for o in MIXING_BATTERY)
    with pytest.raises(ValueError):
        observable("cos0")


def test_empty_report_has_header(tmp_path):
    entry = write_report([], tmp_path / "r.csv", ["a", "b"])
    assert (tmp_path / "r.csv").read_bytes() == b"a,b\r\n"
    assert entry.n_rows == 0 and entry.sha256 == file_digest(tmp_path / "r.csv")
    with pytest.raises(ValueError):
        write_report([], tmp_path / "s.csv")


@given(st.lists(st.tuples(st.floats(allow_nan=False), st.integers(-2**63, 2**63), st.booleans(),
                          st.text(alphabet="ab,\"\n x", max_size=6)), max_size=20))
def test_report_roundtrip(tmp_path_factory, rows):
    path = tmp_path_factory.mktemp("r") / "r.csv"
    records = [{"x": x, "k": k, "ok": b, "s": "s" + s} for x, k, b, s in rows]
    write_report(records, path, ["x", "k", "ok", "s"])
    header, back = read_report(path)
    assert header == ["x", "k", "ok", "s"]
    for r, b in zip(records, back):
        assert float(b["x"]) == r["x"] or (math.isinf(r["x"]) and b["x"] == r["x"])
        assert b["k"] == r["k"] and b["ok"] is r["ok"] and b["s"] == r["s"]


def test_format_values():
    assert format_value(0.1) == "0.10000000000000001"
    assert format_value(np.float64(-np.inf)) == "-inf"
    assert format_value(np.bool_(True)) == "true"
    assert format_value(None) == ""
    assert parse_value("nan") != parse_value("nan")
    assert parse_value("3") == 3 and parse_value("x") == "x"


def test_digest_stable(tmp_path):
    recs = [{"t": 0.1 * i, "v": i % 2 == 0} for i in range(5)]
    a = write_report(recs, tmp_path / "a.csv")
    b = write_report(recs, tmp_path / "b.csv")
    assert a.sha256 == b.sha256
    assert (tmp_path / "a.csv").read_bytes().count(b"\r\n") == 6


def test_report_io_error_names_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="file"):
        write_report([{"a": 1}], blocker / "sub" / "r.csv")


def test_manifest(tmp_path):
    m = RunManifest("simulate", {"alpha": 1.5}, "0.1.0")
    m.add_suite("one", True, value=np.float64(0.25), bad=math.nan)
    m.add_output(write_report([{"a": 1}], tmp_path / "r.csv"))
    digest = m.write(tmp_path / "manifest.json")
    assert digest == file_digest(tmp_path / "manifest.json")
    back = RunManifest.load(tmp_path / "manifest.json")
    assert back.suites == {"one": True} and back.details["one"] == {"value": 0.25, "bad": "nan"}
    assert back.to_json() == m.to_json()
    m.add_suite("two", False)
    assert not m.passed
