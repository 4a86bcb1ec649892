import csv
import io
import json

import numpy as np
import pytest

from hill_orbits.cli import main
from hill_orbits.continuation import CSV_HEADER


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    r = list(csv.reader(io.StringIO(text)))
    return r[0], np.array(r[1:], dtype=float)


def test_orbit_report_text_and_json(capsys, tmp_path):
    js = tmp_path / "v.json"
    code, out, _ = run(capsys, "orbit", "--family", "g", "--gamma", "6.5088", "--q1", "0.176097",
                       "--json", str(js))
    assert code == 0
    keys = [line.split("  ")[0] for line in out.splitlines()]
    assert {"T_q", "T_s", "T_a", "T_d", "block 1", "block 2", "mu_p / mu_s / mu"} <= set(keys)
    doc = json.loads(js.read_text())
    assert (doc["mu_p"], doc["mu_s"], doc["mu"]) == (3, 3, 6)
    assert doc["T_s"] == pytest.approx(29.53, abs=0.01)
    assert len(doc["multipliers"]) == 4


def test_orbit_figure(capsys, tmp_path):
    pytest.importorskip("matplotlib")
    png = tmp_path / "o.png"
    code, _, _ = run(capsys, "orbit", "--family", "g", "--gamma", "6.5088", "--q1", "0.176097",
                     "--figure", str(png), "--out", str(tmp_path / "r.txt"))
    assert code == 0
    assert png.read_bytes()[:4] == b"\x89PNG"


def test_missing_parameter_is_usage_error(capsys):
    code, _, err = run(capsys, "orbit", "--family", "g", "--gamma", "6.5088")
    assert code == 2
    assert "--q1" in err


@pytest.mark.parametrize("argv", [
    ["orbit", "--family", "nope", "--gamma", "1", "--q1", "0.1"],
    ["orbit", "--family", "g"],
    ["sample", "--family", "g", "--gamma", "6.5088", "--q1", "0.176097", "--samples", "1"],
    ["graph"],
    [],
])
def test_usage_errors(capsys, argv):
    assert run(capsys, *argv)[0] == 2


def test_nonconvergence_is_numeric_failure(capsys):
    code, _, err = run(capsys, "orbit", "--family", "g", "--gamma", "6.5088", "--q1", "3.0",
                       "--crossings", "1")
    assert code == 1
    assert err


def test_empty_range_writes_header_only(capsys):
    code, out, _ = run(capsys, "family", "--family", "g", "--gamma-range", "5", "5")
    assert code == 0
    assert out == ",".join(CSV_HEADER) + "\n"


def test_family_csv_is_deterministic(capsys, tmp_path):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for p in paths:
        code, _, _ = run(capsys, "family", "--family", "g", "--gamma-range", "5.02", "5.0",
                         "--step0", "0.02", "--covers", "2", "--out", str(p))
        assert code == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()
    table = list(csv.DictReader(io.StringIO(paths[0].read_text())))
    assert [float(r["gamma"]) for r in table] == [5.02, 5.0]
    assert all(r["class_p"] == "elliptic" and r["mu"] == "6" for r in table)


def test_config_file_sets_defaults(capsys, tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("# family run\ngamma_range = 5 5\nstep0 = 0.01\n")
    code, out, _ = run(capsys, "family", "--config", str(conf), "--family", "g")
    assert code == 0
    assert out.count("\n") == 1


def test_bad_config_line(capsys, tmp_path):
    conf = tmp_path / "bad.conf"
    conf.write_text("gamma_range 5 5\n")
    assert run(capsys, "family", "--config", str(conf), "--family", "g")[0] == 2


def test_graph_single_family_without_events(capsys, tmp_path):
    js = tmp_path / "g.json"
    code, out, _ = run(capsys, "graph", "--family", "g", "--gamma-range", "5", "5", "--json", str(js))
    assert code == 0
    assert out.count(" -- ") == 1
    assert json.loads(js.read_text())["vertices"] == []


def _sample(capsys, *argv):
    code, out, _ = run(capsys, "sample", *argv)
    assert code == 0
    header, data = rows(out)
    assert header == ["t", "q1", "q2", "q3"]
    return data


def test_sample_variational_closes(capsys):
    data = _sample(capsys, "--family", "g", "--gamma", "6.5088", "--q1", "0.176097", "--samples", "1000")
    assert data.shape == (1000, 4)
    assert np.max(np.abs(data[0, 1:] - data[-1, 1:])) < 1e-6


def test_sample_g2v_is_spatial(capsys):
    data = _sample(capsys, "--family", "g2v", "--gamma", "1.30865", "--fixture", "--samples", "400")
    assert np.max(np.abs(data[:, 3])) > 1e-2


def test_sample_f_limit_ellipse(capsys):
    data = _sample(capsys, "--family", "f", "--gamma", "-100", "--fixture", "--samples", "2000")
    assert np.max(np.abs(data[:, 1])) == pytest.approx(10, rel=0.02)
    assert np.max(np.abs(data[:, 2])) == pytest.approx(20, rel=0.02)
