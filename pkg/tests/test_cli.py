import csv
import io
import json
import struct

import numpy as np
import pytest

from covertime_lab.cli import main


def _csv(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


def test_simulate_cover(tmp_path):
    out = tmp_path / "c.csv"
    assert main(["simulate-cover", "--graph", "wired", "--n", "6", "--replicas", "4", "--out", str(out)]) == 0
    rows = _csv(out)
    assert len(rows) == 4
    assert all(float(r["tau_cov_return"]) >= float(r["tau_cov"]) for r in rows)


def test_simulate_inverse_local(tmp_path):
    out = tmp_path / "t.csv"
    assert main(["simulate-inverse-local", "--graph", "torus", "--n", "5", "--t", "1.0",
                 "--replicas", "3", "--out", str(out)]) == 0
    assert len(_csv(out)) == 3


def test_sample_gff_dump(tmp_path):
    out, dump = tmp_path / "g.csv", tmp_path / "g.bin"
    assert main(["sample-gff", "--n", "6", "--reps", "3", "--out", str(out), "--field-dump", str(dump)]) == 0
    raw = dump.read_bytes()
    (n,) = struct.unpack_from("<Q", raw)
    assert n == 6 and len(raw) == 8 + 3 * 36 * 8
    fields = np.frombuffer(raw, dtype="<f8", offset=8).reshape(3, 6, 6)
    assert np.all(fields[:, 0, :] == 0) and np.all(fields[:, :, -1] == 0)
    maxima = [float(r["max"]) for r in _csv(out)]
    assert maxima == pytest.approx([max(0.0, f.max()) for f in fields])


def test_verify_isomorphism_json_lines(tmp_path):
    out = tmp_path / "iso.jsonl"
    code = main(["verify-isomorphism", "--graph-preset", "single-edge", "--reps", "50", "--out", str(out)])
    lines = [json.loads(s) for s in out.read_text().splitlines()]
    summary = lines[-1]["summary"]
    assert summary["low_power"] is True
    assert code == (0 if summary["pass"] else 1)
    assert {"vertex", "ks_statistic", "pass"} <= set(lines[0])


def test_green_table(tmp_path):
    out = tmp_path / "gt.csv"
    assert main(["green-table", "--n", "21", "--radius", "1", "--out", str(out)]) == 0
    rows = _csv(out)
    assert len(rows) == 9
    assert max(float(r["abs_diff"]) for r in rows) < 1e-3


def test_experiment_subcommand(tmp_path, capsys):
    cfg = tmp_path / "x.cfg"
    cfg.write_text(f"experiment = gff-max\nn = 8\nreplicas = 3\noutput = {tmp_path / 'x.csv'}\n")
    assert main(["experiment", "--config", str(cfg)]) == 0
    assert len(_csv(tmp_path / "x.csv")) == 3
    assert "mean_max[n=8]" in capsys.readouterr().err


def test_errors_exit_with_code_2(tmp_path, capsys):
    assert main(["simulate-cover", "--n", "2"]) == 2
    assert "covertime-lab: error:" in capsys.readouterr().err
    bad = tmp_path / "bad.cfg"
    bad.write_text("experiment = nope\n")
    assert main(["experiment", "--config", str(bad)]) == 2
