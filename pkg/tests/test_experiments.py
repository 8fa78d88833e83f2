import csv
import io
import math

import pytest

from covertime_lab.errors import ConfigError, OutputError
from covertime_lab.experiments import level_time, parse_config, run, run_config_file, t_lambda
from covertime_lab.gff import bz_prediction
from covertime_lab.rng import replica_key


def test_defaults():
    cfg = parse_config("experiment = cover-scaling\nn = 32\n")
    assert cfg.replicas == 100 and cfg.seed == 0 and cfg.boundary == "wired"
    assert cfg.sizes() == (32,)


def test_size_list_and_comments():
    cfg = parse_config("# sizes\nexperiment = gff-max  # trailing\nn = 32, 64,128\n\n")
    assert cfg.sizes() == (32, 64, 128)


@pytest.mark.parametrize("text,line", [
    ("experiment = gff-max\nn = 32\nn = 64\n", "line 3"),
    ("experiment = gff-max\ncolour = red\nn = 32\n", "line 2"),
    ("experiment = gff-max\nn = 32\nreplicas = -4\n", "line 3"),
    ("experiment = tau-concentration\nn = 32\nt = 1\nlambda = 0\n", "line 4"),
    ("experiment = tau-concentration\nn = 32\nlambda = -5\n", "line 3"),
    ("experiment = gff-max\nn = 32\nboundary = torus\n", "line 3"),
])
def test_config_errors_name_the_line(text, line):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert line in str(exc.value)


def test_missing_required_key():
    with pytest.raises(ConfigError, match="'n'"):
        parse_config("experiment = cover-scaling\n")
    with pytest.raises(ConfigError, match="experiment"):
        parse_config("n = 32\n")


def test_time_schedules():
    assert t_lambda(64, 0.0) == pytest.approx(math.log(64) ** 2 / math.pi)
    with pytest.raises(ConfigError):
        t_lambda(64, -math.log(64))
    assert level_time(64, "upper") == pytest.approx(bz_prediction(64) ** 2 / 2)
    assert level_time(64, "lower") == pytest.approx((bz_prediction(64) - 1) ** 2 / 2)
    cfg = parse_config("experiment = tau-concentration\nn = 16\nlambda = 1\n")
    assert cfg.time_for(16) == pytest.approx((math.log(16) + 1) ** 2 / math.pi)


def test_cover_scaling_deterministic(tmp_path):
    text = f"experiment = cover-scaling\nn = 32, 64\nreplicas = 5\nseed = 11\noutput = {tmp_path / 'a.csv'}\n"
    a = run(parse_config(text))
    b = run(parse_config(text.replace("a.csv", "b.csv")))
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert not (tmp_path / "a.csv.partial").exists()
    rows = list(csv.DictReader(io.StringIO((tmp_path / "a.csv").read_text())))
    assert len(rows) == 10 == a.manifest["totals"]["rows"]
    assert a.manifest["totals"]["rows[n=32]"] == 5
    assert [int(r["seed"]) for r in rows[:5]] == [replica_key(11, r) for r in range(5)]
    assert [(int(r["n"]), int(r["replica"])) for r in rows] == sorted((n, r) for n in (32, 64) for r in range(5))
    manifest = (tmp_path / "a.csv.manifest.txt").read_text()
    assert "[config]" in manifest and "wall_time" in manifest
    assert a.csv_text() == b.csv_text()


def test_isomorphism_preset(tmp_path):
    out = tmp_path / "iso.csv"
    cfg = tmp_path / "iso.cfg"
    cfg.write_text(f"experiment = isomorphism\ngraph = single-edge\nreplicas = 100000\nseed = 1\noutput = {out}\n")
    res = run_config_file(str(cfg))
    assert res.manifest["summary"]["pass"] == "true"
    assert "pass = true" in (tmp_path / "iso.csv.manifest.txt").read_text()


def test_green_cross_check_rows():
    res = run(parse_config("experiment = green-cross-check\nn = 21\n"))
    assert len(res.rows) == 5
    assert res.manifest["summary"]["max_abs_diff"] < 1e-3


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    cfg = parse_config(f"experiment = gff-max\nn = 8\nreplicas = 2\noutput = {blocker / 'out.csv'}\n")
    with pytest.raises(OutputError):
        run(cfg)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        run_config_file(str(tmp_path / "nope.cfg"))
