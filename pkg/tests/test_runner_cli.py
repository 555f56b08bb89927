"""Config parsing, suite orchestration and the command-line interface."""

import csv
import json

import numpy as np
import pytest

from filterlab import (ConfigurationError, ExperimentConfig, emit_plotdata,
                       parse_config, run)
from filterlab.cli import main
from filterlab.runner import SUITES


def test_defaults():
    cfg = parse_config("")
    assert cfg.model == "coupled"
    assert cfg.scheme == "I"
    assert cfg.suites == ("limit_lab",)
    assert cfg.sign == -1.0


def test_parse_full_config():
    text = """
    # experiment configuration
    model = linear-gaussian
    scheme = II
    g = x            # test function
    n_fine = 2048
    ladder = 16, 32, 64, 128
    level = 64
    paths = 10
    particles = 100
    seed = 1
    suites = rate, oracle_kalman
    sign = 1
    threads = 2
    """
    cfg = parse_config(text)
    assert cfg.model == "linear-gaussian"
    assert cfg.ladder == (16, 32, 64, 128)
    assert cfg.suites == ("rate", "oracle_kalman")
    assert cfg.sign == 1.0
    assert cfg.threads == 2


@pytest.mark.parametrize("text", [
    "nonsense",                      # no key=value
    "unknown_key = 3",
    "seed = 1\nseed = 2",            # duplicate
    "paths = many",                  # bad int
    "paths = 0",
    "scheme = III",
    "n_fine = 100",                  # not a power of two
    "level = 24",                    # does not divide n_fine
    "level = 1024",                  # too close to n_fine
    "suites = nope",
    "suites =",
    "sign = 0.5",
])
def test_parse_config_rejects(text):
    with pytest.raises(ConfigurationError):
        parse_config(text)


def test_overrides_win():
    cfg = parse_config("seed = 1", overrides={"seed": 99, "threads": 3})
    assert cfg.seed == 99 and cfg.threads == 3
    with pytest.raises(ConfigurationError):
        parse_config("", overrides={"bogus": 1})


_SMALL = """
model = coupled
scheme = I
n_fine = 256
ladder = 8, 16, 32
level = 32
paths = 70
particles = 40
seed = 5
suites = variance_crosscheck, mixed_normal
"""


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = parse_config(_SMALL)
    report = run(cfg, out_dir=out)
    return cfg, report, out


def test_run_writes_report_and_csvs(small_run):
    cfg, report, out = small_run
    payload = json.loads((out / "report.json").read_text())
    assert set(payload["report"]["suites"]) == {"variance_crosscheck",
                                                "mixed_normal"}
    assert (out / "variance_crosscheck.csv").exists()
    with open(out / "mixed_normal.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 70
    assert {"rescaled_error", "V_eff", "V_mu_eff"} <= set(rows[0])
    # verdicts carry values and standard errors
    for suite in payload["report"]["suites"].values():
        assert suite["error"] == ""
        for v in suite["verdicts"]:
            assert set(v) >= {"name", "value", "predicted", "passed"}


def test_report_is_reproducible(small_run, tmp_path):
    cfg, report, out = small_run
    report2 = run(cfg, out_dir=tmp_path)
    a = json.loads((out / "report.json").read_text())["report"]
    b = json.loads((tmp_path / "report.json").read_text())["report"]
    for payload in (a, b):
        for suite in payload["suites"].values():
            suite.pop("files")      # differ by output directory only
    assert a == b


def test_threads_do_not_change_results(small_run, tmp_path):
    cfg, report, out = small_run
    threaded = parse_config(_SMALL, overrides={"threads": 2})
    run(threaded, out_dir=tmp_path)
    a = json.loads((out / "report.json").read_text())["report"]["suites"]
    b = json.loads((tmp_path / "report.json").read_text())["report"]["suites"]
    assert a["mixed_normal"]["verdicts"] == b["mixed_normal"]["verdicts"]


def test_emit_plotdata(small_run):
    cfg, report, out = small_run
    files = emit_plotdata(report)
    names = {f.rsplit("/", 1)[-1] for f in files}
    assert "plot_ecdf.csv" in names and "plot_u_grid.csv" in names
    with open(out / "plot_ecdf.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 70
    ecdf = [float(r["ecdf"]) for r in rows]
    assert ecdf == sorted(ecdf)


def test_cli_listings(capsys):
    assert main(["list-models"]) == 0
    out = capsys.readouterr().out.split()
    assert out == ["coupled", "linear-gaussian", "standard"]
    assert main(["list-suites"]) == 0
    out = capsys.readouterr().out.split()
    assert tuple(out) == SUITES


def test_cli_run_and_plotdata(tmp_path, capsys):
    cfg_file = tmp_path / "exp.cfg"
    cfg_file.write_text(_SMALL)
    code = main(["run", "--config", str(cfg_file), "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert "report:" in out
    assert code in (0, 1)   # verdict-driven exit status
    assert (tmp_path / "report.json").exists()
    code = main(["emit-plotdata", "--out", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "plot_ecdf.csv").exists()


def test_cli_usage_errors(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("unknown = 1")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "error:" in capsys.readouterr().err


def test_validate_rejects_bad_level_combinations():
    with pytest.raises(ConfigurationError):
        ExperimentConfig(n_fine=256, ladder=(16, 48), level=32).validate()
    with pytest.raises(ConfigurationError):
        ExperimentConfig(model="nope").validate()
