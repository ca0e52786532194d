"""Tests for config parsing, the simulation harness, CSV emission, and the
command-line entry point."""

import csv
import io

import numpy as np
import pytest

from ebcc.cli import main
from ebcc.harness import (
    CSV_HEADER,
    ExperimentConfig,
    _signal_mu,
    emit_csv,
    parse_config,
    rows_to_csv_text,
    run_experiment,
    summarize,
)

TINY_ZSTAT = """
kind = zstat
m = 6
n_signals = 2
amplitude = 3.0
alpha = 0.1
alpha0 = 0.01
replications = 3
exact_cs_budget = 200
asymptotic_cs_budget = 200
batch_size = 50
base_seed = 7
"""


# ---------------------------------------------------------------------------
# parse_config


def test_parse_minimal_config():
    cfg = parse_config("kind = zstat\nalpha = 0.05\n")
    assert cfg.kind == "zstat"
    assert cfg.alpha == 0.05
    # derived defaults
    assert cfg.alpha_cc == cfg.alpha
    assert cfg.lrt_alternative == cfg.amplitude


def test_parse_comments_and_types():
    cfg = parse_config(
        "kind = outlier  # trailing comment\n"
        "# full-line comment\n"
        "m = 12\n"
        "theta = 0.4, 0.3, 0.3\n")
    assert cfg.m == 12
    assert cfg.theta == (0.4, 0.3, 0.3)


def test_parse_rejects_out_of_range_alpha():
    with pytest.raises(ValueError, match="alpha"):
        parse_config("kind = zstat\nalpha = 1.5\n")


def test_parse_rejects_missing_kind():
    with pytest.raises(ValueError, match="kind"):
        parse_config("")


def test_parse_reports_offending_lines():
    with pytest.raises(ValueError, match="line 2.*unknown key"):
        parse_config("kind = zstat\nbogus = 1\n")
    with pytest.raises(ValueError, match="line 3.*duplicate"):
        parse_config("kind = zstat\nm = 5\nm = 6\n")
    with pytest.raises(ValueError, match="line 1.*key = value"):
        parse_config("not a config\n")


def test_config_validation():
    with pytest.raises(ValueError, match="replications"):
        ExperimentConfig(kind="zstat", replications=0)
    with pytest.raises(ValueError, match="unknown experiment kind"):
        ExperimentConfig(kind="nope")
    with pytest.raises(ValueError, match="alpha_cc"):
        ExperimentConfig(kind="zstat", alpha_cc=1.0)


# ---------------------------------------------------------------------------
# signal layouts


def test_signal_mu_head_layout():
    cfg = ExperimentConfig(kind="zstat", m=5, n_signals=2, amplitude=3.0)
    np.testing.assert_array_equal(_signal_mu(cfg), [3, 3, 0, 0, 0])


def test_signal_mu_spaced_alternating():
    cfg = ExperimentConfig(kind="zstat", m=5, n_signals=2, amplitude=3.0,
                           signal_layout="spaced_alternating")
    np.testing.assert_array_equal(_signal_mu(cfg), [3, 0, 0, 0, -3])


def test_signal_mu_unknown_layout():
    cfg = ExperimentConfig(kind="zstat", signal_layout="diagonal")
    with pytest.raises(ValueError, match="layout"):
        _signal_mu(cfg)


# ---------------------------------------------------------------------------
# running experiments


def _strip_seconds(csv_text: str) -> list[list[str]]:
    rows = list(csv.reader(io.StringIO(csv_text)))
    k = rows[0].index("seconds")
    return [r[:k] + r[k + 1:] for r in rows]


def test_results_independent_of_thread_count():
    cfg = parse_config(TINY_ZSTAT)
    serial = run_experiment(cfg, threads=1)
    parallel = run_experiment(cfg, threads=2)
    assert _strip_seconds(rows_to_csv_text(serial)) == \
        _strip_seconds(rows_to_csv_text(parallel))


def test_rows_sorted_by_method_then_rep():
    cfg = parse_config(TINY_ZSTAT)
    rows = run_experiment(cfg, threads=1)
    methods = [r["method"] for r in rows]
    assert methods == ["BH"] * 3 + ["e-BH"] * 3 + ["e-BH-CC"] * 3
    for method in ("BH", "e-BH", "e-BH-CC"):
        assert [r["rep"] for r in rows if r["method"] == method] == [0, 1, 2]
    summary = summarize(rows)
    assert set(summary) == {"BH", "e-BH", "e-BH-CC"}
    assert all(v["n"] == 3 for v in summary.values())
    assert 0.0 <= summary["e-BH-CC"]["power"] <= 1.0


def test_emit_csv_header_only_when_empty(tmp_path):
    path = tmp_path / "empty.csv"
    emit_csv([], str(path))
    assert path.read_text() == ",".join(CSV_HEADER) + "\n"


def test_emit_csv_round_trip():
    row = {"method": "e-BH", "rep": 0, "power": 0.5, "fdp": 1 / 3,
           "n_reject": 3, "n_boosted": 0, "samples": 0,
           "seconds": 0.001234567, "seed": 42}
    text = rows_to_csv_text([row])
    parsed = list(csv.reader(io.StringIO(text)))
    assert parsed[0] == CSV_HEADER
    assert parsed[1] == ["e-BH", "0", "0.5", "0.333333", "3", "0",
                         "0", "0.00123457", "42"]


# ---------------------------------------------------------------------------
# command line


def test_cli_validate_ok(tmp_path, capsys):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY_ZSTAT)
    assert main(["validate", "--config", str(path)]) == 0
    out = capsys.readouterr().out
    assert "kind=zstat" in out and "base_seed=7" in out


def test_cli_validate_bad_config(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("kind = zstat\nalpha = 1.5\n")
    assert main(["validate", "--config", str(path)]) == 2
    assert "bad config" in capsys.readouterr().err
    assert main(["validate", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_cli_ebh_reads_stdin(monkeypatch, capsys):
    monkeypatch.setattr("sys.stdin", io.StringIO("8 8 1 0"))
    assert main(["ebh", "--alpha", "0.5"]) == 0
    assert capsys.readouterr().out.split() == ["1", "2"]


def test_cli_ebh_empty_stdin(monkeypatch, capsys):
    monkeypatch.setattr("sys.stdin", io.StringIO(""))
    assert main(["ebh", "--alpha", "0.5"]) == 2
    assert "no e-values" in capsys.readouterr().err


def test_cli_run_end_to_end(tmp_path):
    cfg_path = tmp_path / "tiny.cfg"
    cfg_path.write_text(TINY_ZSTAT)
    out_path = tmp_path / "out.csv"
    assert main(["run", "--config", str(cfg_path), "--out", str(out_path),
                 "--threads", "1", "--seed", "99"]) == 0
    rows = list(csv.reader(out_path.open()))
    assert rows[0] == CSV_HEADER
    assert len(rows) == 1 + 9  # 3 methods x 3 replications
    assert all(r[-1] == "99" for r in rows[1:])


def test_cli_threads_env_fallback(monkeypatch, tmp_path):
    cfg_path = tmp_path / "tiny.cfg"
    cfg_path.write_text(TINY_ZSTAT)
    out_path = tmp_path / "out.csv"
    monkeypatch.setenv("EBCC_THREADS", "2")
    assert main(["run", "--config", str(cfg_path),
                 "--out", str(out_path)]) == 0
    ref_path = tmp_path / "ref.csv"
    assert main(["run", "--config", str(cfg_path), "--out", str(ref_path),
                 "--threads", "1"]) == 0
    assert _strip_seconds(out_path.read_text()) == \
        _strip_seconds(ref_path.read_text())
