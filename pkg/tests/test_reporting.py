"""CSV aggregation, deltas, rank correlations, and plot determinism."""

import csv
import math

import numpy as np
import pytest

from crossdistill.plotting import write_line_plot
from crossdistill.reporting import (
    ReportError,
    aggregate,
    gap_correlations,
    gap_deltas,
    read_rows,
    spearman,
    write_report,
)
from crossdistill.sweeps import ROW_FIELDS, append_row_csv, make_row, write_rows_csv


def _gamma_rows():
    rows = []
    # le_delta perfectly anti-monotone in d_tv
    cells = [(0.0, 0.10, 20.0), (0.2, 0.20, 15.0), (0.4, 0.30, 10.0)]
    for gamma, tv, delta in cells:
        for seed in (0, 1):
            rows.append(make_row("gamma", gamma, "cmd", "le", seed, 50.0 + delta, tv))
            rows.append(make_row("gamma", gamma, "ssl", "le", seed, 50.0, tv))
    return rows


class TestCsvRoundTrip:
    def test_written_rows_parse_back(self, tmp_path):
        rows = _gamma_rows()
        path = tmp_path / "rows.csv"
        write_rows_csv(path, rows)
        loaded = read_rows(path)
        assert len(loaded) == len(rows)
        assert loaded[0]["accuracy"] == rows[0]["accuracy"]
        assert loaded[0]["wall_s"] is None  # wall time stays out of artifacts

    def test_append_creates_header_once(self, tmp_path):
        path = tmp_path / "runs.csv"
        append_row_csv(path, make_row("stage", "pretrain", "infonce", "-", 0))
        append_row_csv(path, make_row("stage", "distill:cmd", "cmd", "-", 0, eps_ab=1.5))
        loaded = read_rows(path)
        assert len(loaded) == 2
        with open(path) as fh:
            assert fh.read().count("sweep_var") == 1

    def test_wrong_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["a", "b"])
            writer.writerow([1, 2])
        with pytest.raises(ReportError, match="header"):
            read_rows(path)


class TestAggregate:
    def test_hand_built_means(self, tmp_path):
        rows = [
            make_row("alpha", 0.5, "interp", "le", 0, 10.0),
            make_row("alpha", 0.5, "interp", "le", 1, 20.0),
            make_row("alpha", 0.5, "interp", "le", 2, 30.0),
            make_row("alpha", 1.0, "interp", "le", 0, 40.0),
        ]
        agg = aggregate(rows)
        first = next(r for r in agg if r["value"] == 0.5)
        assert first["acc_mean"] == pytest.approx(20.0)
        assert first["acc_std"] == pytest.approx(10.0)  # sample std of {10,20,30}
        assert first["n_seeds"] == 3
        single = next(r for r in agg if r["value"] == 1.0)
        assert single["acc_std"] == 0.0

    def test_nan_rows_counted_as_diverged(self):
        rows = [
            make_row("alpha", 0.5, "interp", "le", 0, 10.0),
            make_row("alpha", 0.5, "interp", "le", 1, float("nan")),
        ]
        rec = aggregate(rows)[0]
        assert rec["n_diverged"] == 1
        assert rec["acc_mean"] == pytest.approx(10.0)


class TestDeltasAndCorrelations:
    def test_gap_deltas(self):
        deltas = gap_deltas(_gamma_rows())
        assert [d["le_delta"] for d in deltas] == [pytest.approx(v) for v in (20.0, 15.0, 10.0)]
        assert deltas[0]["d_tv_mean"] == pytest.approx(0.10)

    def test_perfect_antimonotone_gives_minus_one(self):
        corr = gap_correlations(gap_deltas(_gamma_rows()))
        assert corr["spearman_d_tv_vs_gamma"] == pytest.approx(1.0)
        assert corr["spearman_d_tv_vs_le_delta"] == pytest.approx(-1.0)

    def test_spearman_handles_ties(self):
        assert spearman([1, 2, 3, 4], [1, 1, 2, 2]) == pytest.approx(0.8944271909999159)

    def test_missing_methods_rejected(self):
        rows = [make_row("gamma", 0.0, "cmd", "le", 0, 10.0)]
        with pytest.raises(ReportError, match="ssl"):
            gap_deltas(rows)

    def test_non_gamma_csv_has_no_deltas(self):
        with pytest.raises(ReportError, match="gamma"):
            gap_deltas([make_row("alpha", 0.0, "interp", "le", 0, 10.0)])


class TestWriteReport:
    def test_outputs_and_determinism(self, tmp_path):
        csv_path = tmp_path / "sweep_gap.csv"
        write_rows_csv(csv_path, _gamma_rows())
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        summary = write_report(csv_path, out1)
        write_report(csv_path, out2)
        assert summary["spearman_d_tv_vs_le_delta"] == pytest.approx(-1.0)
        for name in ("aggregate.csv", "deltas.csv", "summary.json", "report_gamma.svg"):
            assert (out1 / name).exists()
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


class TestPlotting:
    def test_plot_bytes_deterministic(self, tmp_path):
        series = {"m1": [(0.0, 1.0), (1.0, 3.0)], "m2": [(0.0, 2.0), (1.0, 1.5)]}
        write_line_plot(tmp_path / "a.svg", series, "t", "x", "y")
        write_line_plot(tmp_path / "b.svg", series, "t", "x", "y")
        assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
        assert (tmp_path / "a.svg.csv").exists()  # sidecar data series
        body = (tmp_path / "a.svg").read_text()
        assert body.startswith("<svg") and "polyline" in body

    def test_empty_series_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            write_line_plot(tmp_path / "x.svg", {"s": []}, "t", "x", "y")
