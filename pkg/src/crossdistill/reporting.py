"""Aggregation of sweep CSVs: per-cell mean and std over seeds, improvement
deltas, and the rank correlation between the estimated distribution distance
and the linear-eval improvement for modality-gap sweeps."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from scipy import stats

from .plotting import write_line_plot
from .sweeps import ROW_FIELDS


class ReportError(ValueError):
    """Input CSV is malformed or lacks the methods a table needs."""


_NUMERIC = ("accuracy", "d_tv_hat", "eps_ab", "eps_b", "wall_s")


def read_rows(path: str | Path) -> list[dict]:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != ROW_FIELDS:
            raise ReportError(
                f"{path}: unexpected header {reader.fieldnames}; expected {list(ROW_FIELDS)}"
            )
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            row: dict = dict(rec)
            try:
                row["seed"] = int(rec["seed"]) if rec["seed"] else None
                for key in _NUMERIC:
                    row[key] = float(rec[key]) if rec[key] else None
            except ValueError as err:
                raise ReportError(f"{path}:{lineno}: bad numeric field: {err}") from err
            rows.append(row)
    return rows


def _mean(values: list[float]) -> float:
    return sum(values) / len(values)


def _std(values: list[float]) -> float:
    if len(values) < 2:
        return 0.0
    mu = _mean(values)
    return math.sqrt(sum((v - mu) ** 2 for v in values) / (len(values) - 1))


def _finite(values) -> list[float]:
    return [v for v in values if v is not None and not math.isnan(v)]


def aggregate(rows: list[dict]) -> list[dict]:
    """Mean and sample std over seeds for each (sweep_var, value, method, eval_mode)."""
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault((row["sweep_var"], row["value"], row["method"], row["eval_mode"]), []).append(row)

    def sort_key(key):
        sweep_var, value, method, mode = key
        try:
            value_key: object = (0, float(value))
        except (TypeError, ValueError):
            value_key = (1, str(value))
        return (sweep_var, value_key, method, mode)

    out = []
    for key in sorted(groups, key=sort_key):
        members = groups[key]
        accs = _finite([m["accuracy"] for m in members])
        tvs = _finite([m["d_tv_hat"] for m in members])
        record = {
            "sweep_var": key[0],
            "value": key[1],
            "method": key[2],
            "eval_mode": key[3],
            "n_seeds": len(members),
            "n_diverged": len(members) - len(accs),
            "acc_mean": _mean(accs) if accs else None,
            "acc_std": _std(accs) if accs else None,
            "d_tv_mean": _mean(tvs) if tvs else None,
            "d_tv_std": _std(tvs) if tvs else None,
        }
        out.append(record)
    return out


def _cell_mean(agg: list[dict], value, method: str, mode: str) -> float | None:
    for rec in agg:
        if rec["value"] == value and rec["method"] == method and rec["eval_mode"] == mode:
            return rec["acc_mean"]
    return None


def gap_deltas(rows: list[dict]) -> list[dict]:
    """Per-gamma linear-eval (and, when present, fine-tune) improvement of
    distillation over its reference method."""
    gamma_rows = [r for r in rows if r["sweep_var"] == "gamma"]
    if not gamma_rows:
        raise ReportError("no gamma-sweep rows in this CSV")
    agg = aggregate(gamma_rows)
    values = sorted({r["value"] for r in gamma_rows}, key=float)
    out = []
    for value in values:
        cmd_le = _cell_mean(agg, value, "cmd", "le")
        ssl_le = _cell_mean(agg, value, "ssl", "le")
        if cmd_le is None or ssl_le is None:
            raise ReportError(
                f"gamma={value}: improvement deltas need both cmd+le and ssl+le rows"
            )
        cmd_ft = _cell_mean(agg, value, "cmd", "ft")
        sup_ft = _cell_mean(agg, value, "sup", "ft")
        tvs = _finite([r["d_tv_hat"] for r in gamma_rows if r["value"] == value])
        out.append(
            {
                "gamma": float(value),
                "d_tv_mean": _mean(tvs) if tvs else None,
                "le_delta": cmd_le - ssl_le,
                "ft_delta": (cmd_ft - sup_ft) if cmd_ft is not None and sup_ft is not None else None,
            }
        )
    return out


def spearman(xs: list[float], ys: list[float]) -> float:
    """Rank correlation with average ranks for ties."""
    res = stats.spearmanr(xs, ys)
    return float(res.statistic)


def gap_correlations(deltas: list[dict]) -> dict:
    gammas = [d["gamma"] for d in deltas]
    tvs = [d["d_tv_mean"] for d in deltas]
    les = [d["le_delta"] for d in deltas]
    out = {"spearman_d_tv_vs_gamma": None, "spearman_d_tv_vs_le_delta": None}
    if all(v is not None for v in tvs) and len(tvs) >= 2:
        out["spearman_d_tv_vs_gamma"] = spearman(gammas, tvs)
        out["spearman_d_tv_vs_le_delta"] = spearman(tvs, les)
    return out


def write_report(csv_in: str | Path, out_dir: str | Path) -> dict:
    """Aggregate a sweep CSV into ``aggregate.csv``, ``summary.json`` and plots;
    gamma sweeps additionally get ``deltas.csv`` and the rank correlations."""
    rows = read_rows(csv_in)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    agg = aggregate(rows)
    agg_fields = ["sweep_var", "value", "method", "eval_mode", "n_seeds", "n_diverged",
                  "acc_mean", "acc_std", "d_tv_mean", "d_tv_std"]
    with open(out_dir / "aggregate.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=agg_fields)
        writer.writeheader()
        for rec in agg:
            writer.writerow({k: ("" if rec[k] is None else (repr(rec[k]) if isinstance(rec[k], float) else rec[k]))
                             for k in agg_fields})

    summary: dict = {"n_rows": len(rows), "sweep_vars": sorted({r["sweep_var"] for r in rows})}
    if any(r["sweep_var"] == "gamma" for r in rows):
        deltas = gap_deltas(rows)
        with open(out_dir / "deltas.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["gamma", "d_tv_mean", "le_delta", "ft_delta"])
            writer.writeheader()
            for d in deltas:
                writer.writerow({k: ("" if d[k] is None else repr(float(d[k]))) for k in d})
        summary["deltas"] = deltas
        summary.update(gap_correlations(deltas))
        tv_series = {"d_tv": [(d["gamma"], d["d_tv_mean"]) for d in deltas if d["d_tv_mean"] is not None]}
        if tv_series["d_tv"]:
            tv_series["le_delta"] = [(d["gamma"], d["le_delta"]) for d in deltas]
            write_line_plot(out_dir / "gap_diagnostics.svg", tv_series,
                            title="distribution distance and improvement vs gap",
                            xlabel="gap", ylabel="value")

    for sweep_var in summary["sweep_vars"]:
        series: dict[str, list[tuple[float, float]]] = {}
        for rec in agg:
            if rec["sweep_var"] != sweep_var or rec["acc_mean"] is None:
                continue
            try:
                x = float(rec["value"])
            except (TypeError, ValueError):
                continue
            series.setdefault(f"{rec['method']}+{rec['eval_mode']}", []).append((x, rec["acc_mean"]))
        if series:
            write_line_plot(out_dir / f"report_{sweep_var}.svg", series,
                            title=f"mean accuracy vs {sweep_var}",
                            xlabel=sweep_var, ylabel="top-1 accuracy (%)")

    with open(out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary
