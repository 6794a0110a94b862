"""Serialization of evaluation, benchmark, and training outputs.

JSON output is strict (no NaN / Infinity tokens): an infinite score rides as
`null` next to an explicit boolean flag, and aggregates over a column with
infinities report statistics of the finite subset plus `contains_infinite`.
Nothing here embeds wall-clock time, so reports for the same inputs are
byte-identical run to run.
"""

import json
import math

import numpy as np

from . import metrics


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def json_dumps(report) -> str:
    return json.dumps(_jsonable(report), indent=2, sort_keys=True, allow_nan=False) + "\n"


def format_mean_std(mean: float, std: float, digits: int = 4) -> str:
    return f"{mean:.{digits}f} ± {std:.{digits}f}"


def aggregate_column(values) -> dict:
    """Mean / sample std over the finite entries, flagging infinities."""
    finite = [v for v in values if math.isfinite(v)]
    out = {"count": len(values), "contains_infinite": len(finite) < len(values)}
    if finite:
        mean, std = metrics.aggregate(finite)
        out["mean"] = mean
        out["std"] = std
    else:
        out["mean"] = None
        out["std"] = None
    return out


def eval_report(rows: list) -> dict:
    """Aggregate per-image metric rows; psnr_db comes in as a possibly-inf float."""
    out_rows = []
    for r in rows:
        row = dict(r)
        row["psnr_infinite"] = not math.isfinite(r["psnr_db"])
        if row["psnr_infinite"]:
            row["psnr_db"] = None
        out_rows.append(row)
    columns = ("psnr_db", "ssim", "uiqm", "uicm", "uism", "uiconm")
    aggregates = {}
    for col in columns:
        raw = [math.inf if r[col] is None else r[col] for r in out_rows]
        aggregates[col] = aggregate_column(raw)
    return {"rows": out_rows, "aggregates": aggregates}


# ---------------------------------------------------------------------------
# fixed-width text tables


def _render_table(headers, rows) -> str:
    cells = [[str(h) for h in headers]] + [[str(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    lines = []
    for n, row in enumerate(cells):
        padded = [
            row[i].ljust(widths[i]) if i == 0 else row[i].rjust(widths[i])
            for i in range(len(row))
        ]
        lines.append("  ".join(padded).rstrip())
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _num(value, digits=4) -> str:
    if value is None:
        return "inf"
    if isinstance(value, float) and not math.isfinite(value):
        return "inf"
    return f"{value:.{digits}f}"


def render_eval_table(report: dict) -> str:
    headers = ("id", "psnr_db", "ssim", "uiqm", "uicm", "uism", "uiconm")
    rows = [
        (
            r["id"],
            _num(r["psnr_db"]),
            _num(r["ssim"]),
            _num(r["uiqm"]),
            _num(r["uicm"]),
            _num(r["uism"]),
            _num(r["uiconm"]),
        )
        for r in report["rows"]
    ]
    agg = report["aggregates"]

    def summary(col):
        a = agg[col]
        if a["mean"] is None:
            return "inf"
        text = format_mean_std(a["mean"], a["std"])
        if a["contains_infinite"]:
            text += " (finite rows only)"
        return text

    rows.append(("mean", *[summary(c) for c in headers[1:]]))
    return _render_table(headers, rows)


def render_bench_table(report: dict) -> str:
    m = report["model"]
    lat = report["latency"]
    lines = [
        f"parameters (alpha): {m['alpha']:,}",
        f"published alpha:    {m['published_alpha']:,} (delta {m['alpha_delta']:+,})",
        f"note: {m['alpha_note']}",
        f"latency (beta):     {lat['beta_seconds']:.6f} s "
        f"(median of {lat['timed_runs']} runs after {lat['warmup_runs']} warmups)",
        "",
    ]
    headers = ("baseline", "alpha", "beta_s", "comp_ratio", "comp_gain", "speed_ratio", "speed_gain")
    rows = [
        (
            c["name"],
            f"{c['alpha']:,}",
            f"{c['beta_seconds']:.2f}",
            _num(c["compression_ratio"], 2),
            _num(c["compression_gain"], 2),
            _num(c["speed_up_ratio"], 2),
            _num(c["speed_up_gain"], 2),
        )
        for c in report["comparisons"]
    ]
    lines.append(_render_table(headers, rows))
    return "\n".join(lines)


def history_csv(history) -> str:
    lines = ["epoch,train_mse,train_vgg,train_total,val_total"]
    for h in history:
        val = "" if math.isnan(h.val_total) else f"{h.val_total:.8f}"
        lines.append(
            f"{h.epoch},{h.train_mse:.8f},{h.train_vgg:.8f},{h.train_total:.8f},{val}"
        )
    return "\n".join(lines) + "\n"
