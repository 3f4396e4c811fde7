"""Report files: full JSON, per-turn CSV, and a per-turn token curve CSV."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict
from pathlib import Path
from typing import Any

from .runner import RunReport

TURN_COLUMNS = (
    "transcript_id",
    "repeat",
    "turn_index",
    "prompt_history_tokens",
    "prompt_tokens",
    "history_messages",
    "background_tokens_in",
    "background_tokens_out",
    "decision",
    "overlap",
    "user_tokens",
    "condensation_events",
    "estimated_ttft_seconds",
)

CURVE_COLUMNS = ("turn_index", "sessions", "mean_history_tokens", "cumulative_history_tokens",
                 "cumulative_tokens_with_background")


def report_to_dict(report: RunReport) -> dict[str, Any]:
    return {
        "strategy": report.strategy,
        "reduction_vs_baseline_percent": report.reduction_vs_baseline_percent,
        "aggregates": report.aggregates(),
        "sessions": [asdict(s) for s in report.sessions],
    }


def report_json(report: RunReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, ensure_ascii=False) + "\n"


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    return buf.getvalue()


def turns_csv(report: RunReport) -> str:
    rows = []
    for s in report.sessions:
        for t in s.turns:
            v = t.decider_verdict or {}
            rows.append([
                s.transcript_id, s.repeat, t.turn_index, t.prompt_history_tokens, t.prompt_tokens,
                t.history_messages, t.background_tokens_in, t.background_tokens_out,
                v.get("decision", ""), v.get("overlap", ""), v.get("user_tokens", ""),
                ";".join(t.condensation_events), repr(t.estimated_ttft_seconds),
            ])
    return _csv_text(TURN_COLUMNS, rows)


def curve_csv(report: RunReport) -> str:
    by_turn: dict[int, list] = {}
    for s in report.sessions:
        for t in s.turns:
            by_turn.setdefault(t.turn_index, []).append(t)
    rows = []
    cum = cum_bg = 0
    for turn in sorted(by_turn):
        ts = by_turn[turn]
        hist = sum(t.prompt_history_tokens for t in ts)
        cum += hist
        cum_bg += hist + sum(t.background_tokens for t in ts)
        rows.append([turn, len(ts), repr(hist / len(ts)), cum, cum_bg])
    return _csv_text(CURVE_COLUMNS, rows)


def emit_report(report: RunReport, format: str, path: str | Path) -> Path:
    """Write ``report`` as ``json`` (full structure) or ``csv`` (one row per turn).

    CSV output also writes ``<stem>.curve.csv`` next to ``path``.
    """
    path = Path(path)
    if format == "json":
        path.write_text(report_json(report), encoding="utf-8")
    elif format == "csv":
        path.write_text(turns_csv(report), encoding="utf-8")
        path.with_name(path.stem + ".curve.csv").write_text(curve_csv(report), encoding="utf-8")
    else:
        raise ValueError(f"unknown report format {format!r}")
    return path


def load_report(path: str | Path) -> RunReport:
    return RunReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def write_run_dir(report: RunReport, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    emit_report(report, "json", out / "report.json")
    emit_report(report, "csv", out / "turns.csv")
    return out
