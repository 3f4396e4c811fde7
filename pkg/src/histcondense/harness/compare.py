"""Paired comparison of a candidate run against a baseline run."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Any

from ..errors import HistCondenseError
from .runner import RunReport


class MismatchedTranscripts(HistCondenseError):
    pass


def reduction_percent(baseline: float, candidate: float) -> float:
    if baseline == 0:
        return 0.0
    return 100.0 * (baseline - candidate) / baseline


@dataclass
class TranscriptComparison:
    transcript_id: str
    repeat: int
    baseline_history_tokens: int
    candidate_history_tokens: int
    history_reduction_percent: float
    baseline_total_with_background: int
    candidate_total_with_background: int
    total_reduction_percent: float
    baseline_exact_match: bool | None
    candidate_exact_match: bool | None


@dataclass
class CurvePoint:
    turn_index: int
    sessions: int
    baseline_mean_history_tokens: float
    candidate_mean_history_tokens: float
    reduction_percent: float
    baseline_cumulative: int
    candidate_cumulative: int
    candidate_cumulative_with_background: int


@dataclass
class ComparisonReport:
    baseline_strategy: dict[str, Any]
    candidate_strategy: dict[str, Any]
    per_transcript: list[TranscriptComparison] = field(default_factory=list)
    curve: list[CurvePoint] = field(default_factory=list)
    aggregate: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def compare_runs(baseline: RunReport, candidate: RunReport) -> ComparisonReport:
    base = {s.key: s for s in baseline.sessions}
    cand = {s.key: s for s in candidate.sessions}
    if set(base) != set(cand):
        missing = sorted(set(base) ^ set(cand))
        raise MismatchedTranscripts(f"runs cover different transcripts: {missing[:5]}")

    rows = []
    for key in sorted(base):
        b, c = base[key], cand[key]
        rows.append(
            TranscriptComparison(
                transcript_id=key[0],
                repeat=key[1],
                baseline_history_tokens=b.history_tokens,
                candidate_history_tokens=c.history_tokens,
                history_reduction_percent=reduction_percent(b.history_tokens, c.history_tokens),
                baseline_total_with_background=b.total_tokens_with_background,
                candidate_total_with_background=c.total_tokens_with_background,
                total_reduction_percent=reduction_percent(b.total_tokens_with_background, c.total_tokens_with_background),
                baseline_exact_match=b.exact_match,
                candidate_exact_match=c.exact_match,
            )
        )

    per_turn_b: dict[int, list[int]] = defaultdict(list)
    per_turn_c: dict[int, list[int]] = defaultdict(list)
    per_turn_bg: dict[int, int] = defaultdict(int)
    for key in base:
        b_turns = {t.turn_index: t for t in base[key].turns}
        for t in cand[key].turns:
            if t.turn_index not in b_turns:
                continue
            per_turn_b[t.turn_index].append(b_turns[t.turn_index].prompt_history_tokens)
            per_turn_c[t.turn_index].append(t.prompt_history_tokens)
            per_turn_bg[t.turn_index] += t.background_tokens

    curve = []
    cum_b = cum_c = cum_bg = 0
    for turn in sorted(per_turn_b):
        bs, cs = per_turn_b[turn], per_turn_c[turn]
        cum_b += sum(bs)
        cum_c += sum(cs)
        cum_bg += per_turn_bg[turn]
        mb, mc = sum(bs) / len(bs), sum(cs) / len(cs)
        curve.append(
            CurvePoint(turn, len(bs), mb, mc, reduction_percent(mb, mc), cum_b, cum_c, cum_c + cum_bg)
        )

    agg_b, agg_c = baseline.aggregates(), candidate.aggregates()
    acc_b, acc_c = agg_b["exact_match_accuracy"], agg_c["exact_match_accuracy"]
    aggregate = {
        "baseline_history_tokens": agg_b["total_history_tokens"],
        "candidate_history_tokens": agg_c["total_history_tokens"],
        "history_reduction_percent": reduction_percent(agg_b["total_history_tokens"], agg_c["total_history_tokens"]),
        "baseline_total_with_background": agg_b["total_tokens_with_background"],
        "candidate_total_with_background": agg_c["total_tokens_with_background"],
        "total_reduction_percent": reduction_percent(
            agg_b["total_tokens_with_background"], agg_c["total_tokens_with_background"]
        ),
        "final_turn_reduction_percent": curve[-1].reduction_percent if curve else 0.0,
        "baseline_accuracy": acc_b,
        "candidate_accuracy": acc_c,
        "accuracy_delta": (acc_c - acc_b) if acc_b is not None and acc_c is not None else None,
        "candidate_withheld_sessions": agg_c["withheld_session_count"],
    }
    candidate.reduction_vs_baseline_percent = aggregate["history_reduction_percent"]
    return ComparisonReport(baseline.strategy, candidate.strategy, rows, curve, aggregate)
