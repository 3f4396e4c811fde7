from .chat_models import ChatModel, FailingChatModel, FunctionChatModel, MockChatModel
from .compare import ComparisonReport, MismatchedTranscripts, compare_runs
from .report import emit_report, load_report, write_run_dir
from .runner import (
    RunReport,
    SessionRecord,
    TtftModel,
    TurnRecord,
    estimate_ttft,
    run_session,
    run_strategy,
    score_exact_match,
)
from .strategies import CondensingHistory, Event, RawHistory, Strategy, StrategyKind
from .sweep import DEFAULT_GAMMAS, DEFAULT_TAUS, SweepReport, decider_sweep
from .synthetic import synthetic_transcript, vocabulary_transcripts
from .transcripts import SchemaError, Scoring, Transcript, dump_transcripts, load_transcripts

__all__ = [
    "ChatModel", "ComparisonReport", "CondensingHistory", "DEFAULT_GAMMAS", "DEFAULT_TAUS", "Event",
    "FailingChatModel", "FunctionChatModel", "MismatchedTranscripts", "MockChatModel", "RawHistory",
    "RunReport", "SchemaError", "Scoring", "SessionRecord", "Strategy", "StrategyKind", "SweepReport",
    "Transcript", "TtftModel", "TurnRecord", "compare_runs", "decider_sweep", "dump_transcripts",
    "emit_report", "estimate_ttft", "load_report", "load_transcripts", "run_session", "run_strategy",
    "score_exact_match", "synthetic_transcript", "vocabulary_transcripts", "write_run_dir",
]
