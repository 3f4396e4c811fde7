"""Windowed, asynchronous one-off sequential condensation of chat history."""
from .backend import BackendError, Completion, FailingBackend, FixedCondensedBackend, ScriptedBackend
from .condenser import Condenser, CondenserParams, ExemplarSet, MockCondenser, parse_condenser_output
from .decider import DeciderVerdict, Decision, decide, normalize, window_overlap
from .session import (
    CondensedPair,
    ExchangePair,
    SessionState,
    WindowConfig,
    begin_user_turn,
    build_prompt_history,
    complete_assistant_reply,
    history_token_count,
    integrate_ready_job,
)
from .tokens import DEFAULT_TOKENIZER, Tokenizer, WhitespaceTokenizer, default_token_count

__version__ = "0.1.0"
