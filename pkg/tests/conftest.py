from __future__ import annotations

import pytest

from histcondense.condenser import CondenseOutcome, ParsedCondensation
from histcondense.session import (
    SessionState,
    WindowConfig,
    begin_user_turn,
    build_prompt_history,
    complete_assistant_reply,
    mark_job_ready,
    start_job,
)


class LabelCondenser:
    """Condenser double producing C{j}u / C{j}a labels and remembering its windows."""

    def __init__(self):
        self.windows = []

    def condense(self, window):
        self.windows.append(list(window))
        j = len(self.windows)
        return CondenseOutcome(ParsedCondensation(f"C{j}u", f"C{j}a", "labels"), 0, 0)


def drive_golden(n_turns: int = 9, w: int = 4):
    """Run the raw state machine with instant label condensation.

    Returns (histories, windows): the symbolic history before each turn's user
    message, and each condensation's input window as label pairs.
    """
    session = SessionState(config=WindowConfig(w=w))
    histories, windows = [], []
    for t in range(1, n_turns + 1):
        begin_user_turn(session, f"u{t}")
        msgs = build_prompt_history(session)
        hist = msgs[:-1]
        histories.append([(hist[i][1], hist[i + 1][1]) for i in range(0, len(hist), 2)])
        _, trigger = complete_assistant_reply(session, f"a{t}")
        if trigger is not None:
            job = start_job(session, trigger)
            windows.append([(e.user_text, e.assistant_text) for e in trigger.window])
            gen = job.generation_index
            mark_job_ready(session, f"C{gen}u", f"C{gen}a")
    return histories, windows


@pytest.fixture
def label_condenser():
    return LabelCondenser()
