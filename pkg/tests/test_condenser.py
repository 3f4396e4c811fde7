import json
import math
import random
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from histcondense.backend import BackendError, FailingBackend, ScriptedBackend
from histcondense.condenser import (
    CONDENSER_INSTRUCTION,
    SUMMARIZER_INSTRUCTION,
    Condenser,
    CondenserParams,
    EmptyField,
    EmptyWindow,
    Exemplar,
    ExemplarSet,
    InvalidExemplars,
    MissingKey,
    MockCondenser,
    NoJsonFound,
    ParseError,
    ParseFailedAfterRetries,
    ParsedCondensation,
    build_condenser_prompt,
    build_summarizer_prompt,
    condense,
    mock_condense,
    parse_condenser_output,
    serialize_condensation,
)
from histcondense.session import CondensedPair, ExchangePair, Role, Turn
from histcondense.tokens import default_token_count


def pair(i, user, assistant):
    return ExchangePair(Turn.make(Role.USER, user), Turn.make(Role.ASSISTANT, assistant), i)


def words(prefix, n):
    return " ".join(f"{prefix}{k}" for k in range(n))


WINDOW = [pair(i, f"question {i}", f"answer {i}") for i in range(1, 5)]
GOOD = '{"HumanInput": "a", "Assistant": "b", "Reasoning": "c"}'


class TestPrompts:
    def test_instruction_present(self):
        prompt = build_condenser_prompt(WINDOW, ExemplarSet.load())
        assert "Only return the JSON with no additional text." in prompt
        assert prompt.startswith(CONDENSER_INSTRUCTION)

    def test_history_block_count(self):
        prompt = build_condenser_prompt(WINDOW, ExemplarSet.load())
        assert prompt.count("Conversation History:") == 4
        final = prompt.rsplit("Conversation History:", 1)[1]
        assert final.strip().startswith("Human: question 1")
        assert final.count("Human:") == 4 and final.count("Assistant:") == 4

    def test_condensed_entry_rendered_once(self):
        c = CondensedPair("CONDENSED-U", "CONDENSED-A", "hidden-reasoning", 1, 4, 1)
        window = [c] + WINDOW[1:]
        prompt = build_condenser_prompt(window, ExemplarSet.load())
        assert prompt.count("Human: CONDENSED-U") == 1
        assert prompt.count("Assistant: CONDENSED-A") == 1
        assert "hidden-reasoning" not in prompt

    def test_deterministic(self):
        ex = ExemplarSet.load()
        assert build_condenser_prompt(WINDOW, ex) == build_condenser_prompt(list(WINDOW), ex)

    def test_empty_window(self):
        with pytest.raises(EmptyWindow):
            build_condenser_prompt([], ExemplarSet.load())
        with pytest.raises(EmptyWindow):
            build_summarizer_prompt([])

    def test_summarizer_prompt(self):
        prompt = build_summarizer_prompt(WINDOW)
        assert "Return in JSON format" in prompt
        assert "Conversation History:" not in prompt
        assert "Reasoning" not in prompt
        assert prompt.startswith(SUMMARIZER_INSTRUCTION)

    def test_instruction_text_matches_reference(self):
        # the reference template escapes braces by doubling them
        path = Path(__file__).resolve().parents[1] / "paper.md"
        if not path.exists():
            pytest.skip("reference text not present")
        source = path.read_text(encoding="utf-8")
        for line in CONDENSER_INSTRUCTION.splitlines() + SUMMARIZER_INSTRUCTION.splitlines():
            assert line.replace("{", "{{").replace("}", "}}") in source


class TestExemplars:
    def test_default_set(self):
        ex = ExemplarSet.load()
        assert len(ex.exemplars) == 3

    def test_too_few(self):
        with pytest.raises(InvalidExemplars):
            ExemplarSet((Exemplar("c", GOOD),) * 2)

    def test_bad_output(self):
        with pytest.raises(InvalidExemplars):
            ExemplarSet((Exemplar("c", GOOD),) * 2 + (Exemplar("c", '{"HumanInput": "x"}'),))

    def test_file_format(self, tmp_path):
        f = tmp_path / "ex.json"
        f.write_text(json.dumps([{"conversation": f"c{i}", "output": GOOD} for i in range(3)]))
        ex = ExemplarSet.load(f)
        assert [e.conversation for e in ex.exemplars] == ["c0", "c1", "c2"]


class TestParse:
    def test_exact_schema(self):
        assert parse_condenser_output(GOOD) == ParsedCondensation("a", "b", "c")

    def test_wrapped(self):
        assert parse_condenser_output('Sure! {"HumanInput":"a","Assistant":"b"}') == ParsedCondensation("a", "b", "")

    def test_missing_key(self):
        with pytest.raises(MissingKey) as exc:
            parse_condenser_output('{"HumanInput":"a"}')
        assert exc.value.name == "Assistant"

    def test_empty_field(self):
        with pytest.raises(EmptyField):
            parse_condenser_output('{"HumanInput":"  ","Assistant":"b"}')
        with pytest.raises(EmptyField):
            parse_condenser_output('{"HumanInput":3,"Assistant":"b"}')

    def test_no_json(self):
        with pytest.raises(NoJsonFound):
            parse_condenser_output("no json here")
        with pytest.raises(NoJsonFound):
            parse_condenser_output("[1, 2]")

    def test_strict_mode(self):
        with pytest.raises(NoJsonFound):
            parse_condenser_output("Sure! " + GOOD, strict=True)
        assert parse_condenser_output(GOOD, strict=True).human_input == "a"

    def test_skips_invalid_brace_group(self):
        text = 'note {not json} then {"HumanInput":"x","Assistant":"y"}'
        assert parse_condenser_output(text).human_input == "x"

    def test_bytes(self):
        assert parse_condenser_output(GOOD.encode()).assistant_summary == "b"

    def test_two_key_summarizer_output(self):
        assert parse_condenser_output('{"HumanInput": "h", "Assistant": "s"}').reasoning == ""


def scan_first_object(text):
    """Hand-built brace scanner: first balanced {...} that decodes to a JSON object."""
    for start, ch in enumerate(text):
        if ch != "{":
            continue
        depth, in_str, esc = 0, False, False
        for end in range(start, len(text)):
            c = text[end]
            if in_str:
                if esc:
                    esc = False
                elif c == "\\":
                    esc = True
                elif c == '"':
                    in_str = False
                continue
            if c == '"':
                in_str = True
            elif c == "{":
                depth += 1
            elif c == "}":
                depth -= 1
                if depth == 0:
                    try:
                        obj = json.loads(text[start:end + 1])
                    except ValueError:
                        obj = None
                    if isinstance(obj, dict):
                        return obj
                    break
    return None


PROSE = ["Sure!", "Here is the JSON:", "```json", "```", "Note: {draft}", "}", "ok {", "Thanks.", "\n", "Result ->"]


def fuzzed_wrappers(n, seed=7):
    rng = random.Random(seed)
    out = []
    for k in range(n):
        payload = {"HumanInput": f"h{k} with {{braces}} and \"quotes\"", "Assistant": f"a{k} \\ slash"}
        if rng.random() < 0.5:
            payload["Reasoning"] = f"r{k}"
        body = json.dumps(payload, indent=rng.choice([None, 2]))
        pre = " ".join(rng.choice(PROSE) for _ in range(rng.randint(0, 3)))
        post = " ".join(rng.choice(PROSE) for _ in range(rng.randint(0, 3)))
        out.append((pre + " " + body + " " + post, payload))
    return out


def test_extraction_agrees_with_hand_scanner():
    payload_hits = 0
    for text, payload in fuzzed_wrappers(20):
        expected = scan_first_object(text)
        assert expected is not None
        if "HumanInput" not in expected or "Assistant" not in expected:
            # prose such as "ok { }" can hold an earlier complete object
            with pytest.raises(MissingKey):
                parse_condenser_output(text)
            continue
        got = parse_condenser_output(text)
        assert (got.human_input, got.assistant_summary) == (expected["HumanInput"], expected["Assistant"])
        assert (got.human_input, got.assistant_summary) == (payload["HumanInput"], payload["Assistant"])
        payload_hits += 1
    assert payload_hits >= 15


def mutate(text, rng):
    chars = list(text)
    for _ in range(rng.randint(1, 6)):
        op = rng.random()
        pos = rng.randrange(len(chars) + 1)
        if op < 0.33 and chars:
            del chars[min(pos, len(chars) - 1)]
        elif op < 0.66:
            chars.insert(pos, rng.choice('{}[]",:\\ ax\x00é'))
        elif chars:
            chars[min(pos, len(chars) - 1)] = rng.choice('{}"\\x')
    return "".join(chars)


def fuzz_corpus(n, seed=99):
    rng = random.Random(seed)
    corpus = []
    for k in range(n):
        kind = k % 4
        if kind == 0:
            corpus.append(bytes(rng.randrange(256) for _ in range(rng.randint(0, 80))))
        elif kind == 1:
            corpus.append(mutate(GOOD, rng))
        elif kind == 2:
            corpus.append("{" * rng.randint(1, 3000) + GOOD + "}" * rng.randint(0, 10))
        else:
            corpus.append("".join(chr(rng.randrange(0x20, 0x3000)) for _ in range(rng.randint(0, 60))))
    return corpus


def run_fuzz(corpus):
    values = errors = 0
    for item in corpus:
        try:
            result = parse_condenser_output(item)
        except ParseError:
            errors += 1
        else:
            assert isinstance(result, ParsedCondensation)
            values += 1
    return values, errors


def test_parser_fuzz_small():
    values, errors = run_fuzz(fuzz_corpus(1000))
    assert values + errors == 1000 and values > 0 and errors > 0


@given(st.text(min_size=1).filter(str.strip), st.text(min_size=1).filter(str.strip), st.text())
def test_round_trip(h, a, r):
    parsed = parse_condenser_output(serialize_condensation(ParsedCondensation(h, a, r)), strict=True)
    assert parsed == ParsedCondensation(h, a, r)


class TestCondense:
    def test_success_counts_tokens(self):
        backend = ScriptedBackend([GOOD])
        out = condense(WINDOW, backend)
        assert out.parsed == ParsedCondensation("a", "b", "c")
        assert out.input_tokens == default_token_count(backend.prompts[0])
        assert out.output_tokens == default_token_count(GOOD)

    def test_retry_then_success(self):
        backend = ScriptedBackend(["nope", "still nope", GOOD])
        out = condense(WINDOW, backend)
        assert out.attempts == 3
        assert len(set(backend.prompts)) == 1 and len(backend.prompts) == 3

    def test_gives_up_after_retries(self):
        backend = ScriptedBackend(["bad"] * 3 + [GOOD])
        with pytest.raises(ParseFailedAfterRetries) as exc:
            condense(WINDOW, backend)
        assert exc.value.attempts == 3
        assert exc.value.output_tokens == 3

    def test_backend_error_propagates(self):
        with pytest.raises(BackendError):
            condense(WINDOW, FailingBackend())

    def test_summarize_mode_prompt(self):
        backend = ScriptedBackend(['{"HumanInput": "h", "Assistant": "s"}'])
        out = Condenser(backend, mode="summarize").condense(WINDOW)
        assert backend.prompts[0].startswith(SUMMARIZER_INSTRUCTION)
        assert out.parsed.human_input == "h"

    def test_params_defaults_and_env(self, monkeypatch):
        p = CondenserParams()
        assert (p.temperature, p.frequency_penalty, p.max_completion_tokens, p.top_p) == (0.01, 1.0, 10000, 1.0)
        monkeypatch.setenv("HISTCONDENSE_CONDENSER_TEMPERATURE", "0.5")
        monkeypatch.setenv("HISTCONDENSE_CONDENSER_MODEL_ID", "m")
        q = CondenserParams.from_env()
        assert q.temperature == 0.5 and q.model_id == "m" and q.top_p == 1.0


class TestMockCondense:
    def test_identity_ratio(self):
        window = [pair(i, words("u", 50), words("a", 150)) for i in range(1, 5)]
        out = mock_condense(window, 1.0)
        assert default_token_count(out.human_input) == 200
        assert default_token_count(out.assistant_summary) == 600

    def test_ratio_02(self):
        window = [pair(i, words("u", 50), words("a", 150)) for i in range(1, 5)]
        out = mock_condense(window, 0.2)
        assert default_token_count(out.human_input) == math.ceil(0.2 * 200) == 40
        assert default_token_count(out.assistant_summary) == math.ceil(0.2 * 600) == 120

    def test_deterministic(self):
        assert mock_condense(WINDOW, 0.5) == mock_condense(WINDOW, 0.5)
        assert mock_condense(WINDOW, 0.5).reasoning == "mock"

    def test_empty(self):
        with pytest.raises(EmptyWindow):
            mock_condense([], 0.5)

    def test_mock_condenser_accounting(self):
        out = MockCondenser(0.5).condense(WINDOW)
        assert out.input_tokens == 16
        assert out.output_tokens == default_token_count(out.parsed.human_input) + default_token_count(out.parsed.assistant_summary)
