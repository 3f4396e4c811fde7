"""Command-line entry point: run, perturb, sweep, report."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from ._compat import loads_toml
from .backend import FixedCondensedBackend
from .condenser import Condenser, CondenserParams, ExemplarSet
from .perturb import DiversionParams, MockDistractor, PerturbKind, PerturbSpec, perturb
from .session import WindowConfig
from .harness.chat_models import MockChatModel
from .harness.compare import compare_runs
from .harness.report import load_report, write_run_dir
from .harness.runner import TtftModel, run_strategy
from .harness.strategies import Strategy, StrategyKind
from .harness.sweep import DEFAULT_GAMMAS, DEFAULT_TAUS, decider_sweep
from .harness.transcripts import Transcript, dump_transcripts, load_transcripts

logger = logging.getLogger("histcondense")


def load_config(path: str | None) -> dict[str, Any]:
    """Flat mapping of option names (dashes or underscores) to values, from JSON or TOML."""
    if not path:
        return {}
    p = Path(path)
    if p.suffix == ".toml":
        data = loads_toml(p.read_text("utf-8"))
    else:
        data = json.loads(p.read_text("utf-8"))
    return {k.replace("-", "_"): v for k, v in data.items()}


def _add_backend_flags(p: argparse.ArgumentParser) -> None:
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--mock", dest="live", action="store_false", help="offline deterministic models (default)")
    mode.add_argument("--live", dest="live", action="store_true", help="call the endpoint from HISTCONDENSE_BASE_URL")
    p.set_defaults(live=False)
    p.add_argument("--base-url", help="override HISTCONDENSE_BASE_URL")
    p.add_argument("--provider-profile", help="JSON/TOML provider capability profile")
    p.add_argument("--chat-model", default="meta-llama/Llama-3.3-70B-Instruct")
    p.add_argument("--condenser-model", default=None, help="defaults to --chat-model")


def _add_window_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--strategy", choices=[k.value for k in StrategyKind], default="mtosc")
    p.add_argument("--w", type=int, default=4)
    p.add_argument("--gamma", type=float, default=0.2)
    p.add_argument("--tau", type=int, default=1000)
    p.add_argument("--delay", type=int, default=1, help="integration delay in turns")
    p.add_argument("--no-decider", action="store_true")
    p.add_argument("--tau-scope", choices=["window", "history"], default="window")
    p.add_argument("--overlap-mode", choices=["global", "pairwise"], default="global")
    p.add_argument("--fifo-limit", type=int, default=4)
    p.add_argument("--exemplars", help="exemplar JSON file")
    p.add_argument("--mock-reply-tokens", type=int, default=150)
    p.add_argument("--mock-condensed-tokens", type=int, nargs=2, default=[20, 60], metavar=("USER", "ASSISTANT"))
    p.add_argument("--seconds-per-token", type=float, default=TtftModel().seconds_per_token)
    p.add_argument("--concurrency", type=int, default=1)
    p.add_argument("--lenient", action="store_true", help="skip malformed transcript lines")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="histcondense", description=__doc__)
    parser.add_argument("--config", help="JSON or TOML file whose keys mirror the flags")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="replay transcripts under one strategy")
    run.add_argument("--transcripts", required=True)
    run.add_argument("--out", required=True)
    run.add_argument("--repeats", type=int, default=1)
    _add_window_flags(run)
    _add_backend_flags(run)

    pert = sub.add_parser("perturb", help="write a perturbed copy of a transcript file")
    pert.add_argument("--transcripts", required=True)
    pert.add_argument("--out", required=True)
    pert.add_argument("--kind", choices=[k.value for k in PerturbKind], required=True)
    pert.add_argument("--ratio", type=float, default=0.25)
    pert.add_argument("--n", type=int, default=None)
    pert.add_argument("--seed", type=int, default=0)
    _add_backend_flags(pert)

    sweep = sub.add_parser("sweep", help="grid over decider gamma and tau")
    sweep.add_argument("--transcripts", required=True)
    sweep.add_argument("--out", required=True)
    sweep.add_argument("--gammas", type=float, nargs="+", default=list(DEFAULT_GAMMAS))
    sweep.add_argument("--taus", type=int, nargs="+", default=list(DEFAULT_TAUS))
    _add_window_flags(sweep)
    _add_backend_flags(sweep)

    rep = sub.add_parser("report", help="compare two run reports")
    rep.add_argument("--compare", nargs=2, required=True, metavar=("BASELINE", "CANDIDATE"))
    rep.add_argument("--out", help="write the comparison JSON here instead of stdout")
    return parser


def _client(args: argparse.Namespace, model_id: str):
    from .client import ChatClient, ClientConfig, ProviderProfile

    overrides: dict[str, Any] = {}
    if args.base_url:
        overrides["base_url"] = args.base_url
    if args.provider_profile:
        overrides["profile"] = ProviderProfile.load(args.provider_profile)
    return ChatClient(ClientConfig.from_env(**overrides), model_id)


def _strategy(args: argparse.Namespace) -> Strategy:
    config = WindowConfig(
        w=args.w,
        gamma=args.gamma,
        tau=args.tau,
        integration_delay_turns=args.delay,
        decider_enabled=not args.no_decider,
        tau_scope=args.tau_scope,
        overlap_mode=args.overlap_mode,
    )
    return Strategy(kind=StrategyKind(args.strategy), window_config=config, fifo_limit=args.fifo_limit)


def _models(args: argparse.Namespace, strategy: Strategy):
    exemplars = ExemplarSet.load(args.exemplars) if args.exemplars else None
    mode = "summarize" if strategy.kind is StrategyKind.MT_OSC_SUMMARIZER else "fewshot"
    if args.live:
        chat = _client(args, args.chat_model)
        backend = _client(args, args.condenser_model or args.chat_model)
        params = CondenserParams.from_env(CondenserParams(model_id=args.condenser_model or args.chat_model))
    else:
        chat = MockChatModel(reply_tokens=args.mock_reply_tokens)
        user, assistant = args.mock_condensed_tokens
        backend = FixedCondensedBackend(user, assistant)
        params = CondenserParams.from_env()

    def factory() -> Condenser:
        return Condenser(backend, params, exemplars, mode=mode)

    return chat, factory


def cmd_run(args: argparse.Namespace) -> int:
    transcripts = load_transcripts(args.transcripts, lenient=args.lenient)
    strategy = _strategy(args)
    chat, factory = _models(args, strategy)
    report = run_strategy(transcripts, strategy, chat, factory, ttft_model=TtftModel(0.0, args.seconds_per_token),
                          repeats=args.repeats, concurrency=args.concurrency)
    out = write_run_dir(report, args.out)
    print(json.dumps(report.aggregates(), indent=2))
    logger.info("wrote %s", out)
    return 0


def cmd_perturb(args: argparse.Namespace) -> int:
    transcripts = load_transcripts(args.transcripts)
    kind = PerturbKind(args.kind)
    generator = None
    if kind is PerturbKind.CONTEXTUAL_DIVERSION:
        generator = _client(args, args.chat_model) if args.live else MockDistractor()
    out, manifest = [], []
    for k, t in enumerate(transcripts):
        # per-transcript seeds keep variants independent of file order changes elsewhere
        spec = PerturbSpec(kind=kind, ratio=args.ratio, n_override=args.n, seed=args.seed + k,
                           diversion_params=DiversionParams(model_id=args.chat_model) if generator else None)
        result = perturb(list(t.user_turns), spec, generator)
        out.append(Transcript(t.id, tuple(result.turns), t.reference_answer, t.scoring, t.tags + (f"perturb:{kind.value}",)))
        manifest.append({"id": t.id, "spec": spec.to_dict(), "selected": result.selected,
                         "inserted_at": result.inserted_at})
    dump_transcripts(out, args.out)
    Path(str(args.out) + ".manifest.json").write_text(
        json.dumps({"source": str(args.transcripts), "base_seed": args.seed, "transcripts": manifest}, indent=2) + "\n",
        encoding="utf-8",
    )
    print(f"wrote {len(out)} transcripts to {args.out}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    transcripts = load_transcripts(args.transcripts, lenient=args.lenient)
    strategy = _strategy(args)
    if not strategy.condenses:
        strategy = Strategy(StrategyKind.MT_OSC, strategy.window_config)
    chat, factory = _models(args, strategy)
    report = decider_sweep(transcripts, args.gammas, args.taus, strategy, chat, factory,
                           concurrency=args.concurrency)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    lines = ["gamma,tau,sessions,routed_to_condensation,withheld,avg_history_tokens,total_tokens_with_background"]
    for c in report.cells:
        lines.append(f"{c.gamma},{c.tau},{c.sessions},{c.routed_to_condensation},{c.withheld},"
                     f"{c.avg_history_tokens!r},{c.total_tokens_with_background}")
    (out / "sweep.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    baseline, candidate = (load_report(p) for p in args.compare)
    comparison = compare_runs(baseline, candidate)
    text = json.dumps(comparison.to_dict(), indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


COMMANDS = {"run": cmd_run, "perturb": cmd_perturb, "sweep": cmd_sweep, "report": cmd_report}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    config = load_config(args.config)
    if config:
        # config supplies defaults; explicit flags still win
        sub = parser._subparsers._group_actions[0].choices[args.command]  # type: ignore[union-attr]
        sub.set_defaults(**config)
        args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    raise SystemExit(main())
