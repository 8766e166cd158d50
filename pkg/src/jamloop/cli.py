"""Command-line entry points.

jamsim run     headless session: scripted melody through the engine and
               in-process server under an injected latency model
jamsim fig3    canned reference scenario (120 BPM, 4-beat lookahead,
               2-beat commit, fixed 2-beat round trip, 64 beats); exits
               nonzero on any underrun or commit violation
jamsim replay  re-run a .jam session record and verify the played chords
               reproduce

jamserve       TCP (and optional WebSocket) service for live clients
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .core import SessionSettings
from .engine import SessionRecord
from .simharness import (
    FIXTURE_SCRIPTS,
    LatencyModel,
    ScriptedMelody,
    SimReport,
    replay_record,
    run_sim,
)


def _load_script(spec: str, beats: int) -> ScriptedMelody:
    if spec in FIXTURE_SCRIPTS:
        return FIXTURE_SCRIPTS[spec](beats)
    return ScriptedMelody.from_text(Path(spec).read_text(encoding="utf-8"))


def _print_summary(report: SimReport) -> None:
    print(f"frames_simulated   {report.frames_simulated}")
    print(f"underruns          {report.underruns}")
    print(f"commit_violations  {report.commit_violations}")
    print(f"plan_churn         {report.plan_churn:.4f} "
          f"({report.plan_changed}/{report.plan_compared})")
    print(f"requests           {report.requests_answered}/{report.requests_sent} answered")
    print(f"response_ms        p50={report.response_p50_ms:.1f} "
          f"p95={report.response_p95_ms:.1f} max={report.response_max_ms:.1f}")
    print(f"warm_starts        {report.warm_start_targets}")
    print(f"max_context_tokens {report.max_context_tokens}")


def _write_outputs(report: SimReport, report_path: str | None, record_path: str | None) -> None:
    if report_path:
        Path(report_path).write_text(json.dumps(report.to_dict(), indent=2) + "\n",
                                     encoding="utf-8")
        print(f"report written to {report_path}")
    if record_path:
        Path(record_path).write_text(report.record.to_text(), encoding="utf-8")
        print(f"session record written to {record_path}")


def main_jamsim(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="jamsim", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="cmd", required=True)

    run = sub.add_parser("run", help="run a headless scripted session")
    run.add_argument("--script", default="arpeggio",
                     help="melody file (frame pitch duration lines) or fixture name: "
                          + ", ".join(FIXTURE_SCRIPTS))
    run.add_argument("--bpm", type=float, default=120.0)
    run.add_argument("--beats-per-measure", type=int, default=4)
    run.add_argument("--lookahead", type=int, default=4, help="lookahead beats")
    run.add_argument("--commit", type=int, default=4, help="commit beats")
    run.add_argument("--silence", type=int, default=8, help="initial silence beats")
    run.add_argument("--model", default="markov-online")
    run.add_argument("--temperature", type=float, default=1.0)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--latency", default="none",
                     help="none | fixed:800ms | fixed-rtt:2beats | uniform:20ms:80ms "
                          "| spike:50ms:900ms:8")
    run.add_argument("--beats", type=int, default=32, help="simulation horizon in beats")
    run.add_argument("--report", help="write the JSON health report here")
    run.add_argument("--out", help="write the .jam session record here")

    fig3 = sub.add_parser("fig3", help="reference latency scenario; fails on any "
                                       "underrun or commit violation")
    fig3.add_argument("--report", help="write the JSON health report here")
    fig3.add_argument("--out", help="write the .jam session record here")

    rep = sub.add_parser("replay", help="re-run a .jam record and verify it reproduces")
    rep.add_argument("--record", required=True)
    rep.add_argument("--zero-latency", action="store_true",
                     help="ignore recorded round trips and replay at zero latency")
    rep.add_argument("--report", help="write the JSON health report here")

    args = ap.parse_args(argv)

    if args.cmd == "run":
        settings = SessionSettings(
            bpm=args.bpm,
            beats_per_measure=args.beats_per_measure,
            silence_beats=args.silence,
            lookahead_beats=args.lookahead,
            commit_beats=args.commit,
            temperature=args.temperature,
            model_id=args.model,
            seed=args.seed,
        )
        settings.validate()
        script = _load_script(args.script, args.beats)
        report = run_sim(script, settings, LatencyModel.parse(args.latency),
                         beats=args.beats)
        _print_summary(report)
        _write_outputs(report, args.report, args.out)
        return 0

    if args.cmd == "fig3":
        settings = SessionSettings(
            bpm=120.0, lookahead_beats=4, commit_beats=2, silence_beats=8,
            temperature=0.0, model_id="markov-online", seed=7,
        )
        report = run_sim(FIXTURE_SCRIPTS["arpeggio"](64), settings,
                         LatencyModel.fixed_rtt_beats(2.0), beats=64)
        _print_summary(report)
        _write_outputs(report, args.report, args.out)
        ok = report.underruns == 0 and report.commit_violations == 0
        print("fig3 scenario:", "OK" if ok else "FAILED")
        return 0 if ok else 1

    if args.cmd == "replay":
        record = SessionRecord.from_text(Path(args.record).read_text(encoding="utf-8"))
        report, match = replay_record(record, as_recorded_latency=not args.zero_latency)
        _print_summary(report)
        if args.report:
            Path(args.report).write_text(json.dumps(report.to_dict(), indent=2) + "\n",
                                         encoding="utf-8")
        print("replay:", "reproduced" if match else "DIVERGED")
        return 0 if match else 1

    return 2


def main_jamserve(argv: list[str] | None = None) -> int:
    from .service import ServiceConfig, start_service

    ap = argparse.ArgumentParser(prog="jamserve", description="accompaniment service")
    ap.add_argument("--config", help="flat key-value config file")
    ap.add_argument("--listen", help="TCP HOST:PORT (default 127.0.0.1:7380)")
    ap.add_argument("--ws", help="optional WebSocket HOST:PORT for browser clients")
    ap.add_argument("--seed", type=int, help="default seed")
    ap.add_argument("--models", help="comma-separated agent ids to serve")
    args = ap.parse_args(argv)

    cfg = ServiceConfig.load(args.config, listen=args.listen, ws=args.ws,
                             seed=args.seed, models=args.models)
    svc = start_service(cfg)
    host, port = svc.address
    print(f"jamserve listening on tcp://{host}:{port}"
          + (f" and ws://{cfg.ws}" if cfg.ws else ""))
    try:
        svc.thread.join()
    except KeyboardInterrupt:
        print("shutting down")
        svc.shutdown()
    return 0


if __name__ == "__main__":
    sys.exit(main_jamsim())
