"""Command-line entry points.

    skyfence run --scenario FILE [--seed N] [--log FILE] [--headless]
    skyfence serve --scenario FILE --port P
    skyfence evaluate --annotations DIR --detections DIR --out report.json
    skyfence decode-adsb FILE
    skyfence decode-nmea FILE
    skyfence mfcc FILE.wav
    skyfence replay LOG --scenario FILE

Log level comes from SKYFENCE_LOG_LEVEL (error|warn|info|debug).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import acoustics, airdata, evalkit, runtime, simkit, telemetry

log = logging.getLogger("skyfence")

_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


def _setup_logging() -> None:
    level = os.environ.get("SKYFENCE_LOG_LEVEL", "warn").lower()
    logging.basicConfig(
        level=_LEVELS.get(level, logging.WARNING),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


def _load_engine_config(path: str | None) -> runtime.EngineConfig | None:
    if path is None:
        return None
    return runtime.EngineConfig.from_dict(json.loads(Path(path).read_text()))


def _load_scenario(path: str, seed: int | None) -> simkit.Scenario:
    scenario = simkit.load_scenario(Path(path))
    if seed is not None:
        scenario.seed = seed
    return scenario


def _cmd_run(args: argparse.Namespace) -> int:
    scenario = _load_scenario(args.scenario, args.seed)
    config = _load_engine_config(args.config)
    script = []
    if args.commands:
        for line in Path(args.commands).read_text().splitlines():
            if not line.strip():
                continue
            doc = json.loads(line)
            script.append((int(doc.pop("at_ms")), doc))
    result = runtime.run_virtual(scenario, config, script)
    if args.log:
        Path(args.log).write_text("\n".join(result.log_lines()) + "\n")
    if not args.headless:
        for line in result.snapshot_lines():
            print(line)
    decisions = sum(1 for s in result.snapshots if s.decision.label is not None)
    log.info("run complete: %d ticks, %d decisions", len(result.snapshots), decisions)
    print(
        json.dumps(
            {
                "ticks": len(result.snapshots),
                "decisions": decisions,
                "log_records": len(result.log),
            }
        ),
        file=sys.stderr,
    )
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    scenario = _load_scenario(args.scenario, args.seed)
    config = _load_engine_config(args.config)
    telemetry.serve(scenario, args.port, config)
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    try:
        report = evalkit.evaluate_directories(
            Path(args.annotations),
            Path(args.detections),
            evalkit.EvalParams(args.iou_threshold, args.confidence_threshold),
        )
    except Exception as exc:
        print(f"evaluation failed: {exc}", file=sys.stderr)
        return 2
    Path(args.out).write_text(report.to_json() + "\n")
    print(f"overall F1: {report.overall_f1:.4f}")
    return 0


def _cmd_decode_adsb(args: argparse.Namespace) -> int:
    decoder = airdata.AdsbDecoder()
    source = sys.stdin if args.file == "-" else open(args.file)
    with source:
        for line in source:
            parsed = airdata.parse_hex_line(line)
            if parsed is None:
                continue
            hex_frame, t = parsed
            state = decoder.feed(hex_frame, t)
            if state is not None:
                doc = {
                    "icao": f"{state.icao:06X}",
                    "callsign": state.callsign,
                    "category_class": state.category_class.value,
                    "lat_deg": state.position.lat_deg if state.position else None,
                    "lon_deg": state.position.lon_deg if state.position else None,
                    "altitude_ft": state.altitude_ft,
                    "ground_speed_kt": state.ground_speed_kt,
                    "track_deg": state.track_deg,
                    "t": state.last_seen,
                }
                print(json.dumps(doc, sort_keys=True))
    return 0


def _cmd_decode_nmea(args: argparse.Namespace) -> int:
    source = sys.stdin if args.file == "-" else open(args.file)
    status = 0
    with source:
        for line in source:
            if not line.strip():
                continue
            try:
                fix = airdata.nmea_parse(line)
            except airdata.DecodeError as exc:
                print(json.dumps({"error": str(exc)}), file=sys.stderr)
                status = 1
                continue
            if fix is None:
                continue
            print(
                json.dumps(
                    {
                        "lat_deg": fix.lat_deg,
                        "lon_deg": fix.lon_deg,
                        "alt_m": fix.alt_m,
                        "utc": fix.utc,
                        "fix_quality": fix.fix_quality,
                        "speed_kt": fix.speed_kt,
                        "course_deg": fix.course_deg,
                    },
                    sort_keys=True,
                )
            )
    return status


def _cmd_mfcc(args: argparse.Namespace) -> int:
    samples = acoustics.read_wav(Path(args.file))
    if samples.size < acoustics.BUFFER_SAMPLES:
        print(
            f"need at least one second of audio, got {samples.size} samples",
            file=sys.stderr,
        )
        return 2
    coeffs = acoustics.mfcc(samples[: acoustics.BUFFER_SAMPLES])
    out = {
        "frames": int(coeffs.shape[0]),
        "coefficients": int(coeffs.shape[1]),
        "mean": [round(float(v), 6) for v in coeffs.mean(axis=0)],
        "std": [round(float(v), 6) for v in coeffs.std(axis=0)],
    }
    print(json.dumps(out, sort_keys=True))
    return 0


def _cmd_replay(args: argparse.Namespace) -> int:
    scenario = _load_scenario(args.scenario, None)
    lines = Path(args.log).read_text().splitlines()
    try:
        result = runtime.replay(scenario, lines)
    except runtime.ReplayError as exc:
        print(f"replay failed: {exc}", file=sys.stderr)
        return 2
    for line in result.snapshot_lines():
        print(line)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skyfence",
        description="multi-sensor drone detection engine: simulate, serve, evaluate",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario under the virtual clock")
    run_p.add_argument("--scenario", required=True)
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--log", default=None, help="write the event log (JSON lines)")
    run_p.add_argument("--headless", action="store_true", help="suppress snapshot output")
    run_p.add_argument("--config", default=None, help="engine config JSON")
    run_p.add_argument(
        "--commands", default=None, help="command script: JSON lines with at_ms field"
    )
    run_p.set_defaults(func=_cmd_run)

    serve_p = sub.add_parser("serve", help="live engine with websocket telemetry")
    serve_p.add_argument("--scenario", required=True)
    serve_p.add_argument("--seed", type=int, default=None)
    serve_p.add_argument("--port", type=int, default=8765)
    serve_p.add_argument("--config", default=None)
    serve_p.set_defaults(func=_cmd_serve)

    eval_p = sub.add_parser("evaluate", help="score detections against annotations")
    eval_p.add_argument("--annotations", required=True)
    eval_p.add_argument("--detections", required=True)
    eval_p.add_argument("--out", required=True)
    eval_p.add_argument("--iou-threshold", type=float, default=0.5)
    eval_p.add_argument("--confidence-threshold", type=float, default=0.5)
    eval_p.set_defaults(func=_cmd_evaluate)

    adsb_p = sub.add_parser("decode-adsb", help="decode hex frames to JSON records")
    adsb_p.add_argument("file", help="frame file, or - for stdin")
    adsb_p.set_defaults(func=_cmd_decode_adsb)

    nmea_p = sub.add_parser("decode-nmea", help="decode NMEA sentences to JSON records")
    nmea_p.add_argument("file", help="sentence file, or - for stdin")
    nmea_p.set_defaults(func=_cmd_decode_nmea)

    mfcc_p = sub.add_parser("mfcc", help="summarize MFCC features of a WAV file")
    mfcc_p.add_argument("file")
    mfcc_p.set_defaults(func=_cmd_mfcc)

    replay_p = sub.add_parser("replay", help="re-run a recorded event log")
    replay_p.add_argument("log")
    replay_p.add_argument("--scenario", required=True)
    replay_p.set_defaults(func=_cmd_replay)

    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        # downstream consumer (head, a pager) closed the pipe: not an error
        import os

        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 0


if __name__ == "__main__":
    sys.exit(main())
