"""Command-line surface: simulate, analyze, anchors, judge, selftest.

Exit codes: 0 success, 1 failed selftest, 2 config/parse error,
3 backend error, 4 output I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import __version__
from .data import data_path, default_anchor_set, default_personas, default_rubric
from .engine import ConfigError, SimConfig, load_personas, load_sim_config, run_simulation
from .enrichment import load_anchors, normalize_raw, parse_label
from .gateway import GatewayError, LiveBackend, MockBackend
from .judging import ScoringError, inter_judge_report, judge_transcript, write_report_csv, write_scorecards_csv
from .network import analyze, read_snapshot_log, summarize, write_metrics_csv
from .selfcheck import run_all

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_IO = 4


def _fail(code: int, message: str) -> int:
    print(f"sentipolis: {message}", file=sys.stderr)
    return code


def _make_backend(args) -> object:
    if args.backend == "live":
        return LiveBackend.from_env()
    if not args.script:
        raise ConfigError("--backend mock requires --script")
    return MockBackend.from_script(args.script)


def cmd_simulate(args) -> int:
    try:
        config = load_sim_config(args.config) if args.config else SimConfig()
        if args.seed is not None:
            config.rng_seed = args.seed
        profiles = load_personas(args.personas) if args.personas else default_personas()
        anchors = load_anchors(args.anchors) if args.anchors else default_anchor_set()
        backend = _make_backend(args)
    except (ConfigError, ValueError) as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except FileNotFoundError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except GatewayError as exc:
        return _fail(EXIT_BACKEND, str(exc))
    try:
        world = run_simulation(
            config,
            profiles,
            backend,
            anchors,
            args.out,
            personas_path=args.personas or data_path("personas.jsonl"),
            script_path=args.script,
        )
    except GatewayError as exc:
        return _fail(EXIT_BACKEND, str(exc))
    except OSError as exc:
        return _fail(EXIT_IO, str(exc))
    print(
        f"wrote {len(world.snapshots)} snapshots, {len(world.transcripts)} conversations, "
        f"{world.n_reflections} reflections to {args.out}"
    )
    return EXIT_OK


def cmd_analyze(args) -> int:
    try:
        snapshots = read_snapshot_log(args.snapshots)
    except (FileNotFoundError, ValueError) as exc:
        return _fail(EXIT_CONFIG, str(exc))
    rows = analyze(snapshots, tau=args.tau, resolution=args.resolution, seed=args.seed)
    try:
        write_metrics_csv(rows, args.out)
    except OSError as exc:
        return _fail(EXIT_IO, str(exc))
    summary = summarize(rows)

    def show(v):
        return "n/a" if v is None else f"{v:.6f}"

    print(f"rows: {len(rows)} -> {args.out}")
    print(f"final Q:    {show(summary['final_q'])}")
    print(f"mean NMI:   {show(summary['mean_nmi'])}")
    print(f"mean drift: {show(summary['mean_drift'])}")
    print(f"final r:    {show(summary['final_r'])}")
    print(f"final r_w:  {show(summary['final_r_w'])}")
    return EXIT_OK


def cmd_anchors(args) -> int:
    header = ["label", "p", "a", "d"]
    try:
        rows_out = []
        with open(args.input, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                fields = next(csv.reader([line]))
                if [f.strip().lower() for f in fields] == header:
                    continue
                if len(fields) != 4:
                    return _fail(EXIT_CONFIG, f"{args.input}:{lineno}: expected 4 fields, got {len(fields)}")
                try:
                    label = parse_label(fields[0])
                    values = [float(v) for v in fields[1:]]
                    if args.normalize:
                        values = [normalize_raw(v) for v in values]
                    for v in values:
                        if not -1.0 <= v <= 1.0:
                            raise ValueError(f"value {v} outside [-1, 1]")
                except ValueError as exc:
                    return _fail(EXIT_CONFIG, f"{args.input}:{lineno}: {exc}")
                rows_out.append([label.value] + [str(round(v, 6)) for v in values])
    except FileNotFoundError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    try:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows_out:
                fh.write(",".join(row) + "\n")
    except OSError as exc:
        return _fail(EXIT_IO, str(exc))
    print(f"wrote {len(rows_out)} anchors to {args.out}")
    return EXIT_OK


def cmd_judge(args) -> int:
    try:
        backend = _make_backend(args)
        rubric = Path(args.rubric).read_text(encoding="utf-8") if args.rubric else default_rubric()
        judges = [j.strip() for j in args.judges.split(",") if j.strip()]
        if len(judges) < 2:
            raise ConfigError("need at least 2 judges (comma-separated)")
        transcripts = []
        with open(args.transcripts, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                    a, b = obj["participants"]
                    text = "\n".join(
                        f"{speaker}: {utterance}"
                        for r in obj["rounds"]
                        for speaker, utterance in r["turns"]
                    )
                    transcripts.append((f"s{obj['step']:03d}-{a}-{b}", text))
                except (ValueError, KeyError, TypeError) as exc:
                    raise ConfigError(f"{args.transcripts}:{lineno}: bad transcript: {exc}") from None
    except (ConfigError, ValueError) as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except FileNotFoundError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except GatewayError as exc:
        return _fail(EXIT_BACKEND, str(exc))

    cards = []
    missing = 0
    for transcript_id, text in transcripts:
        for judge_id in judges:
            try:
                cards.append(judge_transcript(text, transcript_id, backend, judge_id, rubric))
            except (ScoringError, GatewayError) as exc:
                missing += 1
                print(f"sentipolis: missing cell ({transcript_id}, {judge_id}): {exc}", file=sys.stderr)
    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_scorecards_csv(cards, out_dir / "scorecards.csv")
        judges_with_cards = {card.judge_id for card in cards}
        if len(judges_with_cards) >= 2:
            write_report_csv(inter_judge_report(cards), out_dir / "judge_agreement.csv")
        else:
            print("sentipolis: fewer than 2 judges produced cards; agreement report skipped", file=sys.stderr)
    except OSError as exc:
        return _fail(EXIT_IO, str(exc))
    print(f"scored {len(cards)} cells ({missing} missing) -> {out_dir}")
    return EXIT_OK


def cmd_selftest(args) -> int:
    results = run_all()
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        print(f"[{status}] {result.name}: {result.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sentipolis",
        description="Emotionally stateful multi-agent simulation and network diagnostics.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("simulate", help="run a simulation and write its artifacts")
    p.add_argument("--config", help="key = value config file (defaults used when omitted)")
    p.add_argument("--personas", help="personas JSONL (packaged roster when omitted)")
    p.add_argument("--anchors", help="anchor CSV (packaged synthetic set when omitted)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--backend", choices=("live", "mock"), default="mock")
    p.add_argument("--script", help="mock script JSONL (required with --backend mock)")
    p.add_argument("--seed", type=int, help="override the config rng_seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="compute network diagnostics from a snapshot log")
    p.add_argument("--snapshots", required=True, help="snapshots.jsonl from a run")
    p.add_argument("--tau", type=float, default=0.2, help="edge weight threshold")
    p.add_argument("--resolution", type=float, default=1.0, help="community resolution")
    p.add_argument("--seed", type=int, default=42, help="community detection seed")
    p.add_argument("--out", required=True, help="metrics CSV path")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("anchors", help="normalize and canonicalize an anchor CSV")
    p.add_argument("--in", dest="input", required=True, help="input anchor CSV")
    p.add_argument("--normalize", action="store_true", help="map 0-7 values onto [-1, 1]")
    p.add_argument("--out", required=True, help="output anchor CSV")
    p.set_defaults(func=cmd_anchors)

    p = sub.add_parser("judge", help="score transcripts with judge backends")
    p.add_argument("--transcripts", required=True, help="transcripts.jsonl from a run")
    p.add_argument("--judges", required=True, help="comma-separated judge identities")
    p.add_argument("--rubric", help="rubric text file (packaged rubric when omitted)")
    p.add_argument("--backend", choices=("live", "mock"), default="mock")
    p.add_argument("--script", help="mock script JSONL (required with --backend mock)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_judge)

    p = sub.add_parser("selftest", help="run the built-in validation checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
