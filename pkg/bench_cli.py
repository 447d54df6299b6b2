"""
Benchmark CLI
Run scenarios, benchmark memory queries, snapshot memories, verify replays and report results
"""

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path
from typing import List, Optional

import pandas as pd

from episodic_memory import VARIANTS, load_memory
from leaderboards import (
    acceptance_checks, aggregate, checks_frame, get_aba_grid, get_duration_by_position,
    get_exploration_leaderboard, get_memory_task_table, get_success_leaderboard, tasks_frame,
)
from query_bench import DEFAULT_QUERIES, DEFAULT_TOP_KS, DEFAULT_WARMUP, bench_query
from report_charts import write_charts
from scenario_config import ScenarioConfigError, load_scenarios, load_settings, with_seed, with_variant
from scenario_runner import load_reports, play_episode, replay, run_scenarios

logger = logging.getLogger(__name__)

EPISODES_FILE = 'episodes.jsonl'
AGGREGATE_FILE = 'aggregate.json'


def _variants(values: Optional[List[str]]) -> List[str]:
    names = []
    for value in values or []:
        names.extend(v.strip() for v in value.split(',') if v.strip())
    for name in names:
        if name not in VARIANTS:
            raise ValueError(f"--variant must be one of {VARIANTS}, got '{name}'")
    return names


def cmd_run(args, settings) -> int:
    print(f"📂 Loading scenarios from {args.scenario}")
    specs = load_scenarios(args.scenario)
    variants = _variants(args.variant)
    if variants:
        specs = [with_variant(spec, v) for spec in specs for v in variants]
    out = Path(args.out or settings['output_dir'])
    out.mkdir(parents=True, exist_ok=True)
    jobs = args.jobs or settings['jobs']
    print(f"🚀 Running {len(specs)} scenario(s) x {args.episodes} episode(s) with {jobs} job(s)")
    lines = run_scenarios(specs, args.episodes, seed_base=args.seed_base, jobs=jobs,
                          log_dir=out / 'logs' if args.log else None)
    (out / EPISODES_FILE).write_text('\n'.join(lines) + '\n')
    reports = load_reports(out / EPISODES_FILE)
    (out / AGGREGATE_FILE).write_text(json.dumps(aggregate(reports), sort_keys=True, indent=1) + '\n')
    print(f"✅ Wrote {len(lines)} episode report(s) to {out / EPISODES_FILE}")
    board = get_success_leaderboard(reports)
    if not board.empty:
        print("\n📊 Success by scenario and variant:")
        print(board.to_string())
    return 0


def cmd_bench_query(args, settings) -> int:
    variants = _variants(args.variant) or ['fifo', 'place', 'event', 'place_event']
    print(f"⏱️ Benchmarking queries: variants={variants} sizes={args.sizes} top_k={args.top_k}")
    results = bench_query(variants, sizes=args.sizes, queries=args.queries, top_ks=args.top_k,
                          warmup=args.warmup, dimension=args.dimension, seed=args.seed_base)
    table = pd.DataFrame([asdict(r) for r in results])
    out = Path(args.out or settings['output_dir'])
    out.mkdir(parents=True, exist_ok=True)
    table.to_csv(out / 'query_bench.csv', index=False)
    print(table.to_string(index=False))

    failed = False
    for r in results:
        if r.variant == 'fifo' and r.frames_scored != r.size:
            print(f"❌ FIFO scored {r.frames_scored} frames at size {r.size}")
            failed = True
    for size in args.sizes:
        fifo = table[(table['variant'] == 'fifo') & (table['size'] == size)]
        pe = table[(table['variant'] == 'place_event') & (table['size'] == size)]
        if not fifo.empty and not pe.empty:
            ratio = fifo['median_ms'].median() / max(pe['median_ms'].median(), 1e-9)
            print(f"📊 FIFO / PlaceEvent median query time at {size}: {ratio:.1f}x")
    print(f"✅ Wrote {out / 'query_bench.csv'}")
    return 1 if failed else 0


def cmd_snapshot(args, settings) -> int:
    if args.scenario:
        spec = load_scenarios(args.scenario)[0]
        spec = with_seed(spec, args.seed_base)
        variants = _variants(args.variant)
        if variants:
            spec = with_variant(spec, variants[0])
        print(f"🚀 Running {spec.label} seed={spec.seed} to snapshot its memory")
        _, memory = play_episode(spec)
        target = Path(args.file)
        target.write_text(memory.to_json())
        print(f"✅ Wrote {len(memory)}-frame {memory.variant} snapshot to {target}")
        return 0

    text = Path(args.file).read_text()
    memory = load_memory(text)
    again = memory.to_json()
    if again != text:
        print(f"❌ Snapshot {args.file} does not round-trip byte-identically")
        return 1
    print(f"✅ Snapshot {args.file} round-trips ({len(memory)} frames, {memory.cluster_count()} clusters)")
    return 0


def cmd_replay(args, settings) -> int:
    failed = 0
    for log in args.logs:
        verdict = replay(log)
        if verdict.ok:
            print(f"✅ {log}: identical over {verdict.lines_checked} lines")
        else:
            failed += 1
            print(f"❌ {log}: diverges at line {verdict.first_mismatch} ({verdict.message})")
    return 1 if failed else 0


def cmd_report(args, settings) -> int:
    source = Path(args.input or args.out or settings['output_dir'])
    path = source / EPISODES_FILE if source.is_dir() else source
    print(f"📂 Loading reports from {path}")
    reports = load_reports(path)
    out = Path(args.out or settings['output_dir'])
    out.mkdir(parents=True, exist_ok=True)

    tables = {
        'Success by scenario and variant': get_success_leaderboard(reports),
        'Median duration by task position': get_duration_by_position(reports),
        'Exploration': get_exploration_leaderboard(reports),
        'ABA-Sparse success grid (place_event)': get_aba_grid(reports),
        'Memory tasks': get_memory_task_table(reports),
    }
    for title, table in tables.items():
        if not table.empty:
            print(f"\n📊 {title}:")
            print(table.to_string())

    if args.table:
        tasks_frame(reports).to_csv(out / 'tasks.csv', index=False)
        print(f"✅ Wrote {out / 'tasks.csv'}")
    if args.plot:
        for path in write_charts(reports, out):
            print(f"📈 Wrote {path}")
    if args.check:
        checks = acceptance_checks(reports)
        if not checks:
            print("⚠️ No ordering checks apply to these reports")
            return 0
        frame = checks_frame(checks)
        print("\n🎯 Ordering checks:")
        print(frame.to_string(index=False))
        if not frame['passed'].all():
            print("❌ Some checks failed")
            return 1
        print("✅ All checks passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Episodic memory agent benchmark")
    parser.add_argument('--verbose', action='store_true', help="debug logging")
    sub = parser.add_subparsers(dest='command', required=True)

    def common(p):
        p.add_argument('--out', help="output directory (default: $PLACEMEM_OUTPUT_DIR or results/)")
        p.add_argument('--variant', action='append', help="memory variant(s), comma separated or repeated")
        p.add_argument('--seed-base', type=int, default=0, help="first episode seed")

    run = sub.add_parser('run', help="run scenario episodes")
    common(run)
    run.add_argument('--scenario', required=True, help="YAML scenario file")
    run.add_argument('--episodes', type=int, default=1)
    run.add_argument('--jobs', type=int, help="worker processes (default: $PLACEMEM_JOBS or 1)")
    run.add_argument('--log', action='store_true', help="write per-episode trajectory logs")
    run.set_defaults(handler=cmd_run)

    bench = sub.add_parser('bench-query', help="time memory reads")
    common(bench)
    bench.add_argument('--sizes', type=int, nargs='+', default=[100_000])
    bench.add_argument('--queries', type=int, default=DEFAULT_QUERIES)
    bench.add_argument('--top-k', type=int, nargs='+', default=list(DEFAULT_TOP_KS))
    bench.add_argument('--warmup', type=int, default=DEFAULT_WARMUP)
    bench.add_argument('--dimension', type=int, default=512)
    bench.set_defaults(handler=cmd_bench_query)

    snap = sub.add_parser('snapshot', help="check a memory snapshot round-trip, or create one")
    common(snap)
    snap.add_argument('file', help="snapshot JSON file")
    snap.add_argument('--scenario', help="run this scenario's first episode and write its memory to file")
    snap.set_defaults(handler=cmd_snapshot)

    rep = sub.add_parser('replay', help="re-run trajectory logs and compare")
    rep.add_argument('logs', nargs='+')
    rep.set_defaults(handler=cmd_replay)

    report = sub.add_parser('report', help="tables, charts and ordering checks")
    report.add_argument('--in', dest='input', help="episodes.jsonl or a directory holding it")
    report.add_argument('--out')
    report.add_argument('--check', action='store_true')
    report.add_argument('--plot', action='store_true')
    report.add_argument('--table', action='store_true')
    report.set_defaults(handler=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format='%(levelname)s %(name)s: %(message)s')
    try:
        settings = load_settings()
        return args.handler(args, settings)
    except ScenarioConfigError as exc:
        print(f"❌ Config error at {exc.key_path or '<root>'}: {exc}")
        return 2
    except (ValueError, OSError) as exc:
        print(f"❌ {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
