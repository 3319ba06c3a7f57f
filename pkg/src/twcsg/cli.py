"""Command-line entry point: ``twcsg <command> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
KB_FORMATS = ("conceptnet", "vg", "jsonl")

log = logging.getLogger("twcsg")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _label(fmt: str, path: str) -> str:
    return {"conceptnet": "conceptnet", "vg": "scenegraph"}.get(fmt, Path(path).stem)


def cmd_stats(args):
    from .knowledge import load_kb, relation_histogram, stats, write_stats_csv
    from .plotting import plot_relation_histogram

    formats = args.format if len(args.format) == len(args.kb) else args.format * len(args.kb)
    if len(formats) != len(args.kb):
        raise UsageError("give one --format, or one per --kb")
    rows = []
    for path, fmt in zip(args.kb, formats):
        kb = load_kb(path, fmt)
        label = _label(fmt, path)
        st = stats(kb)
        rows.append((label, st))
        print(f"{label}: {st.n_entities} entities, {st.n_relations} relations, "
              f"{st.n_triplets} triplets ({kb.skipped} skipped)")
        hist = relation_histogram(kb, args.top_k) if len(kb) else []
        for rel, n in hist:
            print(f"  {rel}\t{n}")
        if args.figures and hist:
            Path(args.figures).mkdir(parents=True, exist_ok=True)
            plot_relation_histogram(hist, Path(args.figures) / f"{label}_relations.svg",
                                    f"{label} (top {args.top_k})")
    write_stats_csv(rows, args.out)


def cmd_compare(args):
    from .knowledge import load_kb
    from .similarity import compare_report, load_embeddings, write_report_csv

    if len(args.candidate) != len(args.candidate_format):
        raise UsageError("each --candidate needs a matching --candidate-format")
    cands = [(_label(f, p), load_kb(p, f)) for p, f in zip(args.candidate, args.candidate_format)]
    manual = load_kb(args.manual, args.manual_format)
    store = load_embeddings(args.embeddings, args.dim)
    reports = compare_report(cands, manual, store, args.entity_threshold, args.pair_threshold,
                             args.pair_unit)
    for r in reports:
        print(f"{r.source}: {r.entity_count} entities, {r.pair_count} {args.pair_unit}s "
              f"({len(r.unresolved)} entities without embedding)")
    write_report_csv(reports, args.out)


def cmd_generate(args):
    from .game import game_path, generate_game, load_vocab, make_splits

    vocab = load_vocab(args.vocab)
    train, in_vocab, out_vocab = make_splits(vocab, args.fraction, args.split_seed)
    v = {"train": train, "in": in_vocab, "out": out_vocab}[args.split]
    for seed in range(args.seed, args.seed + args.count):
        spec = generate_game(args.level, v, seed, args.split, args.max_steps, args.grammar)
        spec.save(game_path(args.out, args.level, args.split, seed))
    print(f"wrote {args.count} {args.level}/{args.split} games to {args.out}")


def cmd_train(args):
    from .harness.train import TrainConfig, train

    cfg = TrainConfig.from_json(args.config)
    if args.out_dir:
        cfg.out_dir = str(Path(args.out_dir).resolve())
    res = train(cfg)
    print(f"metrics: {res['metrics']}")


def cmd_eval(args):
    from .harness.evaluate import evaluate, evaluate_baseline, write_eval_csv

    if args.policy == "agent":
        if not args.checkpoint:
            raise UsageError("--checkpoint is required for --policy agent")
        rows = evaluate(args.checkpoint, args.games, args.episodes_per_game, method=args.method)
    else:
        rows = evaluate_baseline(args.policy, args.games, args.runs,
                                 episodes_per_game=args.episodes_per_game)
    for r in rows:
        f = r.formatted()
        print(f"{r.level:6s} {r.split:5s} {r.method:24s} steps {f[-2]:>14s}  score {f[-1]}")
    write_eval_csv(rows, args.out)


def cmd_plot(args):
    from .plotting import plot_curves

    for p in plot_curves(args.metrics, args.alpha, args.out, args.label):
        print(p)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="twcsg", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    analyze = sub.add_parser("analyze", help="knowledge statistics and similarity")
    asub = analyze.add_subparsers(dest="analysis", required=True, parser_class=_Parser)
    s = asub.add_parser("stats")
    s.add_argument("--kb", action="append", required=True)
    s.add_argument("--format", action="append", required=True, choices=KB_FORMATS)
    s.add_argument("--out", required=True)
    s.add_argument("--top-k", type=int, default=15)
    s.add_argument("--figures", help="directory for relation histogram SVGs")
    s.set_defaults(func=cmd_stats)

    c = asub.add_parser("compare")
    c.add_argument("--candidate", action="append", required=True)
    c.add_argument("--candidate-format", action="append", required=True, choices=KB_FORMATS)
    c.add_argument("--manual", required=True)
    c.add_argument("--manual-format", default="jsonl", choices=KB_FORMATS)
    c.add_argument("--embeddings", required=True)
    c.add_argument("--dim", type=int, default=None)
    c.add_argument("--entity-threshold", type=float, default=0.7)
    c.add_argument("--pair-threshold", type=float, default=0.65)
    c.add_argument("--pair-unit", choices=("pair", "triplet"), default="pair")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_compare)

    games = sub.add_parser("games", help="game generation")
    gsub = games.add_subparsers(dest="games_cmd", required=True, parser_class=_Parser)
    g = gsub.add_parser("generate")
    g.add_argument("--level", required=True, choices=("easy", "medium", "hard"))
    g.add_argument("--split", required=True, choices=("train", "in", "out"))
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--vocab", default=None, help="vocabulary JSON (default: bundled)")
    g.add_argument("--out", required=True)
    g.add_argument("--fraction", type=float, default=0.8)
    g.add_argument("--split-seed", type=int, default=0)
    g.add_argument("--max-steps", type=int, default=50)
    g.add_argument("--grammar", choices=("basic", "twc"), default="twc")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train")
    t.add_argument("--config", required=True)
    t.add_argument("--out-dir", default=None)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval")
    e.add_argument("--checkpoint", nargs="+", default=None)
    e.add_argument("--games", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--policy", choices=("agent", "random", "oracle"), default="agent")
    e.add_argument("--runs", type=int, default=5, help="seeded runs for baseline policies")
    e.add_argument("--episodes-per-game", type=int, default=1)
    e.add_argument("--method", default=None, help="label for the report rows")
    e.set_defaults(func=cmd_eval)

    pl = sub.add_parser("plot")
    pl.add_argument("--metrics", nargs="+", required=True)
    pl.add_argument("--alpha", type=float, default=0.1)
    pl.add_argument("--out", required=True)
    pl.add_argument("--label", action="append", default=None)
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    from .game import GameError
    from .harness.a2c import NumericError
    from .harness.train import ConfigError
    from .knowledge import KnowledgeError
    from .similarity import EmbeddingError

    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as e:
        print(f"twcsg: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as e:
        print(f"twcsg: numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (KnowledgeError, EmbeddingError, GameError, ConfigError, OSError, ValueError,
            KeyError) as e:
        print(f"twcsg: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
