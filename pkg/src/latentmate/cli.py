"""``latentmate`` command line.

Subcommands: ingest, train, axis, embed, play, match, rate, viz, mcp.
Library errors exit with status 1 and a one-line message; usage errors exit
with status 2.
"""

import argparse
import asyncio
import sys
from collections.abc import Sequence
from pathlib import Path

import numpy as np

from . import __version__
from .board import Color, parse_fen
from .config import Settings, settings
from .dataset import Dataset, Perspective, ingest, write_annotated
from .elo import estimate_elo
from .encoder import configure_torch, load_checkpoint
from .errors import LatentMateError
from .harness import (
    MatchAborted,
    depth_ablation,
    elo_grid,
    play_match,
    read_summary,
    save_match,
)
from .models import EncoderConfig, MatchRecord, MatchSpec, PlanConfig, TrainConfig
from .opponents import BUILTIN_OPPONENTS, EnginePlayer
from .planner import AdvantageAxis, EncoderScorer, compute_axis, nearest_positions
from .trainer import embedding_separation, train
from .uci import uci_serve
from .viz import export_embedding_map, export_trajectory, fit_projection


def _key_value(text: str) -> tuple[str, str]:
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got {text!r}")
    return key, value


def _load_scorer(checkpoint: Path, device: str) -> EncoderScorer:
    configure_torch(deterministic=False, threads=settings.torch_threads)
    return EncoderScorer(load_checkpoint(checkpoint, device))


def _load_dataset(path: Path, perspective: Perspective, seed: int | None = None) -> Dataset:
    dataset, report = ingest(path, perspective=perspective, seed=seed)
    print(f"loaded {report.kept} positions ({report.skipped} skipped)", file=sys.stderr)
    return dataset


# -- subcommands --------------------------------------------------------------


def cmd_ingest(args: argparse.Namespace) -> int:
    dataset, report = ingest(args.source, perspective=args.perspective, seed=args.seed)
    write_annotated(args.out, (dataset[i] for i in range(len(dataset))))
    print(f"rows={report.rows} kept={report.kept} skipped={report.skipped} -> {args.out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    dataset = _load_dataset(args.data, args.perspective)
    held_out: Dataset | None = None
    if args.holdout > 0:
        dataset, held_out = dataset.split(args.holdout, args.seed)
    train_config = TrainConfig(
        delta=args.delta,
        temperature=args.temperature,
        learning_rate=args.learning_rate,
        momentum=args.momentum,
        steps=args.steps,
        batch_size=args.batch_size,
        checkpoint_every=args.checkpoint_every,
        seed=args.seed,
    )
    result = train(
        dataset,
        EncoderConfig.preset(args.preset),
        train_config,
        args.run_dir,
        device=args.device,
    )
    print(result.checkpoints[-1])
    if held_out is not None and len(held_out) > 1:
        sep = embedding_separation(
            result.model, held_out, args.delta, np.random.default_rng(args.seed)
        )
        print(
            f"held-out positive={sep.positive_similarity:.4f} "
            f"negative={sep.negative_similarity:.4f} gap={sep.gap:.4f}"
        )
    return 0


def cmd_axis(args: argparse.Namespace) -> int:
    scorer = _load_scorer(args.checkpoint, args.device)
    dataset = _load_dataset(args.data, args.perspective)
    axis = compute_axis(scorer, dataset.decisive(Color.WHITE), dataset.decisive(Color.BLACK))
    axis.save(args.out)
    print(f"{args.out} (D={axis.dim}, whites={axis.white_count}, blacks={axis.black_count})")
    return 0


def cmd_embed(args: argparse.Namespace) -> int:
    scorer = _load_scorer(args.checkpoint, args.device)
    positions = [parse_fen(fen) for fen in args.fens]
    embeddings = scorer.embed(positions)
    for row in embeddings:
        print(",".join(f"{x:.6f}" for x in row))
    if args.neighbours:
        if args.data is None:
            raise argparse.ArgumentTypeError("--neighbours needs --data")
        dataset = _load_dataset(args.data, args.perspective)
        reference = scorer.embed([dataset[i].position for i in range(len(dataset))])
        for fen, query in zip(args.fens, embeddings, strict=True):
            print(f"# nearest to {fen}")
            for i, sim in nearest_positions(query, reference, args.neighbours):
                print(f"# {sim:.4f}\t{dataset.fens[i]}\t{dataset.p_white[i]:.3f}")
    return 0


def cmd_play(args: argparse.Namespace) -> int:
    config = Settings(_env_file=args.config) if args.config else settings  # type: ignore[call-arg]
    overrides = {
        k: v
        for k, v in (("checkpoint_path", args.checkpoint), ("axis_path", args.axis))
        if v is not None
    }
    if overrides:
        config = config.model_copy(update=overrides)
    uci_serve(sys.stdin, sys.stdout, config)
    return 0


def cmd_match(args: argparse.Namespace) -> int:
    scorer = _load_scorer(args.checkpoint, args.device)
    axis = AdvantageAxis.load(args.axis)
    base = MatchSpec(
        opponent=args.opponent,
        opponent_options=dict(args.option),
        anchor_rating=args.anchor,
        games=args.games,
        movetime_ms=args.movetime,
        plan=PlanConfig(
            beam_width=args.beam_width, depth=args.depth[0], adversarial_mode=not args.literal
        ),
        concurrency=args.concurrency,
        seed=args.seed,
    )
    specs = depth_ablation(base, args.depth)
    if args.elo_caps:
        specs = [capped for spec in specs for capped in elo_grid(spec, args.elo_caps)]

    async def run_all() -> list[MatchRecord]:
        records = []
        for spec in specs:
            engine = EnginePlayer(scorer, axis, spec.plan)
            try:
                record = await play_match(spec, engine)
            except MatchAborted as e:
                if e.partial.games:
                    await save_match(e.partial, args.out)
                raise
            await save_match(record, args.out)
            records.append(record)
        return records

    for record in asyncio.run(run_all()):
        print(
            f"{record.opponent}\tdepth={record.depth}\t"
            f"W={record.wins} D={record.draws} L={record.losses}\tscore={record.score:.3f}"
        )
    return 0


def cmd_rate(args: argparse.Namespace) -> int:
    async def load() -> list[MatchRecord]:
        return [r for path in args.summaries for r in await read_summary(path)]

    records = asyncio.run(load())
    if args.depth is not None:
        records = [r for r in records if r.depth == args.depth]
    estimate = estimate_elo(records, {k: float(v) for k, v in args.anchor})
    print(
        f"rating={estimate.rating:.1f} 95%=[{estimate.lower:.1f}, {estimate.upper:.1f}] "
        f"games={estimate.games} draw_parameter={estimate.draw_parameter:.3f}"
    )
    return 0


def cmd_viz(args: argparse.Namespace) -> int:
    scorer = _load_scorer(args.checkpoint, args.device)
    axis = AdvantageAxis.load(args.axis)
    dataset = _load_dataset(args.data, args.perspective)
    rng = np.random.default_rng(args.seed)
    ids = np.sort(rng.choice(len(dataset), size=min(args.sample, len(dataset)), replace=False))
    sample = dataset.subset(ids)
    embeddings = scorer.embed([sample[i].position for i in range(len(sample))])
    projection = fit_projection(embeddings)
    out_map = export_embedding_map(
        projection, embeddings, sample.p_white, axis, args.out / "embedding-map.svg"
    )
    print(out_map)
    if args.game:
        export = export_trajectory(
            scorer, axis, projection, args.game.split(), args.out / "trajectory"
        )
        print(export.data_path)
        print(export.svg_path)
    return 0


def cmd_mcp(args: argparse.Namespace) -> int:
    from .server import main as serve_mcp

    serve_mcp(["--http"] if args.http else [])
    return 0


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latentmate",
        description="Chess engine that plans in a contrastively trained embedding space.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def data_args(p: argparse.ArgumentParser, required: bool = True) -> None:
        p.add_argument("--data", type=Path, required=required, help="FEN<TAB>probability file")
        p.add_argument(
            "--perspective",
            choices=("mover", "white"),
            default="white",
            help="whose win probability the file stores (default: white)",
        )

    def model_args(p: argparse.ArgumentParser, axis: bool = True) -> None:
        p.add_argument("--checkpoint", type=Path, required=True, help="encoder checkpoint")
        if axis:
            p.add_argument("--axis", type=Path, required=True, help="advantage axis file")
        p.add_argument("--device", default=settings.device, help="torch device")

    p = sub.add_parser("ingest", help="validate and normalize annotated positions")
    p.add_argument("source", type=Path)
    p.add_argument("out", type=Path, help="White-perspective output file")
    p.add_argument("--perspective", choices=("mover", "white"), default="mover")
    p.add_argument("--seed", type=int, default=None, help="shuffle rows with this seed")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train an encoder with the contrastive loss")
    data_args(p)
    defaults = TrainConfig()
    p.add_argument("--run-dir", type=Path, default=settings.runs_dir / "train")
    p.add_argument("--preset", choices=("tiny", "small", "base"), default="tiny")
    p.add_argument("--steps", type=int, default=defaults.steps)
    p.add_argument("--batch-size", type=int, default=defaults.batch_size)
    p.add_argument("--delta", type=float, default=defaults.delta)
    p.add_argument("--temperature", type=float, default=defaults.temperature)
    p.add_argument("--learning-rate", type=float, default=defaults.learning_rate)
    p.add_argument("--momentum", type=float, default=defaults.momentum)
    p.add_argument("--checkpoint-every", type=int, default=defaults.checkpoint_every)
    p.add_argument("--holdout", type=float, default=0.0, help="held-out fraction for a report")
    p.add_argument("--seed", type=int, default=defaults.seed)
    p.add_argument("--device", default=settings.device)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("axis", help="compute the advantage axis from decisive positions")
    model_args(p, axis=False)
    data_args(p)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_axis)

    p = sub.add_parser("embed", help="print embeddings of FENs, one line each")
    model_args(p, axis=False)
    p.add_argument("fens", nargs="+", help="positions in FEN (quote each one)")
    p.add_argument("--neighbours", type=int, default=0, help="also list K nearest positions")
    data_args(p, required=False)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("play", help="speak UCI on stdin/stdout")
    p.add_argument("--config", type=Path, default=None, help="engine config (env-style file)")
    p.add_argument("--checkpoint", type=Path, default=None)
    p.add_argument("--axis", type=Path, default=None)
    p.set_defaults(func=cmd_play)

    p = sub.add_parser("match", help="play matches and write PGN plus summary.tsv")
    model_args(p)
    p.add_argument(
        "--opponent",
        default="random-mover",
        help=f"{', '.join(BUILTIN_OPPONENTS)} or a UCI engine command line",
    )
    p.add_argument("--option", type=_key_value, action="append", default=[], metavar="NAME=VALUE")
    p.add_argument("--anchor", type=float, default=None, help="opponent rating")
    p.add_argument("--elo-caps", type=int, nargs="*", default=[], help="UCI_Elo grid")
    p.add_argument("--games", type=int, default=10)
    p.add_argument("--movetime", type=int, default=50, help="ms per move")
    p.add_argument("--depth", type=int, nargs="+", default=[settings.search_depth])
    p.add_argument("--beam-width", type=int, default=settings.beam_width)
    p.add_argument("--literal", action="store_true", help="top-k at every ply")
    p.add_argument("--concurrency", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=settings.runs_dir / "matches")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("rate", help="estimate Elo from summary.tsv files")
    p.add_argument("summaries", type=Path, nargs="+")
    p.add_argument("--anchor", type=_key_value, action="append", default=[], metavar="NAME=ELO")
    p.add_argument("--depth", type=int, default=None, help="only matches at this depth")
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("viz", help="export an embedding map and a game trajectory as SVG")
    model_args(p)
    data_args(p)
    p.add_argument("--out", type=Path, default=settings.runs_dir / "viz")
    p.add_argument("--sample", type=int, default=5000)
    p.add_argument("--game", default="", help="space-separated moves from the start position")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_viz)

    p = sub.add_parser("mcp", help="run the MCP server")
    p.add_argument("--http", action="store_true", help="streamable HTTP instead of stdio")
    p.set_defaults(func=cmd_mcp)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args_list = list(sys.argv[1:] if argv is None else argv)
    if not args_list:
        parser.print_usage(sys.stderr)
        return 2
    args = parser.parse_args(args_list)
    if not hasattr(args, "func"):
        parser.print_usage(sys.stderr)
        return 2
    try:
        return int(args.func(args))
    except argparse.ArgumentTypeError as e:
        parser.print_usage(sys.stderr)
        print(f"latentmate: error: {e}", file=sys.stderr)
        return 2
    except LatentMateError as e:
        print(f"latentmate: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
