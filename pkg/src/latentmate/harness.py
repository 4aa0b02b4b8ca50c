"""Engine-vs-engine matches, their persistence and the Elo-cap grid.

Game i (0-based) has our engine as White when i is even, so games 1, 3, 5, ...
in 1-based numbering are played as White. Terminations are adjudicated by
chess-core only: checkmate, stalemate, fifty-move, threefold repetition and
insufficient material. An opponent that crashes or plays an illegal move
forfeits that game; the match continues.
"""

import asyncio
import csv
import io
import logging
from collections.abc import Callable, Sequence
from pathlib import Path

import aiofiles
import chess
import chess.pgn

from .board import (
    Color,
    GameStatus,
    IllegalMoveError,
    Move,
    Position,
    StatusKind,
    apply_move,
    legal_moves,
    starting_position,
    status,
)
from .logging import log_extra, timed_operation
from .models import GameRecord, GameResult, MatchRecord, MatchSpec
from .opponents import (
    EnginePlayer,
    GameView,
    OpponentCrashed,
    OpponentSetupError,
    Player,
    make_opponent,
)

SUMMARY_FIELDS = (
    "opponent",
    "anchor",
    "depth",
    "game",
    "engine_color",
    "result",
    "termination",
    "moves",
)

OpponentFactory = Callable[[MatchSpec, int], Player]


def engine_color_for(index: int, alternate: bool) -> Color:
    return Color.BLACK if alternate and index % 2 else Color.WHITE


def _result_for(result: GameStatus, engine: Color) -> GameResult:
    if result.kind is StatusKind.CHECKMATE:
        return GameResult.WIN if result.winner is engine else GameResult.LOSS
    return GameResult.DRAW


async def play_game(
    engine: Player,
    opponent: Player,
    index: int,
    engine_color: Color,
    movetime_ms: int,
    start: Position | None = None,
) -> GameRecord:
    """Play one game to a rules termination or a forfeit."""
    first = start or starting_position()
    positions: list[Position] = [first]
    moves: list[Move] = []

    def record(result: GameResult, termination: str) -> GameRecord:
        return GameRecord(
            index=index,
            engine_color=engine_color.value,
            result=result,
            termination=termination,
            moves=[m.uci() for m in moves],
        )

    while True:
        pos = positions[-1]
        current = status(pos, positions[:-1])
        if current.is_terminal:
            return record(_result_for(current, engine_color), current.kind.value)

        ours = pos.side_to_move is engine_color
        player = engine if ours else opponent
        view = GameView(first, tuple(moves), tuple(positions))
        try:
            move = await player.choose(view, movetime_ms)
        except OpponentCrashed as e:
            if ours:
                raise
            log_extra("Opponent crashed; game forfeited", logging.WARNING, game=index, error=str(e))
            return record(GameResult.WIN, "opponent_crash")

        if move not in legal_moves(pos):
            if ours:
                log_extra("Engine produced an illegal move", logging.ERROR, move=move.uci())
                return record(GameResult.LOSS, "engine_illegal_move")
            log_extra(
                "Illegal opponent move; game forfeited",
                logging.WARNING,
                game=index,
                move=move.uci(),
                fen=pos.fen,
            )
            return record(GameResult.WIN, "illegal_move")
        moves.append(move)
        positions.append(apply_move(pos, move))


class MatchAborted(OpponentSetupError):
    """An opponent failed to start mid-match; ``partial`` holds the finished games."""

    def __init__(self, message: str, partial: MatchRecord) -> None:
        super().__init__(message)
        self.partial = partial


def default_opponent_factory(spec: MatchSpec, index: int) -> Player:
    return make_opponent(spec.opponent, spec.opponent_options, seed=spec.seed + index)


async def play_match(
    spec: MatchSpec,
    engine: EnginePlayer,
    opponent_factory: OpponentFactory = default_opponent_factory,
) -> MatchRecord:
    """Play ``spec.games`` games, at most ``spec.concurrency`` at a time.

    Each game gets a fresh opponent (one process per game for UCI engines).
    A setup failure cancels the games still running; their opponents are
    closed and the games already finished travel with the error.

    Raises:
        MatchAborted: an opponent cannot be launched
    """
    gate = asyncio.Semaphore(spec.concurrency)
    finished: dict[int, GameRecord] = {}

    def record(games: list[GameRecord]) -> MatchRecord:
        return MatchRecord(
            opponent=spec.opponent_label,
            anchor_rating=spec.anchor_rating,
            depth=spec.plan.depth,
            games=sorted(games, key=lambda g: g.index),
        )

    async def one(index: int) -> None:
        async with gate:
            opponent = opponent_factory(spec, index)
            await opponent.start()
            try:
                try:
                    await opponent.new_game()
                except OpponentCrashed as e:
                    raise OpponentSetupError(f"{opponent.name} failed to start a game: {e}") from e
                game = await play_game(
                    engine,
                    opponent,
                    index,
                    engine_color_for(index, spec.alternate_colors),
                    spec.movetime_ms,
                )
            finally:
                await opponent.close()
            log_extra(
                "Game finished",
                opponent=spec.opponent_label,
                game=index,
                color=game.engine_color,
                result=game.result.value,
                termination=game.termination,
                plies=len(game.moves),
            )
            finished[index] = game

    async with timed_operation(
        "play_match", opponent=spec.opponent_label, games=spec.games, depth=spec.plan.depth
    ) as ctx:
        try:
            async with asyncio.TaskGroup() as tasks:
                for i in range(spec.games):
                    tasks.create_task(one(i))
        except ExceptionGroup as group:
            setup = [e for e in group.exceptions if isinstance(e, OpponentSetupError)]
            if not setup:
                raise group.exceptions[0] from None
            partial = record(list(finished.values()))
            log_extra(
                "Match aborted",
                logging.ERROR,
                opponent=spec.opponent_label,
                finished=len(partial.games),
                error=str(setup[0]),
            )
            raise MatchAborted(str(setup[0]), partial) from setup[0]
        match = record(list(finished.values()))
        ctx.update(wins=match.wins, draws=match.draws, losses=match.losses)
    return match


def elo_grid(base: MatchSpec, caps: Sequence[int]) -> list[MatchSpec]:
    """One spec per strength cap; the cap becomes that opponent's anchor rating."""
    specs = []
    for cap in caps:
        options = {**base.opponent_options, "UCI_LimitStrength": "true", "UCI_Elo": str(cap)}
        specs.append(
            base.model_copy(
                update={
                    "opponent_options": options,
                    "anchor_rating": float(cap),
                    "label": f"{base.label or base.opponent}@{cap}",
                }
            )
        )
    return specs


def depth_ablation(base: MatchSpec, depths: Sequence[int]) -> list[MatchSpec]:
    """The same match at several beam depths."""
    return [
        base.model_copy(update={"plan": base.plan.model_copy(update={"depth": d})})
        for d in depths
    ]


def replay(game: GameRecord, start: Position | None = None) -> tuple[list[Position], GameStatus]:
    """Replay a stored game through chess-core; returns positions and final status.

    Raises:
        IllegalMoveError: a stored move is not legal where it was played
    """
    positions = [start or starting_position()]
    for text in game.moves:
        move = Move.from_uci(text)
        if move not in legal_moves(positions[-1]):
            raise IllegalMoveError(f"game {game.index} ply {len(positions)}: {text} is illegal")
        positions.append(apply_move(positions[-1], move))
    return positions, status(positions[-1], positions[:-1])


_PGN_RESULT = {
    (GameResult.WIN, "w"): "1-0",
    (GameResult.WIN, "b"): "0-1",
    (GameResult.LOSS, "w"): "0-1",
    (GameResult.LOSS, "b"): "1-0",
}


def to_pgn(match: MatchRecord, game: GameRecord, engine_name: str = "LatentMate") -> str:
    """PGN text for one game (python-chess exporter)."""
    pgn = chess.pgn.Game()
    white, black = (
        (engine_name, match.opponent) if game.engine_color == "w" else (match.opponent, engine_name)
    )
    pgn.headers["Event"] = f"{engine_name} vs {match.opponent}"
    pgn.headers["Round"] = str(game.index + 1)
    pgn.headers["White"] = white
    pgn.headers["Black"] = black
    pgn.headers["Result"] = _PGN_RESULT.get((game.result, game.engine_color), "1/2-1/2")
    pgn.headers["Termination"] = game.termination
    if match.depth is not None:
        pgn.headers["BeamDepth"] = str(match.depth)
    node: chess.pgn.GameNode = pgn
    for text in game.moves:
        node = node.add_variation(chess.Move.from_uci(text))
    return str(pgn) + "\n\n"


def _summary_rows(match: MatchRecord) -> list[list[str]]:
    anchor = "" if match.anchor_rating is None else f"{match.anchor_rating:g}"
    depth = "" if match.depth is None else str(match.depth)
    return [
        [
            match.opponent,
            anchor,
            depth,
            str(g.index),
            g.engine_color,
            g.result.value,
            g.termination,
            " ".join(g.moves),
        ]
        for g in match.games
    ]


def _match_stem(match: MatchRecord) -> str:
    safe = "".join(c if c.isalnum() or c in "-_@." else "_" for c in match.opponent)
    return f"{safe}-d{match.depth}" if match.depth is not None else safe


async def save_match(match: MatchRecord, directory: Path) -> tuple[Path, Path]:
    """Write ``<opponent>-d<depth>.pgn`` and append the games to ``summary.tsv``."""
    directory.mkdir(parents=True, exist_ok=True)
    pgn_path = directory / f"{_match_stem(match)}.pgn"
    summary_path = directory / "summary.tsv"

    async with aiofiles.open(pgn_path, "w", encoding="utf-8") as f:
        await f.write("".join(to_pgn(match, g) for g in match.games))

    buffer = io.StringIO()
    writer = csv.writer(buffer, delimiter="\t", lineterminator="\n")
    if not summary_path.exists():
        writer.writerow(SUMMARY_FIELDS)
    writer.writerows(_summary_rows(match))
    async with aiofiles.open(summary_path, "a", encoding="utf-8") as f:
        await f.write(buffer.getvalue())
    log_extra("Match saved", pgn=str(pgn_path), summary=str(summary_path))
    return pgn_path, summary_path


async def read_summary(path: Path) -> list[MatchRecord]:
    """Rebuild match records from a ``summary.tsv``, grouped by (opponent, depth)."""
    async with aiofiles.open(path, encoding="utf-8") as f:
        text = await f.read()
    matches: dict[tuple[str, str], MatchRecord] = {}
    for row in csv.DictReader(io.StringIO(text), delimiter="\t"):
        key = (row["opponent"], row["depth"])
        if key not in matches:
            matches[key] = MatchRecord(
                opponent=row["opponent"],
                anchor_rating=float(row["anchor"]) if row["anchor"] else None,
                depth=int(row["depth"]) if row["depth"] else None,
            )
        matches[key].games.append(
            GameRecord(
                index=int(row["game"]),
                engine_color=row["engine_color"],
                result=GameResult(row["result"]),
                termination=row["termination"],
                moves=row["moves"].split(),
            )
        )
    for match in matches.values():
        match.games.sort(key=lambda g: g.index)
    return list(matches.values())
