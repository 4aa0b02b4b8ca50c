"""Players for the match harness.

Every player answers ``choose(game, movetime_ms)`` with a move for the side to
move in ``game.current``. Builtin opponents (random-mover, material-greedy)
need no external binary; any other opponent string is a UCI engine command
line spawned as a subprocess and driven over stdio.
"""

import asyncio
import contextlib
import logging
import shlex
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .board import (
    STARTING_FEN,
    IllegalMoveError,
    Move,
    Position,
    apply_move,
    legal_moves,
    material_balance,
)
from .errors import LatentMateError
from .logging import log_extra
from .models import PlanConfig
from .planner import AdvantageAxis, BeamSearch, Scorer
from .retry import LaunchFailed, RetryConfig, retry_launch

BUILTIN_OPPONENTS = ("random-mover", "material-greedy")
HANDSHAKE_TIMEOUT = 10.0
MOVE_GRACE_SECONDS = 5.0


class OpponentSetupError(LaunchFailed):
    """An opponent could not be launched or did not complete the UCI handshake."""


class OpponentCrashed(LatentMateError):
    """An opponent process died or stopped answering during a game."""


@dataclass(frozen=True)
class GameView:
    """What a player sees: the start position, moves so far and every position."""

    start: Position
    moves: tuple[Move, ...]
    positions: tuple[Position, ...]

    @property
    def current(self) -> Position:
        return self.positions[-1]

    @property
    def history(self) -> tuple[Position, ...]:
        """Positions before the current one."""
        return self.positions[:-1]


class Player(Protocol):
    name: str

    async def start(self) -> None: ...

    async def new_game(self) -> None: ...

    async def choose(self, game: GameView, movetime_ms: int) -> Move: ...

    async def close(self) -> None: ...


class _Builtin:
    """Shared no-op lifecycle for in-process players."""

    name = "builtin"

    async def start(self) -> None:
        return None

    async def new_game(self) -> None:
        return None

    async def close(self) -> None:
        return None


class RandomMover(_Builtin):
    """Uniformly random legal moves from a seeded generator."""

    name = "random-mover"

    def __init__(self, seed: int = 0) -> None:
        self.rng = np.random.default_rng(seed)

    async def choose(self, game: GameView, movetime_ms: int) -> Move:
        moves = legal_moves(game.current)
        return moves[int(self.rng.integers(len(moves)))]


class MaterialGreedy(_Builtin):
    """One-ply material maximiser; ties broken at random."""

    name = "material-greedy"

    def __init__(self, seed: int = 0) -> None:
        self.rng = np.random.default_rng(seed)

    async def choose(self, game: GameView, movetime_ms: int) -> Move:
        pos = game.current
        sign = pos.side_to_move.sign
        moves = legal_moves(pos)
        gains = np.array([sign * material_balance(apply_move(pos, m)) for m in moves])
        best = np.flatnonzero(gains == gains.max())
        return moves[int(best[self.rng.integers(len(best))])]


class EnginePlayer(_Builtin):
    """Our engine: beam search in a worker thread so games can interleave.

    It always searches ``plan.depth``; ``movetime_ms`` binds only the opponent,
    so depth ablations compare fixed depths.
    """

    name = "latentmate"

    def __init__(self, scorer: Scorer, axis: AdvantageAxis, plan: PlanConfig) -> None:
        self.scorer = scorer
        self.axis = axis
        self.plan = plan

    async def choose(self, game: GameView, movetime_ms: int) -> Move:
        search = BeamSearch(self.scorer, self.axis, game.current, self.plan, game.history)
        return await asyncio.to_thread(search.run)


class UciPlayer:
    """An external engine behind the UCI protocol."""

    def __init__(
        self,
        command: str | Sequence[str],
        options: Mapping[str, str] | None = None,
        retry: RetryConfig | None = None,
    ) -> None:
        self.argv = shlex.split(command) if isinstance(command, str) else list(command)
        if not self.argv:
            raise OpponentSetupError("empty opponent command")
        self.options = dict(options or {})
        self.retry = retry or RetryConfig()
        self.name = self.argv[0]
        self._proc: asyncio.subprocess.Process | None = None

    async def start(self) -> None:
        await retry_launch(self._launch, " ".join(self.argv), self.retry, OpponentSetupError)
        log_extra("Opponent started", engine=self.name, options=self.options)

    async def _launch(self) -> None:
        await self.close()
        self._proc = await asyncio.create_subprocess_exec(
            *self.argv,
            stdin=asyncio.subprocess.PIPE,
            stdout=asyncio.subprocess.PIPE,
            stderr=asyncio.subprocess.DEVNULL,
        )
        try:
            await self._send("uci")
            name = await self._read_until("uciok", HANDSHAKE_TIMEOUT)
            for line in name:
                if line.startswith("id name "):
                    self.name = line.removeprefix("id name ").strip()
            for key, value in self.options.items():
                await self._send(f"setoption name {key} value {value}")
            await self._send("isready")
            await self._read_until("readyok", HANDSHAKE_TIMEOUT)
        except OpponentCrashed as e:
            raise ConnectionError(str(e)) from e

    async def new_game(self) -> None:
        await self._send("ucinewgame")
        await self._send("isready")
        await self._read_until("readyok", HANDSHAKE_TIMEOUT)

    async def choose(self, game: GameView, movetime_ms: int) -> Move:
        if game.start.fen == STARTING_FEN:
            command = "position startpos"
        else:
            command = f"position fen {game.start.fen}"
        if game.moves:
            command += " moves " + " ".join(m.uci() for m in game.moves)
        await self._send(command)
        await self._send(f"go movetime {movetime_ms}")
        lines = await self._read_until("bestmove", movetime_ms / 1000 + MOVE_GRACE_SECONDS)
        token = lines[-1].split()[1] if len(lines[-1].split()) > 1 else "(none)"
        try:
            return Move.from_uci(token)
        except IllegalMoveError as e:
            raise OpponentCrashed(f"{self.name} answered unparseable bestmove {token!r}") from e

    async def close(self) -> None:
        proc, self._proc = self._proc, None
        if proc is None or proc.returncode is not None:
            return
        try:
            if proc.stdin is not None:
                proc.stdin.write(b"quit\n")
                await proc.stdin.drain()
            await asyncio.wait_for(proc.wait(), timeout=2.0)
        except (OSError, TimeoutError):
            with contextlib.suppress(ProcessLookupError):
                proc.kill()
            await proc.wait()

    async def _send(self, line: str) -> None:
        proc = self._proc
        if proc is None or proc.stdin is None or proc.returncode is not None:
            raise OpponentCrashed(f"{self.name} is not running")
        try:
            proc.stdin.write(f"{line}\n".encode())
            await proc.stdin.drain()
        except (BrokenPipeError, ConnectionResetError) as e:
            raise OpponentCrashed(f"{self.name} closed its input: {e}") from e
        log_extra("uci >", logging.DEBUG, engine=self.name, line=line)

    async def _read_until(self, keyword: str, timeout: float) -> list[str]:
        """Lines up to and including the first one starting with ``keyword``."""
        proc = self._proc
        if proc is None or proc.stdout is None:
            raise OpponentCrashed(f"{self.name} is not running")
        lines: list[str] = []
        try:
            async with asyncio.timeout(timeout):
                while True:
                    raw = await proc.stdout.readline()
                    if not raw:
                        raise OpponentCrashed(f"{self.name} exited (code {proc.returncode})")
                    line = raw.decode(errors="replace").strip()
                    lines.append(line)
                    if line.split(" ", 1)[0] == keyword:
                        return lines
        except TimeoutError as e:
            raise OpponentCrashed(f"{self.name} sent no {keyword} within {timeout:.1f}s") from e


def make_opponent(
    opponent: str,
    options: Mapping[str, str] | None = None,
    seed: int = 0,
) -> RandomMover | MaterialGreedy | UciPlayer:
    """Builtin player by name, otherwise a UCI engine command line."""
    if opponent == "random-mover":
        return RandomMover(seed)
    if opponent == "material-greedy":
        return MaterialGreedy(seed)
    return UciPlayer(opponent, options)
