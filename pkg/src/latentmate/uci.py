"""UCI front end.

One ``EngineSession`` per pair of streams. Searches run on a worker thread so
``isready`` and ``stop`` are answered while thinking; every other command
waits for the running search to finish first, which keeps the output order
fixed for a given input. Nothing in the command loop raises: malformed input
is reported as ``info string`` and ignored.
"""

import math
import threading
import time
from collections.abc import Callable
from enum import Enum
from typing import TextIO

from .board import (
    STARTING_FEN,
    Move,
    Position,
    apply_uci,
    legal_moves,
    parse_fen,
    starting_position,
)
from .config import Settings
from .encoder import configure_torch, load_checkpoint
from .errors import LatentMateError
from .logging import log_extra
from .losses import ConfigError
from .models import PlanConfig
from .planner import AdvantageAxis, AxisError, BeamSearch, EncoderScorer, Scorer

ENGINE_NAME = "LatentMate"
ENGINE_AUTHOR = "LatentMate developers"
UNSUPPORTED_OPTIONS = frozenset({"hash", "ponder", "multipv"})
MAX_BEAM_WIDTH = 64

CALIBRATION_FENS = (
    STARTING_FEN,
    "r1bqkbnr/pppp1ppp/2n5/4p3/2B1P3/5N2/PPPP1PPP/RNBQK2R b KQkq - 3 3",
    "r3k2r/p1ppqpb1/bn2pnp1/3PN3/1p2P3/2N2Q1p/PPPBBPPP/R3K2R w KQkq - 0 1",
    "r1bq1rk1/ppp2ppp/2np1n2/2b1p3/2B1P3/2NP1N2/PPP2PPP/R1BQ1RK1 w - - 0 7",
    "8/2p5/3p4/KP5r/1R3p1k/8/4P1P1/8 w - - 0 1",
)


class ProtocolState(str, Enum):
    PRE_UCI = "pre-uci"
    IDLE = "idle"
    SEARCHING = "searching"


def depth_for_budget(level_seconds: float, movetime_ms: int, safety: float, max_depth: int) -> int:
    """Largest depth whose projected cost fits ``safety * movetime`` (at least 1)."""
    budget = safety * movetime_ms / 1000
    if level_seconds <= 0:
        return max_depth
    return max(1, min(max_depth, math.floor(budget / level_seconds)))


class EngineSession:
    """Protocol state, current game and search settings for one UCI connection."""

    def __init__(
        self,
        scorer: Scorer,
        axis: AdvantageAxis,
        output: TextIO,
        plan: PlanConfig | None = None,
        max_depth: int = 6,
        calibration_positions: int = 5,
        time_safety: float = 0.8,
    ) -> None:
        self.scorer = scorer
        self.axis = axis
        self.output = output
        self.plan = plan or PlanConfig()
        self.max_depth = max_depth
        self.calibration_positions = calibration_positions
        self.time_safety = time_safety
        self.state = ProtocolState.PRE_UCI
        self.position = starting_position()
        self.history: list[Position] = []
        self.level_seconds: float | None = None
        self._write_lock = threading.Lock()
        self._stop = threading.Event()
        self._worker: threading.Thread | None = None
        self._handlers: dict[str, Callable[[list[str]], None]] = {
            "uci": self._uci,
            "isready": self._isready,
            "setoption": self._setoption,
            "ucinewgame": self._ucinewgame,
            "position": self._position,
            "go": self._go,
            "stop": self._stop_search,
            "debug": lambda _: None,
            "register": lambda _: None,
            "ponderhit": lambda _: None,
        }

    @classmethod
    def from_settings(cls, settings: Settings, output: TextIO) -> "EngineSession":
        """Load checkpoint and axis named by the engine config.

        Raises:
            ConfigError: checkpoint or axis path missing
            AxisError: axis dimension differs from the encoder's
        """
        if settings.checkpoint_path is None or settings.axis_path is None:
            raise ConfigError(
                "engine config needs LATENTMATE_CHECKPOINT_PATH and LATENTMATE_AXIS_PATH"
            )
        configure_torch(deterministic=False, threads=settings.torch_threads)
        model = load_checkpoint(settings.checkpoint_path, settings.device)
        axis = AdvantageAxis.load(settings.axis_path)
        if axis.dim != model.config.embed_dim:
            raise AxisError(
                f"axis has {axis.dim} dimensions, encoder embeds into {model.config.embed_dim}"
            )
        plan = PlanConfig(
            beam_width=settings.beam_width,
            depth=settings.search_depth,
            adversarial_mode=settings.adversarial_mode,
        )
        return cls(
            EncoderScorer(model),
            axis,
            output,
            plan=plan,
            max_depth=settings.max_depth,
            calibration_positions=settings.calibration_positions,
            time_safety=settings.time_safety,
        )

    # -- output -------------------------------------------------------------

    def emit(self, line: str) -> None:
        with self._write_lock:
            self.output.write(line + "\n")
            self.output.flush()

    def _info(self, text: str) -> None:
        self.emit(f"info string {text}")

    # -- command loop -------------------------------------------------------

    def handle(self, line: str) -> bool:
        """Process one input line; False once ``quit`` is received."""
        tokens = line.split()
        if not tokens:
            return True
        command, args = tokens[0], tokens[1:]
        if command == "quit":
            self.shutdown()
            return False
        if command not in ("isready", "stop"):
            self.wait()
        if self.state is ProtocolState.PRE_UCI and command != "uci":
            self._info(f"send uci before {command}")
            return True
        handler = self._handlers.get(command)
        if handler is None:
            self._info(f"unknown command: {line.strip()}")
            return True
        try:
            handler(args)
        except Exception as e:  # the loop never dies on one bad command
            log_extra("Command failed", command=command, error=str(e))
            self._info(f"error in {command}: {e}")
        return True

    def wait(self) -> None:
        worker = self._worker
        if worker is not None:
            worker.join()
            self._worker = None

    def shutdown(self) -> None:
        self._stop.set()
        self.wait()

    # -- commands -----------------------------------------------------------

    def _uci(self, args: list[str]) -> None:
        self.emit(f"id name {ENGINE_NAME}")
        self.emit(f"id author {ENGINE_AUTHOR}")
        self.emit(
            f"option name BeamWidth type spin default {self.plan.beam_width} "
            f"min 1 max {MAX_BEAM_WIDTH}"
        )
        self.emit(
            f"option name SearchDepth type spin default {self.plan.depth} "
            f"min 1 max {self.max_depth}"
        )
        default = "true" if self.plan.adversarial_mode else "false"
        self.emit(f"option name AdversarialMode type check default {default}")
        self.emit("uciok")
        self.state = ProtocolState.IDLE

    def _isready(self, args: list[str]) -> None:
        self.emit("readyok")

    def _ucinewgame(self, args: list[str]) -> None:
        self.position = starting_position()
        self.history = []

    def _setoption(self, args: list[str]) -> None:
        if not args or args[0] != "name":
            self._info("setoption needs: name <id> [value <x>]")
            return
        if "value" in args:
            split = args.index("value")
            name, value = " ".join(args[1:split]), " ".join(args[split + 1 :])
        else:
            name, value = " ".join(args[1:]), ""
        key = name.lower()
        if key in UNSUPPORTED_OPTIONS:
            self._info(f"option {name} is not supported")
            return
        try:
            if key == "beamwidth":
                width = int(value)
                if not 1 <= width <= MAX_BEAM_WIDTH:
                    raise ValueError(f"BeamWidth must be in 1..{MAX_BEAM_WIDTH}")
                self.plan = self.plan.model_copy(update={"beam_width": width})
            elif key == "searchdepth":
                depth = int(value)
                if not 1 <= depth <= self.max_depth:
                    raise ValueError(f"SearchDepth must be in 1..{self.max_depth}")
                self.plan = self.plan.model_copy(update={"depth": depth})
            elif key == "adversarialmode":
                if value.lower() not in ("true", "false"):
                    raise ValueError("AdversarialMode must be true or false")
                adversarial = value.lower() == "true"
                self.plan = self.plan.model_copy(update={"adversarial_mode": adversarial})
            else:
                self._info(f"unknown option {name}")
        except ValueError as e:
            self._info(str(e))

    def _position(self, args: list[str]) -> None:
        if not args:
            self._info("position needs startpos or fen")
            return
        if args[0] == "startpos":
            rest = args[1:]
            pos = starting_position()
        elif args[0] == "fen":
            fields = []
            rest = args[1:]
            while rest and rest[0] != "moves":
                fields.append(rest.pop(0))
            try:
                pos = parse_fen(" ".join(fields))
            except LatentMateError as e:
                self._info(f"position ignored: {e}")
                return
        else:
            self._info(f"position ignored: expected startpos or fen, got {args[0]}")
            return
        if rest and rest[0] != "moves":
            self._info(f"position ignored: unexpected {rest[0]}")
            return

        history: list[Position] = []
        for text in rest[1:]:
            try:
                nxt = apply_uci(pos, text)
            except LatentMateError as e:
                self._info(f"position ignored: {e}")
                return
            history.append(pos)
            pos = nxt
        self.position, self.history = pos, history

    def _go(self, args: list[str]) -> None:
        params = _parse_go(args)
        deadline: float | None = None
        if "depth" in params:
            depth = max(1, min(self.max_depth, params["depth"]))
        else:
            movetime = params.get("movetime") or self._clock_budget(params)
            if movetime:
                depth = depth_for_budget(
                    self.calibrate(), movetime, self.time_safety, self.max_depth
                )
                deadline = time.monotonic() + self.time_safety * movetime / 1000
            else:
                depth = self.plan.depth

        moves = legal_moves(self.position)
        if not moves:
            self._info("no legal moves")
            self.emit("bestmove 0000")
            return
        plan = self.plan.model_copy(update={"depth": depth})
        self._stop.clear()
        self.state = ProtocolState.SEARCHING
        self._worker = threading.Thread(
            target=self._search,
            args=(self.position, tuple(self.history), plan, deadline, moves[0]),
            name="latentmate-search",
            daemon=True,
        )
        self._worker.start()

    def _clock_budget(self, params: dict[str, int]) -> int | None:
        key = "wtime" if self.position.side_to_move.value == "w" else "btime"
        if key not in params:
            return None
        increment = params.get("winc" if key == "wtime" else "binc", 0)
        moves_to_go = params.get("movestogo", 30)
        return max(1, params[key] // max(1, moves_to_go) + increment)

    def _stop_search(self, args: list[str]) -> None:
        self._stop.set()
        self.wait()

    # -- search -------------------------------------------------------------

    def _search(
        self,
        root: Position,
        history: tuple[Position, ...],
        plan: PlanConfig,
        deadline: float | None,
        fallback: Move,
    ) -> None:
        def should_stop() -> bool:
            return self._stop.is_set() or (deadline is not None and time.monotonic() >= deadline)

        search = BeamSearch(self.scorer, self.axis, root, plan, history)
        try:
            best = search.run(
                should_stop=should_stop,
                on_level=lambda d, m: self.emit(f"info depth {d} pv {m.uci()}"),
            )
        except Exception as e:  # a failed search still owes a legal bestmove
            log_extra("Search failed", fen=root.fen, error=str(e))
            self._info(f"search failed: {e}")
            done = search.best_by_depth
            best = done[max(done)] if done else fallback
        self.emit(f"bestmove {best.uci()}")
        self.state = ProtocolState.IDLE

    def calibrate(self) -> float:
        """Seconds per beam level, measured once on the calibration positions."""
        if self.level_seconds is not None:
            return self.level_seconds
        samples = [parse_fen(fen) for fen in CALIBRATION_FENS[: self.calibration_positions]]
        plan = self.plan.model_copy(update={"depth": 2})
        start = time.perf_counter()
        for pos in samples:
            BeamSearch(self.scorer, self.axis, pos, plan).run()
        self.level_seconds = (time.perf_counter() - start) / (2 * len(samples))
        log_extra("Calibrated search cost", level_ms=round(self.level_seconds * 1000, 3))
        return self.level_seconds


def _parse_go(args: list[str]) -> dict[str, int]:
    params: dict[str, int] = {}
    numeric = {"depth", "movetime", "wtime", "btime", "winc", "binc", "movestogo", "nodes"}
    i = 0
    while i < len(args):
        key = args[i]
        if key in numeric and i + 1 < len(args):
            try:
                params[key] = int(args[i + 1])
            except ValueError:
                pass
            i += 2
        else:
            i += 1
    return params


def serve(session: EngineSession, input_stream: TextIO) -> None:
    """Read commands until ``quit`` or end of input."""
    try:
        for line in input_stream:
            if not session.handle(line):
                return
    finally:
        session.shutdown()


def uci_serve(input_stream: TextIO, output_stream: TextIO, settings: Settings) -> None:
    """Build a session from the engine config and serve it."""
    session = EngineSession.from_settings(settings, output_stream)
    session.calibrate()
    log_extra("UCI session started", checkpoint=str(settings.checkpoint_path))
    serve(session, input_stream)
