"""Chess rules substrate: positions, moves, FEN I/O and game termination.

Positions and moves are immutable values. Move generation and rule application
are delegated to python-chess; this module pins the value semantics, the
canonical FEN form, FIDE draw classification and per-field FEN diagnostics
that the rest of the package relies on.
"""

import re
from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum

import chess
import numpy as np

from .errors import LatentMateError

STARTING_FEN = "rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1"

MAX_CLOCK = 999

PIECE_VALUES = {
    chess.PAWN: 1,
    chess.KNIGHT: 3,
    chess.BISHOP: 3,
    chess.ROOK: 5,
    chess.QUEEN: 9,
    chess.KING: 0,
}

_RANK_PATTERN = re.compile(r"[1-8pnbrqkPNBRQK]+")
_EP_PATTERN = re.compile(r"[a-h][36]")

# First matching flag names the offending FEN field.
_STATUS_FIELDS: tuple[tuple[chess.Status, str, str], ...] = (
    (chess.STATUS_EMPTY, "placement", "board is empty"),
    (chess.STATUS_NO_WHITE_KING, "placement", "no white king"),
    (chess.STATUS_NO_BLACK_KING, "placement", "no black king"),
    (chess.STATUS_TOO_MANY_KINGS, "placement", "more than one king per colour"),
    (chess.STATUS_PAWNS_ON_BACKRANK, "placement", "pawn on rank 1 or 8"),
    (chess.STATUS_TOO_MANY_WHITE_PAWNS, "placement", "more than 8 white pawns"),
    (chess.STATUS_TOO_MANY_BLACK_PAWNS, "placement", "more than 8 black pawns"),
    (chess.STATUS_TOO_MANY_WHITE_PIECES, "placement", "more than 16 white pieces"),
    (chess.STATUS_TOO_MANY_BLACK_PIECES, "placement", "more than 16 black pieces"),
    (chess.STATUS_TOO_MANY_CHECKERS, "placement", "impossible number of checkers"),
    (chess.STATUS_IMPOSSIBLE_CHECK, "placement", "impossible check geometry"),
    (chess.STATUS_BAD_CASTLING_RIGHTS, "castling", "rights without king and rook on home squares"),
    (chess.STATUS_INVALID_EP_SQUARE, "en_passant", "target not behind a just-pushed pawn"),
    (chess.STATUS_OPPOSITE_CHECK, "side_to_move", "side not to move is in check"),
)


class FenError(LatentMateError, ValueError):
    """A FEN string could not be parsed; ``field`` names the offending field."""

    def __init__(self, field: str, reason: str) -> None:
        super().__init__(f"invalid FEN {field}: {reason}")
        self.field = field
        self.reason = reason


class IllegalMoveError(LatentMateError, ValueError):
    """A move is malformed or not legal in the given position."""


class Color(str, Enum):
    """Side to move."""

    WHITE = "w"
    BLACK = "b"

    @property
    def opponent(self) -> "Color":
        return Color.BLACK if self is Color.WHITE else Color.WHITE

    @property
    def sign(self) -> int:
        """+1 for White, -1 for Black (White-perspective scores are multiplied by this)."""
        return 1 if self is Color.WHITE else -1

    @classmethod
    def from_chess(cls, turn: chess.Color) -> "Color":
        return cls.WHITE if turn == chess.WHITE else cls.BLACK


class StatusKind(str, Enum):
    """Game termination classes."""

    ONGOING = "ongoing"
    CHECKMATE = "checkmate"
    STALEMATE = "stalemate"
    FIFTY_MOVE = "fifty_move"
    REPETITION = "repetition"
    INSUFFICIENT_MATERIAL = "insufficient_material"


@dataclass(frozen=True)
class GameStatus:
    """Result of ``status``; ``winner`` is set only for checkmate."""

    kind: StatusKind
    winner: Color | None = None

    @property
    def is_terminal(self) -> bool:
        return self.kind is not StatusKind.ONGOING

    @property
    def is_draw(self) -> bool:
        return self.is_terminal and self.kind is not StatusKind.CHECKMATE


ONGOING = GameStatus(StatusKind.ONGOING)


@dataclass(frozen=True)
class Move:
    """A move in coordinate form; squares are 0..63 with a1 = 0, h8 = 63."""

    from_square: int
    to_square: int
    promotion: chess.PieceType | None = None

    @classmethod
    def from_uci(cls, text: str) -> "Move":
        """Parse coordinate notation such as ``e2e4`` or ``e7e8q``."""
        try:
            move = chess.Move.from_uci(text)
        except (ValueError, IndexError) as e:
            raise IllegalMoveError(f"malformed move {text!r}") from e
        if not move:
            raise IllegalMoveError(f"null move {text!r} is not a chess move")
        return cls._from_chess(move)

    @classmethod
    def _from_chess(cls, move: chess.Move) -> "Move":
        return cls(move.from_square, move.to_square, move.promotion)

    def to_chess(self) -> chess.Move:
        return chess.Move(self.from_square, self.to_square, self.promotion)

    def uci(self) -> str:
        return self.to_chess().uci()

    def mirror(self) -> "Move":
        """The same move with the board flipped vertically."""
        return Move(
            chess.square_mirror(self.from_square),
            chess.square_mirror(self.to_square),
            self.promotion,
        )

    def __str__(self) -> str:
        return self.uci()


class Position:
    """Immutable chess position.

    Wraps a python-chess board that is never handed out; ``board()`` returns a
    copy. Equality and hashing use the canonical FEN.
    """

    __slots__ = ("_board", "_fen")

    def __init__(self, board: chess.Board) -> None:
        self._board = board
        self._fen: str | None = None

    @property
    def fen(self) -> str:
        if self._fen is None:
            self._fen = self._board.fen(en_passant="fen")
        return self._fen

    @property
    def side_to_move(self) -> Color:
        return Color.from_chess(self._board.turn)

    @property
    def castling_rights(self) -> tuple[bool, bool, bool, bool]:
        """(K, Q, k, q)."""
        b = self._board
        return (
            b.has_kingside_castling_rights(chess.WHITE),
            b.has_queenside_castling_rights(chess.WHITE),
            b.has_kingside_castling_rights(chess.BLACK),
            b.has_queenside_castling_rights(chess.BLACK),
        )

    @property
    def en_passant_target(self) -> str | None:
        ep = self._board.ep_square
        return None if ep is None else chess.square_name(ep)

    @property
    def halfmove_clock(self) -> int:
        return self._board.halfmove_clock

    @property
    def fullmove_number(self) -> int:
        return self._board.fullmove_number

    @property
    def placement(self) -> str:
        """The first FEN field."""
        return self._board.board_fen()

    @property
    def repetition_key(self) -> tuple[str, bool, int, int | None]:
        """Identity for repetition: placement, side, castling, capturable en passant."""
        b = self._board
        ep = b.ep_square if b.has_legal_en_passant() else None
        return (b.board_fen(), b.turn, b.castling_rights, ep)

    def is_check(self) -> bool:
        return self._board.is_check()

    def is_capture(self, move: Move) -> bool:
        return self._board.is_capture(move.to_chess())

    def is_castling(self, move: Move) -> bool:
        return self._board.is_castling(move.to_chess())

    def is_en_passant(self, move: Move) -> bool:
        return self._board.is_en_passant(move.to_chess())

    def board(self) -> chess.Board:
        """A mutable python-chess copy, for callers that need the raw rules engine."""
        return self._board.copy(stack=False)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Position):
            return NotImplemented
        return self.fen == other.fen

    def __hash__(self) -> int:
        return hash(self.fen)

    def __repr__(self) -> str:
        return f"Position({self.fen!r})"


def _check_placement(placement: str) -> None:
    ranks = placement.split("/")
    if len(ranks) != 8:
        raise FenError("placement", f"expected 8 ranks, got {len(ranks)}")
    for i, rank in enumerate(ranks):
        if not _RANK_PATTERN.fullmatch(rank):
            raise FenError("placement", f"rank {8 - i} has invalid characters: {rank!r}")
        width = sum(int(c) if c.isdigit() else 1 for c in rank)
        if width != 8:
            raise FenError("placement", f"rank {8 - i} spans {width} squares")


def _parse_clock(text: str, field: str, minimum: int) -> int:
    if not text.isdigit():
        raise FenError(field, f"not a non-negative integer: {text!r}")
    value = int(text)
    if not minimum <= value <= MAX_CLOCK:
        raise FenError(field, f"{value} outside {minimum}..{MAX_CLOCK}")
    return value


def parse_fen(text: str, strict: bool = True) -> Position:
    """Parse a six-field FEN into a Position.

    With ``strict`` (the default) the position must satisfy every Position
    invariant; ``strict=False`` keeps only the syntactic checks.

    Raises:
        FenError: naming the first offending field
    """
    fields = text.split()
    if len(fields) != 6:
        raise FenError("field_count", f"expected 6 fields, got {len(fields)}")
    placement, side, castling, ep, halfmove, fullmove = fields

    _check_placement(placement)
    if side not in ("w", "b"):
        raise FenError("side_to_move", f"expected 'w' or 'b', got {side!r}")
    if castling != "-" and (
        not set(castling) <= set("KQkq") or len(set(castling)) != len(castling)
    ):
        raise FenError("castling", f"expected '-' or a subset of KQkq, got {castling!r}")
    if ep != "-" and not _EP_PATTERN.fullmatch(ep):
        raise FenError("en_passant", f"expected '-' or a rank 3/6 square, got {ep!r}")
    _parse_clock(halfmove, "halfmove_clock", 0)
    _parse_clock(fullmove, "fullmove_number", 1)

    try:
        board = chess.Board(text)
    except ValueError as e:
        raise FenError("placement", str(e)) from e

    if strict:
        problems = board.status()
        for flag, field, reason in _STATUS_FIELDS:
            if problems & flag:
                raise FenError(field, reason)
    return Position(board)


def emit_fen(pos: Position) -> str:
    """Canonical FEN; the en passant target is written after every double push."""
    return pos.fen


def starting_position() -> Position:
    return Position(chess.Board())


def legal_moves(pos: Position) -> list[Move]:
    """All legal moves, sorted by coordinate notation."""
    moves = [Move._from_chess(m) for m in pos._board.legal_moves]
    moves.sort(key=Move.uci)
    return moves


def apply_move(pos: Position, move: Move) -> Position:
    """Play ``move``; ``pos`` is left untouched.

    Raises:
        IllegalMoveError: if ``move`` is not legal in ``pos``
    """
    chess_move = move.to_chess()
    if not pos._board.is_legal(chess_move):
        raise IllegalMoveError(f"{move.uci()} is not legal in {pos.fen}")
    board = pos._board.copy(stack=False)
    board.push(chess_move)
    return Position(board)


def apply_uci(pos: Position, text: str) -> Position:
    return apply_move(pos, Move.from_uci(text))


def status(pos: Position, history: Sequence[Position] = ()) -> GameStatus:
    """Classify ``pos`` given every earlier position of the game (``pos`` excluded)."""
    board = pos._board
    if not any(board.generate_legal_moves()):
        if board.is_check():
            return GameStatus(StatusKind.CHECKMATE, pos.side_to_move.opponent)
        return GameStatus(StatusKind.STALEMATE)
    if board.is_insufficient_material():
        return GameStatus(StatusKind.INSUFFICIENT_MATERIAL)
    if board.halfmove_clock >= 100:
        return GameStatus(StatusKind.FIFTY_MOVE)
    key = pos.repetition_key
    occurrences = 1 + sum(1 for earlier in history if earlier.repetition_key == key)
    if occurrences >= 3:
        return GameStatus(StatusKind.REPETITION)
    return ONGOING


def _count_leaves(board: chess.Board, depth: int) -> int:
    if depth == 1:
        return board.legal_moves.count()
    total = 0
    for move in board.legal_moves:
        board.push(move)
        total += _count_leaves(board, depth - 1)
        board.pop()
    return total


def perft(pos: Position, depth: int) -> int:
    """Leaf count of the legal move tree, by make/unmake with bulk counting."""
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if depth == 0:
        return 1
    return _count_leaves(pos.board(), depth)


def perft_by_apply(pos: Position, depth: int) -> int:
    """Same count through the value-semantics API (slow; for cross-checks)."""
    if depth == 0:
        return 1
    return sum(perft_by_apply(apply_move(pos, m), depth - 1) for m in legal_moves(pos))


def divide(pos: Position, depth: int) -> dict[str, int]:
    """Per-root-move perft counts, keyed by coordinate notation."""
    return {m.uci(): perft(apply_move(pos, m), depth - 1) for m in legal_moves(pos)}


def mirror(pos: Position) -> Position:
    """Colour-flipped position: board flipped vertically, colours and side swapped."""
    return Position(pos._board.mirror())


def material_balance(pos: Position) -> int:
    """White material minus Black material in pawn units."""
    board = pos._board
    total = 0
    for piece_type, value in PIECE_VALUES.items():
        total += value * len(board.pieces(piece_type, chess.WHITE))
        total -= value * len(board.pieces(piece_type, chess.BLACK))
    return total


def random_playout(
    rng: np.random.Generator,
    max_plies: int = 200,
    start: Position | None = None,
) -> list[Position]:
    """A uniformly random legal game, returned as every position visited."""
    pos = start or starting_position()
    game = [pos]
    for _ in range(max_plies):
        if status(pos, game[:-1]).is_terminal:
            break
        moves = legal_moves(pos)
        pos = apply_move(pos, moves[int(rng.integers(len(moves)))])
        game.append(pos)
    return game
