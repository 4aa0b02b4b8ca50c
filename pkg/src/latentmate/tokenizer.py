"""Fixed-length FEN tokenizer.

Layout of the 77 tokens:

    0..63   board squares a8..h8, a7..h7, ..., a1..h1 ('.' = empty)
    64      side to move ('w' | 'b')
    65..68  castling slots K, Q, k, q (the letter, or '-' when the right is gone)
    69..70  en passant target: file and rank, or '-' followed by padding
    71..73  halfmove clock digits, left-aligned, padded
    74..76  fullmove number digits, left-aligned, padded

The vocabulary is character-level; its order is frozen and mirrored by
``vocab.txt`` so token ids stay stable across checkpoints.
"""

from collections.abc import Sequence
from importlib import resources
from pathlib import Path

import numpy as np

from .board import Position, parse_fen
from .errors import LatentMateError

SEQUENCE_LENGTH = 77
PAD = "<pad>"
EMPTY = "."

VOCABULARY: tuple[str, ...] = (
    PAD,
    EMPTY,
    "P", "N", "B", "R", "Q", "K",
    "p", "n", "b", "r", "q", "k",
    "w", "-",
    "a", "c", "d", "e", "f", "g", "h",
    "0", "1", "2", "3", "4", "5", "6", "7", "8", "9",
)  # fmt: skip

VOCAB_SIZE = len(VOCABULARY)
TOKEN_IDS: dict[str, int] = {symbol: i for i, symbol in enumerate(VOCABULARY)}

_BOARD = slice(0, 64)
_SIDE = 64
_CASTLING = slice(65, 69)
_EN_PASSANT = slice(69, 71)
_HALFMOVE = slice(71, 74)
_FULLMOVE = slice(74, 77)
_CASTLING_LETTERS = "KQkq"

TokenSeq = tuple[int, ...]


class DecodeError(LatentMateError, ValueError):
    """A token sequence does not follow the 77-token layout."""


def load_vocabulary(path: Path | None = None) -> tuple[str, ...]:
    """Read a vocabulary file (one symbol per line, line number = token id)."""
    if path is None:
        text = resources.files("latentmate").joinpath("vocab.txt").read_text(encoding="utf-8")
    else:
        text = path.read_text(encoding="utf-8")
    return tuple(text.splitlines())


def write_vocabulary(path: Path) -> None:
    path.write_text("\n".join(VOCABULARY) + "\n", encoding="utf-8")


def _padded(text: str, width: int) -> list[str]:
    return list(text) + [PAD] * (width - len(text))


def tokenize_symbols(pos: Position) -> list[str]:
    """The 77 symbols before id lookup."""
    symbols: list[str] = []
    for rank in pos.placement.split("/"):
        for c in rank:
            symbols.extend([EMPTY] * int(c) if c.isdigit() else [c])
    symbols.append(pos.side_to_move.value)
    symbols.extend(
        letter if has_right else "-"
        for letter, has_right in zip(_CASTLING_LETTERS, pos.castling_rights, strict=True)
    )
    ep = pos.en_passant_target
    symbols.extend(list(ep) if ep else ["-", PAD])
    symbols.extend(_padded(str(pos.halfmove_clock), 3))
    symbols.extend(_padded(str(pos.fullmove_number), 3))
    return symbols


def tokenize(pos: Position) -> TokenSeq:
    """Map a position to exactly 77 token ids."""
    return tuple(TOKEN_IDS[s] for s in tokenize_symbols(pos))


def tokenize_batch(positions: Sequence[Position]) -> np.ndarray:
    """Token ids for many positions as an int64 array of shape (n, 77)."""
    out = np.empty((len(positions), SEQUENCE_LENGTH), dtype=np.int64)
    for i, pos in enumerate(positions):
        out[i] = tokenize(pos)
    return out


def _digits(symbols: list[str], field: str) -> str:
    text = "".join(s for s in symbols if s != PAD)
    used = len(text)
    if not text.isdigit() or any(s != PAD for s in symbols[used:]):
        raise DecodeError(f"{field} tokens are not left-aligned digits: {symbols}")
    return text


def detokenize(seq: Sequence[int], strict: bool = True) -> Position:
    """Invert ``tokenize``.

    Raises:
        DecodeError: wrong length, unknown ids, or a field out of layout
    """
    if len(seq) != SEQUENCE_LENGTH:
        raise DecodeError(f"expected {SEQUENCE_LENGTH} tokens, got {len(seq)}")
    if any(not 0 <= int(t) < VOCAB_SIZE for t in seq):
        raise DecodeError(f"token id outside vocabulary of size {VOCAB_SIZE}")
    symbols = [VOCABULARY[int(t)] for t in seq]

    rows: list[str] = []
    board = symbols[_BOARD]
    for r in range(8):
        row, run = "", 0
        for s in board[r * 8 : (r + 1) * 8]:
            if s == EMPTY:
                run += 1
                continue
            if s not in "PNBRQKpnbrqk" or len(s) != 1:
                raise DecodeError(f"board token {s!r} is not a piece or empty square")
            if run:
                row += str(run)
                run = 0
            row += s
        rows.append(row + (str(run) if run else ""))

    side = symbols[_SIDE]
    if side not in ("w", "b"):
        raise DecodeError(f"side token {side!r} is not 'w' or 'b'")

    castling = ""
    for letter, s in zip(_CASTLING_LETTERS, symbols[_CASTLING], strict=True):
        if s == letter:
            castling += letter
        elif s != "-":
            raise DecodeError(f"castling slot {letter} holds {s!r}")

    ep_file, ep_rank = symbols[_EN_PASSANT]
    if ep_file == "-" and ep_rank == PAD:
        ep = "-"
    elif ep_file in "abcdefgh" and ep_rank in ("3", "6") and len(ep_file) == 1:
        ep = ep_file + ep_rank
    else:
        raise DecodeError(f"en passant tokens {ep_file!r}, {ep_rank!r} are not a target")

    halfmove = _digits(symbols[_HALFMOVE], "halfmove")
    fullmove = _digits(symbols[_FULLMOVE], "fullmove")
    fen = f"{'/'.join(rows)} {side} {castling or '-'} {ep} {halfmove} {fullmove}"
    try:
        return parse_fen(fen, strict=strict)
    except LatentMateError as e:
        raise DecodeError(f"decoded FEN is invalid: {e}") from e
