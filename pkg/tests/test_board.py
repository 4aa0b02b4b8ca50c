"""Tests for the chess rules substrate."""

import numpy as np
import pytest

from latentmate.board import (
    STARTING_FEN,
    Color,
    FenError,
    IllegalMoveError,
    Move,
    StatusKind,
    apply_move,
    apply_uci,
    divide,
    emit_fen,
    legal_moves,
    material_balance,
    mirror,
    parse_fen,
    perft,
    perft_by_apply,
    random_playout,
    starting_position,
    status,
)

KIWIPETE = "r3k2r/p1ppqpb1/bn2pnp1/3PN3/1p2P3/2N2Q1p/PPPBBPPP/R3K2R w KQkq - 0 1"
ENDGAME = "8/2p5/3p4/KP5r/1R3p1k/8/4P1P1/8 w - - 0 1"
PROMOTIONS = "r3k2r/Pppp1ppp/1b3nbN/nP6/BBP1P3/q4N2/Pp1P2PP/R2Q1RK1 w kq - 0 1"
FOOLS_MATE = "rnb1kbnr/pppp1ppp/8/4p3/6Pq/5P2/PPPPP2P/RNBQKBNR w KQkq - 1 3"


class TestParseFen:
    """Tests for FEN parsing and emission."""

    def test_starting_position(self) -> None:
        """Test the standard FEN parses to the starting position."""
        pos = parse_fen(STARTING_FEN)
        assert pos == starting_position()
        assert pos.side_to_move is Color.WHITE
        assert pos.castling_rights == (True, True, True, True)
        assert pos.en_passant_target is None
        assert pos.halfmove_clock == 0
        assert pos.fullmove_number == 1

    @pytest.mark.parametrize("fen", [STARTING_FEN, KIWIPETE, ENDGAME, PROMOTIONS, FOOLS_MATE])
    def test_round_trip(self, fen: str) -> None:
        """Test parse then emit returns the same text."""
        assert emit_fen(parse_fen(fen)) == fen

    def test_random_games_round_trip(self) -> None:
        """Test every position of random games survives parse/emit unchanged."""
        rng = np.random.default_rng(3)
        for _ in range(5):
            for pos in random_playout(rng, max_plies=120):
                assert emit_fen(parse_fen(pos.fen)) == pos.fen

    def test_empty_board_rejected(self) -> None:
        """Test a board without kings names the placement field."""
        with pytest.raises(FenError) as exc:
            parse_fen("8/8/8/8/8/8/8/8 w - - 0 1")
        assert exc.value.field == "placement"

    def test_empty_board_allowed_when_not_strict(self) -> None:
        """Test syntactic-only parsing accepts an empty board."""
        pos = parse_fen("8/8/8/8/8/8/8/8 w - - 0 1", strict=False)
        assert pos.placement == "8/8/8/8/8/8/8/8"

    def test_two_white_kings(self) -> None:
        """Test an extra king is a placement error."""
        with pytest.raises(FenError) as exc:
            parse_fen("4k3/8/8/8/8/8/8/K3K3 w - - 0 1")
        assert exc.value.field == "placement"

    @pytest.mark.parametrize(
        ("fen", "field"),
        [
            ("rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0", "field_count"),
            ("rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP w KQkq - 0 1", "placement"),
            ("rnbqkbnr/pppppppp/9/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1", "placement"),
            ("rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR x KQkq - 0 1", "side_to_move"),
            ("rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkx - 0 1", "castling"),
            ("rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq e5 0 1", "en_passant"),
            ("rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - -1 1", "halfmove_clock"),
            ("rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 0", "fullmove_number"),
            ("rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 1000 1", "halfmove_clock"),
        ],
    )
    def test_error_names_field(self, fen: str, field: str) -> None:
        """Test each malformed field is reported by name."""
        with pytest.raises(FenError) as exc:
            parse_fen(fen)
        assert exc.value.field == field
        assert field in str(exc.value)

    def test_castling_without_rook(self) -> None:
        """Test castling rights need king and rook on their home squares."""
        with pytest.raises(FenError) as exc:
            parse_fen("4k3/8/8/8/8/8/8/4K3 w K - 0 1")
        assert exc.value.field == "castling"

    def test_side_not_to_move_in_check(self) -> None:
        """Test the side that just moved cannot be left in check."""
        with pytest.raises(FenError) as exc:
            parse_fen("4k3/8/8/8/8/8/8/4RK2 w - - 0 1")
        assert exc.value.field == "side_to_move"


class TestMoves:
    """Tests for move generation and application."""

    def test_starting_moves(self) -> None:
        """Test the starting position has 20 moves, sorted by coordinate notation."""
        moves = legal_moves(starting_position())
        assert len(moves) == 20
        ucis = [m.uci() for m in moves]
        assert ucis == sorted(ucis)

    def test_apply_double_push(self) -> None:
        """Test a double pawn push writes the en passant target."""
        pos = apply_uci(starting_position(), "e2e4")
        assert emit_fen(pos) == "rnbqkbnr/pppppppp/8/8/4P3/8/PPPP1PPP/RNBQKBNR b KQkq e3 0 1"
        assert pos.en_passant_target == "e3"

    def test_apply_leaves_original_untouched(self) -> None:
        """Test positions are values: applying a move creates a new one."""
        start = starting_position()
        apply_uci(start, "g1f3")
        assert start.fen == STARTING_FEN

    def test_illegal_move_rejected(self) -> None:
        """Test an illegal move raises and leaves the position intact."""
        start = starting_position()
        with pytest.raises(IllegalMoveError):
            apply_uci(start, "e2e5")
        assert start.fen == STARTING_FEN

    @pytest.mark.parametrize("text", ["", "e2", "z9z9", "0000"])
    def test_malformed_move_text(self, text: str) -> None:
        """Test unparseable coordinate notation is an IllegalMoveError."""
        with pytest.raises(IllegalMoveError):
            Move.from_uci(text)

    def test_promotion_round_trip(self) -> None:
        """Test promotion moves keep their piece letter."""
        assert Move.from_uci("e7e8q").uci() == "e7e8q"

    def test_checkmate_has_no_moves(self) -> None:
        """Test a mated side has no legal moves."""
        assert legal_moves(parse_fen(FOOLS_MATE)) == []

    def test_castling_and_en_passant_flags(self) -> None:
        """Test special-move predicates."""
        pos = parse_fen(KIWIPETE)
        assert pos.is_castling(Move.from_uci("e1g1"))
        assert pos.is_capture(Move.from_uci("e5f7"))
        ep = parse_fen("4k3/8/8/3pP3/8/8/8/4K3 w - d6 0 2")
        assert ep.is_en_passant(Move.from_uci("e5d6"))

    def test_mirror(self) -> None:
        """Test colour flipping swaps the side to move and negates material."""
        assert mirror(starting_position()) == starting_position()
        pos = parse_fen("4k3/8/8/3q4/8/8/3R4/4K3 w - - 0 1")
        flipped = mirror(pos)
        assert flipped.side_to_move is Color.BLACK
        assert material_balance(flipped) == -material_balance(pos)
        move = Move.from_uci("d2d5")
        assert move.mirror() in legal_moves(flipped)


class TestPerft:
    """Tests for perft against published node counts."""

    @pytest.mark.parametrize(
        ("fen", "depth", "nodes"),
        [
            (STARTING_FEN, 1, 20),
            (STARTING_FEN, 2, 400),
            (STARTING_FEN, 3, 8902),
            (STARTING_FEN, 4, 197281),
            (KIWIPETE, 1, 48),
            (KIWIPETE, 2, 2039),
            (KIWIPETE, 3, 97862),
            (ENDGAME, 1, 14),
            (ENDGAME, 2, 191),
            (ENDGAME, 3, 2812),
            (ENDGAME, 4, 43238),
            (PROMOTIONS, 1, 6),
            (PROMOTIONS, 2, 264),
            (PROMOTIONS, 3, 9467),
        ],
    )
    def test_reference_counts(self, fen: str, depth: int, nodes: int) -> None:
        """Test leaf counts match the reference tables."""
        assert perft(parse_fen(fen), depth) == nodes

    @pytest.mark.slow
    @pytest.mark.parametrize(
        ("fen", "depth", "nodes"),
        [
            (STARTING_FEN, 5, 4865609),
            (KIWIPETE, 4, 4085603),
            (ENDGAME, 5, 674624),
            (PROMOTIONS, 4, 422333),
        ],
    )
    def test_deep_reference_counts(self, fen: str, depth: int, nodes: int) -> None:
        """Test the deeper reference counts."""
        assert perft(parse_fen(fen), depth) == nodes

    def test_depth_zero(self) -> None:
        """Test perft(0) counts the root."""
        assert perft(starting_position(), 0) == 1

    @pytest.mark.parametrize("fen", [KIWIPETE, ENDGAME, PROMOTIONS])
    def test_apply_path_matches_counting(self, fen: str) -> None:
        """Test value-semantics perft agrees with make/unmake counting."""
        pos = parse_fen(fen)
        assert perft_by_apply(pos, 2) == perft(pos, 2)

    def test_divide_sums_to_perft(self) -> None:
        """Test per-move counts add up to the total."""
        pos = parse_fen(KIWIPETE)
        split = divide(pos, 2)
        assert len(split) == 48
        assert sum(split.values()) == 2039


class TestStatus:
    """Tests for game termination."""

    def test_fools_mate(self) -> None:
        """Test the textbook mate is won by Black."""
        result = status(parse_fen(FOOLS_MATE))
        assert result.kind is StatusKind.CHECKMATE
        assert result.winner is Color.BLACK
        assert result.is_terminal
        assert not result.is_draw

    def test_stalemate(self) -> None:
        """Test a king with no moves and no check is stalemate."""
        result = status(parse_fen("7k/5Q2/6K1/8/8/8/8/8 b - - 0 1"))
        assert result.kind is StatusKind.STALEMATE
        assert result.winner is None
        assert result.is_draw

    def test_insufficient_material(self) -> None:
        """Test bare kings are a draw."""
        result = status(parse_fen("8/8/8/4k3/8/8/8/4K3 w - - 0 1"))
        assert result.kind is StatusKind.INSUFFICIENT_MATERIAL

    def test_fifty_move_rule(self) -> None:
        """Test a halfmove clock of 100 ends the game."""
        result = status(parse_fen("4k3/8/8/8/8/8/8/R3K3 w - - 100 80"))
        assert result.kind is StatusKind.FIFTY_MOVE

    def test_threefold_repetition(self) -> None:
        """Test knight shuffles repeat the start position a third time."""
        game = [starting_position()]
        for text in ["g1f3", "g8f6", "f3g1", "f6g8"] * 2:
            game.append(apply_uci(game[-1], text))
        assert status(game[4], game[:4]).kind is StatusKind.ONGOING
        assert status(game[-1], game[:-1]).kind is StatusKind.REPETITION

    def test_ongoing(self) -> None:
        """Test the start position is not terminal."""
        assert not status(starting_position()).is_terminal


class TestRandomPlayout:
    """Tests for random playouts."""

    def test_playout_is_legal_and_seeded(self) -> None:
        """Test each step is a legal move and seeds reproduce games."""
        a = random_playout(np.random.default_rng(5), max_plies=60)
        b = random_playout(np.random.default_rng(5), max_plies=60)
        assert [p.fen for p in a] == [p.fen for p in b]
        for before, after in zip(a, a[1:], strict=False):
            assert any(apply_move(before, m) == after for m in legal_moves(before))
