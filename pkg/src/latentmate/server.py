"""LatentMate MCP server: the engine's planning tools over the Model Context Protocol.

Built with FastMCP:
- Lifespan management loads the encoder and advantage axis once
- Tools for move selection, child scoring, embeddings and legal moves
- A config resource and a position-review prompt
"""

import asyncio
import sys
from collections.abc import AsyncIterator
from contextlib import asynccontextmanager
from dataclasses import dataclass
from typing import Literal

from mcp.server.fastmcp import Context, FastMCP
from mcp.server.session import ServerSession

from .board import legal_moves as list_legal_moves
from .board import parse_fen, status
from .config import Settings, settings
from .encoder import configure_torch, load_checkpoint
from .losses import ConfigError
from .models import PlanConfig
from .planner import (
    AdvantageAxis,
    EncoderScorer,
    Scorer,
    cosine_scores,
    score_children,
    select_move,
)

# =============================================================================
# Application Context (Lifespan Management)
# =============================================================================


@dataclass
class AppContext:
    """Loaded engine state shared by every tool call."""

    scorer: Scorer
    axis: AdvantageAxis
    plan: PlanConfig
    max_depth: int = 6


def load_app_context(config: Settings) -> AppContext:
    """Load checkpoint and axis named in the engine config.

    Raises:
        ConfigError: checkpoint or axis path missing
    """
    if config.checkpoint_path is None or config.axis_path is None:
        raise ConfigError("set LATENTMATE_CHECKPOINT_PATH and LATENTMATE_AXIS_PATH")
    configure_torch(deterministic=False, threads=config.torch_threads)
    model = load_checkpoint(config.checkpoint_path, config.device)
    return AppContext(
        scorer=EncoderScorer(model),
        axis=AdvantageAxis.load(config.axis_path),
        plan=PlanConfig(
            beam_width=config.beam_width,
            depth=config.search_depth,
            adversarial_mode=config.adversarial_mode,
        ),
        max_depth=config.max_depth,
    )


@asynccontextmanager
async def app_lifespan(server: FastMCP) -> AsyncIterator[AppContext]:
    yield await asyncio.to_thread(load_app_context, settings)


# =============================================================================
# FastMCP Server Instance
# =============================================================================

mcp = FastMCP(
    "LatentMate",
    lifespan=app_lifespan,
    instructions="""LatentMate is a chess engine that plans in a learned embedding space.

Positions are embedded by a contrastively trained transformer and scored by
their cosine with an advantage axis (White-won minus Black-won mean embedding).

**Tools:**
- `best_move` - Beam search for the side to move
- `score_moves` - Advantage-axis score of every legal child
- `embed_position` - The position's embedding and its axis score
- `legal_moves` - Legal moves in coordinate notation""",
)


# =============================================================================
# Prompt Templates and Resources
# =============================================================================

REVIEW_PROMPT = """You are reviewing a chess position with the LatentMate tools.

1. Call `legal_moves` to see the options.
2. Call `score_moves` and note which moves raise or lower the advantage score.
3. Call `best_move` and explain the chosen line in plain chess terms.

Scores are from White's point of view: +1 strongly favours White, -1 Black."""


@mcp.prompt()
def position_review(fen: str = "") -> str:
    """Prompt for walking through a position with the engine tools."""
    if fen:
        return f"{REVIEW_PROMPT}\n\nPosition (FEN): {fen}"
    return REVIEW_PROMPT


@mcp.resource("latentmate://config")
def get_config() -> str:
    """Get current LatentMate configuration."""
    return f"""LatentMate Configuration:
- Checkpoint: {settings.checkpoint_path}
- Axis: {settings.axis_path}
- Beam Width: {settings.beam_width}
- Search Depth: {settings.search_depth} (max {settings.max_depth})
- Adversarial Mode: {settings.adversarial_mode}
- Device: {settings.device}"""


# =============================================================================
# Tools
# =============================================================================


def _app(ctx: Context[ServerSession, AppContext] | None) -> AppContext:
    if ctx is None:
        raise RuntimeError("Context is required")
    return ctx.request_context.lifespan_context


@mcp.tool()
async def legal_moves(fen: str) -> str:
    """List legal moves in coordinate notation.

    Args:
        fen: Position in Forsyth-Edwards Notation
    """
    moves = list_legal_moves(parse_fen(fen))
    return " ".join(m.uci() for m in moves) if moves else "(no legal moves)"


@mcp.tool()
async def best_move(
    fen: str,
    depth: int | None = None,
    beam_width: int | None = None,
    ctx: Context[ServerSession, AppContext] | None = None,
) -> str:
    """Select a move with embedding-guided beam search.

    Args:
        fen: Position in Forsyth-Edwards Notation
        depth: Search depth in plies (defaults to the configured depth, capped at max_depth)
        beam_width: Beam width k (defaults to the configured width)
    """
    app = _app(ctx)
    pos = parse_fen(fen)
    result = status(pos)
    if result.is_terminal:
        return f"Game over: {result.kind.value}"
    update: dict[str, int] = {}
    if depth is not None:
        update["depth"] = max(1, min(app.max_depth, depth))
    if beam_width is not None:
        update["beam_width"] = beam_width
    plan = PlanConfig.model_validate({**app.plan.model_dump(), **update})
    move = await asyncio.to_thread(select_move, app.scorer, app.axis, pos, plan)
    return f"{move.uci()} (depth {plan.depth}, beam {plan.beam_width})"


@mcp.tool()
async def score_moves(fen: str, ctx: Context[ServerSession, AppContext] | None = None) -> str:
    """Score every legal child by cosine with the advantage axis, best first for the mover.

    Args:
        fen: Position in Forsyth-Edwards Notation
    """
    app = _app(ctx)
    pos = parse_fen(fen)
    scored = await asyncio.to_thread(score_children, app.scorer, app.axis, pos)
    if not scored:
        return "(no legal moves)"
    sign = pos.side_to_move.sign
    scored.sort(key=lambda item: (-sign * item[1], item[0].uci()))
    lines = [f"## Child scores ({pos.side_to_move.name.title()} to move)\n"]
    lines += [f"- `{move.uci()}`: {score:+.4f}" for move, score in scored]
    return "\n".join(lines)


@mcp.tool()
async def embed_position(
    fen: str, ctx: Context[ServerSession, AppContext] | None = None
) -> str:
    """Embedding vector of a position and its advantage-axis score.

    Args:
        fen: Position in Forsyth-Edwards Notation
    """
    app = _app(ctx)
    pos = parse_fen(fen)
    z = await asyncio.to_thread(app.scorer.embed, [pos])
    score = float(cosine_scores(z, app.axis)[0])
    vector = ",".join(f"{x:.6f}" for x in z[0])
    return f"score: {score:+.6f}\ndim: {z.shape[1]}\nembedding: {vector}"


# =============================================================================
# Server Entry Point
# =============================================================================


def main(argv: list[str] | None = None) -> None:
    """Run the LatentMate MCP server."""
    args = sys.argv[1:] if argv is None else argv
    transport: Literal["stdio", "streamable-http"] = "stdio"
    if "--http" in args:
        transport = "streamable-http"
    mcp.run(transport=transport)


if __name__ == "__main__":
    main()
