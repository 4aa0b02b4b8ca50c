"""LatentMate - a chess engine that plans in a learned embedding space.

Positions are embedded by a contrastively-trained transformer encoder and moves
are chosen by beam search toward an "advantage axis" in latent space.

Features:
- Chess rules substrate with FEN I/O and perft-verified move generation
- 77-token FEN tokenizer and transformer encoder (PyTorch)
- Supervised contrastive (SupCon) training with momentum SGD
- Embedding-guided beam search, UCI front end and MCP tools
- Match harness against UCI engines or builtin opponents, Elo estimation
- PCA latent maps and game trajectories as SVG
"""

__version__ = "0.1.0"
__all__ = [
    "board",
    "tokenizer",
    "encoder",
    "dataset",
    "losses",
    "trainer",
    "planner",
    "uci",
    "opponents",
    "harness",
    "elo",
    "viz",
    "server",
    "cli",
    "config",
    "logging",
    "retry",
]
