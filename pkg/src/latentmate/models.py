"""Pydantic models for configuration values and persisted results.

Invariants from the design (divisible head counts, temperature > 0, game
counts, interval ordering) are enforced as field constraints and validators,
so an invalid config never reaches the training loop or the match runner.
"""

import math
from enum import Enum
from typing import Any

from pydantic import BaseModel, Field, field_validator, model_validator

from .tokenizer import SEQUENCE_LENGTH, VOCAB_SIZE


class EncoderConfig(BaseModel):
    """Transformer encoder shape (L, H, D, N, MLP size)."""

    model_config = {"frozen": True}

    num_layers: int = Field(ge=1, description="Transformer layers L")
    hidden_dim: int = Field(ge=1, description="Hidden dimension H")
    embed_dim: int = Field(ge=1, description="Output embedding dimension D")
    num_heads: int = Field(ge=1, description="Attention heads N")
    mlp_size: int = Field(ge=1, description="Inner width of the feed-forward block")
    dropout_rate: float = Field(default=0.1, ge=0, lt=1, description="Dropout in train mode")
    vocab_size: int = Field(default=VOCAB_SIZE, ge=1, description="Token vocabulary size")
    seq_len: int = Field(default=SEQUENCE_LENGTH, ge=1, description="Tokens per position")

    @model_validator(mode="after")
    def validate_heads(self) -> "EncoderConfig":
        """Ensure H splits evenly across the heads."""
        if self.hidden_dim % self.num_heads:
            raise ValueError(
                f"hidden_dim ({self.hidden_dim}) must be divisible by num_heads ({self.num_heads})"
            )
        return self

    @classmethod
    def preset(cls, name: str) -> "EncoderConfig":
        """``tiny`` (tests, desk-scale), ``small`` and ``base``."""
        try:
            return cls(**ENCODER_PRESETS[name])
        except KeyError:
            raise ValueError(
                f"unknown preset {name!r}; choose from {', '.join(ENCODER_PRESETS)}"
            ) from None

    def to_text(self) -> str:
        """Human-readable ``key = value`` lines."""
        return "".join(f"{k} = {v}\n" for k, v in self.model_dump().items())

    @classmethod
    def from_text(cls, text: str) -> "EncoderConfig":
        values: dict[str, str] = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
        return cls.model_validate(values)


ENCODER_PRESETS: dict[str, dict[str, Any]] = {
    "tiny": {"num_layers": 2, "hidden_dim": 128, "embed_dim": 128, "num_heads": 4, "mlp_size": 128},
    "small": {
        "num_layers": 6,
        "hidden_dim": 512,
        "embed_dim": 512,
        "num_heads": 16,
        "mlp_size": 512,
    },
    "base": {
        "num_layers": 6,
        "hidden_dim": 1024,
        "embed_dim": 1024,
        "num_heads": 16,
        "mlp_size": 1024,
    },
}


class TrainConfig(BaseModel):
    """Contrastive training hyperparameters."""

    delta: float = Field(default=0.05, gt=0, description="Evaluation margin for positives")
    temperature: float = Field(default=0.07, gt=0, description="SupCon temperature tau")
    learning_rate: float = Field(default=0.05, gt=0, description="Constant SGD learning rate")
    momentum: float = Field(default=0.9, ge=0, lt=1, description="Classical momentum")
    steps: int = Field(default=20_000, ge=1, description="Optimizer steps")
    batch_size: int = Field(default=128, ge=2, description="Positions per batch")
    positives_per_anchor: int = Field(default=5, ge=1, description="Sampled positives per anchor")
    checkpoint_every: int = Field(default=1000, ge=1, description="Steps between checkpoints")
    log_every: int = Field(default=100, ge=1, description="Steps between INFO loss records")
    seed: int = Field(default=0, description="Seed for sampling, init and dropout")
    deterministic: bool = Field(
        default=True,
        description="Single-threaded deterministic kernels (bitwise-reproducible runs)",
    )

    @model_validator(mode="after")
    def validate_batch(self) -> "TrainConfig":
        """A batch must hold at least one anchor group."""
        if self.batch_size < self.positives_per_anchor + 1:
            raise ValueError(
                f"batch_size ({self.batch_size}) must fit one anchor and "
                f"{self.positives_per_anchor} positives"
            )
        return self


class LossReport(BaseModel):
    """Summary of one SupCon evaluation."""

    loss: float = Field(description="Mean loss over anchors with positives")
    anchors_with_positives: int = Field(ge=0, description="Anchors with nonempty P(i)")
    mean_positive_similarity: float | None = Field(
        default=None, description="Mean cosine over positive pairs (None if there are none)"
    )
    mean_negative_similarity: float | None = Field(
        default=None, description="Mean cosine over negative pairs (None if there are none)"
    )

    @field_validator("loss")
    @classmethod
    def validate_finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("loss is not finite")
        return v


class PlanConfig(BaseModel):
    """Beam search settings.

    ``paper_literal_mode=True`` is accepted as the inverse of ``adversarial_mode``:
    every ply keeps the engine's k best children and the best leaf decides.
    """

    beam_width: int = Field(default=3, ge=1, description="Beam width k")
    depth: int = Field(default=2, ge=1, description="Search depth S in plies")
    adversarial_mode: bool = Field(
        default=True,
        description="At opponent plies keep the children worst for the engine",
    )

    @model_validator(mode="before")
    @classmethod
    def accept_literal_flag(cls, data: Any) -> Any:
        if isinstance(data, dict) and "paper_literal_mode" in data:
            data = dict(data)
            literal = bool(data.pop("paper_literal_mode"))
            if literal and data.get("adversarial_mode") is True:
                raise ValueError("adversarial_mode and paper_literal_mode are exclusive")
            data["adversarial_mode"] = not literal
        return data

    @property
    def paper_literal_mode(self) -> bool:
        return not self.adversarial_mode


class GameResult(str, Enum):
    """Game outcome from the engine's point of view."""

    WIN = "win"
    LOSS = "loss"
    DRAW = "draw"


class MatchSpec(BaseModel):
    """One match: our engine against one opponent setting."""

    opponent: str = Field(
        description="'random-mover', 'material-greedy', or a UCI engine command line"
    )
    opponent_options: dict[str, str] = Field(
        default_factory=dict, description="setoption name/value pairs sent to a UCI opponent"
    )
    anchor_rating: float | None = Field(
        default=None, description="Fixed rating of the opponent for Elo estimation"
    )
    label: str | None = Field(default=None, description="Name used in records and anchors")
    games: int = Field(default=10, ge=1, description="Games to play")
    movetime_ms: int = Field(
        default=50, gt=0, description="Opponent per-move time; our engine searches plan.depth"
    )
    plan: PlanConfig = Field(default_factory=PlanConfig, description="Our engine's search")
    alternate_colors: bool = Field(default=True, description="Engine is White in odd games")
    concurrency: int = Field(default=1, ge=1, description="Games played at once")
    seed: int = Field(default=0, description="Seed for builtin opponents")

    @property
    def opponent_label(self) -> str:
        if self.label:
            return self.label
        elo = self.opponent_options.get("UCI_Elo")
        return f"{self.opponent}@{elo}" if elo else self.opponent


class GameRecord(BaseModel):
    """One finished game."""

    index: int = Field(ge=0, description="0-based game number within the match")
    engine_color: str = Field(pattern="^[wb]$", description="Colour our engine played")
    result: GameResult = Field(description="Outcome for our engine")
    termination: str = Field(description="Status kind or forfeit reason")
    moves: list[str] = Field(default_factory=list, description="Coordinate-notation moves")


class MatchRecord(BaseModel):
    """All games of one match."""

    opponent: str = Field(description="Opponent label (key into the anchor table)")
    anchor_rating: float | None = Field(default=None, description="Opponent anchor rating")
    depth: int | None = Field(default=None, description="Our beam depth in this match")
    games: list[GameRecord] = Field(default_factory=list, description="Games by index")

    @property
    def wins(self) -> int:
        return sum(1 for g in self.games if g.result is GameResult.WIN)

    @property
    def draws(self) -> int:
        return sum(1 for g in self.games if g.result is GameResult.DRAW)

    @property
    def losses(self) -> int:
        return sum(1 for g in self.games if g.result is GameResult.LOSS)

    @property
    def score(self) -> float:
        """Points per game for our engine."""
        if not self.games:
            return 0.0
        return (self.wins + 0.5 * self.draws) / len(self.games)


class EloEstimate(BaseModel):
    """MAP rating of our engine with a 95% interval."""

    rating: float = Field(description="Point estimate")
    lower: float = Field(description="Lower bound of the 95% interval")
    upper: float = Field(description="Upper bound of the 95% interval")
    draw_parameter: float = Field(ge=0, description="Fitted Davidson draw parameter")
    games: int = Field(ge=0, description="Games used in the fit")
    anchors: dict[str, float] = Field(default_factory=dict, description="Opponent ratings used")

    @model_validator(mode="after")
    def validate_interval(self) -> "EloEstimate":
        if not self.lower <= self.rating <= self.upper:
            raise ValueError("interval must contain the point estimate")
        return self
