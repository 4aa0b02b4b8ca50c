"""Configuration settings for the LatentMate engine."""

from pathlib import Path

from pydantic import Field, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Engine configuration loaded from environment variables or an engine config file.

    The engine config file is an env-style file (``KEY=value`` lines) using the
    same ``LATENTMATE_`` names, loaded with ``Settings(_env_file=path)``.
    """

    model_config = SettingsConfigDict(
        env_prefix="LATENTMATE_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Model artifacts
    checkpoint_path: Path | None = Field(
        default=None,
        description="Encoder checkpoint produced by `latentmate train`",
    )
    axis_path: Path | None = Field(
        default=None,
        description="Advantage axis file produced by `latentmate axis`",
    )

    # Search
    beam_width: int = Field(default=3, ge=1, le=64, description="Beam width k")
    search_depth: int = Field(default=2, ge=1, description="Default beam depth S in plies")
    max_depth: int = Field(default=6, ge=1, description="Largest depth `go` may request")
    adversarial_mode: bool = Field(
        default=True,
        description="Keep the opponent's strongest replies at opponent plies",
    )

    # Runtime
    device: str = Field(default="cpu", description="Torch device for inference and training")
    torch_threads: int | None = Field(
        default=None,
        ge=1,
        description="Intra-op threads for torch (None keeps the torch default)",
    )
    calibration_positions: int = Field(
        default=5,
        ge=1,
        description="Positions used to calibrate movetime against depth",
    )
    time_safety: float = Field(
        default=0.8,
        gt=0,
        le=1,
        description="Fraction of movetime the projected search cost may use",
    )
    runs_dir: Path = Field(default=Path("runs"), description="Where training and match output goes")

    @model_validator(mode="after")
    def validate_depths(self) -> "Settings":
        """Ensure the default depth is reachable."""
        if self.search_depth > self.max_depth:
            raise ValueError(
                f"search_depth ({self.search_depth}) must be <= max_depth ({self.max_depth})"
            )
        return self


# Global settings instance
settings = Settings()
