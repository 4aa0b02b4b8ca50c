"""Base exception for LatentMate.

Concrete errors live next to the code that raises them; catching
``LatentMateError`` is enough for the CLI to turn any of them into exit code 1.
"""


class LatentMateError(Exception):
    """Root of every error raised deliberately by this package."""
