"""LatentMate test suite."""
