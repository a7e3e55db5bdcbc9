"""qrank: pairwise learning-to-rank with query-grouped evaluation and tuning."""

__version__ = "0.1.0"
