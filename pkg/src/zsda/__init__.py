"""Zero-shot domain adaptation over a multiway domain grid: a shared representation,
per-domain linear heads with low-rank tensor structure, and tensor completion for
domains that have no training data."""

__version__ = "0.1.0"
