"""mutkit: chunk-guided, retrieval-augmented mutant generation and analysis."""

__version__ = "0.1.0"
