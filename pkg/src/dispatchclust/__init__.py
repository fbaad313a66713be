"""Deep clustering of power-generation units from their hourly dispatch.

Pipeline: ingest hourly panels, discretize dispatch into operating
states, train a GRU encoder-decoder forecaster with learnable unit
embeddings, cluster the embeddings, and compute per-cluster flexibility
and market statistics.
"""

from ._kernels import active_backend

__version__ = "0.1.0"

__all__ = ["active_backend", "__version__"]
