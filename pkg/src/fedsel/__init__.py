"""Resource-aware client selection for federated learning on simulated edge devices."""

__version__ = "0.1.0"
