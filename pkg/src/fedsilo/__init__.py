"""Cross-silo federated learning simulator with perceptual-hash dataset curation."""

__version__ = "0.1.0"
