"""Shot-frugal QAOA parameter setting: simulation, fine-tuning and benchmarking."""

__version__ = "0.1.0"
