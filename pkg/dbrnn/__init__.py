"""Deep bidirectional RNN toolkit for driver action prediction."""

__version__ = "1.0.0"
