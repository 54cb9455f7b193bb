"""UAV trajectory forecasting with a from-scratch GRU encoder-decoder."""

__version__ = "0.1.0"
