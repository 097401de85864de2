"""Dialogue rating prediction with a counterfactual LSTM."""

__version__ = "0.1.0"
