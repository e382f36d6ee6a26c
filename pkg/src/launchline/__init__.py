"""Launcher integration line: simulator, MDP encoding and MRAS/ASA optimizers."""

__version__ = "0.1.0"
