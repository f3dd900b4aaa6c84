"""Simulator and analysis toolkit for oblivious quantum multiparty protocols."""

__version__ = "0.1.0"
