"""Cavity coupled to a frequency comb of collective spin ensembles:
spectra, closed and open dynamics, revivals and envelope engineering."""

__version__ = "0.1.0"
