"""Modelling, calibration and evaluation toolkit for an inductive six-axis F/T sensor."""

__version__ = "0.1.0"
