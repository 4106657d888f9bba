"""
ACE Bayesian Design Toolkit

Approximate coordinate exchange for fully-Bayesian decision-theoretic design
of experiments.

This package provides:
- Nested Monte Carlo estimators of expected utility (SIG, NSEL, model-averaged NSEL)
- Pseudo-Bayesian D- and A-optimality via prior-averaged Fisher information
- One-dimensional Gaussian process emulation of noisy utility slices
- Coordinate exchange (Phase I) and point exchange (Phase II) with a Bayesian
  acceptance test, run from multiple random starts
- Built-in compartmental, logistic, dose-response and toy models
- A command-line front end emitting tidy CSV for plotting
"""

__version__ = "1.0.0"
__author__ = "ACE Development Team"
