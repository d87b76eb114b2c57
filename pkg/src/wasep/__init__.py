"""Density fluctuations of the weakly asymmetric exclusion process on a ring.

Modules: ``lattice``, ``local`` and ``weights`` (configurations, local
statistics, lattice weights), ``statics`` (canonical-ensemble conditional
expectations), ``dynamics`` (event-driven simulator with exact time
integrals), ``fields`` (fluctuation field and its Dynkin decomposition),
``spectral`` (exact finite-box generators), ``experiments`` (Monte Carlo
scans), and ``config``, ``report``, ``suites``, ``cli`` (command line).
"""

__version__ = "0.1.0"
