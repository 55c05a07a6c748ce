"""Simulator for driven-dissipative nonlinear oscillators with n-photon
drive and m-photon dissipation: steady states, Liouvillian spectra,
metastable squeezed lobes, memory-lifetime fits, and associative-memory
retrieval."""

__version__ = "0.1.0"

from .liouvillian import ModelParams  # noqa: F401
