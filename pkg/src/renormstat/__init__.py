"""Canonical typicality with a renormalized self-Hamiltonian, by exact diagonalization.

Modules
-------
hilbert      S (x) A (x) B index bookkeeping and partial traces
models       spin-chain Hamiltonians and presets
spectra      eigendecomposition, energy windows, spectrum cache
ensembles    microcanonical, typical-vector and canonical reduced states
renorm       self-consistent renormalized self-Hamiltonian
diagnostics  matrix-element statistics, eigenstate widths, ETH scans
experiments  comparison pipeline and sweeps (driven by ``renormstat`` CLI)
"""

from .errors import *  # noqa: F401,F403
from .hilbert import CompositeSpace, embed, partial_trace_env
from .models import ModelSpec, build_model, chaotic_spec, integrable_spec
from .spectra import Spectrum, centered_window, diagonalize, make_window
from .ensembles import DensityMatrix, canonical_state, fit_beta, microcanonical_reduced, trace_distance
from .renorm import EnvironmentData, interaction_blocks, mean_field_split, renormalize

__version__ = "0.1.0"
