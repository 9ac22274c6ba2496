"""Effective-temperature diagnostics for variational quantum many-body states.

The package trains parameterized wavefunction ansatzes (MPS, PEPS, NQS,
VQE circuits, raw vector states) against energy or fidelity objectives on
XXZ spin models, decomposes the resulting states in the exact eigenbasis
of the Hamiltonian, and fits the exponential decay of the spectral weights
to extract an inverse effective temperature together with its companion
diagnostics (scaling factor, fit uncertainty, Pearson r^2, MSE and the
deviation point beta* for imaginary-time evolved targets).
"""

__version__ = "0.1.0"

FORMAT_VERSION = 1
BIT_CONVENTION = "lsb-site0/zero-is-up/v1"
