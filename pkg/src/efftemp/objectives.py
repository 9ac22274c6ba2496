"""Training objectives: variational energy, infidelity, and ITES targets.

All ansatz families except the circuit one produce unnormalized states, so
both objectives divide by <psi|psi> explicitly.  Imaginary-time evolved
states (ITES) are pure states with eigenbasis coefficients proportional to
exp(-beta * eps_i / 2), optionally dressed with random phases.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._jax import jnp
from .model import HamTerms, Lattice, Spectrum
from .prng import TAG_PHASE, uniform_angles

__all__ = [
    "ObjectiveError",
    "TargetState",
    "ObjectiveSpec",
    "objective_spec",
    "energy",
    "infidelity",
    "build_ites",
    "ground_target",
    "energy_fn",
    "infidelity_fn",
    "export_target_checkpoint",
]

OBJECTIVE_KINDS = ("energy", "fidelity")
TARGET_KINDS = ("ground", "ites")


class ObjectiveError(ValueError):
    """Objective outside the supported vocabulary, or invalid operands."""


@dataclass(frozen=True)
class TargetState:
    """Normalized target wavefunction with its provenance.

    coeffs holds the eigenbasis amplitudes when the target was built from a
    spectrum (ground or ITES); it is None for externally loaded states.
    """

    kind: str  # "ground" | "ites"
    beta: float | None
    phase_seed: int | None
    state: np.ndarray  # (2^L,) complex128, unit norm
    coeffs: np.ndarray | None = None


@dataclass(frozen=True)
class ObjectiveSpec:
    """Closed objective vocabulary: energy, or fidelity vs ground/ITES."""

    kind: str  # "energy" | "fidelity"
    target: str = ""  # "" | "ground" | "ites"
    beta: float = 0.0
    phase_seed: int | None = None


def objective_spec(kind: str, target: str = "", beta: float = 0.0,
                   phase_seed: int | None = None) -> ObjectiveSpec:
    """Validated objective specification; anything else is rejected here."""
    if kind not in OBJECTIVE_KINDS:
        raise ObjectiveError(
            f"unsupported objective {kind!r}; supported: {OBJECTIVE_KINDS}"
        )
    if kind == "energy":
        if target:
            raise ObjectiveError("energy objective takes no target")
        return ObjectiveSpec(kind="energy")
    if target not in TARGET_KINDS:
        raise ObjectiveError(
            f"fidelity objective needs a target in {TARGET_KINDS}, got {target!r}"
        )
    if target == "ites":
        if not np.isfinite(beta) or beta < 0:
            raise ObjectiveError("ites target requires finite beta >= 0")
    return ObjectiveSpec(kind=kind, target=target, beta=float(beta),
                         phase_seed=phase_seed)


def _as_state(psi) -> np.ndarray:
    psi = np.asarray(psi)
    if psi.ndim != 1:
        raise ObjectiveError("state must be a vector")
    n2 = float(np.real(np.vdot(psi, psi)))
    if not np.isfinite(n2) or n2 <= 0.0:
        raise ObjectiveError("state has zero or non-finite norm")
    return psi


def energy(psi: np.ndarray, H) -> float:
    """Rayleigh quotient <psi|H|psi> / <psi|psi> for an unnormalized psi.

    The imaginary residue of the quadratic form is checked against 1e-12
    (relative) and then discarded; H is real symmetric so it is pure noise.
    """
    psi = _as_state(psi)
    hpsi = H.apply(psi) if isinstance(H, HamTerms) else H @ psi
    q = np.vdot(psi, hpsi)
    scale = max(1.0, abs(q))
    if abs(q.imag) > 1e-12 * scale:
        raise ObjectiveError(f"energy quadratic form has imaginary part {q.imag:.3e}")
    return float(q.real / np.real(np.vdot(psi, psi)))


def infidelity(psi: np.ndarray, target: TargetState | np.ndarray) -> float:
    """1 - |<target|psi>|^2 / <psi|psi>, clipped to [0, 1] against roundoff."""
    psi = _as_state(psi)
    t = target.state if isinstance(target, TargetState) else np.asarray(target)
    ov = np.vdot(t, psi)
    val = 1.0 - (abs(ov) ** 2) / float(np.real(np.vdot(psi, psi)))
    return float(min(max(val, 0.0), 1.0))


def build_ites(spectrum: Spectrum, beta: float,
               phase_seed: int | None = None) -> TargetState:
    """Imaginary-time evolved state at inverse temperature beta.

    Coefficients are computed from shifted exponents exp(-beta (eps - eps0)/2)
    so that large beta underflows gracefully toward the ground state instead
    of overflowing.  When phase_seed is given each coefficient picks up a
    random phase exp(i omega_i), omega_i uniform on [0, 2 pi) from the
    dedicated counter-based stream.
    """
    if not np.isfinite(beta) or beta < 0:
        raise ObjectiveError("beta must be finite and >= 0")
    eps = spectrum.energies
    a = np.exp(-0.5 * beta * (eps - eps[spectrum.ground_index]))
    coeffs = (a / np.linalg.norm(a)).astype(np.complex128)
    if phase_seed is not None:
        omega = uniform_angles(TAG_PHASE, phase_seed, eps.size)
        coeffs = coeffs * np.exp(1j * omega)
    state = spectrum.vectors @ coeffs
    state = state / np.linalg.norm(state)
    return TargetState(kind="ites", beta=float(beta), phase_seed=phase_seed,
                       state=state, coeffs=coeffs)


def ground_target(spectrum: Spectrum) -> TargetState:
    """Ground-state target (lowest eigenvector, already normalized)."""
    vec = np.ascontiguousarray(spectrum.vectors[:, spectrum.ground_index])
    coeffs = np.zeros(spectrum.size, dtype=np.complex128)
    coeffs[spectrum.ground_index] = 1.0
    return TargetState(kind="ground", beta=None, phase_seed=None,
                       state=vec, coeffs=coeffs)


def resolve_target(ospec: ObjectiveSpec, spectrum: Spectrum) -> TargetState | None:
    if ospec.kind == "energy":
        return None
    if ospec.target == "ground":
        return ground_target(spectrum)
    return build_ites(spectrum, ospec.beta, ospec.phase_seed)


# ---------------------------------------------------------------------------
# Traceable forms used inside differentiated losses
# ---------------------------------------------------------------------------


def energy_fn(terms: HamTerms):
    """psi -> Rayleigh quotient as a jax-traceable closure over fixed terms."""
    diag = jnp.asarray(terms.diag)
    dim = terms.dim
    perms = [jnp.asarray(np.arange(dim, dtype=np.int64) ^ int(m)) for m in terms.masks]
    offd = [jnp.asarray(terms.offdiag[k]) for k in range(terms.masks.size)]

    def value(psi):
        hpsi = diag * psi
        for o, p in zip(offd, perms):
            hpsi = hpsi + o * psi[p]
        num = jnp.real(jnp.vdot(psi, hpsi))
        den = jnp.real(jnp.vdot(psi, psi))
        return num / den

    return value


def infidelity_fn(target: TargetState | np.ndarray):
    """psi -> infidelity vs a fixed normalized target, jax-traceable."""
    t = target.state if isinstance(target, TargetState) else np.asarray(target)
    tconj = jnp.asarray(np.conj(t))

    def value(psi):
        ov = jnp.sum(tconj * psi)
        return 1.0 - (jnp.real(ov) ** 2 + jnp.imag(ov) ** 2) / jnp.real(
            jnp.vdot(psi, psi)
        )

    return value


def export_target_checkpoint(path: str | Path, target: TargetState,
                             lattice: Lattice, seed: int = 0) -> None:
    """Persist a target wavefunction in the checkpoint format.

    The amplitudes are stored under the direct-amplitude parameter layout
    (real/imaginary interleaved), so any run can reload the state as a
    frozen reference.
    """
    from .ansatz import ansatz_spec, save_checkpoint

    spec = ansatz_spec("vec", lattice)
    params = np.empty((target.state.size, 2), dtype=np.float64)
    params[:, 0] = target.state.real
    params[:, 1] = target.state.imag
    save_checkpoint(path, spec, seed=seed, step=0, params=params.reshape(-1))
