"""Lattice geometry, XXZ Hamiltonians, Sz sectors, and exact spectra.

Basis convention (pinned; cache files and checkpoints depend on it):
basis index b in [0, 2^L) encodes site j (0-indexed) in bit j, with the
least significant bit belonging to site 0.  Bit value 0 is spin-up, i.e.
Z acting on site j multiplies the basis state by +1 when bit j of b is 0.
2D sites are numbered row-major: site = row * Lx + col.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import BIT_CONVENTION, FORMAT_VERSION
from .numerics import sym_eig

__all__ = [
    "ModelError",
    "Lattice",
    "XXZParams",
    "Spectrum",
    "HamTerms",
    "build_lattice",
    "ham_terms",
    "build_hamiltonian",
    "sz_sectors",
    "full_spectrum",
    "ground_state",
    "spectrum_cache_key",
    "save_spectrum",
    "load_spectrum",
    "get_or_compute_spectrum",
    "DEFAULT_DIM_CAP",
]

DEFAULT_DIM_CAP = 1 << 13

CACHE_ENV_VAR = "EFFTEMP_CACHE_DIR"


class ModelError(ValueError):
    """Invalid lattice/Hamiltonian construction or diagonalization request."""


@dataclass(frozen=True)
class Lattice:
    kind: str  # "chain" | "square"
    Lx: int
    Ly: int
    pbc: bool
    bonds: tuple[tuple[int, int], ...]  # unordered unique site pairs (i < j)

    @property
    def nsites(self) -> int:
        return self.Lx * self.Ly

    def site(self, row: int, col: int) -> int:
        return row * self.Lx + col


@dataclass(frozen=True)
class XXZParams:
    Jx: float
    Jy: float
    Jz: float
    h: tuple[float, ...]  # per-site longitudinal field, length L

    @staticmethod
    def uniform(Jx: float, Jy: float, Jz: float, h: float, nsites: int) -> "XXZParams":
        return XXZParams(Jx, Jy, Jz, (float(h),) * nsites)


def build_lattice(kind: str, Lx: int, Ly: int = 1, pbc: bool = True) -> Lattice:
    """Nearest-neighbor bond list in canonical order.

    Row bonds come first in site order, then column bonds; periodic wrap
    bonds are deduplicated (a 2x2 torus has 4 unique bonds, not 8).
    """
    if kind == "chain":
        if Ly != 1:
            raise ModelError("chains require Ly = 1")
        if Lx < 2:
            raise ModelError("need at least 2 sites")
        if pbc and Lx == 2:
            raise ModelError("L=2 periodic chain is degenerate (duplicate bond)")
    elif kind == "square":
        if Lx < 2 or Ly < 2:
            raise ModelError("square lattices require Lx >= 2 and Ly >= 2")
    else:
        raise ModelError(f"unknown lattice kind {kind!r}")

    pairs: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()

    def add(i: int, j: int) -> None:
        p = (i, j) if i < j else (j, i)
        if p not in seen:
            seen.add(p)
            pairs.append(p)

    for r in range(Ly):
        for c in range(Lx):
            if c + 1 < Lx:
                add(r * Lx + c, r * Lx + c + 1)
            elif pbc and Lx > 1:
                add(r * Lx + c, r * Lx)
    for r in range(Ly):
        for c in range(Lx):
            if r + 1 < Ly:
                add(r * Lx + c, (r + 1) * Lx + c)
            elif pbc and Ly > 1:
                add(r * Lx + c, c)

    return Lattice(kind=kind, Lx=Lx, Ly=Ly, pbc=pbc, bonds=tuple(pairs))


def _bit_table(L: int) -> np.ndarray:
    """(2^L, L) array of bits; bit j of index b in column j."""
    b = np.arange(1 << L, dtype=np.int64)
    return (b[:, None] >> np.arange(L, dtype=np.int64)[None, :]) & 1


@dataclass(frozen=True)
class HamTerms:
    """Matvec-friendly form of an XXZ Hamiltonian.

    (H psi)[b] = diag[b] psi[b] + sum_k offdiag[k, b] psi[b ^ masks[k]],
    one k per bond with a nonzero spin-flip amplitude.  The off-diagonal
    value depends only on whether the bond's two bits agree, so it is the
    same seen from either side of the flip.
    """

    dim: int
    diag: np.ndarray  # (dim,) float64
    masks: np.ndarray  # (nb,) int64, two-bit flip masks
    offdiag: np.ndarray  # (nb, dim) float64

    def apply(self, psi: np.ndarray) -> np.ndarray:
        out = self.diag * psi
        for k in range(self.masks.size):
            out = out + self.offdiag[k] * psi[np.arange(self.dim) ^ self.masks[k]]
        return out


def ham_terms(lattice: Lattice, params: XXZParams) -> HamTerms:
    """Diagonal + per-bond flip terms of sum_<ij> Jx XX + Jy YY + Jz ZZ + sum_i h_i Z_i.

    In the Z basis the XX+YY part of a bond flips both bits and contributes
    Jx - Jy when the two bits agree and Jx + Jy when they differ; ZZ and the
    field are diagonal.
    """
    L = lattice.nsites
    if len(params.h) != L:
        raise ModelError(f"field vector has length {len(params.h)}, lattice has {L} sites")
    if not all(np.isfinite([params.Jx, params.Jy, params.Jz])) or not np.all(
        np.isfinite(params.h)
    ):
        raise ModelError("couplings must be finite")

    dim = 1 << L
    bits = _bit_table(L)
    z = 1.0 - 2.0 * bits  # +1 for spin-up (bit 0)

    diag = z @ np.asarray(params.h, dtype=np.float64)
    for (i, j) in lattice.bonds:
        diag += params.Jz * z[:, i] * z[:, j]

    masks = []
    offdiag = []
    if params.Jx != 0.0 or params.Jy != 0.0:
        for (i, j) in lattice.bonds:
            same = bits[:, i] == bits[:, j]
            masks.append((1 << i) | (1 << j))
            offdiag.append(np.where(same, params.Jx - params.Jy, params.Jx + params.Jy))
    return HamTerms(
        dim=dim,
        diag=diag,
        masks=np.asarray(masks, dtype=np.int64),
        offdiag=np.asarray(offdiag, dtype=np.float64).reshape(len(masks), dim),
    )


def build_hamiltonian(lattice: Lattice, params: XXZParams) -> sp.csr_matrix:
    """XXZ Hamiltonian as a sparse CSR matrix; Hermitian by construction."""
    terms = ham_terms(lattice, params)
    dim = terms.dim
    b = np.arange(dim, dtype=np.int64)
    rows = [b]
    cols = [b]
    vals = [terms.diag]
    for k in range(terms.masks.size):
        rows.append(b ^ terms.masks[k])
        cols.append(b)
        vals.append(terms.offdiag[k])

    h = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dim, dim),
    ).tocsr()
    h.sum_duplicates()
    h.sort_indices()
    h.eliminate_zeros()
    return h


def sz_sectors(L: int) -> dict[int, np.ndarray]:
    """Partition of basis indices by total Sz = (#up - #down).

    Sector m holds the basis states with (L + m) / 2 up spins; keys run over
    {-L, -L+2, ..., +L}.
    """
    if L < 1:
        raise ModelError("L must be >= 1")
    n_down = _bit_table(L).sum(axis=1)
    n_up = L - n_down
    m = 2 * n_up - L
    return {int(mv): np.flatnonzero(m == mv) for mv in range(-L, L + 1, 2)}


@dataclass(frozen=True)
class Spectrum:
    """Complete eigensystem of an XXZ Hamiltonian in the full 2^L space."""

    energies: np.ndarray  # (D,) ascending float64
    vectors: np.ndarray  # (dim, D) complex128, orthonormal columns
    sector_labels: np.ndarray  # (D,) int16, total Sz per eigenvector
    ground_index: int = 0

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    @property
    def size(self) -> int:
        return self.energies.size


def full_spectrum(
    H: sp.csr_matrix,
    lattice: Lattice,
    params: XXZParams,
    use_sectors: bool = True,
    dim_cap: int = DEFAULT_DIM_CAP,
) -> Spectrum:
    """Dense diagonalization of H, sector-blocked when Sz is conserved.

    Sectored mode diagonalizes each total-Sz block separately and merges the
    results sorted by energy (stable, sectors visited in ascending m), so it
    also yields exact sector labels.  Unsectored mode labels eigenvectors by
    their maximum-weight sector, ties broken toward smaller |m|.
    """
    L = lattice.nsites
    dim = 1 << L
    if H.shape != (dim, dim):
        raise ModelError(f"Hamiltonian dimension {H.shape[0]} does not match 2^{L}")
    if dim > dim_cap:
        sizes = {m: len(ix) for m, ix in sz_sectors(L).items()}
        raise ModelError(
            f"dimension 2^{L} = {dim} exceeds the cap {dim_cap}; "
            f"sector dimensions are {sizes}"
        )

    if use_sectors:
        if params.Jx != params.Jy:
            raise ModelError("sectored diagonalization requires Jx == Jy (Sz conservation)")
        sectors = sz_sectors(L)
        energies = np.empty(dim, dtype=np.float64)
        labels = np.empty(dim, dtype=np.int16)
        vectors = np.zeros((dim, dim), dtype=np.complex128)
        pos = 0
        for m in sorted(sectors):
            idx = sectors[m]
            block = H[np.ix_(idx, idx)].toarray()
            w, v = sym_eig(block)
            k = idx.size
            energies[pos : pos + k] = w
            labels[pos : pos + k] = m
            vectors[np.ix_(idx, np.arange(pos, pos + k))] = v
            pos += k
        order = np.argsort(energies, kind="stable")
        return Spectrum(
            energies=np.ascontiguousarray(energies[order]),
            vectors=np.ascontiguousarray(vectors[:, order]),
            sector_labels=np.ascontiguousarray(labels[order]),
        )

    w, v = sym_eig(H.toarray())
    sectors = sz_sectors(L)
    # sectors ordered by (|m|, m) so argmax tie-breaks toward smaller |m|
    ms = sorted(sectors, key=lambda m: (abs(m), m))
    indicator = np.zeros((len(ms), dim))
    for row, m in enumerate(ms):
        indicator[row, sectors[m]] = 1.0
    weight = indicator @ (v * v)
    labels = np.asarray([ms[r] for r in np.argmax(weight, axis=0)], dtype=np.int16)
    return Spectrum(
        energies=w,
        vectors=v.astype(np.complex128),
        sector_labels=labels,
    )


@dataclass(frozen=True)
class GroundState:
    energy: float
    vector: np.ndarray
    gap: float
    quasi_degenerate: bool


def ground_state(spectrum: Spectrum, degeneracy_tol: float = 1e-10) -> GroundState:
    """Lowest eigenpair, flagged when the gap falls below degeneracy_tol."""
    if spectrum.size == 0:
        raise ModelError("empty spectrum")
    e0 = float(spectrum.energies[0])
    gap = float(spectrum.energies[1] - e0) if spectrum.size > 1 else np.inf
    return GroundState(
        energy=e0,
        vector=np.ascontiguousarray(spectrum.vectors[:, 0]),
        gap=gap,
        quasi_degenerate=gap < degeneracy_tol,
    )


# ---------------------------------------------------------------------------
# Spectrum cache
# ---------------------------------------------------------------------------


def _h_hash(h: tuple[float, ...]) -> str:
    return hashlib.sha256(np.asarray(h, dtype="<f8").tobytes()).hexdigest()


def spectrum_cache_key(lattice: Lattice, params: XXZParams, use_sectors: bool) -> str:
    """Content hash identifying a cached spectrum."""
    payload = {
        "format": FORMAT_VERSION,
        "bit_convention": BIT_CONVENTION,
        "kind": lattice.kind,
        "Lx": lattice.Lx,
        "Ly": lattice.Ly,
        "pbc": lattice.pbc,
        "Jx": params.Jx,
        "Jy": params.Jy,
        "Jz": params.Jz,
        "h": list(params.h),
        "sectored": use_sectors,
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def save_spectrum(path: str | Path, spectrum: Spectrum, lattice: Lattice,
                  params: XXZParams) -> None:
    """Write a spectrum cache file.

    Layout: one JSON header line, then energies as little-endian f8, sector
    labels as little-endian i16, eigenvectors column-major as interleaved
    (re, im) f8 pairs.
    """
    L = lattice.nsites
    header = {
        "format": FORMAT_VERSION,
        "L": L,
        "D": int(spectrum.size),
        "Jx": params.Jx,
        "Jy": params.Jy,
        "Jz": params.Jz,
        "h_hash": _h_hash(params.h),
        "bit_convention": BIT_CONVENTION,
    }
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        f.write(np.ascontiguousarray(spectrum.energies, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(spectrum.sector_labels, dtype="<i2").tobytes())
        f.write(np.ascontiguousarray(spectrum.vectors.T, dtype="<c16").tobytes())
    os.replace(tmp, path)


def load_spectrum(path: str | Path) -> Spectrum:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode())
        if header.get("format") != FORMAT_VERSION:
            raise ModelError(f"unsupported cache format {header.get('format')!r}")
        if header.get("bit_convention") != BIT_CONVENTION:
            raise ModelError("cache file uses a different bit convention")
        L, D = header["L"], header["D"]
        dim = 1 << L
        energies = np.frombuffer(f.read(8 * D), dtype="<f8").astype(np.float64)
        labels = np.frombuffer(f.read(2 * D), dtype="<i2").astype(np.int16)
        vecs = np.frombuffer(f.read(16 * D * dim), dtype="<c16")
        vectors = vecs.reshape(D, dim).T.astype(np.complex128)
    return Spectrum(energies=energies, vectors=np.ascontiguousarray(vectors),
                    sector_labels=labels)


def cache_dir() -> Path:
    env = os.environ.get(CACHE_ENV_VAR)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "efftemp"


def get_or_compute_spectrum(
    lattice: Lattice,
    params: XXZParams,
    use_sectors: bool = True,
    dim_cap: int = DEFAULT_DIM_CAP,
    directory: str | Path | None = None,
) -> tuple[Spectrum, Path, bool]:
    """Load the spectrum from cache or diagonalize and store it.

    Returns (spectrum, cache path, cache_hit).
    """
    directory = Path(directory) if directory is not None else cache_dir()
    directory.mkdir(parents=True, exist_ok=True)
    key = spectrum_cache_key(lattice, params, use_sectors)
    path = directory / f"spectrum-{key}.bin"
    if path.exists():
        return load_spectrum(path), path, True
    H = build_hamiltonian(lattice, params)
    spec = full_spectrum(H, lattice, params, use_sectors=use_sectors, dim_cap=dim_cap)
    save_spectrum(path, spec, lattice, params)
    return spec, path, False
