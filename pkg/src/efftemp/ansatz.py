"""Variational state families and their parameter handling.

Every family maps a flat real parameter vector theta to a state vector psi
over the full 2^L basis (bit j of the basis index = site j, LSB = site 0).
States are unnormalized except the circuit family, which is unitary on a
normalized reference state.  Forward maps are written with jax.numpy so they
can be differentiated; parameter layouts are pinned here and versioned in
checkpoint headers.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import FORMAT_VERSION
from ._jax import jnp
from .model import Lattice, ModelError, build_lattice
from .prng import TAG_INIT, normal

__all__ = [
    "AnsatzError",
    "AnsatzSpec",
    "ansatz_spec",
    "layout",
    "param_count",
    "init_params",
    "forward_fn",
    "vqe_bonds",
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
]

LAYOUT_VERSION = 1

KINDS = ("mps", "peps", "nqs", "vqe", "vec")


class AnsatzError(ValueError):
    """Invalid ansatz specification or parameter vector."""


@dataclass(frozen=True)
class AnsatzSpec:
    kind: str
    lattice: Lattice
    chi: int = 0  # tensor-network bond dimension
    width: int = 0  # network hidden width
    depth: int = 0  # network blocks / circuit layers

    @property
    def nsites(self) -> int:
        return self.lattice.nsites


def ansatz_spec(kind: str, lattice: Lattice, chi: int = 0, width: int = 0,
                depth: int = 0) -> AnsatzSpec:
    """Validated ansatz specification.

    chi applies to mps/peps, width and depth to nqs, depth to vqe; vec takes
    no hyperparameters.
    """
    if kind not in KINDS:
        raise AnsatzError(f"unknown ansatz kind {kind!r}; expected one of {KINDS}")
    if kind in ("mps", "peps"):
        if chi < 1:
            raise AnsatzError(f"{kind} requires bond dimension chi >= 1")
    if kind == "peps":
        if lattice.kind != "square":
            raise AnsatzError("peps requires a square lattice")
        if not lattice.pbc:
            raise AnsatzError("peps contraction assumes periodic boundaries")
    if kind == "nqs":
        if width < 1 or depth < 0:
            raise AnsatzError("nqs requires width >= 1 and depth >= 0")
    if kind == "vqe":
        if depth < 1:
            raise AnsatzError("vqe requires depth >= 1")
        if lattice.nsites % 2 != 0:
            raise AnsatzError("vqe pair initialization requires an even number of sites")
    return AnsatzSpec(kind=kind, lattice=lattice, chi=chi, width=width, depth=depth)


def vqe_bonds(lattice: Lattice) -> tuple[tuple[int, int], ...]:
    """Entangler bond order for the circuit family.

    Chains follow the lattice bonds (wrap bond last when periodic).  Square
    lattices entangle along rows then columns without wrap bonds, which keeps
    the circuit depth per layer bounded on small tori.
    """
    if lattice.kind == "chain":
        return lattice.bonds
    pairs = []
    for r in range(lattice.Ly):
        for c in range(lattice.Lx - 1):
            pairs.append((r * lattice.Lx + c, r * lattice.Lx + c + 1))
    for r in range(lattice.Ly - 1):
        for c in range(lattice.Lx):
            pairs.append((r * lattice.Lx + c, (r + 1) * lattice.Lx + c))
    return tuple(pairs)


def layout(spec: AnsatzSpec) -> tuple[tuple[str, tuple[int, ...]], ...]:
    """Ordered (name, shape) blocks of the flat parameter vector."""
    L = spec.nsites
    if spec.kind == "mps":
        return (("site_tensors", (L, spec.chi, spec.chi, 2)),)
    if spec.kind == "peps":
        return (("site_tensors", (L, spec.chi, spec.chi, spec.chi, spec.chi, 2)),)
    if spec.kind == "nqs":
        blocks = []
        for head in ("amp", "phase"):
            for d in range(spec.depth):
                blocks.append((f"{head}_block{d}_w1", (spec.width, L)))
                blocks.append((f"{head}_block{d}_b1", (spec.width,)))
                blocks.append((f"{head}_block{d}_w2", (L, spec.width)))
                blocks.append((f"{head}_block{d}_b2", (L,)))
            blocks.append((f"{head}_out", (2,)))
        return tuple(blocks)
    if spec.kind == "vqe":
        nb = len(vqe_bonds(spec.lattice))
        blocks = []
        for d in range(spec.depth):
            blocks.append((f"layer{d}_rz", (L,)))
            blocks.append((f"layer{d}_ry", (L,)))
            blocks.append((f"layer{d}_swap", (nb,)))
        return tuple(blocks)
    if spec.kind == "vec":
        return (("amplitudes", (1 << L, 2)),)
    raise AnsatzError(f"unknown ansatz kind {spec.kind!r}")


def param_count(spec: AnsatzSpec) -> int:
    return int(sum(np.prod(shape) for _, shape in layout(spec)))


def init_params(spec: AnsatzSpec, seed: int) -> np.ndarray:
    """Initial parameters, i.i.d. normal with standard deviation 0.1.

    Drawn from the dedicated counter-based stream keyed by (TAG_INIT, seed),
    so the vector depends only on the layout and the seed.
    """
    return normal(TAG_INIT, seed, param_count(spec), sigma=0.1)


def _check_theta(spec: AnsatzSpec, n: int) -> None:
    want = param_count(spec)
    if n != want:
        raise AnsatzError(
            f"{spec.kind} expects {want} parameters, got {n}"
        )


# ---------------------------------------------------------------------------
# Forward maps
# ---------------------------------------------------------------------------


def _bit_table(L: int) -> np.ndarray:
    b = np.arange(1 << L, dtype=np.int64)
    return (b[:, None] >> np.arange(L, dtype=np.int64)[None, :]) & 1


def _mps_forward(spec: AnsatzSpec):
    L, chi = spec.nsites, spec.chi

    def forward(theta):
        a = jnp.reshape(theta, (L, chi, chi, 2))
        # (2, chi, chi) per site; fold sites in order so that after step k
        # the batch index carries bits 0..k with site 0 fastest.
        t = jnp.transpose(a[0], (2, 0, 1))
        for k in range(1, L):
            ak = jnp.transpose(a[k], (2, 0, 1))
            t = jnp.einsum("mij,sjk->smik", t, ak)
            t = jnp.reshape(t, (1 << (k + 1), chi, chi))
        psi = jnp.einsum("bii->b", t)
        return psi.astype(jnp.complex128)

    return forward


def _peps_forward(spec: AnsatzSpec):
    lat = spec.lattice
    Lx, Ly, L, chi = lat.Lx, lat.Ly, lat.nsites, spec.chi

    # Index ids for the einsum: phys leg of site s is id s, the vertical bond
    # leaving (r, c) downward is id L + site, the horizontal bond leaving
    # (r, c) rightward is id 2L + site.
    def vb(r, c):
        return L + (r % Ly) * Lx + (c % Lx)

    def hb(r, c):
        return 2 * L + (r % Ly) * Lx + (c % Lx)

    site_legs = []
    for r in range(Ly):
        for c in range(Lx):
            s = r * Lx + c
            site_legs.append([vb(r - 1, c), vb(r, c), hb(r, c - 1), hb(r, c), s])
    out_legs = list(range(L - 1, -1, -1))  # site 0 last -> fastest bit

    def forward(theta):
        a = jnp.reshape(theta, (L, chi, chi, chi, chi, 2))
        operands = []
        for s in range(L):
            operands.extend((a[s], site_legs[s]))
        operands.append(out_legs)
        psi = jnp.reshape(jnp.einsum(*operands), (-1,))
        return psi.astype(jnp.complex128)

    return forward


def _nqs_forward(spec: AnsatzSpec):
    L, W, D = spec.nsites, spec.width, spec.depth
    x0 = jnp.asarray(1.0 - 2.0 * _bit_table(L), dtype=jnp.float64)  # (2^L, L)
    head_size = D * (2 * L * W + W + L) + 2

    def head(theta, off):
        x = x0
        for _ in range(D):
            w1 = jnp.reshape(theta[off : off + W * L], (W, L))
            off += W * L
            b1 = theta[off : off + W]
            off += W
            w2 = jnp.reshape(theta[off : off + L * W], (L, W))
            off += L * W
            b2 = theta[off : off + L]
            off += L
            x = x + jnp.tanh(x @ w1.T + b1) @ w2.T + b2
        pooled = jnp.mean(x, axis=1)
        return theta[off] * pooled + theta[off + 1]

    def forward(theta):
        log_amp = head(theta, 0)
        phase = head(theta, head_size)
        return jnp.exp(log_amp + 1j * phase)

    return forward


def _vqe_init_state(L: int) -> np.ndarray:
    """Product of singlet pairs on sites (0,1), (2,3), ...

    Each pair contributes (|up, down> - |down, up>) / sqrt(2); with bit 0 for
    up, the pair amplitudes sit at local indices 2 (+) and 1 (-).
    """
    pair = np.zeros(4)
    pair[2] = 1.0 / np.sqrt(2.0)  # site a up, site b down
    pair[1] = -1.0 / np.sqrt(2.0)
    psi = np.array([1.0])
    for _ in range(L // 2):
        # earlier sites occupy lower bits, so new pairs enter as the slow axis
        psi = np.kron(pair, psi)
    return psi.astype(np.complex128)


def _swap_perm(L: int, i: int, j: int) -> np.ndarray:
    b = np.arange(1 << L, dtype=np.int64)
    d = ((b >> i) ^ (b >> j)) & 1
    return b ^ ((d << i) | (d << j))


def _vqe_forward(spec: AnsatzSpec):
    L = spec.nsites
    bonds = vqe_bonds(spec.lattice)
    psi0 = jnp.asarray(_vqe_init_state(L))
    ztab = jnp.asarray(1.0 - 2.0 * _bit_table(L), dtype=jnp.float64)
    perms = [jnp.asarray(_swap_perm(L, i, j)) for (i, j) in bonds]
    per_layer = 2 * L + len(bonds)

    def apply_ry(psi, j, angle):
        c, s = jnp.cos(angle), jnp.sin(angle)
        m = jnp.reshape(psi, (1 << (L - 1 - j), 2, 1 << j))
        up, down = m[:, 0, :], m[:, 1, :]
        m = jnp.stack([c * up - s * down, s * up + c * down], axis=1)
        return jnp.reshape(m, (-1,))

    def forward(theta):
        psi = psi0
        for d in range(spec.depth):
            off = d * per_layer
            rz = theta[off : off + L]
            ry = theta[off + L : off + 2 * L]
            sw = theta[off + 2 * L : off + per_layer]
            psi = psi * jnp.exp(-1j * (ztab @ rz))
            for j in range(L):
                psi = apply_ry(psi, j, ry[j])
            for k, perm in enumerate(perms):
                psi = jnp.cos(sw[k]) * psi - 1j * jnp.sin(sw[k]) * psi[perm]
        return psi

    return forward


def _vec_forward(spec: AnsatzSpec):
    dim = 1 << spec.nsites

    def forward(theta):
        t = jnp.reshape(theta, (dim, 2))
        return t[:, 0] + 1j * t[:, 1]

    return forward


_FORWARD_BUILDERS = {
    "mps": _mps_forward,
    "peps": _peps_forward,
    "nqs": _nqs_forward,
    "vqe": _vqe_forward,
    "vec": _vec_forward,
}


def forward_fn(spec: AnsatzSpec):
    """theta -> psi over the full basis, differentiable through jax.

    The returned callable accepts a flat real parameter vector of length
    param_count(spec) and returns a complex state vector of length 2^L.
    """
    build = _FORWARD_BUILDERS[spec.kind]
    inner = build(spec)
    n = param_count(spec)

    def forward(theta):
        if hasattr(theta, "shape") and theta.shape != (n,):
            _check_theta(spec, int(np.prod(theta.shape)))
        return inner(jnp.asarray(theta, dtype=jnp.float64))

    return forward


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Checkpoint:
    spec: AnsatzSpec
    seed: int
    step: int
    params: np.ndarray


def _spec_to_dict(spec: AnsatzSpec) -> dict:
    return {
        "kind": spec.kind,
        "lattice": {
            "kind": spec.lattice.kind,
            "Lx": spec.lattice.Lx,
            "Ly": spec.lattice.Ly,
            "pbc": spec.lattice.pbc,
        },
        "chi": spec.chi,
        "width": spec.width,
        "depth": spec.depth,
    }


def _spec_from_dict(d: dict) -> AnsatzSpec:
    lat = d["lattice"]
    lattice = build_lattice(lat["kind"], lat["Lx"], lat["Ly"], lat["pbc"])
    return ansatz_spec(d["kind"], lattice, chi=d.get("chi", 0),
                       width=d.get("width", 0), depth=d.get("depth", 0))


def save_checkpoint(path: str | Path, spec: AnsatzSpec, seed: int, step: int,
                    params: np.ndarray) -> None:
    """One JSON header line, then the raw little-endian float64 parameters."""
    params = np.asarray(params, dtype=np.float64)
    _check_theta(spec, params.size)
    header = {
        "format": FORMAT_VERSION,
        "layout": LAYOUT_VERSION,
        "spec": _spec_to_dict(spec),
        "seed": int(seed),
        "step": int(step),
    }
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        f.write(np.ascontiguousarray(params, dtype="<f8").tobytes())
    os.replace(tmp, path)


def load_checkpoint(path: str | Path) -> Checkpoint:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode())
        if header.get("format") != FORMAT_VERSION or header.get("layout") != LAYOUT_VERSION:
            raise AnsatzError("unsupported checkpoint format/layout version")
        spec = _spec_from_dict(header["spec"])
        params = np.frombuffer(f.read(), dtype="<f8").astype(np.float64)
    _check_theta(spec, params.size)
    return Checkpoint(spec=spec, seed=int(header["seed"]), step=int(header["step"]),
                      params=params)
