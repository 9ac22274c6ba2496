"""Spectral decomposition of states and effective-temperature analytics.

A state is expanded in the exact eigenbasis; the weights |c_i|^2 of the
excited eigenstates, when plotted as ln(weight) against energy, follow a
line Lambda e^{-beta_tilde eps} for thermal-like states.  The negated slope
beta_tilde acts as an effective inverse temperature, and the grid point
where the fitted beta_tilde starts deviating persistently from the target
defines beta_star.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .model import Spectrum
from .numerics import ols_line, singular_values

__all__ = [
    "SpectralError",
    "Decomposition",
    "FitResult",
    "SweepResult",
    "decompose",
    "aggregate_degenerate",
    "fit_efftemp",
    "fit_with_selection",
    "mse_vs_target",
    "clamped_log_weights",
    "detect_beta_star",
    "entanglement_entropy",
    "write_scatter",
    "WEIGHT_CLAMP",
]

WEIGHT_CLAMP = 1e-300

# Below this log-weight variance the data is a numerically flat line; the
# zero-slope fit is exact, so the fit reports r^2 = 1 directly instead of
# forming the 0/0 Pearson ratio.
FLAT_LOGVAR = 1e-24


class SpectralError(ValueError):
    """Invalid decomposition or fit request."""


@dataclass(frozen=True)
class Decomposition:
    """Eigenbasis weights of a state, sorted by energy.

    sectors may contain None after aggregation when a merged multiplet
    straddles sector labels.  source_groups, present on aggregated results,
    maps each entry back to the raw entry indices it absorbed.
    """

    epsilons: np.ndarray  # (n,) ascending
    weights: np.ndarray  # (n,) >= 0
    sectors: tuple
    source_norm: float
    sector_filter: int | None = None
    renormalized_within_sector: bool = False
    source_groups: tuple | None = None

    @property
    def size(self) -> int:
        return self.epsilons.size


@dataclass(frozen=True)
class FitResult:
    beta_tilde: float
    lam: float  # scale factor Lambda = e^intercept, > 0
    delta_beta_tilde: float
    r_squared: float
    points_used: int
    mse: float | None = None


@dataclass(frozen=True)
class SweepResult:
    betas: tuple
    fits: tuple  # FitResult per grid point
    final_infidelities: tuple
    beta_star: float | None


def decompose(psi: np.ndarray, spectrum: Spectrum,
              sector_filter: int | None = None,
              renormalize_within_sector: bool = False) -> Decomposition:
    """Eigenbasis weights |<eps_i|psi>|^2 of the normalized state.

    With a sector filter only entries whose eigenvector carries that total-Sz
    label are kept; the kept weights are renormalized to sum to 1 only when
    renormalize_within_sector is set.
    """
    psi = np.asarray(psi)
    if psi.shape != (spectrum.dim,):
        raise SpectralError(
            f"state has shape {psi.shape}, spectrum dimension is {spectrum.dim}"
        )
    norm = float(np.linalg.norm(psi))
    if not np.isfinite(norm) or norm <= 0.0:
        raise SpectralError("state has zero or non-finite norm")
    c = spectrum.vectors.conj().T @ (psi / norm)
    weights = np.abs(c) ** 2
    eps = spectrum.energies.copy()
    sectors = tuple(int(s) for s in spectrum.sector_labels)
    if sector_filter is not None:
        keep = spectrum.sector_labels == sector_filter
        if not np.any(keep):
            raise SpectralError(f"no eigenstates carry sector label {sector_filter}")
        eps, weights = eps[keep], weights[keep]
        sectors = tuple(int(s) for s in spectrum.sector_labels[keep])
        if renormalize_within_sector:
            total = float(weights.sum())
            if total <= 0.0:
                raise SpectralError("state has no weight in the requested sector")
            weights = weights / total
    return Decomposition(
        epsilons=eps,
        weights=weights,
        sectors=sectors,
        source_norm=norm,
        sector_filter=sector_filter,
        renormalized_within_sector=bool(renormalize_within_sector and sector_filter is not None),
    )


def aggregate_degenerate(decomp: Decomposition, rel_tol: float = 1e-10) -> Decomposition:
    """Merge runs of quasi-degenerate entries.

    Consecutive entries whose energy gap is within rel_tol times the
    spectral width merge into one: weights summed, energy weight-averaged,
    sector kept only if unanimous.  Per-eigenvector weights inside an exact
    multiplet depend on the eigensolver's arbitrary basis choice; the merged
    weight does not.
    """
    n = decomp.size
    if n == 0:
        return replace(decomp, source_groups=())
    eps, w = decomp.epsilons, decomp.weights
    width = float(eps[-1] - eps[0])
    tol = rel_tol * width
    groups: list[list[int]] = [[0]]
    for i in range(1, n):
        if eps[i] - eps[groups[-1][-1]] <= tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    out_eps = np.empty(len(groups))
    out_w = np.empty(len(groups))
    out_sec = []
    for k, g in enumerate(groups):
        gw = w[g]
        total = float(gw.sum())
        out_w[k] = total
        out_eps[k] = float(gw @ eps[g] / total) if total > 0 else float(eps[g].mean())
        labels = {decomp.sectors[i] for i in g}
        out_sec.append(labels.pop() if len(labels) == 1 else None)
    return Decomposition(
        epsilons=out_eps,
        weights=out_w,
        sectors=tuple(out_sec),
        source_norm=decomp.source_norm,
        sector_filter=decomp.sector_filter,
        renormalized_within_sector=decomp.renormalized_within_sector,
        source_groups=tuple(tuple(g) for g in groups),
    )


def fit_with_selection(decomp: Decomposition, exclude_ground: bool = True,
                       weight_floor: float = 0.0, aggregate: bool = True,
                       aggregate_rel_tol: float = 1e-10
                       ) -> tuple[FitResult, np.ndarray]:
    """Effective-temperature fit plus the per-raw-entry usage mask.

    The mask aligns with the entries of the decomposition as passed in, with
    aggregation groups expanded back to their members; it backs the
    used_in_fit column of scatter exports.
    """
    if aggregate:
        agg = aggregate_degenerate(decomp, aggregate_rel_tol)
        groups = agg.source_groups
    else:
        agg = decomp
        groups = tuple((i,) for i in range(decomp.size))

    keep = agg.weights > weight_floor
    if exclude_ground and agg.size > 0:
        keep[int(np.argmin(agg.epsilons))] = False
    x = agg.epsilons[keep]
    y_w = agg.weights[keep]
    # Regress the multiplet-mean weight: the per-eigenstate weight is what
    # decays as Lambda e^{-beta_tilde eps}, and dividing the aggregated sum
    # by the multiplicity is its basis-invariant estimate.  Without this a
    # g-fold multiplet would sit ln(g) above the line.
    mult = np.asarray([len(g) for g in groups], dtype=np.float64)[keep]
    if x.size < 3:
        raise SpectralError(
            f"need at least 3 usable points to fit, got {x.size} "
            f"(exclude_ground={exclude_ground}, weight_floor={weight_floor})"
        )
    y = np.log(y_w) - np.log(mult)

    n = x.size
    y_mean = float(y.mean())
    if float(((y - y_mean) ** 2).mean()) < FLAT_LOGVAR:
        fit = FitResult(beta_tilde=0.0, lam=float(np.exp(y_mean)),
                        delta_beta_tilde=0.0, r_squared=1.0, points_used=n)
    else:
        line = ols_line(x, y)
        fit = FitResult(
            beta_tilde=-line.slope,
            lam=float(np.exp(line.intercept)),
            delta_beta_tilde=line.slope_stderr,
            r_squared=line.r_squared,
            points_used=n,
        )

    used_raw = np.zeros(decomp.size, dtype=bool)
    for g, used in zip(groups, keep):
        if used:
            used_raw[list(g)] = True
    return fit, used_raw


def fit_efftemp(decomp: Decomposition, exclude_ground: bool = True,
                weight_floor: float = 0.0, aggregate: bool = True,
                aggregate_rel_tol: float = 1e-10) -> FitResult:
    """OLS of ln(weight) against energy over the excited eigenstates.

    beta_tilde is the negated slope, lam the exponential of the intercept,
    delta_beta_tilde the slope standard error, r_squared the squared Pearson
    coefficient.  The ground-state point is excluded by default and weights
    at or below weight_floor (default 0, i.e. exact zeros) are dropped
    before taking logs.
    """
    fit, _ = fit_with_selection(decomp, exclude_ground=exclude_ground,
                                weight_floor=weight_floor, aggregate=aggregate,
                                aggregate_rel_tol=aggregate_rel_tol)
    return fit


def clamped_log_weights(weights: np.ndarray, floor: float = WEIGHT_CLAMP
                        ) -> tuple[np.ndarray, int]:
    """Logs of weights with sub-floor values clamped; returns the clamp count."""
    w = np.asarray(weights, dtype=np.float64)
    clamped = int(np.count_nonzero(w < floor))
    return np.log(np.maximum(w, floor)), clamped


def mse_vs_target(decomp: Decomposition, target: Decomposition,
                  floor: float = WEIGHT_CLAMP) -> float:
    """Mean squared difference of log weights over matching entries.

    Both decompositions must cover the same raw entry set (same spectrum and
    filtering, no aggregation).  Weights below the floor are clamped before
    the log so the metric stays finite.
    """
    if decomp.size != target.size:
        raise SpectralError(
            f"entry sets differ: {decomp.size} vs {target.size}"
        )
    if not np.allclose(decomp.epsilons, target.epsilons, rtol=0, atol=1e-9):
        raise SpectralError("decompositions come from different spectra")
    y, _ = clamped_log_weights(decomp.weights, floor)
    yt, _ = clamped_log_weights(target.weights, floor)
    return float(np.mean((y - yt) ** 2))


def detect_beta_star(betas, beta_tildes, rel_dev: float = 0.05) -> float | None:
    """Smallest grid beta with a persistent relative deviation of beta_tilde.

    A grid point qualifies only if |beta_tilde - beta| / beta exceeds
    rel_dev there and at every larger grid point; an isolated excursion
    does not count.  Returns None when no point qualifies.
    """
    betas = np.asarray(betas, dtype=np.float64)
    bt = np.asarray(beta_tildes, dtype=np.float64)
    if betas.size != bt.size:
        raise SpectralError("grid and fit arrays differ in length")
    if betas.size == 0:
        return None
    if np.any(np.diff(betas) <= 0):
        raise SpectralError("beta grid must be strictly increasing")
    if np.any(betas <= 0):
        raise SpectralError("beta grid must be positive for relative deviation")
    deviating = np.abs(bt - betas) / betas > rel_dev
    # suffix scan: qualifies[k] means deviating from k to the end
    k = betas.size
    for i in range(betas.size - 1, -1, -1):
        if not deviating[i]:
            break
        k = i
    return float(betas[k]) if k < betas.size else None


def entanglement_entropy(psi: np.ndarray, left_site_count: int) -> float:
    """Von Neumann entropy of the left block of sites 0..left_site_count-1.

    The state is reshaped to a (right block, left block) matrix under the
    LSB-site-0 bit convention; the Schmidt values are its singular values
    and S = -sum p ln p with p their squared normalized form.
    """
    psi = np.asarray(psi)
    dim = psi.size
    L = int(dim).bit_length() - 1
    if dim != (1 << L):
        raise SpectralError("state length is not a power of 2")
    if not (1 <= left_site_count < L):
        raise SpectralError(f"cut must satisfy 1 <= k < {L}")
    norm = float(np.linalg.norm(psi))
    if not np.isfinite(norm) or norm <= 0.0:
        raise SpectralError("state has zero or non-finite norm")
    m = (psi / norm).reshape(1 << (L - left_site_count), 1 << left_site_count)
    s = singular_values(m)
    p = s * s
    p = p / p.sum()
    p = p[p > 0.0]
    return float(-(p * np.log(p)).sum())


def write_scatter(path, decomp: Decomposition, used_in_fit: np.ndarray) -> None:
    """Per-eigenstate scatter CSV: epsilon, weight, sector, used_in_fit."""
    import csv

    if len(used_in_fit) != decomp.size:
        raise SpectralError("mask length does not match decomposition")
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["epsilon", "weight", "sector", "used_in_fit"])
        for i in range(decomp.size):
            sec = decomp.sectors[i]
            w.writerow([
                repr(float(decomp.epsilons[i])),
                repr(float(decomp.weights[i])),
                "" if sec is None else str(int(sec)),
                "1" if used_in_fit[i] else "0",
            ])
