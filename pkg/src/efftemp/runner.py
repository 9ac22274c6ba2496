"""Run orchestration: training runs, ITES sweeps, ED caching, and reports.

Every run writes a self-contained directory: the merged config snapshot, a
trajectory CSV, checkpoints and per-eigenstate scatter exports on the
configured cadence, a final summary, and a manifest with content hashes of
every artifact.  All persisted bytes are deterministic functions of
(config, seed, build); wall-clock timings are printed, never persisted.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .ansatz import forward_fn, init_params, save_checkpoint
from .autodiff import build_loss, check_gradient, value_and_grad_fn
from .config import Config, config_snapshot
from .model import (
    get_or_compute_spectrum,
    ham_terms,
    spectrum_cache_key,
    sz_sectors,
)
from .objectives import ground_target
from .objectives import infidelity as infidelity_value
from .objectives import resolve_target
from .optimize import OptimizeError, TrainRecord, train, write_trajectory
from .spectral import (
    SpectralError,
    clamped_log_weights,
    decompose,
    detect_beta_star,
    entanglement_entropy,
    fit_with_selection,
    mse_vs_target,
    write_scatter,
)

__all__ = [
    "IntegrityError",
    "run_train",
    "run_sweep",
    "run_ed",
    "run_report",
    "run_gradcheck",
    "INFIDELITY_THRESHOLDS",
]

INFIDELITY_THRESHOLDS = (1e-3, 1e-7)


class IntegrityError(RuntimeError):
    """A manifest's recorded hashes do not match the files on disk."""


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, sort_keys=True, indent=1)
        f.write("\n")


def _write_manifest(out: Path, cfg: Config, seed: int, cache_key: str | None) -> None:
    inventory = {}
    for p in sorted(out.iterdir()):
        if p.name == "manifest.json" or not p.is_file():
            continue
        inventory[p.name] = {"sha256": _sha256_file(p), "bytes": p.stat().st_size}
    _write_json(out / "manifest.json", {
        "code_version": __version__,
        "config": cfg.data,
        "seed": seed,
        "spectrum_cache_key": cache_key,
        "inventory": inventory,
    })


def _fit_to_dict(fit) -> dict | None:
    if fit is None:
        return None
    d = asdict(fit)
    d["lambda"] = d.pop("lam")
    return d


def _steps_to_threshold(records: list[TrainRecord], threshold: float) -> int | None:
    for r in records:
        if r.infidelity is not None and r.infidelity < threshold:
            return r.step
    return None


def run_train(cfg: Config, out: str | Path, seed: int | None = None,
              echo=print) -> dict:
    """Train one configured run into a run directory; returns the summary."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    run_cfg = cfg.data["run"]
    seed = run_cfg["seed"] if seed is None else int(seed)

    lattice = cfg.lattice()
    params = cfg.xxz_params(lattice)
    spectrum, cache_path, hit = get_or_compute_spectrum(
        lattice, params, use_sectors=cfg.use_sectors(),
        dim_cap=cfg.data["model"]["dim_cap"])
    cache_key = spectrum_cache_key(lattice, params, cfg.use_sectors())

    aspec = cfg.ansatz(lattice)
    ospec = cfg.objective()
    terms = ham_terms(lattice, params)
    target = resolve_target(ospec, spectrum)
    loss = build_loss(aspec, ospec, terms=terms, target=target)
    evaluate = value_and_grad_fn(loss)
    forward = forward_fn(aspec)
    # energy runs still track distance to the state they implicitly chase
    reference = target if target is not None else ground_target(spectrum)

    analysis = cfg.data["analysis"]
    target_decomp = None
    if target is not None and target.kind == "ites":
        target_decomp = decompose(target.state, spectrum,
                                  sector_filter=analysis["sector_filter"],
                                  renormalize_within_sector=analysis[
                                      "renormalize_within_sector"])

    (out / "config.snapshot").write_text(config_snapshot(cfg), encoding="utf-8")

    total_steps = run_cfg["steps"]
    ckpt_every = run_cfg["checkpoint_every"]
    scatter_every = run_cfg["scatter_every"]
    clamp_counts: dict[int, int] = {}

    def instrument(step: int, theta: np.ndarray, value: float) -> TrainRecord:
        psi = np.asarray(forward(theta))
        e = float(np.real(np.vdot(psi, terms.apply(psi))) /
                  np.real(np.vdot(psi, psi)))
        infid = infidelity_value(psi, reference)
        fit = None
        used = None
        decomp = None
        mse = None
        try:
            decomp = decompose(psi, spectrum,
                               sector_filter=analysis["sector_filter"],
                               renormalize_within_sector=analysis[
                                   "renormalize_within_sector"])
            fit, used = fit_with_selection(
                decomp,
                exclude_ground=analysis["exclude_ground"],
                weight_floor=analysis["weight_floor"],
                aggregate=analysis["aggregate"],
                aggregate_rel_tol=analysis["aggregate_rel_tol"])
        except SpectralError:
            pass
        if decomp is not None and target_decomp is not None:
            mse = mse_vs_target(decomp, target_decomp)
            _, nclamp = clamped_log_weights(decomp.weights)
            clamp_counts[step] = nclamp
        final = step == total_steps
        if decomp is not None and used is not None and (
                final or (scatter_every > 0 and step % scatter_every == 0)):
            write_scatter(out / f"scatter_step_{step}.csv", decomp, used)
        if final or (ckpt_every > 0 and step % ckpt_every == 0):
            save_checkpoint(out / f"checkpoint_step_{step}.bin", aspec, seed,
                            step, theta)
        return TrainRecord(step=step, loss=float(value), energy=e,
                           infidelity=infid, fit=fit, mse=mse)

    theta0 = init_params(aspec, seed)
    result = train(evaluate, theta0, optimizer=cfg.optimizer(),
                   total_steps=total_steps,
                   record_every=run_cfg["record_every"],
                   instrument=instrument)
    # L-BFGS may stop before total_steps; make sure final artifacts exist
    last = result.records[-1]
    if not (out / f"checkpoint_step_{last.step}.bin").exists():
        save_checkpoint(out / f"checkpoint_step_{last.step}.bin", aspec, seed,
                        last.step, result.theta)

    write_trajectory(out / "trajectory.csv", result.records)

    summary = {
        "seed": seed,
        "objective": {"kind": ospec.kind, "target": ospec.target,
                      "beta": ospec.beta},
        "ansatz": {"kind": aspec.kind, "chi": aspec.chi, "width": aspec.width,
                   "depth": aspec.depth, "params": int(theta0.size)},
        "ground_energy": float(spectrum.energies[0]),
        "spectrum": {"cache_key": cache_key, "cache_hit": hit,
                     "dim": spectrum.dim, "sectored": cfg.use_sectors()},
        "records": len(result.records),
        "aborted": result.aborted,
        "reason": result.reason,
        "final": {
            "step": last.step,
            "loss": last.loss,
            "energy": last.energy,
            "infidelity": last.infidelity,
            "fit": _fit_to_dict(last.fit),
            "mse": last.mse,
        },
        "steps_to_infidelity": {
            f"{t:g}": _steps_to_threshold(result.records, t)
            for t in INFIDELITY_THRESHOLDS
        },
        "clamped_log_weights_final": clamp_counts.get(last.step),
    }
    _write_json(out / "final.summary.json", summary)
    _write_manifest(out, cfg, seed, cache_key)
    echo(f"run {out.name}: {len(result.records)} records in "
         f"{result.seconds:.1f}s, final loss {last.loss:.3e}", file=sys.stderr)
    return summary


def _sweep_point(args) -> tuple[float, dict]:
    cfg_data, beta, out_dir, seed = args
    point = Config(data=json.loads(json.dumps(cfg_data)))
    point.data["objective"]["kind"] = "fidelity"
    point.data["objective"]["target"] = "ites"
    point.data["objective"]["beta"] = beta
    summary = run_train(point, out_dir, seed=seed)
    return beta, summary


def run_sweep(cfg: Config, out: str | Path, seed: int | None = None,
              jobs: int = 1, echo=print) -> dict:
    """One fidelity run per grid beta, then beta_star over the final fits."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    grid = cfg.beta_grid()
    seed = cfg.data["run"]["seed"] if seed is None else int(seed)

    # build the spectrum cache up front so workers only ever read it
    lattice = cfg.lattice()
    params = cfg.xxz_params(lattice)
    get_or_compute_spectrum(lattice, params, use_sectors=cfg.use_sectors(),
                            dim_cap=cfg.data["model"]["dim_cap"])

    tasks = [(cfg.data, beta, str(out / f"beta_{beta:g}"), seed)
             for beta in grid]
    results: dict[float, dict] = {}
    failures: dict[float, str] = {}
    if jobs > 1:
        import multiprocessing as mp

        ctx = mp.get_context("spawn")
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs,
                                                    mp_context=ctx) as pool:
            futs = {pool.submit(_sweep_point, t): t[1] for t in tasks}
            for fut in concurrent.futures.as_completed(futs):
                beta = futs[fut]
                try:
                    _, summary = fut.result()
                    results[beta] = summary
                except Exception as e:  # noqa: BLE001 - isolate per-point failures
                    failures[beta] = str(e)
    else:
        for t in tasks:
            try:
                _, summary = _sweep_point(t)
                results[t[1]] = summary
            except Exception as e:  # noqa: BLE001
                failures[t[1]] = str(e)

    ok = [b for b in grid if b in results]
    fits = {b: results[b]["final"]["fit"] for b in ok}
    usable = [b for b in ok if fits[b] is not None]
    beta_star = None
    if usable:
        beta_star = detect_beta_star(
            usable, [fits[b]["beta_tilde"] for b in usable],
            rel_dev=cfg.data["analysis"]["beta_star_rel_dev"])

    rows = []
    for b in grid:
        if b in results:
            s = results[b]
            fit = s["final"]["fit"] or {}
            rows.append({
                "beta": b,
                "beta_tilde": fit.get("beta_tilde"),
                "delta_beta_tilde": fit.get("delta_beta_tilde"),
                "lambda": fit.get("lambda"),
                "r_squared": fit.get("r_squared"),
                "mse": s["final"]["mse"],
                "final_infidelity": s["final"]["infidelity"],
                "final_loss": s["final"]["loss"],
                "steps": s["final"]["step"],
            })
        else:
            rows.append({"beta": b, "error": failures.get(b, "failed")})

    import csv

    columns = ["beta", "beta_tilde", "delta_beta_tilde", "lambda", "r_squared",
               "mse", "final_infidelity", "final_loss", "steps"]
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow(["" if row.get(c) is None else
                        (str(row[c]) if c == "steps" else repr(float(row[c])))
                        for c in columns])

    summary = {
        "grid": grid,
        "beta_star": beta_star,
        "rel_dev": cfg.data["analysis"]["beta_star_rel_dev"],
        "points": rows,
        "failures": {f"{b:g}": msg for b, msg in failures.items()},
    }
    _write_json(out / "sweep.summary.json", summary)
    (out / "config.snapshot").write_text(config_snapshot(cfg), encoding="utf-8")
    key = spectrum_cache_key(lattice, params, cfg.use_sectors())
    _write_manifest(out, cfg, seed, key)
    echo(f"sweep over {len(grid)} betas, beta_star={beta_star}", file=sys.stderr)
    if failures:
        raise OptimizeError(
            f"{len(failures)} sweep point(s) failed: {sorted(failures)}"
        )
    return summary


def run_ed(cfg: Config, out: str | Path, echo=print) -> dict:
    """Diagonalize (or hit the cache) and record what was built."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    lattice = cfg.lattice()
    params = cfg.xxz_params(lattice)
    spectrum, cache_path, hit = get_or_compute_spectrum(
        lattice, params, use_sectors=cfg.use_sectors(),
        dim_cap=cfg.data["model"]["dim_cap"])
    key = spectrum_cache_key(lattice, params, cfg.use_sectors())
    sectors = {str(m): int(ix.size) for m, ix in sz_sectors(lattice.nsites).items()}
    summary = {
        "cache_key": key,
        "cache_file": cache_path.name,
        "cache_hit": hit,
        "dim": spectrum.dim,
        "eigenpairs": spectrum.size,
        "sectored": cfg.use_sectors(),
        "sector_sizes": sectors,
        "ground_energy": float(spectrum.energies[0]),
        "gap": float(spectrum.energies[1] - spectrum.energies[0]),
    }
    _write_json(out / "ed.summary.json", summary)
    (out / "config.snapshot").write_text(config_snapshot(cfg), encoding="utf-8")
    _write_manifest(out, cfg, cfg.data["run"]["seed"], key)
    echo(f"spectrum {key[:12]}... dim={spectrum.dim} "
         f"({'cache hit' if hit else 'computed'})", file=sys.stderr)
    return summary


def _verify_manifest(run_dir: Path) -> dict:
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        raise IntegrityError(f"{run_dir}: no manifest.json")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    for name, meta in manifest.get("inventory", {}).items():
        p = run_dir / name
        if not p.exists():
            raise IntegrityError(f"{run_dir}: missing artifact {name}")
        actual = _sha256_file(p)
        if actual != meta["sha256"]:
            raise IntegrityError(
                f"{run_dir}: hash mismatch for {name} "
                f"(manifest {meta['sha256'][:12]}..., file {actual[:12]}...)"
            )
    return manifest


def _trajectory_series(run_dir: Path) -> dict:
    import csv

    path = run_dir / "trajectory.csv"
    series: dict[str, list] = {}
    if not path.exists():
        return series
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            for k, v in row.items():
                if k == "wall_ms":
                    continue
                series.setdefault(k, []).append(
                    None if v == "" else (int(v) if k == "step" else float(v)))
    return series


def run_report(run_dirs: list[str | Path], out: str | Path, echo=print) -> dict:
    """Consolidate verified run directories into plot-ready JSON and CSV."""
    if not run_dirs:
        raise ValueError("report requires at least one run directory")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)

    runs = []
    sweeps = []
    for d in sorted(Path(p) for p in run_dirs):
        manifest = _verify_manifest(d)
        entry: dict = {"dir": d.name, "config": manifest["config"],
                       "seed": manifest["seed"]}
        sweep_file = d / "sweep.summary.json"
        if sweep_file.exists():
            sweep = json.loads(sweep_file.read_text(encoding="utf-8"))
            cfg = Config(data=manifest["config"])
            lattice = cfg.lattice()
            params = cfg.xxz_params(lattice)
            spectrum, _, _ = get_or_compute_spectrum(
                lattice, params, use_sectors=cfg.use_sectors(),
                dim_cap=cfg.data["model"]["dim_cap"])
            cut = cfg.data["analysis"]["entropy_cut"] or lattice.nsites // 2
            from .objectives import build_ites

            entropies = [
                entanglement_entropy(build_ites(spectrum, b).state, cut)
                for b in sweep["grid"]
            ]
            entry["sweep"] = sweep
            entry["target_entropy"] = {
                "cut": cut,
                "beta": sweep["grid"],
                "entropy": entropies,
            }
            sweeps.append(entry)
        else:
            summary_file = d / "final.summary.json"
            if not summary_file.exists():
                raise IntegrityError(f"{d}: neither run nor sweep summary found")
            summary = json.loads(summary_file.read_text(encoding="utf-8"))
            entry["summary"] = summary
            entry["trajectory"] = _trajectory_series(d)
            fit = summary["final"]["fit"] or {}
            entry["lambda_vs_infidelity"] = {
                "lambda": fit.get("lambda"),
                "infidelity": summary["final"]["infidelity"],
            }
            runs.append(entry)

    report = {"runs": runs, "sweeps": sweeps, "code_version": __version__}
    _write_json(out / "report.json", report)

    import csv

    with open(out / "report.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["dir", "kind", "final_loss", "final_energy",
                    "final_infidelity", "beta_tilde", "lambda", "r_squared",
                    "mse", "steps_to_1e-3", "steps_to_1e-7", "beta_star"])
        for entry in runs:
            s = entry["summary"]
            fit = s["final"]["fit"] or {}

            def fmt(v):
                return "" if v is None else repr(float(v))

            stt = s.get("steps_to_infidelity", {})
            w.writerow([
                entry["dir"], "train", fmt(s["final"]["loss"]),
                fmt(s["final"]["energy"]), fmt(s["final"]["infidelity"]),
                fmt(fit.get("beta_tilde")), fmt(fit.get("lambda")),
                fmt(fit.get("r_squared")), fmt(s["final"]["mse"]),
                "" if stt.get("0.001") is None else str(stt["0.001"]),
                "" if stt.get("1e-07") is None else str(stt["1e-07"]),
                "",
            ])
        for entry in sweeps:
            sweep = entry["sweep"]
            w.writerow([
                entry["dir"], "sweep", "", "", "", "", "", "", "",
                "", "",
                "" if sweep["beta_star"] is None else repr(float(sweep["beta_star"])),
            ])
    echo(f"report over {len(runs)} runs and {len(sweeps)} sweeps", file=sys.stderr)
    return report


def run_gradcheck(cfg: Config, seed: int | None = None, echo=print) -> dict:
    """Finite-difference verification of the configured loss gradient."""
    seed = cfg.data["run"]["seed"] if seed is None else int(seed)
    lattice = cfg.lattice()
    params = cfg.xxz_params(lattice)
    spectrum, _, _ = get_or_compute_spectrum(
        lattice, params, use_sectors=cfg.use_sectors(),
        dim_cap=cfg.data["model"]["dim_cap"])
    aspec = cfg.ansatz(lattice)
    ospec = cfg.objective()
    loss = build_loss(aspec, ospec, terms=ham_terms(lattice, params),
                      target=resolve_target(ospec, spectrum))
    theta = init_params(aspec, seed)
    res = check_gradient(loss, theta, seed=seed)
    report = {
        "passed": res.passed,
        "max_rel_error": res.max_rel_error,
        "checked_coordinates": [int(i) for i in res.indices],
        "value": res.value,
        "ansatz": aspec.kind,
        "objective": {"kind": ospec.kind, "target": ospec.target,
                      "beta": ospec.beta},
        "n_params": int(theta.size),
    }
    echo(json.dumps(report, sort_keys=True, indent=1))
    return report
