"""Optimizers, learning-rate schedules, and the instrumented training loop.

Adam and L-BFGS operate on plain float64 vectors through an evaluate
callback theta -> (value, gradient), so they are agnostic to how the loss
is differentiated.  The loop records metrics on a fixed cadence (always
including step 0 and the final step) and preserves the partial trajectory
when a run aborts on a non-finite loss.
"""

from __future__ import annotations

import csv
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .spectral import FitResult

__all__ = [
    "OptimizeError",
    "Schedule",
    "lr_at",
    "AdamConfig",
    "AdamState",
    "adam_init",
    "adam_step",
    "LBFGSConfig",
    "LBFGSResult",
    "lbfgs_minimize",
    "TrainRecord",
    "TrainResult",
    "train",
    "write_trajectory",
    "TRAJECTORY_COLUMNS",
]

SCHEDULE_KINDS = ("constant", "exp_halving", "warm_then_constant")

TRAJECTORY_COLUMNS = (
    "step",
    "loss",
    "energy",
    "infidelity",
    "beta_tilde",
    "delta_beta_tilde",
    "lambda",
    "r_squared",
    "mse",
    "wall_ms",
)


class OptimizeError(RuntimeError):
    """Optimizer misconfiguration or a run-aborting numerical failure."""


@dataclass(frozen=True)
class Schedule:
    kind: str = "constant"
    lr0: float = 1e-3
    period: int = 1  # halving period, steps
    warm_steps: int = 0  # halving horizon for warm_then_constant

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise OptimizeError(f"unknown schedule {self.kind!r}; expected {SCHEDULE_KINDS}")
        if not (self.lr0 > 0):
            raise OptimizeError("lr0 must be positive")
        if self.kind != "constant" and self.period < 1:
            raise OptimizeError("halving period must be >= 1")
        if self.kind == "warm_then_constant" and self.warm_steps < 0:
            raise OptimizeError("warm_steps must be >= 0")


def lr_at(schedule: Schedule, step: int) -> float:
    """Learning rate at a given step (step counts completed updates).

    exp_halving halves every period steps; warm_then_constant halves on the
    same cadence during the first warm_steps steps and then stays at the
    value reached there.
    """
    if step < 0:
        raise OptimizeError("step must be >= 0")
    if schedule.kind == "constant":
        return schedule.lr0
    horizon = step
    if schedule.kind == "warm_then_constant":
        horizon = min(step, schedule.warm_steps)
    return schedule.lr0 * 2.0 ** (-(horizon // schedule.period))


@dataclass(frozen=True)
class AdamConfig:
    schedule: Schedule = field(default_factory=Schedule)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise OptimizeError("Adam moment decays must lie in (0, 1)")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0


def adam_init(n: int) -> AdamState:
    return AdamState(m=np.zeros(n), v=np.zeros(n), t=0)


def adam_step(config: AdamConfig, state: AdamState, theta: np.ndarray,
              grad: np.ndarray) -> np.ndarray:
    """One bias-corrected Adam update; the damping eps sits outside the sqrt."""
    if not np.all(np.isfinite(grad)):
        raise OptimizeError("non-finite gradient")
    lr = lr_at(config.schedule, state.t)
    state.t += 1
    state.m = config.beta1 * state.m + (1.0 - config.beta1) * grad
    state.v = config.beta2 * state.v + (1.0 - config.beta2) * grad * grad
    mhat = state.m / (1.0 - config.beta1 ** state.t)
    vhat = state.v / (1.0 - config.beta2 ** state.t)
    return theta - lr * mhat / (np.sqrt(vhat) + config.eps)


# ---------------------------------------------------------------------------
# L-BFGS with a strong Wolfe line search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LBFGSConfig:
    memory: int = 10
    c1: float = 1e-4
    c2: float = 0.9
    value_tol: float = 1e-22
    grad_tol: float = 1e-22
    max_iter: int = 4000

    def __post_init__(self):
        if self.memory < 1:
            raise OptimizeError("memory must be >= 1")
        if not (0.0 < self.c1 < self.c2 < 1.0):
            raise OptimizeError("need 0 < c1 < c2 < 1")


@dataclass
class LBFGSResult:
    theta: np.ndarray
    value: float
    grad: np.ndarray
    iterations: int
    converged: bool
    status: str  # "grad_tol" | "value_tol" | "max_iter" | "line_search_failed" | "zero_direction"


def _strong_wolfe(evaluate, x, f0, g0, d, c1, c2, max_evals=30):
    """Line search satisfying the strong Wolfe conditions.

    Bracket and bisect: expand alpha until the sufficient-decrease or
    curvature bracket closes, then narrow it.  Returns (alpha, f, g, ok).
    """
    dphi0 = float(g0 @ d)

    def phi(alpha):
        f, g = evaluate(x + alpha * d)
        return float(f), g, float(g @ d)

    def zoom(lo, f_lo, hi, f_hi, budget):
        g_best = None
        for _ in range(budget):
            alpha = 0.5 * (lo + hi)
            f, g, dphi = phi(alpha)
            if f > f0 + c1 * alpha * dphi0 or f >= f_lo:
                hi, f_hi = alpha, f
            else:
                if abs(dphi) <= -c2 * dphi0:
                    return alpha, f, g, True
                if dphi * (hi - lo) >= 0:
                    hi, f_hi = lo, f_lo
                lo, f_lo, g_best = alpha, f, g
            if abs(hi - lo) < 1e-16 * max(1.0, abs(lo)):
                break
        if g_best is not None and f_lo < f0:
            return lo, f_lo, g_best, True
        return 0.0, f0, g0, False

    alpha_prev, f_prev = 0.0, f0
    alpha = 1.0
    for i in range(12):
        f, g, dphi = phi(alpha)
        if f > f0 + c1 * alpha * dphi0 or (i > 0 and f >= f_prev):
            return zoom(alpha_prev, f_prev, alpha, f, max_evals - i)
        if abs(dphi) <= -c2 * dphi0:
            return alpha, f, g, True
        if dphi >= 0:
            return zoom(alpha, f, alpha_prev, f_prev, max_evals - i)
        alpha_prev, f_prev = alpha, f
        alpha *= 2.0
    return 0.0, f0, g0, False


def lbfgs_minimize(evaluate, theta0: np.ndarray, config: LBFGSConfig = LBFGSConfig(),
                   on_iterate=None) -> LBFGSResult:
    """Two-loop-recursion L-BFGS.

    evaluate: theta -> (value, gradient).  on_iterate(k, theta, value), when
    given, fires after every accepted iterate (and once at k=0).  Accepted
    objective values are non-increasing by the Wolfe decrease condition.
    """
    x = np.asarray(theta0, dtype=np.float64).copy()
    f, g = evaluate(x)
    f = float(f)
    if on_iterate is not None:
        on_iterate(0, x, f)
    pairs: deque = deque(maxlen=config.memory)

    status = "max_iter"
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        gnorm = float(np.linalg.norm(g))
        if gnorm < config.grad_tol:
            status, converged = "grad_tol", True
            it -= 1
            break

        # two-loop recursion for d = -H g
        q = g.copy()
        alphas = []
        for s, y, rho in reversed(pairs):
            a = rho * float(s @ q)
            alphas.append(a)
            q -= a * y
        if pairs:
            s, y, _ = pairs[-1]
            q *= float(s @ y) / float(y @ y)
        for (s, y, rho), a in zip(pairs, reversed(alphas)):
            b = rho * float(y @ q)
            q += (a - b) * s
        d = -q
        if float(g @ d) >= 0.0:
            pairs.clear()
            d = -g
        if not np.any(d):
            status, converged = "zero_direction", True
            it -= 1
            break

        alpha, f_new, g_new, ok = _strong_wolfe(evaluate, x, f, g, d,
                                                config.c1, config.c2)
        if not ok:
            status = "line_search_failed"
            it -= 1
            break
        s = alpha * d
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-10 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            pairs.append((s, y, 1.0 / sy))
        x = x + s
        df = f - float(f_new)
        f, g = float(f_new), g_new
        if on_iterate is not None:
            on_iterate(it, x, f)
        if df < config.value_tol:
            status, converged = "value_tol", True
            break

    return LBFGSResult(theta=x, value=f, grad=g, iterations=it,
                       converged=converged, status=status)


# ---------------------------------------------------------------------------
# Training loop and trajectory persistence
# ---------------------------------------------------------------------------


@dataclass
class TrainRecord:
    step: int
    loss: float
    energy: float | None = None
    infidelity: float | None = None
    fit: FitResult | None = None
    mse: float | None = None
    wall_ms: float = 0.0


@dataclass
class TrainResult:
    theta: np.ndarray
    records: list[TrainRecord]
    aborted: bool = False
    reason: str = ""
    seconds: float = 0.0


def train(evaluate, theta0: np.ndarray, *, optimizer, total_steps: int,
          record_every: int = 25, instrument=None) -> TrainResult:
    """Run an optimizer for total_steps updates with periodic records.

    evaluate: theta -> (value, gradient).  instrument(step, theta, value)
    builds the record for a step; by default a bare (step, loss) record is
    kept.  Steps count completed updates, so step 0 is the initial state and
    the final record is at step total_steps (for L-BFGS, at the last
    accepted iterate).  A non-finite loss aborts the run but keeps the
    records accumulated so far.
    """
    if record_every < 1:
        raise OptimizeError("record_every must be >= 1")
    theta = np.asarray(theta0, dtype=np.float64).copy()
    records: list[TrainRecord] = []
    t_start = time.perf_counter()

    def make_record(step, th, value):
        wall = (time.perf_counter() - t_start) * 1e3
        if instrument is not None:
            rec = instrument(step, th, value)
            rec.wall_ms = wall
        else:
            rec = TrainRecord(step=step, loss=float(value), wall_ms=wall)
        records.append(rec)

    if isinstance(optimizer, LBFGSConfig):
        recorded = set()

        def on_iterate(k, th, value):
            if k % record_every == 0 or k == 0:
                make_record(k, th, value)
                recorded.add(k)

        res = lbfgs_minimize(evaluate, theta, optimizer, on_iterate=on_iterate)
        if res.iterations not in recorded:
            make_record(res.iterations, res.theta, res.value)
        return TrainResult(theta=res.theta, records=records,
                           aborted=not res.converged and res.status == "line_search_failed",
                           reason=res.status,
                           seconds=time.perf_counter() - t_start)

    if not isinstance(optimizer, AdamConfig):
        raise OptimizeError(f"unsupported optimizer {type(optimizer).__name__}")
    state = adam_init(theta.size)
    for step in range(total_steps):
        value, grad = evaluate(theta)
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            make_record(step, theta, value)
            return TrainResult(theta=theta, records=records, aborted=True,
                               reason="non-finite loss or gradient",
                               seconds=time.perf_counter() - t_start)
        if step % record_every == 0:
            make_record(step, theta, value)
        theta = adam_step(optimizer, state, theta, grad)
    value, _ = evaluate(theta)
    make_record(total_steps, theta, value)
    return TrainResult(theta=theta, records=records,
                       seconds=time.perf_counter() - t_start)


def _fmt(v) -> str:
    if v is None:
        return ""
    return repr(float(v))


def write_trajectory(path: str | Path, records: list[TrainRecord]) -> None:
    """Write the trajectory CSV.

    Columns are fixed; '.' is the decimal separator; UTF-8.  The wall_ms
    column is left empty so that identical (seed, config, build) runs
    produce byte-identical files; per-record wall-clock lives in the run
    summary instead.
    """
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for r in records:
            fit = r.fit
            w.writerow([
                str(r.step),
                _fmt(r.loss),
                _fmt(r.energy),
                _fmt(r.infidelity),
                _fmt(fit.beta_tilde if fit else None),
                _fmt(fit.delta_beta_tilde if fit else None),
                _fmt(fit.lam if fit else None),
                _fmt(fit.r_squared if fit else None),
                _fmt(r.mse),
                "",
            ])
