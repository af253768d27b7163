"""Scenario types, result container and the integration driver."""
from dataclasses import dataclass, field
import csv
import math

import numpy as np
from scipy.integrate import solve_ivp

DIVERGENCE_PU = 0.5


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Disturbance:
    bus: int
    delta_admittance: complex
    time_s: float = 1.0
    kind: str = "load_step"

    def __post_init__(self):
        if self.kind != "load_step":
            raise ValueError(f"unsupported disturbance kind {self.kind!r}")
        if self.time_s < 0:
            raise ValueError("disturbance time must be >= 0")


@dataclass(frozen=True)
class SimConfig:
    dt_s: float = 0.002
    duration_s: float = 10.0
    integrator: str = "rk4"
    abs_tol: float = 1e-9
    rel_tol: float = 1e-9

    def __post_init__(self):
        if not self.dt_s > 0:
            raise ValueError("dt_s must be > 0")
        if not self.duration_s > self.dt_s:
            raise ValueError("duration_s must exceed dt_s")
        if self.integrator not in ("rk4", "rk45"):
            raise ValueError(f"unknown integrator {self.integrator!r}")

    @property
    def n_steps(self):
        return int(round(self.duration_s / self.dt_s))


@dataclass
class ScenarioResult:
    """Uniform, right-continuous time series plus the jumps at the event.

    ``jumps[name] = (value just before, value just after)`` the disturbance.
    """

    time: np.ndarray
    signals: dict
    units: dict
    jumps: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.signals[name]

    @property
    def event_index(self):
        return self.meta.get("event_index")

    def columns(self):
        return list(self.signals)

    def to_csv(self, path):
        names = self.columns()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time [s]"] + [f"{n} [{self.units.get(n, '-')}]" for n in names])
            cols = [self.signals[n] for n in names]
            for k, t in enumerate(self.time):
                w.writerow([f"{t:.6f}"] + [f"{c[k]:.12e}" for c in cols])


def _rk4(rhs, x, t, dt, n, phase, check, xs, k_start):
    for k in range(n):
        k1 = rhs(t, x, phase)
        k2 = rhs(t + 0.5 * dt, x + 0.5 * dt * k1, phase)
        k3 = rhs(t + 0.5 * dt, x + 0.5 * dt * k2, phase)
        k4 = rhs(t + dt, x + dt * k3, phase)
        x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t + dt
        check(t, x)
        xs[k_start + k + 1] = x
    return x


def integrate(model, cfg: SimConfig, event_time=None):
    """Integrate ``model`` over the uniform grid of ``cfg``.

    The model supplies ``x0``, ``rhs(t, x, phase)``, ``speed_slice`` and
    ``outputs(x, phase, t)``.  The network switches from phase 0 to phase 1
    at the grid point nearest to ``event_time``.
    Returns (time, states, event_index).
    """
    n = cfg.n_steps
    dt = cfg.dt_s
    time = np.arange(n + 1) * dt
    if event_time is None or event_time > cfg.duration_s:
        k_ev = n
    else:
        k_ev = int(round(event_time / dt))
    xs = np.empty((n + 1, model.x0.size))
    xs[0] = model.x0

    def check(t, x):
        if not np.all(np.isfinite(x)):
            raise SimulationError(f"non-finite state at t={t:.4f} s")
        w = x[model.speed_slice]
        if w.size and np.max(np.abs(w - 1.0)) > DIVERGENCE_PU:
            raise SimulationError(f"speed deviation above {DIVERGENCE_PU} pu at t={t:.4f} s")

    segments = [(0, k_ev, 0), (k_ev, n, 1)]
    x = model.x0
    for k_a, k_b, phase in segments:
        if k_b <= k_a:
            continue
        if cfg.integrator == "rk4":
            x = _rk4(model.rhs, x, time[k_a], dt, k_b - k_a, phase, check, xs, k_a)
        else:
            sol = solve_ivp(lambda t, y: model.rhs(t, y, phase), (time[k_a], time[k_b]), x,
                            method="RK45", t_eval=time[k_a:k_b + 1], rtol=cfg.rel_tol,
                            atol=cfg.abs_tol, max_step=max(dt, 1e-3) * 10)
            if not sol.success:
                raise SimulationError(sol.message)
            xs[k_a:k_b + 1] = sol.y.T
            for k in range(k_a + 1, k_b + 1):
                check(time[k], xs[k])
            x = xs[k_b]
    return time, xs, k_ev


def collect(model, time, xs, k_ev, meta):
    """Evaluate outputs on the grid (post-event values at the event sample)."""
    first = model.outputs(xs[0], 0, time[0])
    sig = {name: np.empty(time.size) for name in first}
    jumps = {}
    for k in range(time.size):
        phase = 0 if k < k_ev else 1
        out = first if k == 0 and phase == 0 else model.outputs(xs[k], phase, time[k])
        for name, v in out.items():
            sig[name][k] = v
        if k == k_ev and k_ev < time.size - 1:
            pre = model.outputs(xs[k], 0, time[k])
            jumps = {name: (pre[name], out[name]) for name in out}
    for name, v in sig.items():
        if not np.all(np.isfinite(v)):
            raise SimulationError(f"signal {name} contains non-finite values")
    meta = dict(meta)
    meta["event_index"] = k_ev if k_ev < time.size - 1 else None
    return ScenarioResult(time, sig, dict(model.units), jumps, meta)
