"""Error indices, frequency metrics, parameter sweeps and the impact-factor table."""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
import math

import numpy as np

from . import gfl as gflm
from .network import Phasor

# -- error index -------------------------------------------------------------


@dataclass(frozen=True)
class ErrorIndex:
    value_pct: float
    window_s: tuple
    signal: str = ""
    reference: str = ""
    signed: bool = False


def error_index(time, test, ref, window=None, baseline=None, signal="", reference="",
                signed=False) -> ErrorIndex:
    """Integrated deviation of ``test`` from ``ref`` in percent.

    ``100 * int |test - ref| dt / (max |ref - baseline| * T)`` over the
    window, trapezoidal rule on the shared grid.  ``baseline`` defaults to
    the first reference sample (the pre-disturbance value).  With
    ``signed=True`` the integrand keeps its sign.
    """
    t = np.asarray(time, dtype=float)
    x = np.asarray(test, dtype=float)
    r = np.asarray(ref, dtype=float)
    if not (t.shape == x.shape == r.shape) or t.size < 2:
        raise ValueError("series must share a grid of at least two samples")
    t0, t1 = (t[0], t[-1]) if window is None else window
    if t0 < t[0] - 1e-12 or t1 > t[-1] + 1e-12 or not t1 > t0:
        raise ValueError(f"window {t0, t1} outside the series domain")
    mask = (t >= t0 - 1e-12) & (t <= t1 + 1e-12)
    base = r[0] if baseline is None else baseline
    scale = np.max(np.abs(r[mask] - base))
    if scale == 0:
        raise ValueError("reference has zero deviation in the window")
    diff = x[mask] - r[mask]
    if not signed:
        diff = np.abs(diff)
    integral = np.trapezoid(diff, t[mask])
    return ErrorIndex(float(100.0 * integral / (scale * (t1 - t0))), (float(t0), float(t1)),
                      signal, reference, signed)


def compare_results(test, ref, signal, window=None, signed=False, ref_name="reference"):
    """Error index of one signal between two ScenarioResults on the same grid.

    The window defaults to [disturbance time, end]; the baseline is the
    reference value before the disturbance.
    """
    if test.time.shape != ref.time.shape or not np.allclose(test.time, ref.time):
        raise ValueError("results must share the time grid")
    if window is None:
        k = ref.event_index or 0
        window = (ref.time[k], ref.time[-1])
    return error_index(ref.time, test[signal], ref[signal], window, ref[signal][0],
                       signal, ref_name, signed)


# -- frequency metrics -----------------------------------------------------------


@dataclass(frozen=True)
class FrequencyMetrics:
    max_rocof: float      # pu/s, signed value of largest magnitude
    nadir: float          # pu
    nadir_time_s: float
    steady_state: float   # pu, mean of the final 10 %


def frequency_metrics(time, omega, event_index=None) -> FrequencyMetrics:
    t = np.asarray(time, dtype=float)
    w = np.asarray(omega, dtype=float)
    if w.size < 3:
        raise ValueError("frequency_metrics needs at least 3 samples")
    dt = np.diff(t)
    if not np.allclose(dt, dt[0], rtol=1e-9, atol=1e-12):
        raise ValueError("frequency_metrics needs a uniform time grid")
    rocof = (w[2:] - w[:-2]) / (2.0 * dt[0])
    centers = np.arange(1, w.size - 1)
    if event_index is not None:
        rocof = rocof[centers != event_index]
    k_max = int(np.argmax(np.abs(rocof))) if rocof.size else 0
    k_nadir = int(np.argmin(w))
    tail = max(1, int(math.ceil(0.1 * w.size)))
    return FrequencyMetrics(float(rocof[k_max]) if rocof.size else 0.0, float(w[k_nadir]),
                            float(t[k_nadir]), float(np.mean(w[-tail:])))


# -- sweeps -------------------------------------------------------------------------

PARAMETER_PATHS = {
    "pll.kp": "kp_pll",
    "pll.ki": "ki_pll",
    "dc.kp": "kp_dc",
    "dc.ki": "ki_dc",
    "dc.c": "dc_capacitance",
    "dc.scale": None,  # multiplies both DC-link PI gains
    "op.p": "p",
    "op.q": "q",
    "op.u": "u",
}
LOCAL_QUANTITIES = ("c_pi", "h_id", "h_pll", "h", "l_id", "l_pll", "l",
                    "a2", "a1", "b1", "b0", "omega_osc_hz", "omega_osc_damped_hz")
SYSTEM_QUANTITIES = ("rocof", "nadir")


@dataclass(frozen=True)
class SweepSpec:
    path: str
    values: tuple
    quantities: tuple = LOCAL_QUANTITIES

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "quantities", tuple(self.quantities))
        if not self.values:
            raise ValueError("sweep grid is empty")
        if self.path not in PARAMETER_PATHS:
            raise ValueError(f"unknown sweep parameter {self.path!r}; "
                             f"choose from {sorted(PARAMETER_PATHS)}")
        bad = set(self.quantities) - set(LOCAL_QUANTITIES) - set(SYSTEM_QUANTITIES)
        if bad:
            raise ValueError(f"unknown sweep quantities {sorted(bad)}")

    @property
    def needs_simulation(self):
        return any(q in SYSTEM_QUANTITIES for q in self.quantities)


@dataclass(frozen=True)
class SweepBase:
    """Starting point of a sweep.

    Local quantities only need converter parameters and an operating point
    (converter base).  ``system`` plus ``disturbance`` enable the simulated
    COI metrics; the GFL edited is ``gfl_index``.
    """

    params: gflm.GflParams
    p: float
    q: float
    u: float = 1.0
    omega0: float = gflm.OMEGA0_60HZ
    system: object = None
    gfl_index: int = 0
    disturbance: object = None
    config: object = None


@dataclass
class SweepRow:
    value: float
    valid: bool
    quantities: dict = field(default_factory=dict)
    error: str = ""


@dataclass
class SweepTable:
    spec: SweepSpec
    rows: list
    monotonic: dict

    def column(self, name):
        return np.array([r.quantities.get(name, math.nan) if r.valid else math.nan
                         for r in self.rows])

    def to_csv(self, path):
        import csv
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([self.spec.path, "valid"] + list(self.spec.quantities) + ["error"])
            for r in self.rows:
                vals = [f"{r.quantities[q]:.12e}" if r.valid else "" for q in self.spec.quantities]
                w.writerow([f"{r.value:.12g}", int(r.valid)] + vals + [r.error])


def _scaled_dc(params, factor):
    return replace(params, kp_dc=params.kp_dc * factor, ki_dc=params.ki_dc * factor)


def _apply(base: SweepBase, path, value):
    attr = PARAMETER_PATHS[path]
    if path == "dc.scale":
        return replace(base, params=_scaled_dc(base.params, value))
    if path.startswith("op."):
        return replace(base, **{attr: value})
    return replace(base, params=replace(base.params, **{attr: value}))


def _system_for(base: SweepBase, path, value):
    sysm = base.system
    attr = PARAMETER_PATHS[path]
    if path == "op.u":
        raise ValueError("op.u is fixed by the network in a system sweep")
    if path == "dc.scale":
        g = sysm.gfls[base.gfl_index]
        return sysm.with_gfl(base.gfl_index, kp_dc=g.kp_dc * value, ki_dc=g.ki_dc * value)
    return sysm.with_gfl(base.gfl_index, **{attr: value})


def _local_quantities(base: SweepBase):
    op = gflm.solve_operating_point(base.params, Phasor(base.u, 0.0), base.p, base.q)
    eq = gflm.gfl_equivalent(base.params, op, base.omega0)
    return eq.as_dict()


def _row(args):
    base, spec, value = args
    try:
        point = _apply(base, spec.path, value)
        out = _local_quantities(point)
        if spec.needs_simulation:
            from .sim import SimConfig, simulate_coi
            if base.system is None or base.disturbance is None:
                raise ValueError("simulated quantities need a system and a disturbance")
            res = simulate_coi(_system_for(base, spec.path, value), base.disturbance,
                               base.config or SimConfig())
            m = frequency_metrics(res.time, res["omega_coi"], res.event_index)
            out["rocof"], out["nadir"] = m.max_rocof, m.nadir
        return SweepRow(value, True, {q: float(out[q]) for q in spec.quantities})
    except Exception as exc:  # an invalid grid point does not stop the sweep
        return SweepRow(value, False, {}, f"{type(exc).__name__}: {exc}")


def monotonicity(values, series, rtol=1e-10):
    """'increasing', 'decreasing', 'constant' or 'none' along ascending ``values``."""
    v = np.asarray(values, dtype=float)
    y = np.asarray(series, dtype=float)
    ok = np.isfinite(y)
    v, y = v[ok], y[ok]
    if y.size < 2:
        return "none"
    y = y[np.argsort(v, kind="stable")]
    d = np.diff(y)
    tol = rtol * max(np.max(np.abs(y)), 1e-300)
    if np.all(np.abs(d) <= tol):
        return "constant"
    if np.all(d > tol):
        return "increasing"
    if np.all(d < -tol):
        return "decreasing"
    return "none"


def run_sweep(spec: SweepSpec, base: SweepBase, jobs=1) -> SweepTable:
    tasks = [(base, spec, v) for v in spec.values]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_row, tasks))
    else:
        rows = [_row(t) for t in tasks]
    table = SweepTable(spec, rows, {})
    for q in spec.quantities:
        table.monotonic[q] = monotonicity(spec.values, table.column(q))
    return table


def sweep_base_from_system(system, k=0, disturbance=None, config=None):
    """SweepBase at the pre-disturbance operating point of GFL ``k``."""
    from .sim import system_equilibrium
    eq = system_equilibrium(system)
    op = eq.ops[k]
    return SweepBase(system.gfls[k], op.p, op.q, op.u, system.omega0, system, k,
                     disturbance, config)


# -- impact-factor table ----------------------------------------------------------

IMPACT_PARAMS = ("op.p", "op.q", "op.u", "pll.kp", "pll.ki", "dc.kp", "dc.ki")
# marks: 1 = influences, 0 = no influence, "*" = influences the governor
# coefficients but not the oscillation frequency
IMPACT_MARKS = {
    "h_id":  (0, 0, 0, 0, 0, 0, 1),
    "l_id":  (0, 0, 0, 0, 0, 1, 0),
    "c_pi":  (1, 1, 0, 0, 0, 0, 0),
    "h_pll": (1, 1, 1, 1, 1, 1, 0),
    "j_pll": ("*", "*", 1, 1, 1, 1, 1),
    "l_pll": (1, 1, 0, 1, 0, 0, 0),
}
GOVERNOR_KEYS = ("a2", "a1", "b1", "b0")
ZERO_TOL = 1e-10
NONZERO_TOL = 1e-6


@dataclass(frozen=True)
class ImpactCell:
    item: str
    parameter: str
    expected: object
    sensitivity: float
    passed: bool
    note: str = ""


def _rel(a, b):
    return abs(b - a) / max(abs(a), 1e-300)


def impact_matrix(base: SweepBase, rel_step=1e-3):
    """Relative sensitivities of every local quantity to every table parameter.

    Each parameter is perturbed by ``rel_step`` (relative) through
    ``run_sweep``.  Returns {parameter: {quantity: relative change}}.
    """
    out = {}
    for path in IMPACT_PARAMS:
        v0 = (getattr(base, PARAMETER_PATHS[path]) if path.startswith("op.")
              else getattr(base.params, PARAMETER_PATHS[path]))
        tab = run_sweep(SweepSpec(path, (v0, v0 * (1 + rel_step)), LOCAL_QUANTITIES), base)
        r0, r1 = tab.rows
        if not (r0.valid and r1.valid):
            raise ValueError(f"operating point invalid in the {path} sweep: {r0.error or r1.error}")
        out[path] = {q: _rel(r0.quantities[q], r1.quantities[q]) for q in LOCAL_QUANTITIES
                     if math.isfinite(r0.quantities[q]) and math.isfinite(r1.quantities[q])}
    return out


def check_impact_table(base: SweepBase, rel_step=1e-3):
    """Compare the observed sensitivities with the table marks cell by cell."""
    sens = impact_matrix(base, rel_step)
    cells = []
    for item, marks in IMPACT_MARKS.items():
        for path, mark in zip(IMPACT_PARAMS, marks):
            s = sens[path]
            if item == "j_pll":
                gov = max(s[k] for k in GOVERNOR_KEYS)
                osc = s.get("omega_osc_hz", 0.0)
                if mark == "*":
                    cells.append(ImpactCell(item, path, mark, osc, osc <= ZERO_TOL,
                                            f"governor coefficients {gov:.2e}"))
                else:
                    val = max(gov, osc)
                    cells.append(ImpactCell(item, path, mark, val, val > NONZERO_TOL))
                continue
            val = s[item]
            ok = val > NONZERO_TOL if mark else val <= ZERO_TOL
            cells.append(ImpactCell(item, path, mark, val, ok))
    return cells
