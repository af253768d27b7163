"""System models: multi-generator, COI frame, nonlinear reference and baselines.

Powers are on the system base.  GFL linear models take their power input on
the converter base, so ``dP_conv = (P - P0) / S_rated``.  Currents scale the
same way (the voltage base is shared).
"""
from dataclasses import dataclass, replace
import math

import numpy as np

from .. import gfl as gflm
from ..kernels import interface_powers
from ..network import NetworkCase, Phasor, hybrid_from_case
from ..sg import SgParams, aggregate_coi
from .core import SimConfig, SimulationError, collect, integrate
from .system import StudySystem, solve_equilibrium, system_equilibrium

EQ_CHECK = 1e-8


@dataclass(frozen=True)
class _Machines:
    h: np.ndarray
    s: np.ndarray
    p_mech: np.ndarray
    k_gov: np.ndarray
    t_gov: np.ndarray

    @classmethod
    def from_params(cls, sgs, p_mech):
        gov = [g.governor for g in sgs]
        return cls(np.array([g.inertia_h for g in sgs]), np.array([g.rated_power_s for g in sgs]),
                   np.asarray(p_mech, dtype=float),
                   np.array([v.droop_gain if v.enabled else 0.0 for v in gov]),
                   np.array([v.time_constant_s if v.enabled else 1.0 for v in gov]))

    @property
    def sh(self):
        return self.h * self.s

    def rhs(self, w, pg, p_ele, omega0):
        d_delta = omega0 * (w - 1.0)
        d_w = (self.p_mech + pg - p_ele) / (2.0 * self.sh)
        d_pg = (-self.k_gov * (w - 1.0) - pg) / self.t_gov
        return d_delta, d_w, d_pg

    def coi(self, delta, w):
        sh = self.sh
        return float(sh @ w / sh.sum()), float(sh @ delta / sh.sum())


def continuous_angle(angle, near):
    """``angle`` shifted by whole turns to lie within pi of ``near``."""
    return near + (angle - near + math.pi) % (2 * math.pi) - math.pi


def _sg_outputs(out, mach, delta, w, p_parts, names):
    p_loc, p_tie_g, p_tie_f = p_parts
    w_coi, d_coi = mach.coi(delta, w)
    out["omega_coi"] = w_coi
    out["delta_coi"] = d_coi
    out["p_coi_loc"] = float(np.sum(p_loc + p_tie_g))
    out["p_coi_tie_f"] = float(np.sum(p_tie_f))
    out["p_coi_ele"] = float(np.sum(p_loc + p_tie_g + p_tie_f))
    if names:
        for i in range(delta.size):
            out[f"omega_sg{i + 1}"] = w[i]
            out[f"p_sg{i + 1}"] = p_loc[i] + p_tie_g[i] + p_tie_f[i]
    return d_coi


def _gfl_power_outputs(out, k, parts):
    p_loc, p_tie_f, p_tie_g = parts
    out[f"p_gfl{k + 1}"] = p_loc[k] + p_tie_f[k] + p_tie_g[k]
    out[f"p_gfl{k + 1}_loc"] = p_loc[k]
    out[f"p_gfl{k + 1}_tie_f"] = p_tie_f[k]
    out[f"p_gfl{k + 1}_tie_g"] = p_tie_g[k]


def _base_units(ng, nf, per_sg, extra_gfl=()):
    u = {"omega_coi": "pu", "delta_coi": "rad", "p_coi_loc": "pu", "p_coi_tie_f": "pu",
         "p_coi_ele": "pu"}
    if per_sg:
        for i in range(ng):
            u[f"omega_sg{i + 1}"] = "pu"
            u[f"p_sg{i + 1}"] = "pu"
    for k in range(nf):
        for suffix, unit in (("", "pu"), ("_loc", "pu"), ("_tie_f", "pu"), ("_tie_g", "pu")):
            u[f"p_gfl{k + 1}{suffix}"] = unit
        for suffix, unit in (("omega", "pu"), ("theta", "rad"), ("theta_rel", "rad"), ("i", "pu")) + tuple(extra_gfl):
            u[f"{suffix}_gfl{k + 1}"] = unit
    return u


class LinearGflModel:
    """SG swing equations coupled with linearized GFLs through the interface powers.

    Used both for the full multi-generator model and, with a single
    aggregated machine, for the COI-frame model.
    """

    def __init__(self, emf, mach, delta0, hybs, lin_models, ops, ratings, omega0, per_sg=True):
        self.emf = np.asarray(emf, dtype=float)
        self.mach = mach
        self.hybs = hybs
        self.lin = list(lin_models)
        self.ops = list(ops)
        self.rating = np.asarray(ratings, dtype=float)
        self.omega0 = omega0
        self.per_sg = per_sg
        ng, nf = self.emf.size, len(self.lin)
        self.ng, self.nf = ng, nf
        self.p0 = np.array([op.p for op in self.ops]) * self.rating if nf else np.zeros(0)
        self.theta0 = np.array([op.theta_i for op in self.ops])
        self.id0 = np.array([op.i_d for op in self.ops])
        self.iq0 = np.array([op.i_q for op in self.ops])
        sizes = [m.n_states for m in self.lin]
        self.gfl_off = np.concatenate([[0], np.cumsum(sizes)]).astype(int) + 3 * ng
        self.x0 = np.concatenate([delta0, np.ones(ng), np.zeros(ng), np.zeros(sum(sizes))])
        self.speed_slice = slice(ng, 2 * ng)
        self.units = _base_units(ng, nf, per_sg)
        for k in range(nf):
            for c in ("c_id", "c_pll", "d_id", "d_pll"):
                self.units[f"omega_gfl{k + 1}_{c}"] = "pu"
            self.units[f"p_mec_pll_gfl{k + 1}"] = "pu"
        self._ti = gflm.OUTPUTS.index("theta_i")
        self._id = gflm.OUTPUTS.index("i_d")

    def _gfl_phasors(self, x):
        th = np.empty(self.nf)
        im = np.empty(self.nf)
        for k, m in enumerate(self.lin):
            xs = x[self.gfl_off[k]:self.gfl_off[k + 1]]
            th[k] = self.theta0[k] + m.c[self._ti] @ xs
            i_d = self.id0[k] + m.c[self._id] @ xs
            im[k] = math.hypot(i_d, self.iq0[k]) * self.rating[k]
        return th, im

    def _powers(self, x, phase):
        ng = self.ng
        delta = x[:ng]
        th, im = self._gfl_phasors(x)
        h = self.hybs[phase]
        parts = interface_powers(self.emf, delta, im, th, h.Y_eq, h.T_eq, h.Z_eq)
        return delta, th, im, parts

    def rhs(self, t, x, phase):
        ng = self.ng
        delta, th, im, parts = self._powers(x, phase)
        p_g = parts[0] + parts[1] + parts[2]
        p_f = parts[3] + parts[4] + parts[5]
        dd, dw, dpg = self.mach.rhs(x[ng:2 * ng], x[2 * ng:3 * ng], p_g, self.omega0)
        dx = np.empty_like(x)
        dx[:ng], dx[ng:2 * ng], dx[2 * ng:3 * ng] = dd, dw, dpg
        dp = (p_f - self.p0) / self.rating if self.nf else p_f
        for k, m in enumerate(self.lin):
            sl = slice(self.gfl_off[k], self.gfl_off[k + 1])
            dx[sl] = m.a @ x[sl] + m.b[:, 0] * dp[k]
        return dx

    def outputs(self, x, phase, t):
        ng = self.ng
        delta, th, im, parts = self._powers(x, phase)
        w = x[ng:2 * ng]
        out = {}
        d_coi = _sg_outputs(out, self.mach, delta, w, parts[:3], self.per_sg)
        p_f = parts[3] + parts[4] + parts[5]
        for k, m in enumerate(self.lin):
            _gfl_power_outputs(out, k, parts[3:])
            xs = x[self.gfl_off[k]:self.gfl_off[k + 1]]
            dp = (p_f[k] - self.p0[k]) / self.rating[k]
            y = m.c @ xs + m.d[:, 0] * dp
            o = gflm.OUTPUTS
            n = k + 1
            out[f"omega_gfl{n}"] = 1.0 + y[o.index("omega_f")]
            out[f"omega_gfl{n}_c_id"] = y[o.index("omega_c_id")]
            out[f"omega_gfl{n}_c_pll"] = y[o.index("omega_c_pll")]
            out[f"omega_gfl{n}_d_id"] = y[o.index("omega_d_id")]
            out[f"omega_gfl{n}_d_pll"] = y[o.index("omega_d_pll")]
            out[f"p_mec_pll_gfl{n}"] = y[o.index("p_mec_pll")]
            out[f"theta_gfl{n}"] = th[k]
            out[f"theta_rel_gfl{n}"] = th[k] - d_coi
            out[f"i_gfl{n}"] = im[k]
        return out


def _check_equilibrium(model):
    r = float(np.max(np.abs(model.rhs(0.0, model.x0, 0)))) if model.x0.size else 0.0
    if r > EQ_CHECK:
        raise SimulationError(f"initial state is not an equilibrium (max derivative {r:.3e})")


def _run(model, dist, cfg, meta):
    _check_equilibrium(model)
    time, xs, k_ev = integrate(model, cfg, None if dist is None else dist.time_s)
    return collect(model, time, xs, k_ev, meta), xs


def _meta(variant, system, dist, cfg):
    return {"variant": variant, "disturbance": dist, "config": cfg}


def linear_gfl_models(system, ops, omega0=None):
    omega0 = system.omega0 if omega0 is None else omega0
    return [gflm.build_linear_model(g, op, omega0) for g, op in zip(system.gfls, ops)]


def simulate_multi_generator(system: StudySystem, dist=None, cfg=SimConfig(), return_states=False):
    system.check_disturbance(dist)
    eq = system_equilibrium(system)
    mach = _Machines.from_params(system.sgs, eq.p_mech)
    hybs = (system.hybrid(), system.hybrid(dist, after=True))
    model = LinearGflModel(system.emf, mach, eq.delta, hybs, linear_gfl_models(system, eq.ops),
                           eq.ops, system.gfl_rating, system.omega0, per_sg=True)
    res, xs = _run(model, dist, cfg, _meta("multi", system, dist, cfg))
    res.meta["equivalents"] = [m.equivalent for m in model.lin]
    return (res, xs, model) if return_states else res


def coi_setup(system: StudySystem, emf_mode="complex", dist=None):
    """Aggregated machine, COI interface matrices and the COI-frame equilibrium."""
    eq_full = system_equilibrium(system)
    cp, _ = aggregate_coi(system.sgs, angles=eq_full.delta, emf_mode=emf_mode)
    hyb_pre = system.coi_matrix()
    hyb_post = system.coi_matrix(dist, after=True)
    eq = solve_equilibrium(hyb_pre, np.array([cp.coi_emf.magnitude]), np.zeros(1),
                           system.gfl_power_sys, 0, cp.coi_emf.angle, system.gfls)
    machine = SgParams(cp.coi_inertia_h, cp.coi_rated_power_s, cp.coi_emf.magnitude,
                       cp.governor, cp.coi_emf.angle, float(eq.p_mech[0]))
    return cp, machine, (hyb_pre, hyb_post), eq


def simulate_coi(system: StudySystem, dist=None, cfg=SimConfig(), emf_mode="complex",
                 return_states=False):
    system.check_disturbance(dist)
    cp, machine, hybs, eq = coi_setup(system, emf_mode, dist)
    mach = _Machines.from_params([machine], eq.p_mech)
    model = LinearGflModel([machine.emf_magnitude], mach, eq.delta, hybs,
                           linear_gfl_models(system, eq.ops), eq.ops, system.gfl_rating,
                           system.omega0, per_sg=False)
    res, xs = _run(model, dist, cfg, _meta("proposed", system, dist, cfg))
    res.meta["equivalents"] = [m.equivalent for m in model.lin]
    res.meta["coi"] = cp
    res.meta["coi_matrix"] = hybs[0]
    return (res, xs, model) if return_states else res


class NonlinearReferenceModel:
    """SG swing equations with the nonlinear GFL model; network solved directly.

    ``q_axis='fixed'`` freezes the q-axis current at its operating value.
    ``'voltage'`` instead solves it at every instant so that the terminal
    magnitude stays at its pre-disturbance value (an ideal, instantaneous
    voltage loop).
    """

    MAX_ITER = 50

    def __init__(self, system, eq, hybs, q_axis="fixed"):
        if q_axis not in ("fixed", "voltage"):
            raise ValueError(f"unknown q_axis mode {q_axis!r}")
        self.q_axis = q_axis
        self.u0 = np.abs(eq.u_gfl)
        self.sys = system
        self.emf = system.emf
        self.mach = _Machines.from_params(system.sgs, eq.p_mech)
        self.hybs = hybs
        self.ops = eq.ops
        self.omega0 = system.omega0
        self.rating = system.gfl_rating
        ng, nf = self.emf.size, len(self.ops)
        self.ng, self.nf = ng, nf
        gx = [gflm.nonlinear_initial_state(g, op) for g, op in zip(system.gfls, eq.ops)]
        self.x0 = np.concatenate([eq.delta, np.ones(ng), np.zeros(ng)] + gx)
        self.speed_slice = slice(ng, 2 * ng)
        self.units = _base_units(ng, nf, True, (("u_dc", "pu"), ("u_re", "pu"), ("u_im", "pu"),
                                                 ("i_re", "pu"), ("i_im", "pu")))

    def _q_currents(self, x, e, phase):
        """q-axis currents (converter base) for the active q-axis mode."""
        iq = np.array([op.i_q for op in self.ops])
        if self.q_axis == "fixed" or not self.nf:
            return iq
        ng = self.ng
        h = self.hybs[phase]
        base = h.T_u @ e
        d_part = np.empty(self.nf, dtype=complex)
        q_dir = np.empty(self.nf, dtype=complex)
        for k, (g, op) in enumerate(zip(self.sys.gfls, self.ops)):
            xs = x[3 * ng + 4 * k:3 * ng + 4 * k + 4]
            d_part[k] = gflm.nonlinear_current(xs, g, op, 0.0)[1] * self.rating[k]
            q_dir[k] = -1j * np.exp(1j * xs[3]) * self.rating[k]
        for _ in range(self.MAX_ITER):
            prev = iq.copy()
            for k in range(self.nf):
                cur = d_part + q_dir * iq
                a = base[k] + h.Z_eq[k] @ cur - h.Z_eq[k, k] * q_dir[k] * iq[k]
                b = h.Z_eq[k, k] * q_dir[k]
                # |a + b iq| = u0, root nearest the previous value
                bb = abs(b) ** 2
                mid = -(a * np.conj(b)).real / bb
                disc = mid ** 2 - (abs(a) ** 2 - self.u0[k] ** 2) / bb
                if disc < 0:
                    raise SimulationError("terminal voltage cannot be held by the q-axis current")
                r = math.sqrt(disc)
                iq[k] = min((mid - r, mid + r), key=lambda v: abs(v - prev[k]))
            if np.max(np.abs(iq - prev)) < 1e-13:
                return iq
        raise SimulationError("q-axis voltage loop did not converge in 50 iterations")

    def _network(self, x, phase):
        ng = self.ng
        e = self.emf * np.exp(1j * x[:ng])
        iq = self._q_currents(x, e, phase)
        cur = np.empty(self.nf, dtype=complex)
        for k, (g, op) in enumerate(zip(self.sys.gfls, self.ops)):
            xs = x[3 * ng + 4 * k:3 * ng + 4 * k + 4]
            _, c = gflm.nonlinear_current(xs, g, op, iq[k])
            cur[k] = c * self.rating[k]
        i_g, u_f = self.hybs[phase].solve(e, cur)
        return e, cur, i_g, u_f, iq

    def rhs(self, t, x, phase):
        ng = self.ng
        e, cur, i_g, u_f, iq = self._network(x, phase)
        p_g = (e * np.conj(i_g)).real
        dx = np.empty_like(x)
        dx[:ng], dx[ng:2 * ng], dx[2 * ng:3 * ng] = self.mach.rhs(
            x[ng:2 * ng], x[2 * ng:3 * ng], p_g, self.omega0)
        for k, (g, op) in enumerate(zip(self.sys.gfls, self.ops)):
            sl = slice(3 * ng + 4 * k, 3 * ng + 4 * k + 4)
            dx[sl], _ = gflm.nonlinear_gfl_derivatives(x[sl], u_f[k], g, op, omega0=self.omega0,
                                                       i_q=iq[k])
        return dx

    def outputs(self, x, phase, t):
        ng = self.ng
        e, cur, i_g, u_f, iq = self._network(x, phase)
        h = self.hybs[phase]
        parts = interface_powers(self.emf, x[:ng], np.abs(cur), np.angle(cur),
                                 h.Y_eq, h.T_eq, h.Z_eq)
        out = {}
        d_coi = _sg_outputs(out, self.mach, x[:ng], x[ng:2 * ng], parts[:3], True)
        for k, (g, op) in enumerate(zip(self.sys.gfls, self.ops)):
            n = k + 1
            sl = slice(3 * ng + 4 * k, 3 * ng + 4 * k + 4)
            _, o = gflm.nonlinear_gfl_derivatives(x[sl], u_f[k], g, op, omega0=self.omega0,
                                                  i_q=iq[k])
            _gfl_power_outputs(out, k, parts[3:])
            out[f"omega_gfl{n}"] = o["omega_pll"]
            out[f"theta_gfl{n}"] = o["theta_i"]
            out[f"theta_rel_gfl{n}"] = o["theta_i"] - d_coi
            out[f"i_gfl{n}"] = abs(cur[k])
            out[f"u_dc_gfl{n}"] = x[sl][0]
            out[f"u_re_gfl{n}"] = u_f[k].real
            out[f"u_im_gfl{n}"] = u_f[k].imag
            out[f"i_re_gfl{n}"] = cur[k].real
            out[f"i_im_gfl{n}"] = cur[k].imag
        return out


def simulate_nonlinear_reference(system: StudySystem, dist=None, cfg=SimConfig(),
                                 return_states=False, q_axis="fixed"):
    system.check_disturbance(dist)
    eq = system_equilibrium(system)
    model = NonlinearReferenceModel(system, eq, (system.hybrid(), system.hybrid(dist, after=True)),
                                    q_axis)
    res, xs = _run(model, dist, cfg, _meta("reference", system, dist, cfg))
    res.meta["q_axis"] = q_axis
    return (res, xs, model) if return_states else res


class SfrModel:
    """COI machine with constant-power GFLs (current solved by fixed point)."""

    MAX_ITER = 50

    def __init__(self, emf, mach, delta0, hybs, s_gfl, i0, omega0):
        self.emf = np.asarray(emf, dtype=float)
        self.mach = mach
        self.hybs = hybs
        self.s = np.asarray(s_gfl, dtype=complex)
        self.i_guess = np.array(i0, dtype=complex)
        self.omega0 = omega0
        self.x0 = np.concatenate([delta0, [1.0], [0.0]])
        self.speed_slice = slice(1, 2)
        self.units = _base_units(1, self.s.size, False)

    def _currents(self, e, phase):
        h = self.hybs[phase]
        cur = self.i_guess.copy()
        for _ in range(self.MAX_ITER):
            u = h.T_u @ e + h.Z_eq @ cur
            new = np.conj(self.s / u)
            if np.max(np.abs(new - cur), initial=0.0) < 1e-13:
                self.i_guess = new
                return new
            cur = new
        raise SimulationError("constant-power GFL current did not converge in 50 iterations")

    def _powers(self, x, phase):
        e = self.emf * np.exp(1j * x[:1])
        cur = self._currents(e, phase)
        h = self.hybs[phase]
        return cur, interface_powers(self.emf, x[:1], np.abs(cur), np.angle(cur),
                                     h.Y_eq, h.T_eq, h.Z_eq)

    def rhs(self, t, x, phase):
        cur, parts = self._powers(x, phase)
        p_g = parts[0] + parts[1] + parts[2]
        dd, dw, dpg = self.mach.rhs(x[1:2], x[2:3], p_g, self.omega0)
        return np.concatenate([dd, dw, dpg])

    def outputs(self, x, phase, t):
        cur, parts = self._powers(x, phase)
        out = {}
        d_coi = _sg_outputs(out, self.mach, x[:1], x[1:2], parts[:3], False)
        for k in range(self.s.size):
            n = k + 1
            _gfl_power_outputs(out, k, parts[3:])
            th = continuous_angle(float(np.angle(cur[k])), d_coi)
            out[f"omega_gfl{n}"] = 1.0
            out[f"theta_gfl{n}"] = th
            out[f"theta_rel_gfl{n}"] = th - d_coi
            out[f"i_gfl{n}"] = abs(cur[k])
        return out


def simulate_sfr_baseline(system: StudySystem, dist=None, cfg=SimConfig(), emf_mode="complex"):
    system.check_disturbance(dist)
    cp, machine, hybs, eq = coi_setup(system, emf_mode, dist)
    mach = _Machines.from_params([machine], eq.p_mech)
    model = SfrModel([machine.emf_magnitude], mach, eq.delta, hybs, system.gfl_power_sys,
                     eq.i_gfl, system.omega0)
    res, _ = _run(model, dist, cfg, _meta("sfr", system, dist, cfg))
    return res


class _Playback:
    """Piecewise-linear replay of a reference series, split at the event."""

    def __init__(self, time, values, k_ev, pre_value):
        self.t = time
        self.dt = time[1] - time[0]
        self.k_ev = k_ev
        self.post = np.asarray(values)
        self.pre = np.array(self.post)
        if k_ev is not None:
            self.pre[k_ev] = pre_value

    def __call__(self, t, phase):
        series = self.pre if phase == 0 else self.post
        k = min(int(math.floor(t / self.dt + 1e-9)), self.t.size - 2)
        lo = self.k_ev if (phase == 1 and self.k_ev is not None) else 0
        k = max(k, lo)
        f = (t - self.t[k]) / self.dt
        return series[k] + f * (series[k + 1] - series[k])


class RotorMotionModel:
    """SGs plus the GFL replaced by an internal EMF behind the filter reactance."""

    def __init__(self, mach, emf, delta0, hybs, playbacks, omega0):
        self.mach = mach
        self.emf = np.asarray(emf, dtype=float)
        self.hybs = hybs
        self.play = playbacks  # per GFL: callable(t, phase) -> complex internal EMF
        self.omega0 = omega0
        ng = self.emf.size
        self.ng = ng
        self.x0 = np.concatenate([delta0, np.ones(ng), np.zeros(ng)])
        self.speed_slice = slice(ng, 2 * ng)
        self.units = _base_units(ng, len(playbacks), True, (("delta_int", "rad"), ("e_int", "pu")))

    def _network(self, t, x, phase):
        ng = self.ng
        e_int = np.array([p(t, phase) for p in self.play], dtype=complex)
        e = np.concatenate([self.emf * np.exp(1j * x[:ng]), e_int])
        i_all = self.hybs[phase].Y_eq @ e
        return e, i_all

    def rhs(self, t, x, phase):
        ng = self.ng
        e, i_all = self._network(t, x, phase)
        p_g = (e[:ng] * np.conj(i_all[:ng])).real
        dd, dw, dpg = self.mach.rhs(x[ng:2 * ng], x[2 * ng:], p_g, self.omega0)
        return np.concatenate([dd, dw, dpg])

    def outputs(self, x, phase, t):
        ng = self.ng
        e, i_all = self._network(t, x, phase)
        y = self.hybs[phase].Y_eq
        mags, angs = np.abs(e), np.angle(e)
        angs[:ng] = x[:ng]
        parts = interface_powers(mags, angs, np.zeros(0), np.zeros(0), y,
                                 np.zeros((e.size, 0), complex), np.zeros((0, 0), complex))
        p_all = parts[0] + parts[1]
        w = x[ng:2 * ng]
        w_coi, d_coi = self.mach.coi(x[:ng], w)
        out = {"omega_coi": w_coi, "delta_coi": d_coi}
        p_loc = parts[0][:ng]
        out["p_coi_loc"] = float(p_loc.sum())
        out["p_coi_tie_f"] = float(np.sum(p_all[:ng] - p_loc))
        out["p_coi_ele"] = float(np.sum(p_all[:ng]))
        for i in range(ng):
            out[f"omega_sg{i + 1}"] = w[i]
            out[f"p_sg{i + 1}"] = p_all[i]
        for k in range(len(self.play)):
            n = k + 1
            j = ng + k
            cur = i_all[j]
            # the filter is lossless, so the internal-source power is the terminal power
            out[f"p_gfl{n}"] = p_all[j]
            out[f"p_gfl{n}_loc"] = parts[0][j]
            out[f"p_gfl{n}_tie_f"] = 0.0
            out[f"p_gfl{n}_tie_g"] = parts[1][j]
            out[f"omega_gfl{n}"] = 1.0
            th = continuous_angle(float(np.angle(cur)), d_coi)
            out[f"theta_gfl{n}"] = th
            out[f"theta_rel_gfl{n}"] = th - d_coi
            out[f"i_gfl{n}"] = abs(cur)
            out[f"delta_int_gfl{n}"] = continuous_angle(float(np.angle(e[j])), d_coi)
            out[f"e_int_gfl{n}"] = abs(e[j])
        return out


def internal_emf_series(ref, k, x_filter_sys, error_pct=0.0):
    """Internal EMF of GFL ``k`` along a reference result.

    ``E = jX I + U`` with the true reactance, plus ``jX err (I - I0)``: the
    reactance error acts on the current deviation so that the perturbed
    baseline starts from the same equilibrium as the reference.
    """
    n = k + 1
    cur = ref[f"i_re_gfl{n}"] + 1j * ref[f"i_im_gfl{n}"]
    u = ref[f"u_re_gfl{n}"] + 1j * ref[f"u_im_gfl{n}"]
    x = x_filter_sys
    err = error_pct / 100.0
    i0 = cur[0]
    post = 1j * x * cur + u + 1j * x * err * (cur - i0)
    pre = None
    if ref.event_index is not None:
        j = ref.jumps
        c0 = j[f"i_re_gfl{n}"][0] + 1j * j[f"i_im_gfl{n}"][0]
        u0 = j[f"u_re_gfl{n}"][0] + 1j * j[f"u_im_gfl{n}"][0]
        pre = 1j * x * c0 + u0 + 1j * x * err * (c0 - i0)
    return post, pre


def rotor_motion_network(system: StudySystem, loads):
    """Network with each GFL replaced by a source behind its filter reactance."""
    net = system.network
    x_sys = [g.x_filter / g.rated_power for g in system.gfls]
    case = NetworkCase(net.bus_count, net.branches, loads, net.sg_buses + net.gfl_buses,
                       net.sg_reactance + tuple(x_sys), (), net.base_mva, net.nominal_frequency_hz)
    return hybrid_from_case(case)


def simulate_rotor_motion_baseline(system: StudySystem, dist=None, cfg=SimConfig(),
                                   x_filter_error_pct=0.0, reference=None):
    """Rotor-motion baseline driven by the reference terminal trajectory.

    The internal EMF of each GFL is computed from the reference current and
    terminal voltage with a (possibly perturbed) filter reactance and played
    back as a voltage source behind the true reactance.
    """
    system.check_disturbance(dist)
    if any(g.x_filter <= 0 for g in system.gfls):
        raise ValueError("rotor-motion baseline needs a positive filter reactance")
    if reference is None:
        reference = simulate_nonlinear_reference(system, dist, cfg)
    if reference.time.size != cfg.n_steps + 1 or not np.isclose(reference.time[1], cfg.dt_s):
        raise ValueError("reference result must share the simulation grid")
    eq = system_equilibrium(system)
    mach = _Machines.from_params(system.sgs, eq.p_mech)
    hybs = (rotor_motion_network(system, system.loads()),
            rotor_motion_network(system, system.loads(dist, after=True)))
    plays = []
    for k, g in enumerate(system.gfls):
        post, pre = internal_emf_series(reference, k, g.x_filter / g.rated_power, x_filter_error_pct)
        plays.append(_Playback(reference.time, post, reference.event_index, pre))
    model = RotorMotionModel(mach, system.emf, eq.delta, hybs, plays, system.omega0)
    res, _ = _run(model, dist, cfg, _meta("rotor", system, dist, cfg))
    res.meta["x_filter_error_pct"] = x_filter_error_pct
    return res
