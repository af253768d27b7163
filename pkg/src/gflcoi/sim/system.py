"""Study system bundle and pre-disturbance equilibrium."""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy.optimize import root

from ..gfl import GflParams, solve_operating_point
from ..network import (NetworkCase, Phasor, build_partitioned_admittance,
                       coi_frame_reduction, eliminate_network_nodes, form_hybrid_matrix)
from ..sg import SgParams
from .core import Disturbance

EQ_TOL = 1e-10


class EquilibriumError(RuntimeError):
    pass


@dataclass(frozen=True)
class StudySystem:
    """Network plus machine data and dispatch.

    ``sg_dispatch[i]`` is the active power (system base) of SG ``i``; the
    entry of the reference SG is ignored.  GFL dispatch ``(p, q)`` is on the
    converter base.
    """

    network: NetworkCase
    sgs: tuple
    gfls: tuple
    sg_dispatch: tuple
    gfl_dispatch: tuple
    reference_sg: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sgs", tuple(self.sgs))
        object.__setattr__(self, "gfls", tuple(self.gfls))
        object.__setattr__(self, "sg_dispatch", tuple(float(p) for p in self.sg_dispatch))
        object.__setattr__(self, "gfl_dispatch", tuple(tuple(map(float, pq)) for pq in self.gfl_dispatch))
        if len(self.sgs) != self.network.n_sg or len(self.sg_dispatch) != len(self.sgs):
            raise ValueError("SG data does not match the network SG placements")
        if len(self.gfls) != self.network.n_gfl or len(self.gfl_dispatch) != len(self.gfls):
            raise ValueError("GFL data does not match the network GFL placements")
        if not 0 <= self.reference_sg < max(len(self.sgs), 1):
            raise ValueError("reference SG index out of range")

    @property
    def omega0(self):
        return 2 * math.pi * self.network.nominal_frequency_hz

    @property
    def emf(self):
        return np.array([g.emf_magnitude for g in self.sgs])

    @property
    def gfl_rating(self):
        return np.array([g.rated_power for g in self.gfls])

    @property
    def gfl_power_sys(self):
        """Complex GFL output S = P + jQ on the system base."""
        return np.array([complex(p, q) * g.rated_power
                         for (p, q), g in zip(self.gfl_dispatch, self.gfls)])

    def loads(self, dist: Disturbance = None, after=False):
        loads = np.array(self.network.shunt_loads)
        if dist is not None and after:
            loads[dist.bus] += dist.delta_admittance
        return loads

    def check_disturbance(self, dist: Disturbance):
        if dist is None:
            return
        if not 0 <= dist.bus < self.network.bus_count:
            raise ValueError(f"disturbance bus {dist.bus} out of range")
        if dist.bus in self.network.gfl_buses:
            raise ValueError("disturbance bus must be a network node, not a GFL terminal")

    def hybrid(self, dist=None, after=False):
        part = build_partitioned_admittance(self.network)
        return form_hybrid_matrix(eliminate_network_nodes(part, self.loads(dist, after)))

    def coi_matrix(self, dist=None, after=False):
        part = build_partitioned_admittance(self.network)
        return coi_frame_reduction(part, self.loads(dist, after)).as_hybrid()

    def with_gfl(self, k, **changes):
        """Copy with GFL ``k`` parameters replaced (``p``/``q`` edit the dispatch)."""
        from dataclasses import replace
        gfls = list(self.gfls)
        disp = list(self.gfl_dispatch)
        p, q = disp[k]
        p = changes.pop("p", p)
        q = changes.pop("q", q)
        disp[k] = (p, q)
        gfls[k] = replace(gfls[k], **changes)
        return replace(self, gfls=tuple(gfls), gfl_dispatch=tuple(disp))


@dataclass(frozen=True)
class Equilibrium:
    delta: np.ndarray        # SG EMF angles
    p_mech: np.ndarray       # SG mechanical (= electrical) power, system base
    i_gfl: np.ndarray        # GFL injected currents, system base
    u_gfl: np.ndarray        # GFL terminal voltages
    ops: tuple               # GflOperatingPoint per GFL (converter base)
    residual: float


def solve_equilibrium(hyb, emf, p_set, s_gfl, ref_index=0, ref_angle=0.0, gfls=()):
    """Solve for SG angles and GFL currents on the reduced network.

    Unknowns are the non-reference SG angles and the complex GFL currents;
    equations are the SG active-power set points and the GFL complex power
    ``U conj(I) = S``.  Solved with a hybrid Powell root finder; the residual
    must reach ``EQ_TOL``.
    """
    ng = len(emf)
    nf = len(s_gfl)
    free = [i for i in range(ng) if i != ref_index]

    def unpack(z):
        delta = np.full(ng, ref_angle, dtype=float)
        delta[free] = z[:len(free)]
        cur = z[len(free):len(free) + nf] + 1j * z[len(free) + nf:]
        return delta, cur

    def resid(z):
        delta, cur = unpack(z)
        e = emf * np.exp(1j * delta)
        i_g, u_f = hyb.solve(e, cur)
        p_g = (e * np.conj(i_g)).real
        mis = u_f * np.conj(cur) - s_gfl
        return np.concatenate([p_g[free] - np.asarray(p_set)[free], mis.real, mis.imag])

    i0 = np.conj(np.asarray(s_gfl, dtype=complex))
    z0 = np.concatenate([np.full(len(free), ref_angle), i0.real, i0.imag])
    sol = root(resid, z0, method="hybr", tol=1e-14)
    r = float(np.max(np.abs(resid(sol.x)))) if sol.x.size else 0.0
    if sol.x.size and r > EQ_TOL:
        raise EquilibriumError(f"power-flow equilibrium not found (residual {r:.3e}): {sol.message}")
    delta, cur = unpack(sol.x)
    e = emf * np.exp(1j * delta)
    i_g, u_f = hyb.solve(e, cur)
    p_g = (e * np.conj(i_g)).real
    ops = []
    for k, g in enumerate(gfls):
        s_conv = s_gfl[k] / g.rated_power
        ops.append(solve_operating_point(g, Phasor.from_complex(u_f[k]), s_conv.real, s_conv.imag))
    return Equilibrium(delta, p_g, cur, u_f, tuple(ops), r)


def system_equilibrium(system: StudySystem):
    return solve_equilibrium(system.hybrid(), system.emf, np.array(system.sg_dispatch),
                             system.gfl_power_sys, system.reference_sg, 0.0, system.gfls)
