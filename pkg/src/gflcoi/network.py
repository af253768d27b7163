"""Network admittance assembly, node elimination and interface matrices.

Node ordering used throughout: SG EMF nodes (G), GFL terminal buses (F),
then the remaining network buses (N).  Load admittances are stored in the
consuming convention (``g - jb`` for an inductive load drawing ``P + jQ`` at
1 pu) and are added to the bus diagonal.

Current/voltage relations of the interface matrices::

    I_G = Y_eq @ E_G + T_eq @ I_F
    U_F = T_u  @ E_G + Z_eq @ I_F        with T_u = -T_eq.T
"""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

PIVOT_RTOL = 1e-12


class NetworkError(ValueError):
    pass


class SingularNetworkError(NetworkError):
    def __init__(self, what, pivot, scale):
        self.pivot = pivot
        super().__init__(
            f"{what} is singular: smallest pivot {pivot:.3e} "
            f"(threshold {PIVOT_RTOL:.0e} x {scale:.3e})"
        )


def complex_value(re, im=0.0):
    """Validated complex scalar used for all admittances and phasors."""
    z = complex(re, im)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise ValueError(f"non-finite complex value {z!r}")
    return z


@dataclass(frozen=True)
class Phasor:
    magnitude: float
    angle: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.magnitude) and math.isfinite(self.angle)):
            raise ValueError("phasor components must be finite")
        if self.magnitude < 0:
            raise ValueError(f"phasor magnitude must be >= 0, got {self.magnitude}")
        a = math.remainder(self.angle, 2 * math.pi)
        if a <= -math.pi:
            a += 2 * math.pi
        object.__setattr__(self, "angle", a)

    @classmethod
    def from_complex(cls, z):
        return cls(abs(z), math.atan2(z.imag, z.real))

    def to_complex(self):
        return self.magnitude * complex(math.cos(self.angle), math.sin(self.angle))


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    admittance: complex
    charging_b: float = 0.0

    def __post_init__(self):
        if self.from_bus == self.to_bus:
            raise NetworkError(f"branch {self.from_bus}-{self.to_bus} is a self-loop")
        y = complex(self.admittance)
        if not (math.isfinite(y.real) and math.isfinite(y.imag)):
            raise NetworkError(f"branch {self.from_bus}-{self.to_bus} has zero impedance")
        if y == 0:
            raise NetworkError(f"branch {self.from_bus}-{self.to_bus} has zero admittance")
        object.__setattr__(self, "admittance", y)

    @classmethod
    def from_impedance(cls, from_bus, to_bus, r, x, charging_b=0.0):
        if r == 0 and x == 0:
            raise NetworkError(f"branch {from_bus}-{to_bus} has zero impedance")
        return cls(from_bus, to_bus, 1.0 / complex(r, x), charging_b)


@dataclass(frozen=True)
class NetworkCase:
    bus_count: int
    branches: tuple
    shunt_loads: np.ndarray
    sg_buses: tuple
    sg_reactance: tuple
    gfl_buses: tuple
    base_mva: float = 100.0
    nominal_frequency_hz: float = 60.0

    def __post_init__(self):
        n = self.bus_count
        if n < 1:
            raise NetworkError("bus_count must be >= 1")
        object.__setattr__(self, "branches", tuple(self.branches))
        object.__setattr__(self, "sg_buses", tuple(int(b) for b in self.sg_buses))
        object.__setattr__(self, "sg_reactance", tuple(float(x) for x in self.sg_reactance))
        object.__setattr__(self, "gfl_buses", tuple(int(b) for b in self.gfl_buses))
        loads = np.zeros(n, dtype=complex)
        if self.shunt_loads is not None:
            loads[:] = np.asarray(self.shunt_loads, dtype=complex)
        loads.setflags(write=False)
        object.__setattr__(self, "shunt_loads", loads)
        for br in self.branches:
            for b in (br.from_bus, br.to_bus):
                if not 0 <= b < n:
                    raise NetworkError(f"branch bus index {b} out of range 0..{n - 1}")
        for b in self.sg_buses + self.gfl_buses:
            if not 0 <= b < n:
                raise NetworkError(f"generator bus index {b} out of range 0..{n - 1}")
        if len(self.sg_buses) != len(self.sg_reactance):
            raise NetworkError("one internal reactance is required per SG")
        if any(x <= 0 for x in self.sg_reactance):
            raise NetworkError("SG internal reactance must be positive")
        if set(self.sg_buses) & set(self.gfl_buses):
            raise NetworkError("sg_buses and gfl_buses must be disjoint")
        if len(set(self.gfl_buses)) != len(self.gfl_buses):
            raise NetworkError("at most one GFL per bus")
        self._check_connected()

    def _check_connected(self):
        n = self.bus_count
        if n == 1:
            return
        rows = [br.from_bus for br in self.branches]
        cols = [br.to_bus for br in self.branches]
        graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        ncomp, labels = connected_components(graph, directed=False)
        if ncomp > 1:
            groups = [np.flatnonzero(labels == c).tolist() for c in range(ncomp)]
            raise NetworkError(f"network is disconnected; components (bus indices): {groups}")

    @property
    def n_sg(self):
        return len(self.sg_buses)

    @property
    def n_gfl(self):
        return len(self.gfl_buses)

    def with_load_step(self, bus, delta_admittance):
        loads = np.array(self.shunt_loads)
        loads[bus] += delta_admittance
        return NetworkCase(self.bus_count, self.branches, loads, self.sg_buses,
                           self.sg_reactance, self.gfl_buses, self.base_mva,
                           self.nominal_frequency_hz)


@dataclass(frozen=True)
class PartitionedAdmittance:
    """Full admittance matrix (without loads) in G|F|N node order."""

    matrix: np.ndarray
    n_g: int
    n_f: int
    boundary_buses: tuple  # bus index of each F node
    interior_buses: tuple  # bus index of each N node

    def _sl(self, name):
        g, f = self.n_g, self.n_f
        return {"G": slice(0, g), "F": slice(g, g + f), "N": slice(g + f, None)}[name]

    def block(self, rows, cols):
        return self.matrix[self._sl(rows), self._sl(cols)]

    def __getattr__(self, name):
        if len(name) == 4 and name.startswith("Y_") and set(name[2:]) <= set("GFN"):
            return self.block(name[2], name[3])
        raise AttributeError(name)

    @property
    def n_n(self):
        return len(self.interior_buses)


@dataclass(frozen=True)
class ReducedAdmittance:
    Yt_GG: np.ndarray
    Yt_GF: np.ndarray
    Yt_FG: np.ndarray
    Yt_FF: np.ndarray

    def full(self):
        return np.block([[self.Yt_GG, self.Yt_GF], [self.Yt_FG, self.Yt_FF]])


@dataclass(frozen=True)
class HybridInterfaceMatrix:
    Y_eq: np.ndarray
    T_eq: np.ndarray
    Z_eq: np.ndarray
    symmetry_residual: float = 0.0

    @property
    def T_u(self):
        return -self.T_eq.T

    def solve(self, e_g, i_f):
        """Return (I_G, U_F) for complex EMFs and GFL current injections."""
        e_g = np.asarray(e_g, dtype=complex)
        i_f = np.asarray(i_f, dtype=complex)
        return self.Y_eq @ e_g + self.T_eq @ i_f, self.T_u @ e_g + self.Z_eq @ i_f

    def lossless(self):
        """Copy with the real parts of Y_eq zeroed (tie conductances removed)."""
        return HybridInterfaceMatrix(1j * self.Y_eq.imag, self.T_eq, self.Z_eq,
                                     self.symmetry_residual)

    def without_sg_conductance_ties(self):
        """Copy with only the off-diagonal conductances of Y_eq zeroed."""
        y = np.array(self.Y_eq)
        off = ~np.eye(y.shape[0], dtype=bool)
        y[off] = 1j * y[off].imag
        return HybridInterfaceMatrix(y, self.T_eq, self.Z_eq, self.symmetry_residual)

    def collapse_to_coi(self):
        """Short all SG EMF nodes together (equal EMF phasors, summed currents)."""
        ones = np.ones(self.Y_eq.shape[0])
        return CoiInterfaceMatrix(complex(ones @ self.Y_eq @ ones), ones @ self.T_eq,
                                  np.array(self.Z_eq))


@dataclass(frozen=True)
class CoiInterfaceMatrix:
    Y_eq_prime: complex
    T_eq_prime: np.ndarray
    Z_eq_prime: np.ndarray

    def as_hybrid(self):
        return HybridInterfaceMatrix(np.array([[self.Y_eq_prime]]),
                                     np.asarray(self.T_eq_prime).reshape(1, -1),
                                     np.asarray(self.Z_eq_prime))


def _factor(a, what):
    if a.shape[0] == 0:
        return None
    scale = float(np.max(np.abs(np.diag(a)))) if a.size else 0.0
    if scale == 0.0:
        raise SingularNetworkError(what, 0.0, 0.0)
    lu, piv = lu_factor(a, check_finite=True)
    pivot = float(np.min(np.abs(np.diag(lu))))
    if pivot < PIVOT_RTOL * scale:
        raise SingularNetworkError(what, pivot, scale)
    return lu, piv


def build_partitioned_admittance(case: NetworkCase) -> PartitionedAdmittance:
    n_g = case.n_sg
    boundary = case.gfl_buses
    interior = tuple(b for b in range(case.bus_count) if b not in set(boundary))
    order = list(boundary) + list(interior)
    pos = {bus: n_g + k for k, bus in enumerate(order)}
    size = n_g + case.bus_count
    y = np.zeros((size, size), dtype=complex)
    for br in case.branches:
        a, b = pos[br.from_bus], pos[br.to_bus]
        half = 0.5j * br.charging_b
        y[a, a] += br.admittance + half
        y[b, b] += br.admittance + half
        y[a, b] -= br.admittance
        y[b, a] -= br.admittance
    for k, (bus, xd) in enumerate(zip(case.sg_buses, case.sg_reactance)):
        ys = 1.0 / complex(0.0, xd)
        a = pos[bus]
        y[k, k] += ys
        y[a, a] += ys
        y[k, a] -= ys
        y[a, k] -= ys
    y.setflags(write=False)
    return PartitionedAdmittance(y, n_g, len(boundary), tuple(boundary), interior)


def _with_loads(part, loads):
    loads = np.asarray(loads, dtype=complex)
    y = np.array(part.matrix)
    g = part.n_g
    for k, bus in enumerate(part.boundary_buses + part.interior_buses):
        y[g + k, g + k] += loads[bus]
    return y


def eliminate_network_nodes(part: PartitionedAdmittance, loads) -> ReducedAdmittance:
    """Kron-reduce the interior buses with loads folded into the diagonal."""
    y = _with_loads(part, loads)
    nb = part.n_g + part.n_f
    ybb, ybn, ynb, ynn = y[:nb, :nb], y[:nb, nb:], y[nb:, :nb], y[nb:, nb:]
    if ynn.shape[0]:
        fac = _factor(ynn, "interior admittance block")
        yt = ybb - ybn @ lu_solve(fac, ynb)
    else:
        yt = ybb.copy()
    g = part.n_g
    return ReducedAdmittance(yt[:g, :g], yt[:g, g:], yt[g:, :g], yt[g:, g:])


def form_hybrid_matrix(red: ReducedAdmittance) -> HybridInterfaceMatrix:
    n_g, n_f = red.Yt_GF.shape
    if n_f == 0:
        return HybridInterfaceMatrix(np.array(red.Yt_GG), np.zeros((n_g, 0), complex),
                                     np.zeros((0, 0), complex), 0.0)
    fac = _factor(red.Yt_FF, "GFL terminal block")
    z = lu_solve(fac, np.eye(n_f, dtype=complex))
    t_i = red.Yt_GF @ z
    t_u = -lu_solve(fac, red.Yt_FG)
    y_eq = red.Yt_GG - red.Yt_GF @ lu_solve(fac, red.Yt_FG)
    resid = float(np.max(np.abs(t_i + t_u.T))) if t_i.size else 0.0
    return HybridInterfaceMatrix(y_eq, t_i, z, resid)


def hybrid_from_case(case: NetworkCase, loads=None) -> HybridInterfaceMatrix:
    part = build_partitioned_admittance(case)
    return form_hybrid_matrix(eliminate_network_nodes(
        part, case.shunt_loads if loads is None else loads))


def coi_frame_reduction(part: PartitionedAdmittance, loads) -> CoiInterfaceMatrix:
    """Merge all SG EMF nodes into one COI node, then reduce and rearrange."""
    if part.n_g < 1:
        raise NetworkError("COI reduction needs at least one SG")
    size = part.matrix.shape[0]
    agg = np.zeros((size, size - part.n_g + 1))
    agg[:part.n_g, 0] = 1.0
    agg[part.n_g:, 1:] = np.eye(size - part.n_g)
    merged = PartitionedAdmittance(agg.T @ part.matrix @ agg, 1, part.n_f,
                                   part.boundary_buses, part.interior_buses)
    hyb = form_hybrid_matrix(eliminate_network_nodes(merged, loads))
    return CoiInterfaceMatrix(complex(hyb.Y_eq[0, 0]), hyb.T_eq[0].copy(), hyb.Z_eq)


# -- power expressions -----------------------------------------------------

def tie_power_sg_sg(e_i: Phasor, e_j: Phasor, y_ij) -> float:
    d = e_i.angle - e_j.angle
    return e_i.magnitude * e_j.magnitude * (y_ij.real * math.cos(d) + y_ij.imag * math.sin(d))


def tie_power_sg_gfl(e: Phasor, i: Phasor, t) -> float:
    """Printed SG-GFL tie form ``E I (-V cos(d - th) + W sin(d - th))``.

    Called as ``(E, I, t)`` it gives the SG-side term; swapping the first two
    arguments gives the GFL-side term.  With ``T_eq = Yt_GF @ Z_eq`` the
    SG-side call equals the phasor-exact GFL-end power, while the phasor-exact
    SG-end power is ``-tie_power_sg_gfl(I, E, t)``; see ``tie_powers_exact``.
    """
    d = e.angle - i.angle
    return e.magnitude * i.magnitude * (-t.real * math.cos(d) + t.imag * math.sin(d))


def tie_powers_exact(e: Phasor, i: Phasor, t):
    """Phasor-exact (SG-end, GFL-end) power of one SG-GFL virtual tie."""
    d = e.angle - i.angle
    ei = e.magnitude * i.magnitude
    c, s = math.cos(d), math.sin(d)
    return ei * (t.real * c + t.imag * s), ei * (-t.real * c + t.imag * s)


def tie_power_gfl_gfl(i_k: Phasor, i_m: Phasor, z_km) -> float:
    d = i_k.angle - i_m.angle
    return i_k.magnitude * i_m.magnitude * (z_km.real * math.cos(d) + z_km.imag * math.sin(d))


def local_power_sg(e: Phasor, g_ii) -> float:
    return e.magnitude ** 2 * float(np.real(g_ii))


def local_power_gfl(i: Phasor, r_ii) -> float:
    return i.magnitude ** 2 * float(np.real(r_ii))


def symmetric_residual(m):
    m = np.asarray(m)
    if m.size == 0:
        return 0.0
    return float(np.max(np.abs(m - m.T)) / max(np.max(np.abs(m)), 1e-300))
