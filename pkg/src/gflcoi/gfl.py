"""Grid-following converter models on the frequency-dynamics time scale.

All quantities are per unit on the converter base.  Sign conventions:

* ``i_d = -P/U`` and ``i_q = Q/U`` at the operating point (so ``i_d < 0``
  while generating);
* the injected current phasor is ``-(i_d + j i_q) exp(j theta_pll)``, whose
  angle equals ``theta_pll + arctan(i_q / i_d)`` whenever ``i_d < 0``;
* PLL gains map the q-axis voltage (pu) to angular speed in rad/s, and the
  PLL frequency in pu is ``1 + (d theta_pll / dt) / omega0``.
"""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy import signal

from .network import Phasor

OMEGA0_60HZ = 2 * math.pi * 60.0


class GflModelError(ValueError):
    pass


@dataclass(frozen=True)
class GflParams:
    dc_capacitance: float
    kp_dc: float
    ki_dc: float
    kp_pll: float
    ki_pll: float
    dc_voltage_setpoint: float = 1.0
    rated_power: float = 1.0  # system base
    x_filter: float = 0.1     # converter base, used by the rotor-motion baseline
    current_limit: float = 2.0

    def __post_init__(self):
        if not self.dc_capacitance > 0:
            raise ValueError("dc_capacitance must be > 0")
        if not self.dc_voltage_setpoint > 0:
            raise ValueError("dc_voltage_setpoint must be > 0")
        for k in ("kp_dc", "ki_dc", "kp_pll", "ki_pll"):
            if getattr(self, k) < 0:
                raise ValueError(f"{k} must be >= 0")
        if not self.rated_power > 0:
            raise ValueError("rated_power must be > 0")

    @property
    def inertia_m(self):
        """DC-link constant U_dc0 * C_dc."""
        return self.dc_voltage_setpoint * self.dc_capacitance


@dataclass(frozen=True)
class GflOperatingPoint:
    p: float
    q: float
    u: float
    theta_u: float
    theta_pll: float
    theta_i: float
    i_d: float
    i_q: float

    @property
    def i_mag(self):
        return math.hypot(self.i_d, self.i_q)


@dataclass(frozen=True)
class LinearizationCoeffs:
    c_pll: float
    c_pi: float
    c_ei: float
    c_ep: float

    @property
    def k(self):
        """Loop factor c_ei - c_pi * c_ep (equals -U at any operating point)."""
        return self.c_ei - self.c_pi * self.c_ep


def injected_current(i_d, i_q, theta_pll):
    return -(i_d + 1j * i_q) * np.exp(1j * theta_pll)


def current_angle(i_d, i_q, theta_pll):
    if i_d == 0 and i_q == 0:
        return theta_pll
    return theta_pll + math.atan2(-i_q, -i_d)


def solve_operating_point(params: GflParams, terminal: Phasor, p_inject, q_inject):
    """Steady currents and angles for a dispatch (P, Q) at a terminal voltage."""
    u = float(terminal.magnitude)
    if not u > 0:
        raise GflModelError("terminal voltage magnitude must be > 0")
    i_d = -float(p_inject) / u
    i_q = float(q_inject) / u
    if math.hypot(i_d, i_q) > params.current_limit:
        raise GflModelError(
            f"required current {math.hypot(i_d, i_q):.4f} pu exceeds limit {params.current_limit} pu")
    th = terminal.angle
    return GflOperatingPoint(float(p_inject), float(q_inject), u, th, th,
                             current_angle(i_d, i_q, th), i_d, i_q)


def active_power(u, theta_u, i_mag, theta_i):
    """Terminal active power from voltage and current phasor components."""
    return u * i_mag * math.cos(theta_u - theta_i)


def linearization_coefficients(op: GflOperatingPoint) -> LinearizationCoeffs:
    """Exact first derivatives of the PLL detector, phase transform and power map."""
    i2 = op.i_d ** 2 + op.i_q ** 2
    if i2 == 0:
        raise GflModelError("linearization needs a non-zero current operating point")
    d = op.theta_u - op.theta_i
    i_mag = math.sqrt(i2)
    c_pll = op.u * math.cos(op.theta_u - op.theta_pll)
    c_pi = -op.i_q / i2
    c_ei = op.u * (op.i_d / i_mag) * math.cos(d)
    c_ep = -op.u * i_mag * math.sin(d)
    return LinearizationCoeffs(c_pll, c_pi, c_ei, c_ep)


def printed_power_coefficients(op: GflOperatingPoint):
    """The (c_ei, c_ep) expressions in their originally published form.

    Kept for reporting only; they disagree with the derivatives of the power
    map (see ``linearization_coefficients``).
    """
    i2 = op.i_d ** 2 + op.i_q ** 2
    d = op.theta_u - op.theta_i
    return (-op.u * op.i_d * math.cos(d) / i2, op.u * math.sqrt(i2) * math.sin(d))


# -- rational functions ----------------------------------------------------

def _trim(p):
    p = np.atleast_1d(np.asarray(p, dtype=float))
    nz = np.flatnonzero(p != 0.0)
    return p[nz[0]:] if nz.size else np.zeros(1)


@dataclass(frozen=True)
class Rational:
    """num(s)/den(s), coefficients highest power first."""

    num: np.ndarray
    den: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "num", _trim(self.num))
        object.__setattr__(self, "den", _trim(self.den))
        if not np.any(self.den):
            raise GflModelError("rational function with zero denominator")

    def __mul__(self, other):
        if isinstance(other, Rational):
            return Rational(np.polymul(self.num, other.num), np.polymul(self.den, other.den))
        return Rational(self.num * other, self.den)

    __rmul__ = __mul__

    def __add__(self, other):
        if not isinstance(other, Rational):
            other = Rational([other], [1.0])
        return Rational(np.polyadd(np.polymul(self.num, other.den), np.polymul(other.num, self.den)),
                        np.polymul(self.den, other.den))

    def cancel_origin(self):
        """Remove common factors of s."""
        num, den = self.num, self.den
        while len(num) > 1 and len(den) > 1 and num[-1] == 0 and den[-1] == 0:
            num, den = num[:-1], den[:-1]
        return Rational(num, den)

    def monic(self):
        lead = self.den[0]
        if lead == 0 or not math.isfinite(lead):
            raise GflModelError("vanishing leading denominator coefficient")
        return Rational(self.num / lead, self.den / lead)

    def __call__(self, s):
        return np.polyval(self.num, s) / np.polyval(self.den, s)

    @property
    def degrees(self):
        return len(self.num) - 1 if np.any(self.num) else -1, len(self.den) - 1


@dataclass(frozen=True)
class GflTransferFunctions:
    j_id: Rational
    j_pll: Rational
    c_pi: float

    def theta_i(self, s):
        """Delta theta_I / Delta P: c_pi * J_id + J_pll."""
        return self.c_pi * self.j_id(s) + self.j_pll(s)


def assemble_transfer_functions(params: GflParams, coeffs: LinearizationCoeffs):
    m = params.inertia_m
    if coeffs.c_ep == 0:
        raise GflModelError("c_ep = 0 (zero reactive current): PLL branch is not defined")
    j_id = Rational([params.kp_dc, params.ki_dc], [m, 0.0, 0.0]).cancel_origin().monic()
    # PLL: s^2 dtheta_pll = c_pll (Kp s + Ki) (dtheta_U - dtheta_pll)
    g = Rational(coeffs.c_pll * np.array([params.kp_pll, params.ki_pll]), [1.0, 0.0, 0.0])
    # the power relation gives dtheta_U = dtheta_I + (dP - c_ei di_d)/c_ep and
    # dtheta_I = c_pi di_d + dtheta_pll, so the PLL error reduces to
    # c_pi di_d + (dP - c_ei di_d)/c_ep and the algebraic loop closes exactly
    inner = (j_id * (coeffs.c_pi * coeffs.c_ep - coeffs.c_ei)) + 1.0
    j_pll = (g * inner * (1.0 / coeffs.c_ep)).cancel_origin().monic()
    return GflTransferFunctions(j_id, j_pll, coeffs.c_pi)


# -- equivalent parameters ---------------------------------------------------

@dataclass(frozen=True)
class SwingComponent:
    """One branch s*J(s)/omega0 = L - 1/(2 H s - J_F(s))."""

    h: float
    l: float
    gov: Rational  # J_F(s), denominator monic


def decompose_swing(j: Rational, omega0):
    f = Rational(np.polymul(j.num, [1.0, 0.0]) / omega0, j.den).cancel_origin()
    dn, dd = f.degrees
    if dn != dd:
        raise GflModelError(
            f"s*J(s)/omega0 must have equal numerator/denominator degree, got {dn} and {dd}")
    l_coef = f.num[0] / f.den[0]
    rem = _trim(np.polysub(f.num, l_coef * f.den))
    if len(rem) > 1:
        rem[0] = rem[0] if abs(rem[0]) > 1e-14 * np.max(np.abs(f.num)) else 0.0
        rem = _trim(rem)
    if not np.any(rem):
        return SwingComponent(math.inf, float(l_coef), Rational([0.0], [1.0]))
    if len(rem) != len(f.den) - 1:
        raise GflModelError(
            f"residual degree {len(rem) - 1} is not one below denominator degree {len(f.den) - 1}")
    q, r = np.polydiv(f.den, rem)
    # -den/rem = -(q1 s + q0) - r/rem = -(2 H s - J_F)
    h = -q[0] / 2.0
    gov = Rational(np.polyadd(q[1] * rem, r), rem).monic()
    return SwingComponent(float(h), float(l_coef), gov)


@dataclass(frozen=True)
class GflEquivalent:
    h_id: float
    h_pll: float
    h: float
    l_id: float
    l_pll: float
    l: float
    a2: float
    a1: float
    a0: float
    b1: float
    b0: float
    omega_osc_hz: float
    omega_osc_damped_hz: float
    c_pi: float
    gov_id: Rational = field(repr=False, default=None)
    gov_pll: Rational = field(repr=False, default=None)

    def as_dict(self):
        return {k: getattr(self, k) for k in (
            "c_pi", "h_id", "h_pll", "h", "l_id", "l_pll", "l",
            "a2", "a1", "a0", "b1", "b0", "omega_osc_hz", "omega_osc_damped_hz")}


def combine_inertia(c_pi, h_id, h_pll):
    inv_id = 0.0 if math.isinf(h_id) else c_pi / h_id
    inv_pll = 0.0 if math.isinf(h_pll) else 1.0 / h_pll
    tot = inv_id + inv_pll
    return math.inf if tot == 0 else 1.0 / tot


def combine_proportional(c_pi, l_id, l_pll):
    return c_pi * l_id + l_pll


def oscillation_frequency(b0, b1):
    """Printed form (1/4pi) sqrt(4 b0 - b1) in Hz (nan if the radicand is negative)."""
    rad = 4.0 * b0 - b1
    return math.sqrt(rad) / (4.0 * math.pi) if rad >= 0 else math.nan


def damped_frequency(b0, b1):
    """Damped natural frequency of s^2 + b1 s + b0 in Hz (nan if overdamped)."""
    disc = 4.0 * b0 - b1 * b1
    return math.sqrt(disc) / (4.0 * math.pi) if disc > 0 else math.nan


def extract_equivalents(tfs: GflTransferFunctions, omega0=OMEGA0_60HZ) -> GflEquivalent:
    cid = decompose_swing(tfs.j_id, omega0)
    cpl = decompose_swing(tfs.j_pll, omega0)
    num, den = cpl.gov.num, cpl.gov.den
    if len(den) != 3:
        raise GflModelError(f"PLL governor denominator degree {len(den) - 1}, expected 2")
    num = np.concatenate([np.zeros(3 - len(num)), num])
    b1, b0 = den[1], den[2]
    return GflEquivalent(
        h_id=cid.h, h_pll=cpl.h, h=combine_inertia(tfs.c_pi, cid.h, cpl.h),
        l_id=cid.l, l_pll=cpl.l, l=combine_proportional(tfs.c_pi, cid.l, cpl.l),
        a2=float(num[0]), a1=float(num[1]), a0=float(num[2]), b1=float(b1), b0=float(b0),
        omega_osc_hz=oscillation_frequency(b0, b1), omega_osc_damped_hz=damped_frequency(b0, b1),
        c_pi=tfs.c_pi, gov_id=cid.gov, gov_pll=cpl.gov)


def governor_coefficients_closed_form(params: GflParams, coeffs: LinearizationCoeffs,
                                      omega0=OMEGA0_60HZ):
    """(a2, a1, b1, b0) from the published closed-form expressions."""
    ce, cp, ci, cl = coeffs.c_ei, coeffs.c_ep, coeffs.c_pi, coeffs.c_pll
    kpd, kid, kpp, kip = params.kp_dc, params.ki_dc, params.kp_pll, params.ki_pll
    m = params.inertia_m
    base = ce * kpd * kpp - ci * cp * kpd * kpp - m * kip
    j_coef = cl * base ** 2
    pre = -omega0 * cp * m / j_coef
    a2 = pre * (-ce * kpd * kip + ci * cp * kpd * kip - ce * kid * kpp + ci * cp * kid * kpp)
    a1 = pre * (-ce * kid * kip + ci * cp * kid * kip)
    b1 = cl / j_coef * (ce * kpd * kip - ci * cp * kpd * kip + ce * kid * kpp
                        - ci * cp * kid * kpp) * base
    b0 = cl / j_coef * (ce * kid * kip - ci * cp * kid * kip) * base
    return a2, a1, b1, b0


def gfl_equivalent(params: GflParams, op: GflOperatingPoint, omega0=OMEGA0_60HZ):
    coeffs = linearization_coefficients(op)
    return extract_equivalents(assemble_transfer_functions(params, coeffs), omega0)


# -- state-space realization -------------------------------------------------

OUTPUTS = ("theta_i", "omega_f", "omega_c_id", "omega_c_pll", "omega_d_id",
           "omega_d_pll", "i_d", "p_mec_pll")


@dataclass(frozen=True)
class GflLinearModel:
    """Swing-form realization of Delta P (converter base) -> GFL outputs.

    Output rows follow ``OUTPUTS``; ``omega_f = c_pi*(omega_c_id + omega_d_id)
    + omega_c_pll + omega_d_pll`` and ``theta_i`` is the current-angle
    deviation in rad.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    state_labels: tuple
    equivalent: GflEquivalent

    @property
    def n_states(self):
        return self.a.shape[0]

    def output(self, name):
        return OUTPUTS.index(name)

    def frequency_response(self, s, row=0):
        s = np.atleast_1d(s)
        eye = np.eye(self.n_states)
        out = np.empty(s.shape, dtype=complex)
        for k, sk in enumerate(s):
            x = np.linalg.solve(sk * eye - self.a, self.b[:, 0])
            out[k] = self.c[row] @ x + self.d[row, 0]
        return out


def realize_linear_model(tfs: GflTransferFunctions, omega0=OMEGA0_60HZ) -> GflLinearModel:
    """Realize both branches in swing form.

    With J_F = N/D (D monic of degree n), ``2 H s - J_F = 2 H s^(n+1) / D``,
    so the continuous component is ``omega_c = -D(s) / (2 H s^(n+1)) dP``.
    It is realized as a chain of n+1 integrators driven by dP, which keeps
    the poles exactly at the origin; the equivalent mechanical power follows
    as ``2 H d(omega_c)/dt + dP``.  The angle state integrates
    ``omega0 * (omega_c + L dP)``.
    """
    eq = extract_equivalents(tfs, omega0)
    c_pi = tfs.c_pi
    row = {k: OUTPUTS.index(k) for k in OUTPUTS}
    branches = (("id", "dc", eq.h_id, eq.l_id, eq.gov_id, c_pi),
                ("pll", "pll", eq.h_pll, eq.l_pll, eq.gov_pll, 1.0))
    sizes = [(0 if math.isinf(h) else len(gov.den)) + 1 for _, _, h, _, gov, _ in branches]
    n = sum(sizes)
    a = np.zeros((n, n))
    b = np.zeros((n, 1))
    c = np.zeros((len(OUTPUTS), n))
    d = np.zeros((len(OUTPUTS), 1))
    labels = []
    k0 = 0
    for (name, tag, h, l_coef, gov, scale), size in zip(branches, sizes):
        phi = k0 + size - 1
        if size > 1:
            m = size - 1  # chain length n + 1
            dcoef = gov.den  # [1, d1, ..., dn]
            for k in range(m - 1):
                a[k0 + k, k0 + k + 1] = 1.0
            b[k0 + m - 1, 0] = 1.0
            # D(s) z1 = sum_j dcoef[j] * z_(m - j)
            wc = np.zeros(n)
            for jj, dj in enumerate(dcoef):
                wc[k0 + m - 1 - jj] = dj
            wc /= -2.0 * h
            a[phi] += omega0 * wc
            c[row[f"omega_c_{name}"]] = wc
            c[row["omega_f"]] += scale * wc
            if name == "pll":
                # 2 H d(omega_c)/dt + dP = -(d1 z_m + ... + dn z_2)
                for jj, dj in enumerate(dcoef[1:], start=1):
                    c[row["p_mec_pll"], k0 + m - jj] = -dj
            labels += [f"{tag}_int_{k + 1}" for k in range(m)]
        labels.append(f"phi_{name}")
        b[phi, 0] += omega0 * l_coef
        d[row[f"omega_d_{name}"], 0] = l_coef
        d[row["omega_f"], 0] += scale * l_coef
        c[row["theta_i"], phi] = scale
        if name == "id":
            c[row["i_d"], phi] = 1.0
        k0 += size
    return GflLinearModel(a, b, c, d, tuple(labels), eq)


def build_linear_model(params: GflParams, op: GflOperatingPoint, omega0=OMEGA0_60HZ):
    coeffs = linearization_coefficients(op)
    return realize_linear_model(assemble_transfer_functions(params, coeffs), omega0)


# -- nonlinear simplified model ----------------------------------------------

NONLINEAR_STATES = ("u_dc", "xi_dc", "zeta_pll", "theta_pll")


def nonlinear_initial_state(params: GflParams, op: GflOperatingPoint):
    return np.array([params.dc_voltage_setpoint, op.i_d, 0.0, op.theta_pll])


def nonlinear_current(x, params: GflParams, op: GflOperatingPoint, i_q=None):
    """(i_d, complex injected current) for a nonlinear state vector."""
    i_d = params.kp_dc * (params.dc_voltage_setpoint - x[0]) + x[1]
    return i_d, injected_current(i_d, op.i_q if i_q is None else i_q, x[3])


def nonlinear_gfl_derivatives(x, terminal, params: GflParams, op: GflOperatingPoint,
                              p_in=None, omega0=OMEGA0_60HZ, i_q=None):
    """State derivatives and outputs of the simplified nonlinear GFL.

    ``terminal`` is the complex terminal voltage (or a Phasor).  Returns
    ``(dx, out)`` with ``out`` holding i_d, the complex current, its magnitude
    and angle, the active power and the PLL frequency in pu.  ``i_q``
    overrides the frozen q-axis current.
    """
    u_dc, xi_dc, zeta, th_pll = x
    if u_dc <= 0:
        raise GflModelError(f"DC-link voltage collapsed ({u_dc:.4g} pu)")
    if isinstance(terminal, Phasor):
        terminal = terminal.to_complex()
    p_in = op.p if p_in is None else p_in
    err = params.dc_voltage_setpoint - u_dc
    i_d = params.kp_dc * err + xi_dc
    i_q = op.i_q if i_q is None else i_q
    cur = injected_current(i_d, i_q, th_pll)
    p_ele = (terminal * np.conj(cur)).real
    u_q = (terminal * np.exp(-1j * th_pll)).imag
    w_pll = params.kp_pll * u_q + zeta
    dx = np.array([
        (p_in - p_ele) / (u_dc * params.dc_capacitance),
        params.ki_dc * err,
        params.ki_pll * u_q,
        w_pll,
    ])
    out = {"i_d": i_d, "i_q": i_q, "current": cur, "i_mag": abs(cur),
           "theta_i": th_pll + math.atan2(-i_q, -i_d) if (i_d or i_q) else th_pll,
           "p_ele": p_ele, "omega_pll": 1.0 + w_pll / omega0}
    return dx, out
