"""Independent oracles for the GFL model: finite differences of the nonlinear maps."""
import math

import numpy as np

from gflcoi.gfl import GflOperatingPoint, GflParams, nonlinear_gfl_derivatives, nonlinear_initial_state


def terminal_angle_for_power(p, x, params, op):
    """Terminal angle (|U| frozen) at which the converter delivers ``p``."""
    _, out = nonlinear_gfl_derivatives(x, op.u * np.exp(1j * op.theta_u), params, op)
    i_mag, th_i = out["i_mag"], out["theta_i"]
    c = np.clip(p / (op.u * i_mag), -1.0, 1.0)
    # keep the branch of the operating point (sign of theta_u - theta_i)
    sign = 1.0 if math.sin(op.theta_u - op.theta_i) >= 0 else -1.0
    return th_i + sign * math.acos(c)


def power_driven_rhs(x, p, params: GflParams, op: GflOperatingPoint):
    th_u = terminal_angle_for_power(p, x, params, op)
    dx, out = nonlinear_gfl_derivatives(x, op.u * np.exp(1j * th_u), params, op)
    return dx, out


def block_diagram_rhs(x, p, params, op):
    """Power-driven block diagram written independently with complex-safe numpy calls.

    Valid for i_d < 0 (generating), where the current angle is
    theta_pll + arctan(i_q / i_d).  Returns (dx, theta_i).
    """
    u_dc, xi, zeta, th_pll = x
    err = params.dc_voltage_setpoint - u_dc
    i_d = params.kp_dc * err + xi
    i_q = op.i_q
    i_mag = np.sqrt(i_d * i_d + i_q * i_q)
    th_i = th_pll + np.arctan(i_q / i_d)
    sign = 1.0 if math.sin(op.theta_u - op.theta_i) >= 0 else -1.0
    th_u = th_i + sign * np.arccos(p / (op.u * i_mag))
    u_q = op.u * np.sin(th_u - th_pll)
    dx = np.array([(op.p - p) / (u_dc * params.dc_capacitance), params.ki_dc * err,
                   params.ki_pll * u_q, params.kp_pll * u_q + zeta])
    return dx, th_i


def numerical_linearization(params, op, h=1e-30):
    """(A, B, C, D) of dP -> d theta_I by complex-step differentiation."""
    if op.i_d >= 0:
        raise ValueError("oracle covers generating operating points only")
    x0 = nonlinear_initial_state(params, op).astype(complex)
    n = x0.size
    a = np.empty((n, n))
    c = np.empty((1, n))
    for k in range(n):
        x = x0.copy()
        x[k] += 1j * h
        dx, th = block_diagram_rhs(x, op.p, params, op)
        a[:, k] = dx.imag / h
        c[0, k] = th.imag / h
    dx, th = block_diagram_rhs(x0, op.p + 1j * h, params, op)
    return a, b_col(dx.imag / h), c, np.array([[th.imag / h]])


def b_col(v):
    return np.asarray(v, dtype=float).reshape(-1, 1)


def frequency_response(a, b, c, d, s):
    eye = np.eye(a.shape[0])
    return np.array([(c @ np.linalg.solve(sk * eye - a, b) + d)[0, 0] for sk in np.atleast_1d(s)])


def rk4_path(rhs, x0, dt, n):
    xs = np.empty((n + 1, x0.size))
    xs[0] = x = x0
    for k in range(n):
        k1 = rhs(x)
        k2 = rhs(x + 0.5 * dt * k1)
        k3 = rhs(x + 0.5 * dt * k2)
        k4 = rhs(x + dt * k3)
        x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        xs[k + 1] = x
    return xs


def fd_coefficients(op, h=1e-6):
    """Central differences of the PLL detector, phase transform and power map."""
    def detector(th_u):
        return op.u * math.sin(th_u - op.theta_pll)

    def phase(i_d):
        return op.theta_pll + math.atan2(-op.i_q, -i_d)

    def power(i_d, th_u):
        i_mag = math.hypot(i_d, op.i_q)
        return op.u * i_mag * math.cos(th_u - op.theta_i)

    return (
        (detector(op.theta_u + h) - detector(op.theta_u - h)) / (2 * h),
        (phase(op.i_d + h) - phase(op.i_d - h)) / (2 * h),
        (power(op.i_d + h, op.theta_u) - power(op.i_d - h, op.theta_u)) / (2 * h),
        (power(op.i_d, op.theta_u + h) - power(op.i_d, op.theta_u - h)) / (2 * h),
    )
