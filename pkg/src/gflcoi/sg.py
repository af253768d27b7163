"""Synchronous generator swing dynamics, droop governor and COI aggregation."""
from dataclasses import dataclass, field
import math

import numpy as np

from .network import Phasor


@dataclass(frozen=True)
class GovernorParams:
    droop_gain: float = 0.0
    time_constant_s: float = 1.0
    enabled: bool = False

    def __post_init__(self):
        if self.enabled and self.time_constant_s <= 0:
            raise ValueError("governor time constant must be positive")


@dataclass(frozen=True)
class SgParams:
    """Classical SG on the system base; ``inertia_h`` is on the machine base."""

    inertia_h: float
    rated_power_s: float
    emf_magnitude: float
    governor: GovernorParams = field(default_factory=GovernorParams)
    initial_angle: float = 0.0
    initial_mech_power: float = 0.0

    def __post_init__(self):
        if not self.inertia_h > 0:
            raise ValueError("inertia_h must be > 0")
        if not self.rated_power_s > 0:
            raise ValueError("rated_power_s must be > 0")
        if not self.emf_magnitude > 0:
            raise ValueError("emf_magnitude must be > 0")

    @property
    def sh(self):
        return self.rated_power_s * self.inertia_h


@dataclass(frozen=True)
class CoiParams:
    coi_inertia_h: float
    coi_rated_power_s: float
    coi_emf: Phasor
    member_weights: tuple
    governor: GovernorParams = field(default_factory=GovernorParams)


def swing_derivatives(angle, speed, p_mech, p_elec, inertia_h, rated_power_s=1.0,
                      omega0=2 * math.pi * 60):
    """Return (d_angle/dt, d_speed/dt); powers on the system base.

    Works elementwise on arrays.  Without damping the only restoring action
    comes from the governor.
    """
    d_speed = (p_mech - p_elec) / (2.0 * inertia_h * rated_power_s)
    d_angle = omega0 * (speed - 1.0)
    return d_angle, d_speed


def governor_derivative(p_gov, speed_deviation, gov: GovernorParams):
    """First-order droop lag: T dPg/dt = -K dw - Pg."""
    if not gov.enabled:
        return 0.0 * p_gov
    return (-gov.droop_gain * speed_deviation - p_gov) / gov.time_constant_s


def governor_power(speed_deviation, gov: GovernorParams, t=None):
    """Steady (t=None) or step-response (elapsed time t) governor output."""
    if not gov.enabled:
        return 0.0 * np.asarray(speed_deviation, dtype=float)
    steady = -gov.droop_gain * np.asarray(speed_deviation, dtype=float)
    if t is None:
        return steady
    return steady * (1.0 - np.exp(-np.asarray(t, dtype=float) / gov.time_constant_s))


def aggregate_coi(members, speeds=None, angles=None, emf_mode="complex"):
    """Aggregate SGs into one COI machine.

    ``emf_mode='complex'`` uses the complex mean of the EMF phasors;
    ``'polar'`` uses the arithmetic mean magnitude with the SH-weighted angle.
    Returns (CoiParams, coi_speed).  Governor gains add up; the COI time
    constant is the gain-weighted mean of the member time constants.
    """
    members = list(members)
    if not members:
        raise ValueError("aggregate_coi needs at least one member")
    n = len(members)
    speeds = np.ones(n) if speeds is None else np.asarray(speeds, dtype=float)
    angles = (np.array([m.initial_angle for m in members]) if angles is None
              else np.asarray(angles, dtype=float))
    # canonical order keeps the floating-point sums independent of input order
    order = sorted(range(n), key=lambda k: (members[k].sh, members[k].rated_power_s,
                                            members[k].emf_magnitude, angles[k], speeds[k]))
    members = [members[k] for k in order]
    speeds, angles = speeds[order], angles[order]
    sh = np.array([m.sh for m in members])
    s = np.array([m.rated_power_s for m in members])
    emag = np.array([m.emf_magnitude for m in members])
    h_coi = sh.sum() / s.sum()
    w_coi = float(np.dot(sh, speeds) / sh.sum())
    if emf_mode == "complex":
        e = complex(np.mean(emag * np.exp(1j * angles)))
        emf = Phasor.from_complex(e)
    elif emf_mode == "polar":
        emf = Phasor(float(emag.mean()), float(np.dot(sh, angles) / sh.sum()))
    else:
        raise ValueError(f"unknown emf_mode {emf_mode!r}")
    gains = np.array([m.governor.droop_gain if m.governor.enabled else 0.0 for m in members])
    if gains.sum() > 0:
        tc = np.array([m.governor.time_constant_s for m in members])
        gov = GovernorParams(float(gains.sum()), float(np.dot(gains, tc) / gains.sum()), True)
    else:
        gov = GovernorParams()
    params = CoiParams(float(h_coi), float(s.sum()), emf, tuple(sh.tolist()), gov)
    return params, w_coi
