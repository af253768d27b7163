"""Case files and run manifests (YAML), with line-precise validation errors.

Field names carry their units (``inertia_h_s``, ``x_pu``); every per-unit
value is on the system base declared in ``system`` unless the field lives in
a converter block, where the converter rating is the base.
"""
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
import re
from typing import Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .gfl import GflParams
from .network import Branch, NetworkCase
from .sg import GovernorParams, SgParams


class CaseError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SystemSection(_Strict):
    base_mva: float = Field(100.0, gt=0)
    nominal_frequency_hz: float = Field(60.0, gt=0)


class BusEntry(_Strict):
    id: int
    name: str = ""


class BranchEntry(_Strict):
    from_bus: int
    to_bus: int
    r_pu: float = 0.0
    x_pu: float
    b_pu: float = Field(0.0, description="total line charging susceptance")


class LoadEntry(_Strict):
    """Constant-admittance load y = g + jb (consuming: g > 0, inductive b < 0)."""

    bus: int
    g_pu: float = 0.0
    b_pu: float = 0.0


class GovernorEntry(_Strict):
    droop_gain_pu: float = Field(0.0, ge=0)
    time_constant_s: float = Field(1.0, gt=0)
    enabled: bool = False


class SgEntry(_Strict):
    name: str
    bus: int
    xd_prime_pu: float = Field(gt=0)
    inertia_h_s: float = Field(gt=0)
    rated_power_pu: float = Field(gt=0)
    emf_pu: float = Field(gt=0)
    governor: GovernorEntry = GovernorEntry()


class GflEntry(_Strict):
    name: str
    bus: int
    rated_power_pu: float = Field(gt=0)
    dc_capacitance_pu: float = Field(gt=0)
    dc_voltage_setpoint_pu: float = Field(1.0, gt=0)
    kp_dc: float = Field(ge=0)
    ki_dc: float = Field(ge=0)
    kp_pll: float = Field(ge=0)
    ki_pll: float = Field(ge=0)
    x_filter_pu: float = Field(0.1, ge=0)
    current_limit_pu: float = Field(2.0, gt=0)


class SgDispatch(_Strict):
    name: str
    p_pu: Optional[float] = None


class GflDispatch(_Strict):
    name: str
    p_pu: float
    q_pu: float = 0.0


class DispatchSection(_Strict):
    reference_sg: str
    sg: list[SgDispatch] = []
    gfl: list[GflDispatch] = []
    voltage_setpoints_pu: dict[int, float] = {}
    slack_tolerance_pu: float = Field(0.05, ge=0)


class CaseFile(_Strict):
    name: str = "case"
    provisional: list[str] = []
    system: SystemSection = SystemSection()
    buses: list[BusEntry]
    branches: list[BranchEntry]
    loads: list[LoadEntry] = []
    sg: list[SgEntry] = Field(min_length=1)
    gfl: list[GflEntry] = []
    dispatch: DispatchSection

    @model_validator(mode="after")
    def _references(self):
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise ValueError("buses: duplicate bus ids")
        known = set(ids)
        refs = [("branches", k, "from_bus", br.from_bus) for k, br in enumerate(self.branches)]
        refs += [("branches", k, "to_bus", br.to_bus) for k, br in enumerate(self.branches)]
        refs += [("loads", k, "bus", ld.bus) for k, ld in enumerate(self.loads)]
        refs += [("sg", k, "bus", g.bus) for k, g in enumerate(self.sg)]
        refs += [("gfl", k, "bus", g.bus) for k, g in enumerate(self.gfl)]
        for sec, k, fld, bus in refs:
            if bus not in known:
                raise ValueError(f"{sec}.{k}.{fld}: dangling bus reference {bus}")
        for v in self.dispatch.voltage_setpoints_pu:
            if v not in known:
                raise ValueError(f"dispatch.voltage_setpoints_pu.{v}: dangling bus reference {v}")
        sg_names = [g.name for g in self.sg]
        gfl_names = [g.name for g in self.gfl]
        if len(set(sg_names + gfl_names)) != len(sg_names) + len(gfl_names):
            raise ValueError("sg: generator names must be unique across SG and GFL")
        if self.dispatch.reference_sg not in sg_names:
            raise ValueError(f"dispatch.reference_sg: unknown SG {self.dispatch.reference_sg!r}")
        for k, d in enumerate(self.dispatch.sg):
            if d.name not in sg_names:
                raise ValueError(f"dispatch.sg.{k}.name: unknown SG {d.name!r}")
        if sorted(d.name for d in self.dispatch.gfl) != sorted(gfl_names):
            raise ValueError("dispatch.gfl: must list every GFL exactly once")
        missing = set(sg_names) - {d.name for d in self.dispatch.sg} - {self.dispatch.reference_sg}
        if missing:
            raise ValueError(f"dispatch.sg: no active power for {sorted(missing)}")
        return self

    # -- conversion -------------------------------------------------------------
    def bus_index(self, bus_id):
        return [b.id for b in self.buses].index(bus_id)

    def to_network(self) -> NetworkCase:
        idx = {b.id: k for k, b in enumerate(self.buses)}
        branches = [Branch.from_impedance(idx[b.from_bus], idx[b.to_bus], b.r_pu, b.x_pu, b.b_pu)
                    for b in self.branches]
        loads = np.zeros(len(self.buses), dtype=complex)
        for ld in self.loads:
            loads[idx[ld.bus]] += complex(ld.g_pu, ld.b_pu)
        return NetworkCase(len(self.buses), branches, loads,
                           tuple(idx[g.bus] for g in self.sg),
                           tuple(g.xd_prime_pu for g in self.sg),
                           tuple(idx[g.bus] for g in self.gfl),
                           self.system.base_mva, self.system.nominal_frequency_hz)

    def to_system(self):
        from .sim.system import StudySystem
        sgs = [SgParams(g.inertia_h_s, g.rated_power_pu, g.emf_pu,
                        GovernorParams(g.governor.droop_gain_pu, g.governor.time_constant_s,
                                       g.governor.enabled)) for g in self.sg]
        gfls = [GflParams(g.dc_capacitance_pu, g.kp_dc, g.ki_dc, g.kp_pll, g.ki_pll,
                          g.dc_voltage_setpoint_pu, g.rated_power_pu, g.x_filter_pu,
                          g.current_limit_pu) for g in self.gfl]
        p_sg = {d.name: d.p_pu for d in self.dispatch.sg}
        sg_disp = [p_sg.get(g.name) or 0.0 for g in self.sg]
        gd = {d.name: (d.p_pu, d.q_pu) for d in self.dispatch.gfl}
        ref = [g.name for g in self.sg].index(self.dispatch.reference_sg)
        return StudySystem(self.to_network(), sgs, gfls, sg_disp,
                           [gd[g.name] for g in self.gfl], ref)


# -- disturbance / manifest ------------------------------------------------------------


class DisturbanceEntry(_Strict):
    bus: int
    g_pu: float = 0.0
    b_pu: float = 0.0
    time_s: float = Field(1.0, ge=0)
    kind: Literal["load_step"] = "load_step"


class SimSection(_Strict):
    dt_s: float = Field(0.002, gt=0)
    duration_s: float = Field(10.0, gt=0)
    integrator: Literal["rk4", "rk45"] = "rk4"
    abs_tol: float = Field(1e-9, gt=0)
    rel_tol: float = Field(1e-9, gt=0)


class SweepEntry(_Strict):
    path: str
    values: list[float] = Field(min_length=1)
    quantities: Optional[list[str]] = None


VARIANT_NAMES = ("multi", "proposed", "reference", "sfr", "rotor")


class RunManifest(_Strict):
    case: str
    variants: list[Literal["multi", "proposed", "reference", "sfr", "rotor"]] = Field(
        ["proposed", "reference", "sfr"], min_length=1)
    disturbance: Optional[DisturbanceEntry] = None
    sim: SimSection = SimSection()
    output_dir: str = "out"
    sweeps: list[SweepEntry] = []
    compare: bool = False
    signed_error_index: bool = False
    coi_emf_mode: Literal["complex", "polar"] = "complex"
    reference_q_axis: Literal["fixed", "voltage"] = "fixed"
    rotor_x_filter_error_pct: float = 0.0
    seed: Optional[int] = None


# -- YAML with positions -----------------------------------------------------------------


def _locate(node, loc):
    """Deepest YAML node along a pydantic error location."""
    for key in loc:
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for k, v in node.value:
                if str(k.value) == str(key):
                    nxt = v
                    break
            if nxt is None:
                return node
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            return node
    return node


def _load(text, source):
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise CaseError(f"{source}: invalid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise CaseError(f"{source}: top level must be a mapping")
    return root, data


_PATH_MSG = re.compile(r"Value error, ([A-Za-z_][\w]*(?:\.[\w]+)*): (.*)$", re.S)


def _validate(model, text, source):
    root, data = _load(text, source)
    try:
        return model.model_validate(data)
    except ValidationError as exc:
        msgs = []
        for err in exc.errors():
            loc = err["loc"]
            msg = err["msg"]
            m = _PATH_MSG.match(msg) if not loc else None
            if m:
                # model-level check that names the offending field itself
                loc = tuple(int(p) if p.isdigit() else p for p in m.group(1).split("."))
                msg = m.group(2)
            node = _locate(root, loc)
            line = node.start_mark.line + 1 if node is not None else "?"
            field = ".".join(str(p) for p in loc) or "<root>"
            msgs.append(f"{source}:{line}: {field}: {msg}")
        raise CaseError("\n".join(msgs)) from None


def _defaults(model, prefix=""):
    """Dotted names of fields that were filled from defaults."""
    out = []
    for name, info in type(model).model_fields.items():
        path = f"{prefix}{name}"
        value = getattr(model, name)
        if name not in model.model_fields_set:
            out.append(path)
        elif isinstance(value, BaseModel):
            out.extend(_defaults(value, path + "."))
        elif isinstance(value, list):
            for k, v in enumerate(value):
                if isinstance(v, BaseModel):
                    out.extend(_defaults(v, f"{path}[{k}]."))
    return out


@dataclass(frozen=True)
class Parsed:
    model: BaseModel
    defaults: tuple
    path: Optional[Path] = None


def parse_case_text(text, source="<string>") -> Parsed:
    m = _validate(CaseFile, text, source)
    return Parsed(m, tuple(_defaults(m)))


def parse_case(path) -> Parsed:
    p = Path(path)
    if not p.exists():
        raise CaseError(f"{p}: no such case file")
    parsed = parse_case_text(p.read_text(), str(p))
    return Parsed(parsed.model, parsed.defaults, p)


def serialize(model: BaseModel) -> str:
    return yaml.safe_dump(model.model_dump(mode="json"), sort_keys=False, default_flow_style=None)


def parse_manifest(path) -> Parsed:
    p = Path(path)
    if not p.exists():
        raise CaseError(f"{p}: no such manifest")
    m = _validate(RunManifest, p.read_text(), str(p))
    return Parsed(m, tuple(_defaults(m)), p)


def resolve_case_path(manifest: Parsed):
    case = Path(manifest.model.case)
    if case.is_absolute() or manifest.path is None:
        return case
    local = manifest.path.parent / case
    if local.exists():
        return local
    bundled = bundled_case_path(case.name)
    return bundled if bundled.exists() else local


def bundled_case_path(name):
    """Path of a case shipped with the package (``wecc9_gfl``, ``two_bus``)."""
    fname = name if name.endswith(".yaml") else f"{name}.yaml"
    return Path(str(resources.files("gflcoi") / "data" / fname))


def to_disturbance(case: CaseFile, d: Optional[DisturbanceEntry]):
    from .sim.core import Disturbance
    if d is None:
        return None
    try:
        bus = case.bus_index(d.bus)
    except ValueError:
        raise CaseError(f"disturbance.bus: dangling bus reference {d.bus}") from None
    return Disturbance(bus, complex(d.g_pu, d.b_pu), d.time_s, d.kind)


def check_dispatch(case: CaseFile, system=None):
    """Balance and voltage checks on the solved equilibrium.

    The reference SG takes up the slack; when its active power is declared,
    the solved value must be within ``slack_tolerance_pu``.  Declared
    voltage set points are checked at GFL terminals with the same tolerance.
    Returns (equilibrium, list of messages); raises CaseError on violation.
    """
    from .sim.system import system_equilibrium
    system = case.to_system() if system is None else system
    eq = system_equilibrium(system)
    tol = case.dispatch.slack_tolerance_pu
    notes = []
    ref = case.dispatch.reference_sg
    declared = {d.name: d.p_pu for d in case.dispatch.sg}
    k_ref = [g.name for g in case.sg].index(ref)
    p_ref = float(eq.p_mech[k_ref])
    notes.append(f"slack {ref} active power {p_ref:.6f} pu")
    if declared.get(ref) is not None and abs(p_ref - declared[ref]) > tol:
        raise CaseError(f"dispatch does not balance: {ref} needs {p_ref:.4f} pu, "
                        f"declared {declared[ref]:.4f} pu (tolerance {tol})")
    gfl_bus = {g.bus: k for k, g in enumerate(case.gfl)}
    for bus, v in case.dispatch.voltage_setpoints_pu.items():
        if bus in gfl_bus:
            u = abs(eq.u_gfl[gfl_bus[bus]])
            if abs(u - v) > tol:
                raise CaseError(f"GFL terminal at bus {bus} solves to {u:.4f} pu, set point {v}")
            notes.append(f"bus {bus} terminal voltage {u:.6f} pu (set point {v})")
    return eq, notes
