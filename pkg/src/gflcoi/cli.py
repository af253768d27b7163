"""Command-line entry point: validate, run, sweep, equivalents."""
import argparse
from concurrent.futures import ProcessPoolExecutor
import math
from pathlib import Path
import sys

import numpy as np

from . import analysis, caseio
from .gfl import gfl_equivalent, linearization_coefficients
from .sim import (SimConfig, VARIANTS, simulate_coi, simulate_multi_generator,
                  simulate_nonlinear_reference, simulate_rotor_motion_baseline,
                  simulate_sfr_baseline, system_equilibrium)

FAILURE_MARKER = "FAILED"
EXIT_OK, EXIT_SIM, EXIT_INPUT = 0, 1, 2


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v)) if math.isfinite(v) else str(float(v))
    return str(v)


def write_metrics(path, metrics):
    """Flat ``key=value`` text, one entry per line, in insertion order."""
    with open(path, "w") as fh:
        for k, v in metrics.items():
            fh.write(f"{k}={_fmt(v)}\n")


def read_metrics(path):
    out = {}
    for line in Path(path).read_text().splitlines():
        if line and not line.startswith("#"):
            k, _, v = line.partition("=")
            out[k] = v
    return out


# -- run -----------------------------------------------------------------------------


def _simulate(args):
    variant, system, dist, cfg, man, ref = args
    if variant == "multi":
        return simulate_multi_generator(system, dist, cfg)
    if variant == "proposed":
        return simulate_coi(system, dist, cfg, emf_mode=man.coi_emf_mode)
    if variant == "reference":
        return simulate_nonlinear_reference(system, dist, cfg, q_axis=man.reference_q_axis)
    if variant == "sfr":
        return simulate_sfr_baseline(system, dist, cfg, emf_mode=man.coi_emf_mode)
    if variant == "rotor":
        return simulate_rotor_motion_baseline(system, dist, cfg, man.rotor_x_filter_error_pct, ref)
    raise ValueError(f"unknown variant {variant!r}")


def _variant_metrics(name, res, metrics):
    m = analysis.frequency_metrics(res.time, res["omega_coi"], res.event_index)
    metrics[f"{name}.omega_coi.max_rocof_pu_per_s"] = m.max_rocof
    metrics[f"{name}.omega_coi.nadir_pu"] = m.nadir
    metrics[f"{name}.omega_coi.nadir_time_s"] = m.nadir_time_s
    metrics[f"{name}.omega_coi.steady_state_pu"] = m.steady_state


def _comparisons(results, signed, metrics):
    names = list(results)
    ref = "reference" if "reference" in results else names[0]
    signals = ["omega_coi"] + sorted(s for s in results[ref].signals
                                     if s.startswith("p_gfl") and s[5:].isdigit())
    for name in names:
        if name == ref:
            continue
        for sig in signals:
            e = analysis.compare_results(results[name], results[ref], sig, signed=signed,
                                         ref_name=ref)
            metrics[f"error.{name}.vs.{ref}.{sig}_pct"] = e.value_pct


def _parse_sweep_arg(text):
    path, _, vals = text.partition("=")
    if not vals:
        raise ValueError(f"--sweep expects path=v1,v2,... (got {text!r})")
    return caseio.SweepEntry(path=path.strip(), values=[float(v) for v in vals.split(",")])


def _run_sweeps(entries, system, dist, cfg, out, metrics, jobs):
    for entry in entries:
        quantities = entry.quantities or analysis.LOCAL_QUANTITIES
        spec = analysis.SweepSpec(entry.path, entry.values, quantities)
        for k in range(len(system.gfls)):
            base = analysis.sweep_base_from_system(system, k, dist, cfg)
            table = analysis.run_sweep(spec, base, jobs)
            tag = entry.path.replace(".", "_")
            table.to_csv(out / f"sweep_{tag}_gfl{k + 1}.csv")
            for q, flag in table.monotonic.items():
                metrics[f"sweep.{entry.path}.gfl{k + 1}.{q}.trend"] = flag
            metrics[f"sweep.{entry.path}.gfl{k + 1}.invalid_rows"] = sum(
                not r.valid for r in table.rows)


def _load(manifest_path, ns):
    man_p = caseio.parse_manifest(manifest_path)
    data = man_p.model.model_dump()
    if getattr(ns, "dt", None) is not None:
        data["sim"]["dt_s"] = ns.dt
    if getattr(ns, "duration", None) is not None:
        data["sim"]["duration_s"] = ns.duration
    if getattr(ns, "variants", None):
        data["variants"] = [v.strip() for v in ns.variants.split(",") if v.strip()]
    if getattr(ns, "out", None):
        data["output_dir"] = ns.out
    if getattr(ns, "signed_error_index", False):
        data["signed_error_index"] = True
    if getattr(ns, "compare", False):
        data["compare"] = True
    if getattr(ns, "seed", None) is not None:
        data["seed"] = ns.seed
    if getattr(ns, "sweep", None):
        data["sweeps"] = [_parse_sweep_arg(s).model_dump() for s in ns.sweep]
    try:
        # re-validate so command-line overrides obey the manifest schema
        man = caseio.RunManifest.model_validate(data)
    except caseio.ValidationError as exc:
        raise caseio.CaseError(f"invalid command-line override: {exc}") from None
    case_path = caseio.resolve_case_path(caseio.Parsed(man, (), man_p.path))
    case = caseio.parse_case(case_path).model
    system = case.to_system()
    dist = caseio.to_disturbance(case, man.disturbance)
    cfg = SimConfig(man.sim.dt_s, man.sim.duration_s, man.sim.integrator,
                    man.sim.abs_tol, man.sim.rel_tol)
    out = Path(man.output_dir)
    if not out.is_absolute() and man_p.path is not None and getattr(ns, "out", None) is None:
        out = man_p.path.parent / out
    return man, case, system, dist, cfg, out


def run_manifest(man, case, system, dist, cfg, out, jobs=1, sweeps_only=False):
    out.mkdir(parents=True, exist_ok=True)
    marker = out / FAILURE_MARKER
    if marker.exists():
        marker.unlink()
    metrics = {"case": case.name, "dt_s": cfg.dt_s, "duration_s": cfg.duration_s,
               "integrator": cfg.integrator}
    try:
        eq = system_equilibrium(system)
        for k, (g, op) in enumerate(zip(system.gfls, eq.ops)):
            e = gfl_equivalent(g, op, system.omega0)
            for key, v in e.as_dict().items():
                metrics[f"gfl{k + 1}.{key}"] = v
        if not sweeps_only:
            variants = list(dict.fromkeys(man.variants))
            if (man.compare or "rotor" in variants) and "reference" not in variants:
                variants.insert(0, "reference")
            results = {}
            if "reference" in variants:
                results["reference"] = _simulate(("reference", system, dist, cfg, man, None))
            rest = [v for v in variants if v != "reference"]
            tasks = [(v, system, dist, cfg, man, results.get("reference")) for v in rest]
            if jobs > 1 and len(tasks) > 1:
                with ProcessPoolExecutor(max_workers=jobs) as pool:
                    for v, res in zip(rest, pool.map(_simulate, tasks)):
                        results[v] = res
            else:
                for v, t in zip(rest, tasks):
                    results[v] = _simulate(t)
            results = {v: results[v] for v in variants}
            for name, res in results.items():
                res.to_csv(out / f"{name}.csv")
                _variant_metrics(name, res, metrics)
            if man.compare and len(results) > 1:
                _comparisons(results, man.signed_error_index, metrics)
        _run_sweeps(man.sweeps, system, dist, cfg, out, metrics, jobs)
    except Exception as exc:
        metrics["status"] = "failed"
        write_metrics(out / "metrics.txt", metrics)
        marker.write_text(f"{type(exc).__name__}: {exc}\n")
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SIM
    metrics["status"] = "ok"
    write_metrics(out / "metrics.txt", metrics)
    return EXIT_OK


# -- equivalents -------------------------------------------------------------------


def equivalents_report(system):
    """Rows laid out like the numeric-value table (COI frame, per GFL)."""
    eq = system_equilibrium(system)
    coi = system.coi_matrix()
    h_coi = sum(g.sh for g in system.sgs) / sum(g.rated_power_s for g in system.sgs)
    rows = [("H^Coi [s]", h_coi),
            ("G^eq' [pu]", coi.Y_eq[0, 0].real),
            ("B^eq' [pu]", coi.Y_eq[0, 0].imag)]
    for k, (g, op) in enumerate(zip(system.gfls, eq.ops)):
        n = k + 1
        e = gfl_equivalent(g, op, system.omega0)
        c = linearization_coefficients(op)
        rows += [(f"V_{n}^eq' [pu]", coi.T_eq[0, k].real),
                 (f"W_{n}^eq' [pu]", coi.T_eq[0, k].imag),
                 (f"R_{n}{n}^eq' [pu]", coi.Z_eq[k, k].real),
                 (f"X_{n}{n}^eq' [pu]", coi.Z_eq[k, k].imag),
                 (f"c_{n}^Pll", c.c_pll), (f"c_{n}^Pi", c.c_pi),
                 (f"c_{n}^Ei", c.c_ei), (f"c_{n}^Ep", c.c_ep),
                 (f"H_{n}^F,Id [s]", e.h_id), (f"H_{n}^F,Pll [s]", e.h_pll), (f"H_{n}^F [s]", e.h),
                 (f"L_{n}^F,Id [pu]", e.l_id), (f"L_{n}^F,Pll [pu]", e.l_pll), (f"L_{n}^F [pu]", e.l),
                 (f"a_{n}^Pll,2", e.a2), (f"a_{n}^Pll,1", e.a1),
                 (f"b_{n}^Pll,1", e.b1), (f"b_{n}^Pll,0", e.b0),
                 (f"w_{n}^Osc [Hz]", e.omega_osc_hz),
                 (f"w_{n}^Osc damped [Hz]", e.omega_osc_damped_hz)]
    return rows


# -- commands ------------------------------------------------------------------------


def cmd_validate(ns):
    parsed = caseio.parse_case(ns.case)
    case = parsed.model
    _, notes = caseio.check_dispatch(case)
    print(f"{ns.case}: ok ({len(case.buses)} buses, {len(case.sg)} SG, {len(case.gfl)} GFL)")
    for n in notes:
        print(f"  {n}")
    for d in parsed.defaults:
        print(f"  default: {d}")
    for p in case.provisional:
        print(f"  provisional: {p}")
    return EXIT_OK


def cmd_run(ns):
    man, case, system, dist, cfg, out = _load(ns.manifest, ns)
    code = run_manifest(man, case, system, dist, cfg, out, ns.jobs)
    print(f"{'ok' if code == 0 else 'failed'}: artifacts in {out}")
    return code


def cmd_sweep(ns):
    man, case, system, dist, cfg, out = _load(ns.manifest, ns)
    if not man.sweeps:
        print("error: no sweeps in manifest or on the command line", file=sys.stderr)
        return EXIT_INPUT
    code = run_manifest(man, case, system, dist, cfg, out, ns.jobs, sweeps_only=True)
    print(f"{'ok' if code == 0 else 'failed'}: sweep tables in {out}")
    return code


def cmd_equivalents(ns):
    system = caseio.parse_case(ns.case).model.to_system()
    rows = equivalents_report(system)
    width = max(len(r[0]) for r in rows)
    for name, v in rows:
        print(f"{name:<{width}}  {v: .4f}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="gflcoi", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    v = sub.add_parser("validate", help="check a case file and its equilibrium")
    v.add_argument("case")
    v.set_defaults(func=cmd_validate)
    e = sub.add_parser("equivalents", help="print network and GFL equivalent parameters")
    e.add_argument("case")
    e.set_defaults(func=cmd_equivalents)
    for name, func, helptext in (("run", cmd_run, "simulate the variants of a manifest"),
                                 ("sweep", cmd_sweep, "run parameter sweeps of a manifest")):
        r = sub.add_parser(name, help=helptext)
        r.add_argument("manifest")
        r.add_argument("--dt", type=float, help="step size [s]")
        r.add_argument("--duration", type=float, help="horizon [s]")
        r.add_argument("--variants", help="comma list of " + ",".join(VARIANTS))
        r.add_argument("--out", help="output directory")
        r.add_argument("--seed", type=int, help="reserved; the simulations are deterministic")
        r.add_argument("--signed-error-index", action="store_true",
                       help="integrate the signed instead of the absolute difference")
        r.add_argument("--compare", action="store_true", help="pairwise error indices")
        r.add_argument("--sweep", action="append", metavar="PATH=V1,V2,...",
                       help="parameter sweep, e.g. pll.ki=14,70,140 (repeatable)")
        r.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
        r.set_defaults(func=func)
    return p


def main(argv=None):
    ns = build_parser().parse_args(argv)
    try:
        return ns.func(ns)
    except caseio.CaseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, RuntimeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
