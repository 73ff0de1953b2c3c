"""Command-line driver.

Subcommands: eigenstate, evolve, fsm, measure, sense, sweep, units.
Configuration is layered: built-in defaults, then an optional JSON config
file, then --set key=value overrides. Exit codes: 0 success, 1 usage or
configuration error, 2 numerical failure, 3 partial sweep.
"""
from __future__ import annotations

import argparse
import datetime
import glob
import json
import os
import sys

import numpy as np

from . import driver, fsm, measurement, sensing, snapio, units
from .gpe2d import ConvergenceError, PropagationError, solve_radial_eigenstate

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_PARTIAL = 3

DEFAULTS = {
    "ring_radius": 5.0,
    "g2d": 1.0,
    "p_plus": 0.7,
    "preset": "desk",
    "dt": None,            # preset decides unless overridden
    "t_final": None,       # sized from the predicted rotation unless set
    "omega_ext": 0.0,
    "target_rotation": driver.DEFAULT_TARGET_ROTATION,
    "n_images": 60,
    "observable_stride": 100,
    "l_values": [1, 3],
    "theta": float(np.pi / 16),
}


class CliError(Exception):
    pass


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(args) -> dict:
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                cfg.update(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config {args.config}: {exc}")
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise CliError(f"--set expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        cfg[key] = _parse_value(val)
    if getattr(args, "preset", None):
        cfg["preset"] = args.preset
    if cfg["preset"] not in driver.PRESETS:
        raise CliError(f"unknown preset {cfg['preset']!r}")
    if cfg["dt"] is None:
        cfg["dt"] = driver.PRESETS[cfg["preset"]]["dt"]
    return cfg


def _workers(args) -> int:
    env = os.environ.get("RINGBEC_WORKERS")
    if getattr(args, "workers", None):
        return args.workers
    if env:
        return max(int(env), 1)
    return 1


def _outdir(args) -> str:
    out = getattr(args, "outdir", None) or "."
    os.makedirs(out, exist_ok=True)
    return out


def _write_manifest(outdir, cfg, outputs, status="complete"):
    manifest = snapio.RunManifest(
        run_id=datetime.datetime.now(datetime.timezone.utc).strftime(
            "run_%Y%m%dT%H%M%S"),
        timestamp=datetime.datetime.now(datetime.timezone.utc).isoformat(),
        config=cfg, outputs=sorted(outputs), status=status,
        code_version=_version(),
    )
    manifest.write(os.path.join(outdir, "manifest.json"))


def _version() -> str:
    from . import __version__

    return f"ringbec-{__version__}"


def cmd_eigenstate(args) -> int:
    cfg = load_config(args)
    outdir = _outdir(args)
    outputs = []
    print("l    mu              iterations")
    for l in cfg["l_values"]:
        prof = solve_radial_eigenstate(l, cfg["ring_radius"], cfg["g2d"])
        print(f"{l:<4d} {prof.mu:<15.9f} {prof.iterations}")
        path = os.path.join(outdir, f"profile_l{l}.json")
        with open(path, "w") as fh:
            json.dump({
                "format": "ringbec-radial-profile-1",
                "l": l, "mu": prof.mu, "g2d": cfg["g2d"],
                "ring_radius": cfg["ring_radius"],
                "r": prof.r.tolist(), "f": prof.f.tolist(),
            }, fh)
            fh.write("\n")
        outputs.append(os.path.basename(path))
    _write_manifest(outdir, cfg, outputs)
    return EXIT_OK


def cmd_evolve(args) -> int:
    cfg = load_config(args)
    outdir = _outdir(args)
    setup = driver.prepare_run(cfg["ring_radius"], cfg["g2d"],
                               preset=cfg["preset"])
    imbalance = 2.0 * cfg["p_plus"] - 1.0
    if cfg["dt"] is None:
        cfg["dt"] = driver.PRESETS[cfg["preset"]]["dt"]
    om_pred = (fsm.omega_fsm(setup.params.U, setup.params.delta, imbalance)
               + cfg["omega_ext"])
    t_final = cfg["t_final"] or driver.sized_t_final(
        om_pred, cfg["target_rotation"])
    nsteps = int(round(t_final / cfg["dt"]))
    snap_stride = max(nsteps // int(cfg["n_images"]), 1)
    csv_path = os.path.join(outdir, "observables.csv")
    result = driver.run_evolution(
        setup, cfg["p_plus"], t_final, dt=cfg["dt"],
        omega_ext=cfg["omega_ext"],
        observable_stride=int(cfg["observable_stride"]),
        snapshot_stride=snap_stride, keep_images=False, image_dir=outdir,
        observables_csv=csv_path,
    )
    trace = driver.fit_omega_gpe(result)
    print(f"t_final {t_final:g}  steps {result.summary.steps}")
    print(f"norm drift {result.summary.norm_drift:.3e}  "
          f"energy drift {result.summary.energy_drift:.3e}")
    print(f"Omega_GPE {trace.omega:.6e} +- {trace.omega_stderr:.1e}")
    print(f"Omega_FSM {fsm.omega_fsm(setup.params.U, setup.params.delta, imbalance):.6e}")
    outputs = [os.path.basename(csv_path)] + sorted(
        os.path.basename(p) for p in glob.glob(os.path.join(outdir, "*.snap")))
    _write_manifest(outdir, cfg, outputs)
    return EXIT_OK


def cmd_fsm(args) -> int:
    cfg = load_config(args)
    outdir = _outdir(args)
    if cfg.get("U") is not None and cfg.get("delta") is not None:
        U, delta = float(cfg["U"]), float(cfg["delta"])
        mu1 = float(cfg.get("mu1", 0.0))
        params = fsm.FsmParams(U=U, mu1=mu1, mu3=mu1 + delta)
    else:
        prof1 = driver.radial_profile(1, cfg["ring_radius"], cfg["g2d"])
        prof3 = driver.radial_profile(3, cfg["ring_radius"], cfg["g2d"])
        params = fsm.fsm_params(prof1, cfg["g2d"], prof1.mu, prof3.mu)
    p_plus = cfg["p_plus"]
    n = 2.0 * p_plus - 1.0
    roots = fsm.characteristic_roots(params.U, params.delta, p_plus, 1 - p_plus)
    omega = fsm.omega_fsm(params.U, params.delta, n)
    print(f"U {params.U:.6g}  Delta {params.delta:.6g}  n {n:g}")
    print(f"Omega_FSM {omega:.6e}   from root k0: {fsm.omega_from_root(roots[0]):.6e}")
    print("characteristic roots (Re, Im):")
    for k in roots:
        print(f"  {k.real:+.6e}  {k.imag:+.6e}")
    t_final = cfg["t_final"] or 200.0
    traj = fsm.integrate_fsm(fsm.FsmState.from_imbalance(p_plus, 1 - p_plus),
                             params, t_final, dt=min(cfg["dt"] or 1e-3, 1e-2),
                             store_stride=100)
    path = os.path.join(outdir, "fsm_trajectory.csv")
    coh = traj.coherence_1p1m()
    with open(path, "w") as fh:
        fh.write("t,re_a1p,im_a1p,re_a1m,im_a1m,re_a3p,im_a3p,re_a3m,im_a3m,"
                 "re_coh,im_coh\n")
        for i, t in enumerate(traj.t):
            a = traj.amplitudes[i]
            fh.write(",".join(repr(x) for x in
                              [t, a[0].real, a[0].imag, a[1].real, a[1].imag,
                               a[2].real, a[2].imag, a[3].real, a[3].imag,
                               coh[i].real, coh[i].imag]) + "\n")
    print(f"trajectory -> {path} (norm drift {traj.norm_drift():.2e})")
    _write_manifest(outdir, cfg, [os.path.basename(path)])
    return EXIT_OK


def cmd_measure(args) -> int:
    cfg = load_config(args)
    outdir = _outdir(args)
    paths = sorted(p for pattern in args.snapshots for p in glob.glob(pattern))
    if not paths:
        raise CliError("no snapshots match the given patterns")
    images = []
    for p in paths:
        snap = snapio.load_snapshot(p)
        images.append(snap if hasattr(snap, "total") else snap.density())
    try:
        report = measurement.measure_sequence(images, theta=cfg["theta"])
    except measurement.MeasurementError as exc:
        print(f"measurement failed: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    out = os.path.join(outdir, "measurement_report.json")
    snapio.save_measurement_report(out, report, input_files=paths)
    print(f"p+ {report.p_plus:.6f}  p- {report.p_minus:.6f}  "
          f"|n| {report.imbalance:.6f}")
    print(f"I {report.overlap_integral:.6g} +- {report.overlap_stderr:.1e}")
    print(f"Delta {report.delta:.6g} +- {report.delta_stderr:.1e}")
    print(f"Omega {report.omega:.6e} +- {report.omega_stderr:.1e}")
    print(f"report -> {out}")
    _write_manifest(outdir, cfg, [os.path.basename(out)])
    return EXIT_OK


def cmd_sense(args) -> int:
    cfg = load_config(args)
    outdir = _outdir(args)
    doc = snapio.load_measurement_report(args.report)
    signed_n = doc["imbalance"] if doc["omega"] >= 0 else -doc["imbalance"]
    try:
        if args.mode == "g2d":
            est = sensing.infer_g2d(
                sensing.Measured(doc["omega"], doc["omega_stderr"]),
                sensing.Measured(doc["overlap_integral"], doc["overlap_stderr"]),
                sensing.Measured(doc["delta"], doc["delta_stderr"]),
                signed_n,
            )
        elif args.mode == "rotation":
            if cfg.get("g2d_known") is None:
                raise CliError("rotation mode needs g2d_known in config")
            om_model = fsm.omega_fsm(
                float(cfg["g2d_known"]) * doc["overlap_integral"],
                doc["delta"], signed_n)
            est = sensing.infer_external_rotation(
                sensing.Measured(doc["omega"], doc["omega_stderr"]), om_model)
        elif args.mode == "field":
            for key in ("background_a", "resonance_B", "width", "atom_count",
                        "atom_mass", "axial_trap_freq"):
                if cfg.get(key) is None:
                    raise CliError(f"field mode needs {key} in config")
            g_est = sensing.infer_g2d(
                sensing.Measured(doc["omega"], doc["omega_stderr"]),
                sensing.Measured(doc["overlap_integral"], doc["overlap_stderr"]),
                sensing.Measured(doc["delta"], doc["delta_stderr"]),
                signed_n,
            )
            a_s = units.physical_from_g2d(
                g_est.value, int(cfg["atom_count"]), float(cfg["atom_mass"]),
                float(cfg["axial_trap_freq"]))
            a_err = units.physical_from_g2d(
                g_est.standard_error, int(cfg["atom_count"]),
                float(cfg["atom_mass"]), float(cfg["axial_trap_freq"]))
            est = sensing.feshbach_invert(
                sensing.Measured(a_s, abs(a_err)),
                sensing.FeshbachParams(float(cfg["background_a"]),
                                       float(cfg["resonance_B"]),
                                       float(cfg["width"])))
        else:
            raise CliError(f"unknown sense mode {args.mode!r}")
    except sensing.SensingError as exc:
        print(f"sensing failed: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    out = os.path.join(outdir, f"sensing_{est.kind}.json")
    snapio.save_sensing_record(out, est,
                               extra={"report_digest": snapio.file_digest(args.report)})
    print(f"{est.kind} = {est.value:.6e} +- {est.standard_error:.2e}")
    print(f"record -> {out}")
    _write_manifest(outdir, cfg, [os.path.basename(out)])
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args)
    outdir = _outdir(args)
    g_values = cfg.get("g2d_values") or [0.5, 1.0, 2.0, 4.0]
    n_values = cfg.get("imbalance_values") or [0.2, 0.4, 0.6]
    if cfg["dt"] is None:
        cfg["dt"] = driver.PRESETS[cfg["preset"]]["dt"]
    results, failures = driver.run_sweep(
        cfg["ring_radius"], g_values, n_values, outdir,
        workers=_workers(args), preset=cfg["preset"], dt=cfg["dt"],
        target_rotation=cfg["target_rotation"],
    )
    csv_path = os.path.join(outdir, "sweep.csv")
    driver.write_sweep_csv(results, csv_path)
    ok = [r for r in results if r.get("ok")]
    print(f"{len(ok)}/{len(results)} points complete -> {csv_path}")
    if ok:
        print(f"max omega_rel_err {max(r['omega_rel_err'] for r in ok):.3e}")
        print(f"max g2d_rel_err   {max(r['g2d_rel_err'] for r in ok):.3e}")
    if failures:
        print(f"{failures} point(s) failed", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_units(args) -> int:
    cfg = load_config(args)
    for key in ("atom_count", "atom_mass", "axial_trap_freq"):
        if cfg.get(key) is None:
            raise CliError(f"units command needs {key} in config (--set {key}=...)")
    if cfg.get("scattering_length") is not None:
        p = units.PhysicalParams(
            atom_count=int(cfg["atom_count"]), atom_mass=float(cfg["atom_mass"]),
            scattering_length=float(cfg["scattering_length"]),
            radial_trap_freq=float(cfg.get("radial_trap_freq", 2 * np.pi * 100)),
            axial_trap_freq=float(cfg["axial_trap_freq"]),
        )
        print(f"g2d = {units.g2d_from_physical(p):.6g}")
        print(f"sigma = {p.sigma:.6g} m   a_z = {p.a_z:.6g} m   "
              f"Lambda = {p.aspect_ratio:.6g}")
    else:
        a_s = units.physical_from_g2d(
            float(cfg["g2d"]), int(cfg["atom_count"]), float(cfg["atom_mass"]),
            float(cfg["axial_trap_freq"]))
        print(f"a_s = {a_s:.6g} m for g2d = {cfg['g2d']:g}")
    if cfg.get("omega_report") is not None:
        rad_s, hz = units.frequency_to_si(
            float(cfg["omega_report"]),
            float(cfg.get("radial_trap_freq", 2 * np.pi * 100)))
        print(f"Omega = {rad_s:.6g} rad/s = {hz:.6g} Hz")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ringbec",
        description="Ring-trap BEC rotation-sensing simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, outdir=True):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config entry (JSON-parsed value)")
        p.add_argument("--preset", choices=sorted(driver.PRESETS),
                       help="grid/step preset")
        if outdir:
            p.add_argument("--outdir", help="output directory (default .)")

    p = sub.add_parser("eigenstate", help="radial OAM eigenstates and mu table")
    common(p)
    p = sub.add_parser("evolve", help="propagate an imbalanced superposition")
    common(p)
    p = sub.add_parser("fsm", help="four-state model trajectory and roots")
    common(p)
    p = sub.add_parser("measure", help="run the density-image protocol")
    common(p)
    p.add_argument("snapshots", nargs="+", help="snapshot file globs")
    p = sub.add_parser("sense", help="invert a measurement report")
    common(p)
    p.add_argument("report", help="measurement report JSON")
    p.add_argument("--mode", choices=["g2d", "rotation", "field"],
                   default="g2d")
    p = sub.add_parser("sweep", help="(g2d, imbalance) error-map sweep")
    common(p)
    p.add_argument("--workers", type=int,
                   help="process pool size (or RINGBEC_WORKERS)")
    p = sub.add_parser("units", help="SI <-> trap-unit conversions")
    common(p, outdir=False)
    return ap


HANDLERS = {
    "eigenstate": cmd_eigenstate,
    "evolve": cmd_evolve,
    "fsm": cmd_fsm,
    "measure": cmd_measure,
    "sense": cmd_sense,
    "sweep": cmd_sweep,
    "units": cmd_units,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return HANDLERS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PropagationError, ConvergenceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
