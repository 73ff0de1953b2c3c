"""Run orchestration shared by the command-line interface and test suites.

Builds radial profiles, initial superpositions and observable recorders,
runs single evolutions and the (g2d, imbalance) sweep used for the
model-vs-simulation error maps. Points of a sweep are independent and may
be distributed over a process pool; each point writes its own result file
so an interrupted sweep resumes by skipping completed points.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import fsm, measurement, modes
from .fields import ComplexField2D, Grid2D
from .gpe2d import (EvolutionSinks, PropagationConfig, evolve, ring_potential,
                    solve_radial_eigenstate)
from .snapio import (OBSERVABLE_COLUMNS, ObservableWriter, RunManifest,
                     save_density)

PRESETS = {
    "desk": {"n": 256, "extent": 24.0, "dt": 2e-3},
    "paper": {"n": 1000, "extent": 24.0, "dt": 1e-3},
}

DEFAULT_TARGET_ROTATION = 0.5  # rad of nodal motion a run should cover


@dataclass
class RunSetup:
    """Everything needed to launch one evolution."""

    grid: Grid2D
    potential: np.ndarray
    profile1: object
    profile3: object
    params: fsm.FsmParams
    g2d: float
    ring_radius: float
    omega_fsm: float


_PROFILE_CACHE: dict = {}


def radial_profile(l: int, ring_radius: float, g2d: float):
    key = (l, float(ring_radius), float(g2d))
    if key not in _PROFILE_CACHE:
        _PROFILE_CACHE[key] = solve_radial_eigenstate(l, ring_radius, g2d)
    return _PROFILE_CACHE[key]


def prepare_run(ring_radius: float, g2d: float, preset: str = "desk",
                grid: Grid2D | None = None) -> RunSetup:
    if grid is None:
        p = PRESETS[preset]
        grid = Grid2D(p["n"], p["n"], p["extent"], p["extent"])
    grid.check_encloses_ring(ring_radius)
    prof1 = radial_profile(1, ring_radius, g2d)
    prof3 = radial_profile(3, ring_radius, g2d)
    params = fsm.fsm_params(prof1, g2d, prof1.mu, prof3.mu)
    return RunSetup(
        grid=grid, potential=ring_potential(grid, ring_radius),
        profile1=prof1, profile3=prof3, params=params, g2d=g2d,
        ring_radius=ring_radius,
        omega_fsm=fsm.omega_fsm(params.U, params.delta, 0.0),
    )


def node_angle_observable(psi: ComplexField2D) -> dict:
    try:
        ext = measurement.locate_extrema(psi.density())
        return {"node_angle": ext.angle_min}
    except measurement.MeasurementError:
        return {"node_angle": float("nan")}


def projection_observable(projector: modes.ModeProjector):
    def fn(psi: ComplexField2D) -> dict:
        amps = projector(psi)
        coh = amps.coherence(1, -1)
        return {
            "p1p": amps.population(1), "p1m": amps.population(-1),
            "p3p": amps.population(3), "p3m": amps.population(-3),
            "re_coh": coh.real, "im_coh": coh.imag,
        }
    return fn


@dataclass
class EvolutionResult:
    summary: object
    observables: dict            # column -> np.ndarray
    images: list = field(default_factory=list)
    setup: RunSetup | None = None


def run_evolution(setup: RunSetup, p_plus: float, t_final: float,
                  dt: float = 2e-3, omega_ext: float = 0.0,
                  observable_stride: int = 100, snapshot_stride: int = 2000,
                  keep_images: bool = True, image_dir=None,
                  observables_csv=None) -> EvolutionResult:
    """Evolve an imbalanced superposition, recording the standard series."""
    psi0 = modes.prepare_superposition(p_plus, 1.0 - p_plus, setup.profile1,
                                       setup.grid)
    cfg = PropagationConfig(dt=dt, omega_ext=omega_ext,
                            snapshot_stride=snapshot_stride,
                            observable_stride=observable_stride)
    projector = modes.ModeProjector(setup.profile1, setup.grid)
    records = {c: [] for c in OBSERVABLE_COLUMNS}
    writer = ObservableWriter(observables_csv) if observables_csv else None

    def on_obs(rec):
        for c in OBSERVABLE_COLUMNS:
            records[c].append(rec.get(c, float("nan")))
        if writer:
            writer(rec)

    images = []
    counter = [0]

    def on_snap(img):
        if keep_images:
            images.append(img)
        if image_dir is not None:
            path = os.path.join(image_dir, f"density_{counter[0]:05d}.snap")
            save_density(path, img, meta={"g2d": setup.g2d,
                                          "R": setup.ring_radius,
                                          "omega_ext": omega_ext})
            counter[0] += 1

    sinks = EvolutionSinks(
        on_observables=on_obs, on_snapshot=on_snap,
        observable_fns=[projection_observable(projector), node_angle_observable],
    )
    try:
        summary = evolve(psi0, setup.potential, setup.g2d, cfg, t_final, sinks)
    finally:
        if writer:
            writer.close()
    return EvolutionResult(
        summary=summary,
        observables={c: np.array(v) for c, v in records.items()},
        images=images, setup=setup,
    )


def fit_omega_gpe(result: EvolutionResult, use_gap: bool = True):
    """Nodal-line frequency from the recorded angle series."""
    obs = result.observables
    gap = result.setup.params.delta if (use_gap and result.setup) else None
    mask = np.isfinite(obs["node_angle"])
    ts, ang = obs["t"][mask], obs["node_angle"][mask]
    trace = measurement.fit_rotation(ts, ang, gap_frequency=gap)
    if not gap or (ts[-1] - ts[0]) * gap < 2.0 * np.pi:
        return trace
    # refit on the projected mode coherence with the asymmetric sideband
    # model; the symmetric-harmonic line fit on the angles is biased at the
    # 1e-2 level. Early window only: the rate drifts as populations leak.
    coh = (obs["re_coh"] + 1j * obs["im_coh"])[mask]
    cap = ts[0] + 2.0 * 2.0 * np.pi / gap
    win = ts <= cap if np.count_nonzero(ts <= cap) >= 50 else slice(None)
    om2_seed = float(np.polyfit(ts[win],
                                np.unwrap(np.angle(coh[win])), 1)[0])
    om2, _, _, om2_err = measurement.fit_fringe_harmonic(
        ts[win], coh[win], om2_seed, gap)
    return measurement.NodalTrace(
        t=trace.t, angle=trace.angle, omega=0.5 * om2,
        intercept=trace.intercept, omega_stderr=0.5 * om2_err,
        residual_rms=trace.residual_rms)


def sized_t_final(omega_pred: float, target_rotation: float =
                  DEFAULT_TARGET_ROTATION, t_min: float = 60.0,
                  t_max: float = 1000.0) -> float:
    """Evolution time giving the requested nodal rotation, clamped."""
    if omega_pred == 0:
        return t_min
    return float(min(max(target_rotation / abs(omega_pred), t_min), t_max))


@dataclass
class SweepPointResult:
    g2d: float
    imbalance: float
    omega_fsm: float
    omega_gpe: float
    omega_rel_err: float
    g2d_protocol: float
    g2d_rel_err: float
    t_final: float
    n_images: int
    error: str = ""

    def row(self):
        return [self.g2d, self.imbalance, self.omega_fsm, self.omega_gpe,
                self.omega_rel_err, self.g2d_protocol, self.g2d_rel_err,
                self.t_final, self.n_images]


SWEEP_COLUMNS = ["g2d", "imbalance", "omega_fsm", "omega_gpe",
                 "omega_rel_err", "g2d_protocol", "g2d_rel_err",
                 "t_final", "n_images"]


def refine_g2d(report, ring_radius: float, signed_imbalance: float,
               max_iter: int = 6, tol: float = 1e-8) -> float:
    """Model-refined inversion of the measurement report.

    The single-image gap estimate evaluates both winding numbers on the
    same radial profile and so overestimates the true level splitting by
    ~1-2%. Starting from the image-only inversion, the gap is recomputed
    from the radial eigenproblem at the current interaction estimate and
    the inversion repeated to a fixed point. Consumes only image-derived
    quantities plus the known trap geometry.
    """
    from .sensing import infer_g2d

    g = infer_g2d(report.omega, report.overlap_integral, report.delta,
                  signed_imbalance).value
    for _ in range(max_iter):
        prof1 = radial_profile(1, ring_radius, abs(g))
        prof3 = radial_profile(3, ring_radius, abs(g))
        g_new = infer_g2d(report.omega, report.overlap_integral,
                          prof3.mu - prof1.mu, signed_imbalance).value
        done = abs(g_new - g) <= tol * abs(g)
        g = g_new
        if done:
            break
    return g


def run_sweep_point(ring_radius: float, g2d: float, imbalance: float,
                    preset: str = "desk", dt: float = 2e-3,
                    target_rotation: float = DEFAULT_TARGET_ROTATION,
                    n_images: int = 60, image_dir=None,
                    observables_csv=None) -> SweepPointResult:
    """One point of the error-map sweep: evolve, fit, run the protocol."""
    setup = prepare_run(ring_radius, g2d, preset=preset)
    p_plus = 0.5 * (1.0 + imbalance)
    om_fsm = fsm.omega_fsm(setup.params.U, setup.params.delta, imbalance)
    t_final = sized_t_final(om_fsm, target_rotation)
    nsteps = int(round(t_final / dt))
    snap_stride = max(nsteps // n_images, 1)
    result = run_evolution(setup, p_plus, t_final, dt=dt,
                           snapshot_stride=snap_stride,
                           image_dir=image_dir,
                           observables_csv=observables_csv)
    trace = fit_omega_gpe(result)
    om_gpe = trace.omega
    # image-only protocol: independent estimates fed to the inversion
    report = measurement.measure_sequence(result.images)
    signed_n = report.imbalance if report.omega >= 0 else -report.imbalance
    g_est = refine_g2d(report, ring_radius, signed_n)
    return SweepPointResult(
        g2d=g2d, imbalance=imbalance, omega_fsm=om_fsm, omega_gpe=om_gpe,
        omega_rel_err=abs(om_fsm - om_gpe) / abs(om_gpe),
        g2d_protocol=g_est, g2d_rel_err=abs(g_est - g2d) / abs(g2d),
        t_final=t_final, n_images=len(result.images),
    )


def _sweep_worker(args):
    point_id, kwargs, outdir = args
    path = os.path.join(outdir, f"point_{point_id}.json")
    try:
        res = run_sweep_point(**kwargs)
        doc = {"point_id": point_id, "ok": True,
               **{c: getattr(res, c) for c in SWEEP_COLUMNS}}
    except Exception as exc:  # per-point failures recorded, sweep continues
        doc = {"point_id": point_id, "ok": False, "error": str(exc),
               **kwargs}
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(doc, fh, sort_keys=True)
    os.replace(tmp, path)
    return doc


def run_sweep(ring_radius: float, g2d_values, imbalance_values, outdir,
              workers: int | None = None, preset: str = "desk",
              dt: float = 2e-3,
              target_rotation: float = DEFAULT_TARGET_ROTATION,
              manifest_extra: dict | None = None):
    """Deterministic, resumable sweep over the (g2d, imbalance) grid.

    Completed points (their JSON result files exist) are skipped on
    restart. Returns (list of result dicts, number of failed points).
    """
    os.makedirs(outdir, exist_ok=True)
    points = []
    for g in g2d_values:
        for n in imbalance_values:
            pid = f"g{g:g}_n{n:g}"
            kwargs = dict(ring_radius=ring_radius, g2d=g, imbalance=n,
                          preset=preset, dt=dt,
                          target_rotation=target_rotation)
            points.append((pid, kwargs))
    manifest = RunManifest(
        run_id=f"sweep_{os.path.basename(str(outdir))}",
        timestamp="",
        config={"ring_radius": ring_radius, "g2d": list(map(float, g2d_values)),
                "imbalance": list(map(float, imbalance_values)),
                "preset": preset, "dt": dt,
                "target_rotation": target_rotation,
                **(manifest_extra or {})},
    )
    manifest_path = os.path.join(outdir, "manifest.json")
    import datetime

    manifest.timestamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
    manifest.write(manifest_path)
    pending = [(pid, kw, outdir) for pid, kw in points
               if not os.path.exists(os.path.join(outdir, f"point_{pid}.json"))]
    try:
        if workers and workers > 1 and len(pending) > 1:
            import multiprocessing as mp

            with mp.get_context("spawn").Pool(workers) as pool:
                for _ in pool.imap_unordered(_sweep_worker, pending):
                    pass
        else:
            for item in pending:
                _sweep_worker(item)
    finally:
        results = []
        for pid, _ in points:
            path = os.path.join(outdir, f"point_{pid}.json")
            if os.path.exists(path):
                with open(path) as fh:
                    results.append(json.load(fh))
        manifest.outputs = sorted(
            f for f in os.listdir(outdir) if f.endswith(".json")
            and f != "manifest.json"
        )
        manifest.status = ("complete"
                           if len(manifest.outputs) == len(points) else "partial")
        manifest.write(manifest_path)
    failures = sum(1 for r in results if not r.get("ok"))
    return results, failures


def write_sweep_csv(results, path):
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for r in results:
            if r.get("ok"):
                w.writerow([repr(float(r[c])) if isinstance(r[c], float) else r[c]
                            for c in SWEEP_COLUMNS])
