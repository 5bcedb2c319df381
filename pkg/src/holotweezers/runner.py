"""Pipeline driver: config in, masks / CSV curves / report.json out."""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft

from . import __version__
from .config import RunConfig
from .dynamics import StepSpec, half_loss_distance, survival_vs_step, transport_sequence
from .flicker import ResponseModel, alpha_sweep, fit_flicker_exp, transition_trace, union_pattern
from .holography import (BlazeSpec, GsConfig, OpticalSystem, array_pattern, compose_mask, gaussian_illumination,
                         mean_phase_step, restrict_phase_change, trajectory_frames, triangle_with_mover)
from .io import (UM, path_from_json, path_to_json, pattern_from_json, pattern_to_json, sha256_hex,
                 write_csv, write_json, write_mask)
from .phys import harmonic_frequencies
from .stats import SurvivalResult, count_inversions
from .thermometry import fit_heating, fit_temperature, release_recapture


@dataclass
class RunReport:
    pipeline: str
    config: dict
    config_hash: str
    version: str
    summary: dict
    outputs: list
    timeline: list
    wall_time: float = field(default=0.0)

    def to_json(self) -> dict:
        # wall time is left out so that reruns produce byte-identical reports
        return {"pipeline": self.pipeline, "software": {"name": "holotweezers", "version": self.version},
                "config": self.config, "config_hash": self.config_hash, "summary": self.summary,
                "outputs": self.outputs, "timeline": self.timeline}


class _Outputs:
    def __init__(self, root: Path):
        self.root = root
        self.paths: list[Path] = []

    def add(self, *paths):
        self.paths.extend(Path(p) for p in paths)

    def inventory(self):
        out = []
        for p in self.paths:
            data = p.read_bytes()
            out.append({"path": p.relative_to(self.root).as_posix(), "bytes": len(data), "sha256": sha256_hex(data)})
        return out


def _stage(name, kind="simulated", **info):
    return {"step": name, "kind": kind, **info}


def _noop(name, note):
    return _stage(name, "no-op", note=note)


def _survival_rows(xs, results):
    for x, r in zip(xs, results):
        lo, hi = r.wilson_interval
        yield (x, r.probability, lo, hi, r.n_survived, r.n_trials)


# --- hologram pipelines --------------------------------------------------

def _geometry(block, base_dir: Path | None):
    if block.pattern == "triangle":
        pattern = triangle_with_mover(block.side_um * UM, block.mover_offset_um * UM)
    elif block.pattern == "array":
        pattern = array_pattern(block.n_spots, block.spacing_um * UM, origin=(0.0, 0.0))
    else:
        pattern = pattern_from_json(json.loads(_resolve(block.pattern_file, base_dir).read_text(encoding="utf-8")))
    mover = len(pattern) - 1
    if block.path_file:
        path = path_from_json(json.loads(_resolve(block.path_file, base_dir).read_text(encoding="utf-8")))
    else:
        start = pattern.positions[mover]
        path = np.array([start + [k * block.step_um * UM, 0.0] for k in range(block.n_frames)])
    return pattern, mover, path


def _resolve(name, base_dir):
    p = Path(name)
    return p if p.is_absolute() or base_dir is None else base_dir / p


def _gs_setup(cfg: RunConfig, block):
    illum = gaussian_illumination(block.grid, block.illumination_radius)
    optics = OpticalSystem(pitch=illum.pitch)
    gs = GsConfig(max_iters=block.max_iters, convergence_tol=block.convergence_tol, gain=block.gain,
                  pad_factor=block.pad_factor, seed=cfg.seed)
    return illum, optics, gs


def _run_holo(cfg: RunConfig, out: _Outputs, base_dir):
    b = cfg.params
    pattern, mover, path = _geometry(b, base_dir)
    illum, optics, gs = _gs_setup(cfg, b)
    frames = trajectory_frames(pattern, mover, path, illum, gs, b.alpha, b.induction, optics)
    blaze = None if b.blaze_period_px is None else BlazeSpec(b.blaze_period_px, math.radians(b.blaze_orientation_deg))
    h = cfg.config_hash()
    width = max(3, len(str(len(frames) - 1)))
    for k, fr in enumerate(frames):
        q = compose_mask(fr.mask, blaze)
        out.add(*write_mask(out.root / "masks" / f"frame_{k:0{width}d}.pgm", q, blaze, cfg.seed, h, frame=k,
                            mover_xy_um=[float(v / UM) for v in path[k]]))
    out.add(write_json(out.root / "masks" / "pattern.json", pattern_to_json(pattern)),
            write_json(out.root / "masks" / "path.json", path_to_json(path)))
    rows = [(k, path[k][0] / UM, path[k][1] / UM, f.metrics.uniformity_error, f.metrics.mean_intensity,
             f.metrics.diffraction_efficiency, len(f.trace), f.exceed_count) for k, f in enumerate(frames)]
    out.add(write_csv(out.root / "curves" / "uniformity.csv",
                      ["frame", "mover_x_um", "mover_y_um", "uniformity_error", "mean_intensity",
                       "diffraction_efficiency", "iterations", "exceed_count"], rows))
    out.add(write_csv(out.root / "curves" / "gs_trace.csv", ["frame", "iteration", "uniformity_error"],
                      [(k, i, e) for k, f in enumerate(frames) for i, e in enumerate(f.trace)]))
    errs = [f.metrics.uniformity_error for f in frames]
    summary = {"n_frames": len(frames), "n_spots": len(pattern), "grid": b.grid,
               "max_uniformity_error": max(errs), "mean_uniformity_error": float(np.mean(errs)),
               "mean_diffraction_efficiency": float(np.mean([f.metrics.diffraction_efficiency for f in frames])),
               "mean_phase_step_rad": mean_phase_step([f.mask for f in frames])}
    timeline = [_stage("hologram_synthesis", frames=len(frames), induction=b.induction, alpha=b.alpha),
                _stage("mask_composition", blaze_period_px=b.blaze_period_px, quantization_levels=256)]
    return summary, timeline


def _run_flicker(cfg: RunConfig, out: _Outputs, base_dir):
    b = cfg.params
    pattern, mover, path = _geometry(b, base_dir)
    illum, optics, gs = _gs_setup(cfg, b)
    frames = trajectory_frames(pattern, mover, path[:2], illum, gs, None, True, optics)
    a, nxt = frames[0].mask, frames[1].mask
    watched = union_pattern(frames[0].pattern, frames[1].pattern)
    model = ResponseModel(b.response_time_ms * 1e-3)
    rows = alpha_sweep(a, nxt, watched, illum, b.alphas, model, b.n_samples, b.pad_factor, optics)
    out.add(write_csv(out.root / "curves" / "flicker_sweep.csv",
                      ["alpha", "flicker_strength", "exceed_count", "end_power", "transient_dip"], rows))
    for i, row in enumerate(rows):
        restricted, _ = restrict_phase_change(a, nxt, row.alpha)
        tr = transition_trace(a, restricted, watched, illum, model, b.n_samples, b.pad_factor, optics)
        out.add(write_csv(out.root / "curves" / f"flicker_trace_{i:03d}.csv", ["t_s", "power"],
                          zip(tr.times, tr.total_spot_power)))
    summary = {"alphas": [r.alpha for r in rows], "flicker_strength": [r.flicker_strength for r in rows],
               "exceed_count": [r.exceed_count for r in rows],
               "exceed_monotone": count_inversions([r.exceed_count for r in rows]) == 0}
    if len(rows) >= 4:
        fit = fit_flicker_exp(rows)
        summary["fit"] = {"a": fit.a, "b": fit.b, "c": fit.c, "rms_residual": fit.residual,
                          "well_determined": fit.well_determined}
    timeline = [_stage("hologram_synthesis", frames=2), _stage("alpha_sweep", n_alpha=len(rows)),
                _noop("photodiode", "summed spot power replaces the measured photodiode signal")]
    return summary, timeline


# --- atom pipelines ------------------------------------------------------

def _spec(b, switch_time_ms, dx=0.0):
    return StepSpec(dx, switch_time_ms * 1e-3, None if b.dt_ns is None else b.dt_ns * 1e-9, b.settle_ms * 1e-3)


def _atom_timeline(b, *middle):
    return [_noop("mot_loading", "single-atom loading is not simulated"),
            _stage("thermal_sampling", temperature_uK=b.temperature_uK, n_trials=b.n_trials),
            *middle,
            _noop("fluorescence_imaging", "survival is decided by the bound-energy criterion instead")]


def _run_transport(cfg: RunConfig, out: _Outputs, base_dir):
    b = cfg.params
    p = cfg.trap_params()
    res = survival_vs_step([s * UM for s in b.step_sizes_um], _spec(b, b.switch_time_ms), b.temperature_uK * 1e-6,
                           b.n_trials, cfg.seed, p)
    out.add(write_csv(out.root / "curves" / "survival_vs_step.csv",
                      ["step_size_um", "probability", "wilson_lo", "wilson_hi", "n_survived", "n_trials"],
                      _survival_rows(b.step_sizes_um, res)))
    summary = {"step_sizes_um": b.step_sizes_um, "probability": [r.probability for r in res],
               "n_trials": b.n_trials}
    return summary, _atom_timeline(b, _stage("trap_switch", switch_time_ms=b.switch_time_ms),
                                   _stage("settle", settle_ms=b.settle_ms))


def _run_halfloss(cfg: RunConfig, out: _Outputs, base_dir):
    b = cfg.params
    p = cfg.trap_params()
    d = [half_loss_distance(t * 1e-3, b.temperature_uK * 1e-6, b.n_trials, cfg.seed, p, tol=b.tol,
                            spec=_spec(b, t)) for t in b.switch_times_ms]
    out.add(write_csv(out.root / "curves" / "half_loss.csv", ["switch_time_ms", "half_loss_um"],
                      [(t, x / UM) for t, x in zip(b.switch_times_ms, d)]))
    summary = {"switch_times_ms": b.switch_times_ms, "half_loss_um": [x / UM for x in d]}
    pos = [(t, x / UM) for t, x in zip(b.switch_times_ms, d) if t > 0]
    if len(pos) >= 2:
        summary["log_fit"] = log_fit([t for t, _ in pos], [x for _, x in pos])
    return summary, _atom_timeline(b, _stage("bisection", tol=b.tol))


def log_fit(ts, ys) -> dict:
    """``y = a + b ln t`` by least squares, with the coefficient of determination."""
    x = np.log(np.asarray(ts, dtype=float))
    y = np.asarray(ys, dtype=float)
    slope, icept = np.polyfit(x, y, 1)
    ss_res = float(np.sum((y - (icept + slope * x)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return {"a": float(icept), "b": float(slope), "r2": 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0}


def _run_lifetime(cfg: RunConfig, out: _Outputs, base_dir):
    b = cfg.params
    p = cfg.trap_params()
    T = b.temperature_uK * 1e-6
    moving = transport_sequence([_spec(b, b.switch_time_ms, b.step_um * UM)] * b.n_steps, T, b.n_trials, cfg.seed, p)
    static = transport_sequence([_spec(b, b.switch_time_ms, 0.0)] * b.n_steps, T, b.n_trials, cfg.seed, p)
    step_time = (b.switch_time_ms + b.settle_ms)
    rows = []
    for k, (s, m) in enumerate(zip(static, moving), start=1):
        rows.append((k, k * step_time, s.probability, *s.wilson_interval, m.probability, *m.wilson_interval))
    out.add(write_csv(out.root / "curves" / "lifetime.csv",
                      ["n_steps", "time_ms", "static_probability", "static_lo", "static_hi",
                       "moving_probability", "moving_lo", "moving_hi"], rows))
    summary = {"n_steps": b.n_steps, "step_um": b.step_um, "static_final": static[-1].probability,
               "moving_final": moving[-1].probability}
    return summary, _atom_timeline(b, _stage("step_sequence", n_steps=b.n_steps, step_um=b.step_um,
                                             switch_time_ms=b.switch_time_ms))


def _run_thermo(cfg: RunConfig, out: _Outputs, base_dir):
    b = cfg.params
    p = cfg.trap_params()
    taus = np.asarray(b.taus_us) * 1e-6
    fits = []
    for i, T in enumerate(b.temperatures_uK):
        curve = release_recapture(T * 1e-6, taus, p, b.n_trials, cfg.seed + i, b.gravity)
        out.add(write_csv(out.root / "curves" / f"recapture_{i:03d}.csv",
                          ["tau_us", "probability", "wilson_lo", "wilson_hi", "n_recaptured", "n_trials"],
                          _survival_rows(b.taus_us, [SurvivalResult(b.n_trials, int(k)) for k in curve.counts])))
        fit = fit_temperature(curve, p, n_model=b.n_model, model_seed=cfg.seed, n_bootstrap=b.n_bootstrap,
                              seed=cfg.seed + i, gravity=b.gravity)
        report = {"T_true_uK": T, "T_est_uK": fit.temperature * 1e6, "stderr_uK": fit.stderr * 1e6,
                  "n_bootstrap": fit.n_bootstrap,
                  "grid": {"T_uK": (fit.grid * 1e6).tolist(), "sse": fit.sse.tolist()}}
        out.add(write_json(out.root / "curves" / f"temperature_fit_{i:03d}.json", report))
        fits.append(report)
    summary = {"temperatures": [{k: f[k] for k in ("T_true_uK", "T_est_uK", "stderr_uK")} for f in fits]}
    timeline = [_noop("mot_loading", "single-atom loading is not simulated"),
                _stage("thermal_sampling", n_trials=b.n_trials)]
    if b.hold_times_s is not None and len(fits) >= 2:
        hf = fit_heating(b.hold_times_s, [f["T_est_uK"] for f in fits])
        heat = {"T0_uK": hf.T0, "rate_uK_per_s": hf.rate, "stderr_T0_uK": hf.stderrs[0],
                "stderr_rate_uK_per_s": hf.stderrs[1], "hold_times_s": b.hold_times_s}
        out.add(write_json(out.root / "curves" / "heating_fit.json", heat))
        summary["heating"] = heat
        timeline.append(_stage("hold", hold_times_s=b.hold_times_s))
    timeline += [_stage("release", taus_us=b.taus_us, gravity=b.gravity),
                 _noop("fluorescence_imaging", "recapture is decided by the bound-energy criterion instead"),
                 _stage("temperature_fit", n_model=b.n_model, n_bootstrap=b.n_bootstrap)]
    return summary, timeline


PIPELINE_FUNCS = {"holo": _run_holo, "flicker": _run_flicker, "transport": _run_transport,
                  "halfloss": _run_halfloss, "thermo": _run_thermo, "lifetime": _run_lifetime}


def set_threads(n: int | None):
    """Cap numba's worker count; results do not depend on it."""
    if n is None:
        return
    import numba
    numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


def run(cfg: RunConfig, output_dir=None, threads: int | None = None, base_dir=None) -> RunReport:
    """Execute ``cfg.pipeline`` and write every artifact plus ``report.json`` under the output directory.

    ``base_dir`` resolves relative ``pattern_file`` / ``path_file`` entries.
    """
    t0 = time.perf_counter()
    root = Path(output_dir if output_dir is not None else cfg.output_dir)
    root.mkdir(parents=True, exist_ok=True)
    set_threads(threads)
    out = _Outputs(root)
    with scipy.fft.set_workers(threads or 1):
        summary, timeline = PIPELINE_FUNCS[cfg.pipeline](cfg, out, None if base_dir is None else Path(base_dir))
    p = cfg.trap_params()
    f_t, f_l = harmonic_frequencies(p)
    summary = {"trap": {"depth_mK": p.depth_mK, "waist_um": p.waist / UM, "f_transverse_hz": f_t,
                        "f_longitudinal_hz": f_l, "axial_form": p.axial_form}, **summary}
    report = RunReport(cfg.pipeline, cfg.canonical(), cfg.config_hash(), __version__, summary, out.inventory(),
                       timeline)
    write_json(root / "report.json", report.to_json())
    report.wall_time = time.perf_counter() - t0
    return report


__all__ = ["RunReport", "run", "log_fit", "set_threads"]
