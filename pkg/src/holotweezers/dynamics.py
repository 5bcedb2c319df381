"""Monte-Carlo dynamics of a thermal atom in static and crossfading tweezers.

The moving tweezer is modelled as a linear crossfade between the trap at the
origin and an identical trap at ``(delta_x, 0, 0)``.  The well is attractive,
``U(0) = -U0``, and an atom survives a step when its mechanical energy in the
final trap is negative and it sits inside the capture region.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import BracketError, IntegratorError, InvalidParameterError, PreconditionError
from .phys import TrapParams, thermal_sigmas
from .stats import STREAM_ENSEMBLE, SurvivalResult, keyed_normals

CAPTURE_WAISTS = 5.0
CAPTURE_RAYLEIGH = 5.0
DEFAULT_SETTLE = 0.2e-3


@dataclass(frozen=True)
class AtomState:
    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float).reshape(3))
        if not (np.all(np.isfinite(self.position)) and np.all(np.isfinite(self.velocity))):
            raise InvalidParameterError("atom state must be finite")


@dataclass(frozen=True)
class Ensemble:
    """Phase-space points stored as two ``(n, 3)`` arrays."""

    positions: np.ndarray
    velocities: np.ndarray

    def __len__(self):
        return self.positions.shape[0]

    def __getitem__(self, i) -> AtomState:
        return AtomState(self.positions[i], self.velocities[i])

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def as_array(self) -> np.ndarray:
        return np.ascontiguousarray(np.hstack([self.positions, self.velocities]))

    @classmethod
    def from_array(cls, states: np.ndarray) -> "Ensemble":
        states = np.asarray(states, dtype=float)
        return cls(states[:, :3].copy(), states[:, 3:].copy())

    @classmethod
    def from_states(cls, atoms: Sequence[AtomState]) -> "Ensemble":
        return cls(np.array([a.position for a in atoms]), np.array([a.velocity for a in atoms]))

    def shifted(self, dx: float) -> "Ensemble":
        pos = self.positions.copy()
        pos[:, 0] -= dx
        return Ensemble(pos, self.velocities.copy())


@dataclass(frozen=True)
class StepSpec:
    """One tweezer move. ``dt=None`` picks 1/(100 f_t) for the trap in use."""

    delta_x: float
    switch_time: float = 10e-3
    dt: float | None = None
    settle_time: float = DEFAULT_SETTLE

    def resolved(self, p: TrapParams) -> "StepSpec":
        dt = self.dt if self.dt is not None else default_dt(p)
        if not math.isfinite(self.delta_x):
            raise InvalidParameterError("delta_x must be finite")
        if self.switch_time < 0 or self.settle_time < 0:
            raise InvalidParameterError("switch_time and settle_time must be non-negative")
        if not dt > 0:
            raise InvalidParameterError("dt must be positive")
        if dt > 1.0 / (50.0 * p.freq_transverse) * (1 + 1e-12):
            raise InvalidParameterError(f"dt={dt:.3g} s does not resolve the transverse oscillation (limit 1/(50 f_t))")
        return replace(self, dt=dt)


def default_dt(p: TrapParams) -> float:
    return 1.0 / (100.0 * p.freq_transverse)


def _kargs(p: TrapParams):
    return p.depth, p.waist**2, p.rayleigh_range, p.axial_form == "as-printed"


def _points(r):
    pts = np.asarray(r, dtype=float)
    return np.ascontiguousarray(pts.reshape(-1, 3)), pts.shape[:-1]


def potential(r, p: TrapParams, center_offset=(0.0, 0.0, 0.0)):
    """Trap potential energy in joules at ``r`` (shape ``(..., 3)``), trap centred at ``center_offset``."""
    pts, shape = _points(r)
    pts = pts - np.asarray(center_offset, dtype=float)
    u, _ = _kernels.pe_force_many(np.ascontiguousarray(pts), 0.0, *_kargs(p))
    return u.reshape(shape) if shape else float(u[0])


def force(r, p: TrapParams, center_offset=(0.0, 0.0, 0.0)):
    """Analytic ``-grad U`` in newtons."""
    pts, shape = _points(r)
    pts = pts - np.asarray(center_offset, dtype=float)
    _, f = _kernels.pe_force_many(np.ascontiguousarray(pts), 0.0, *_kargs(p))
    return f.reshape(shape + (3,))


def _blend_fraction(t, spec: StepSpec):
    if spec.switch_time == 0:
        if t != 0:
            raise InvalidParameterError("t must be 0 for an instantaneous switch")
        return 1.0
    if not 0 <= t <= spec.switch_time:
        raise InvalidParameterError(f"t={t} outside [0, {spec.switch_time}]")
    return t / spec.switch_time


def blended_potential(r, t, spec: StepSpec, p: TrapParams):
    """Crossfaded potential at time ``t``: old trap at origin, new trap at ``(delta_x, 0, 0)``."""
    frac = _blend_fraction(t, spec)
    pts, shape = _points(r)
    u, _ = _kernels.blended_many(pts, frac, spec.delta_x, *_kargs(p))
    return u.reshape(shape) if shape else float(u[0])


def blended_force(r, t, spec: StepSpec, p: TrapParams):
    frac = _blend_fraction(t, spec)
    pts, shape = _points(r)
    _, f = _kernels.blended_many(pts, frac, spec.delta_x, *_kargs(p))
    return f.reshape(shape + (3,))


def sample_ensemble(temperature: float, n: int, p: TrapParams, seed: int, start: int = 0) -> Ensemble:
    """Gaussian phase-space sample around the trap centre.

    Atom ``i`` is drawn from its own substream keyed by ``(seed, start + i)``,
    so any slice of a larger ensemble reproduces exactly.
    """
    if n < 1:
        raise InvalidParameterError("n must be >= 1")
    s = thermal_sigmas(temperature, p)
    z = keyed_normals(seed, n, 6, STREAM_ENSEMBLE, start)
    pos = z[:, :3] * np.array([s.sigma_xy, s.sigma_xy, s.sigma_z])
    vel = z[:, 3:] * s.sigma_v
    return Ensemble(pos, vel)


def total_energy(ensemble: Ensemble, p: TrapParams, center_offset=(0.0, 0.0, 0.0)) -> np.ndarray:
    kinetic = 0.5 * p.mass * np.sum(ensemble.velocities**2, axis=1)
    return kinetic + potential(ensemble.positions, p, center_offset)


def energy_trace(atom: AtomState, p: TrapParams, duration: float, dt: float | None = None, every: int = 1):
    """Integrate in the static trap; returns ``(times, energies, x positions)`` sampled every ``every`` steps."""
    dt = default_dt(p) if dt is None else dt
    n_steps = int(round(duration / dt))
    state = np.concatenate([atom.position, atom.velocity])
    e, xs = _kernels.static_energy_trace(state, dt, n_steps, every, *_kargs(p), p.mass)
    return np.arange(len(e)) * every * dt, e, xs


def secular_energy_drift(energies: np.ndarray, window: int) -> float:
    """Relative change between the mean energy of the first and last ``window`` samples.

    Window averaging removes the bounded oscillation of the Verlet shadow
    Hamiltonian and leaves the secular drift.
    """
    first = np.mean(energies[:window])
    last = np.mean(energies[-window:])
    return float(abs(last - first) / abs(first))


@lru_cache(maxsize=32)
def _integrator_check(p: TrapParams, dt: float):
    # thermal-scale atom displaced by ~0.3 w0 at 100 uK-like speed
    atom = AtomState((0.3 * p.waist, 0.1 * p.waist, 0.3 * p.rayleigh_range), (0.05, 0.05, 0.02))
    periods = 200
    _, e, _ = energy_trace(atom, p, periods / p.freq_transverse, dt)
    growth = float(np.max(np.abs(e - e[0])) / abs(e[0]))
    if not growth < 0.01:
        raise IntegratorError(f"static-trap control run: energy excursion {growth:.3g} > 1% at dt={dt:.3g} s "
                              f"(f_t={p.freq_transverse:.4g} Hz, {periods} periods)")
    return growth


def simulate_ensemble(ensemble: Ensemble, spec: StepSpec, p: TrapParams):
    """Run one step for every atom; returns ``(survived mask, final ensemble, final energies)``.

    Final positions are in the frame of the original trap (new trap at ``delta_x``).
    """
    spec = spec.resolved(p)
    _integrator_check(p, spec.dt)
    U0, w0sq, zR, printed = _kargs(p)
    energy, inside, final = _kernels.run_trials(
        ensemble.as_array(), float(spec.delta_x), float(spec.switch_time), float(spec.dt), float(spec.settle_time),
        U0, w0sq, zR, printed, p.mass, CAPTURE_WAISTS * p.waist, CAPTURE_RAYLEIGH * zR)
    survived = (energy < 0) & inside
    return survived, Ensemble.from_array(final), energy


def simulate_step(atom: AtomState, spec: StepSpec, p: TrapParams):
    """Single-atom step; returns ``(survived, final AtomState)``."""
    survived, final, _ = simulate_ensemble(Ensemble.from_states([atom]), spec, p)
    return bool(survived[0]), final[0]


def survival_vs_step(step_sizes: Sequence[float], spec: StepSpec, temperature: float, n_trials: int,
                     seed: int, p: TrapParams) -> list[SurvivalResult]:
    """Survival probability per step size.

    Trial ``i`` uses the same thermal atom at every step size (common random
    numbers), which keeps the curve free of sampling jitter between points.
    """
    if n_trials < 1:
        raise InvalidParameterError("n_trials must be >= 1")
    atoms = sample_ensemble(temperature, n_trials, p, seed)
    out = []
    for dx in step_sizes:
        survived, _, _ = simulate_ensemble(atoms, replace(spec, delta_x=float(dx)), p)
        out.append(SurvivalResult(n_trials, int(survived.sum())))
    return out


def half_loss_distance(switch_time: float, temperature: float, n_trials: int, seed: int, p: TrapParams,
                       tol: float = 0.02, max_step: float | None = None, max_iter: int = 40,
                       spec: StepSpec | None = None) -> float:
    """Step size at which single-step survival crosses 0.5, found by bisection.

    The same ensemble is reused for every probe, so the probability is a
    deterministic non-smooth function of the step size.  Bisection stops when
    ``|P - 0.5| < tol`` or the bracket is narrower than 1 nm.
    """
    if switch_time < 0:
        raise InvalidParameterError("switch_time must be >= 0")
    spec = replace(spec or StepSpec(0.0), switch_time=switch_time)
    atoms = sample_ensemble(temperature, n_trials, p, seed)

    def prob(dx):
        survived, _, _ = simulate_ensemble(atoms, replace(spec, delta_x=dx), p)
        return survived.mean()

    lo, hi = 0.0, max_step if max_step is not None else 10.0 * p.waist
    p_lo = prob(lo)
    if p_lo < 0.5:
        raise BracketError(f"survival at zero step is {p_lo:.3f} < 0.5")
    p_hi = prob(hi)
    if p_hi > 0.5:
        raise BracketError(f"survival at {hi:.3g} m is {p_hi:.3f} > 0.5; widen max_step")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        p_mid = prob(mid)
        if abs(p_mid - 0.5) < tol:
            return mid
        if p_mid > 0.5:
            lo, p_lo = mid, p_mid
        else:
            hi, p_hi = mid, p_mid
        if hi - lo < 1e-9:
            break
    # linear interpolation inside the final bracket
    if p_lo == p_hi:
        return 0.5 * (lo + hi)
    return lo + (p_lo - 0.5) / (p_lo - p_hi) * (hi - lo)


def transport_sequence(path: Sequence[StepSpec], temperature: float, n_trials: int, seed: int,
                       p: TrapParams) -> list[SurvivalResult]:
    """Chain steps, each starting from the previous step's final state; survival after every prefix.

    Lost atoms stay lost.  Coordinates are re-centred on the trap after each step.
    """
    if not path:
        raise PreconditionError("path must be non-empty")
    atoms = sample_ensemble(temperature, n_trials, p, seed)
    alive = np.ones(n_trials, dtype=bool)
    out = []
    for spec in path:
        idx = np.flatnonzero(alive)
        if idx.size:
            sub = Ensemble(atoms.positions[idx], atoms.velocities[idx])
            survived, final, _ = simulate_ensemble(sub, spec, p)
            final = final.shifted(spec.delta_x)
            atoms.positions[idx] = final.positions
            atoms.velocities[idx] = final.velocities
            alive[idx] = survived
        out.append(SurvivalResult(n_trials, int(alive.sum())))
    return out
