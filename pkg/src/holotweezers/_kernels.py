"""Compiled inner loops for the atom dynamics.

Every trial is integrated independently, so the result of a trial never
depends on how ``prange`` schedules the work.
"""
import math
import os

import numpy as np
from numba import config, njit, prange

if "NUMBA_THREADING_LAYER" not in os.environ:
    # the TBB shipped on many systems is too old for numba and only produces a warning
    config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


@njit(cache=True)
def pe_force(x, y, z, cx, U0, w0sq, zR, printed):
    """Potential energy and force of one Gaussian trap centred at ``(cx, 0, 0)``."""
    dx = x - cx
    rho2 = dx * dx + y * y
    zr = z / zR
    s = 1.0 + zr * zr
    wsq = w0sq * s
    dwsq = w0sq * 2.0 * z / (zR * zR)
    if printed:
        lin = 1.0 + zr
        amp = 1.0 / lin
        damp = -1.0 / (zR * lin * lin)
    else:
        amp = 1.0 / s
        damp = -2.0 * z / (zR * zR * s * s)
    e = math.exp(-2.0 * rho2 / wsq)
    u = -U0 * amp * e
    k = -4.0 * U0 * amp * e / wsq
    fz = U0 * e * (damp + amp * 2.0 * rho2 * dwsq / (wsq * wsq))
    return u, k * dx, k * y, fz


@njit(cache=True)
def blended(x, y, z, frac, shift, U0, w0sq, zR, printed):
    """Crossfade ``(1 - frac) U(r) + frac U(r - shift ex)``."""
    u0, fx0, fy0, fz0 = pe_force(x, y, z, 0.0, U0, w0sq, zR, printed)
    u1, fx1, fy1, fz1 = pe_force(x, y, z, shift, U0, w0sq, zR, printed)
    a = 1.0 - frac
    return (a * u0 + frac * u1, a * fx0 + frac * fx1, a * fy0 + frac * fy1, a * fz0 + frac * fz1)


@njit(cache=True)
def pe_force_many(points, cx, U0, w0sq, zR, printed):
    n = points.shape[0]
    u = np.empty(n)
    f = np.empty((n, 3))
    for i in range(n):
        u[i], f[i, 0], f[i, 1], f[i, 2] = pe_force(points[i, 0], points[i, 1], points[i, 2], cx, U0, w0sq, zR, printed)
    return u, f


@njit(cache=True)
def blended_many(points, frac, shift, U0, w0sq, zR, printed):
    n = points.shape[0]
    u = np.empty(n)
    f = np.empty((n, 3))
    for i in range(n):
        u[i], f[i, 0], f[i, 1], f[i, 2] = blended(points[i, 0], points[i, 1], points[i, 2], frac, shift,
                                                  U0, w0sq, zR, printed)
    return u, f


@njit(cache=True)
def _escaped(x, y, z, shift, w0sq, zR):
    # beyond 10 local waists of both traps the force is below exp(-200) of its peak
    wsq = w0sq * (1.0 + (z / zR) ** 2)
    d0 = x * x + y * y
    d1 = (x - shift) ** 2 + y * y
    return d0 > 100.0 * wsq and d1 > 100.0 * wsq


@njit(cache=True)
def _integrate_one(state, shift, switch_time, dt, settle_time, U0, w0sq, zR, printed, mass):
    x, y, z, vx, vy, vz = state[0], state[1], state[2], state[3], state[4], state[5]
    inv_m = 1.0 / mass
    escaped = False
    if switch_time > 0.0:
        n_sw = int(math.ceil(switch_time / dt - 1e-9))
        h = switch_time / n_sw
        _, fx, fy, fz = blended(x, y, z, 0.0, shift, U0, w0sq, zR, printed)
        for k in range(n_sw):
            vx += 0.5 * h * fx * inv_m
            vy += 0.5 * h * fy * inv_m
            vz += 0.5 * h * fz * inv_m
            x += h * vx
            y += h * vy
            z += h * vz
            frac = (k + 1) / n_sw
            _, fx, fy, fz = blended(x, y, z, frac, shift, U0, w0sq, zR, printed)
            vx += 0.5 * h * fx * inv_m
            vy += 0.5 * h * fy * inv_m
            vz += 0.5 * h * fz * inv_m
            if (k & 63) == 0 and _escaped(x, y, z, shift, w0sq, zR):
                escaped = True
                break
    if not escaped and settle_time > 0.0:
        n_st = int(math.ceil(settle_time / dt - 1e-9))
        h = settle_time / n_st
        _, fx, fy, fz = pe_force(x, y, z, shift, U0, w0sq, zR, printed)
        for k in range(n_st):
            vx += 0.5 * h * fx * inv_m
            vy += 0.5 * h * fy * inv_m
            vz += 0.5 * h * fz * inv_m
            x += h * vx
            y += h * vy
            z += h * vz
            _, fx, fy, fz = pe_force(x, y, z, shift, U0, w0sq, zR, printed)
            vx += 0.5 * h * fx * inv_m
            vy += 0.5 * h * fy * inv_m
            vz += 0.5 * h * fz * inv_m
            if (k & 63) == 0 and _escaped(x, y, z, shift, w0sq, zR):
                escaped = True
                break
    out = np.empty(6)
    out[0], out[1], out[2], out[3], out[4], out[5] = x, y, z, vx, vy, vz
    return out, escaped


@njit(parallel=True, cache=True)
def run_trials(states, shift, switch_time, dt, settle_time, U0, w0sq, zR, printed, mass, cap_xy, cap_z):
    """Integrate every row of ``states``; returns (energy in final trap, captured flag, final states)."""
    n = states.shape[0]
    energy = np.empty(n)
    inside = np.zeros(n, dtype=np.bool_)
    final = np.empty_like(states)
    for i in prange(n):
        out, escaped = _integrate_one(states[i], shift, switch_time, dt, settle_time, U0, w0sq, zR, printed, mass)
        final[i] = out
        u, _, _, _ = pe_force(out[0], out[1], out[2], shift, U0, w0sq, zR, printed)
        energy[i] = 0.5 * mass * (out[3] ** 2 + out[4] ** 2 + out[5] ** 2) + u
        dx = out[0] - shift
        inside[i] = (not escaped) and math.sqrt(dx * dx + out[1] ** 2) < cap_xy and abs(out[2]) < cap_z
    return energy, inside, final


@njit(cache=True)
def static_energy_trace(state, dt, n_steps, every, U0, w0sq, zR, printed, mass):
    """Velocity-Verlet in the static trap at the origin, sampling total energy and x."""
    x, y, z, vx, vy, vz = state[0], state[1], state[2], state[3], state[4], state[5]
    inv_m = 1.0 / mass
    n_out = n_steps // every + 1
    energy = np.empty(n_out)
    xs = np.empty(n_out)
    u, fx, fy, fz = pe_force(x, y, z, 0.0, U0, w0sq, zR, printed)
    energy[0] = 0.5 * mass * (vx * vx + vy * vy + vz * vz) + u
    xs[0] = x
    j = 1
    for k in range(1, n_steps + 1):
        vx += 0.5 * dt * fx * inv_m
        vy += 0.5 * dt * fy * inv_m
        vz += 0.5 * dt * fz * inv_m
        x += dt * vx
        y += dt * vy
        z += dt * vz
        u, fx, fy, fz = pe_force(x, y, z, 0.0, U0, w0sq, zR, printed)
        vx += 0.5 * dt * fx * inv_m
        vy += 0.5 * dt * fy * inv_m
        vz += 0.5 * dt * fz * inv_m
        if k % every == 0:
            energy[j] = 0.5 * mass * (vx * vx + vy * vy + vz * vz) + u
            xs[j] = x
            j += 1
    return energy[:j], xs[:j]
