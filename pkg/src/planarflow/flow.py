"""Pathwise integration of dZ = F(Z) dt + dU and the flow map phi(s, t, .).

The default scheme is the additive-noise stochastic Heun method

    Z* = Z + F(Z) dt + dU,    Z' = Z + (F(Z) + F(Z*)) dt / 2 + dU,

with Euler-Maruyama (``scheme="euler"``) available.  Both are one-step
schemes on the driver grid, so every initial point integrated against the
same path sees identical increments.

A step that makes no progress at all (F(Z) = 0 and dU = 0) is re-solved by
fixed-point iteration of the implicit form of the scheme started slightly
inside H.  Where F is Lipschitz this converges back to the stationary point;
at a branch point such as 0 for z**alpha it picks the maximal solution,
which is the boundary value of the flow seen from inside H.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
import warnings

import numpy as np

from .errors import (ExplosionError, ParameterError, SingularityError,
                     SubdivisionCapWarning)

R_MAX = 1e6
SINGULAR_TOL = 1e-9
CHUNK = 256

OK, EXPLODED, SINGULAR = 0, 1, 2


@dataclass
class Evolution:
    final: np.ndarray
    states: np.ndarray | None
    status: np.ndarray
    fail_step: np.ndarray


def _project(z):
    return np.where(z.imag < 0, z.real + 0j, z)


def _escape(field, z, du, dt, scheme, iters=400):
    """Implicit step from points where the explicit step stalls."""
    theta = 0.5 if scheme == "heun" else 1.0
    f0 = field.value(z)
    base = z + du + (1.0 - theta) * dt * f0
    w = base + 1j * dt
    for _ in range(iters):
        w_new = _project(base + theta * dt * field.value(w))
        done = np.abs(w_new - w) <= 1e-15 * np.maximum(np.abs(w_new), 1e-300)
        w = w_new
        if np.all(done):
            break
    return w


def evolve(field, z0, increments, dt, scheme="heun", r_max=R_MAX, record=None,
           errors="raise", t_start=0.0):
    """Integrate from ``z0`` over the given driver increments.

    ``increments`` has shape ``(N,) + b`` where ``b`` broadcasts against
    ``z0``.  ``record`` is None, ``"all"`` or a sorted array of grid indices
    in ``0..N`` at which to keep states.  With ``errors="mask"`` failed
    points are frozen at NaN and flagged in ``status`` instead of raising.
    """
    if scheme not in ("heun", "euler"):
        raise ParameterError(f"unknown scheme {scheme!r}")
    z = np.array(z0, dtype=complex) + 0j
    inc = np.asarray(increments, dtype=float)
    n = inc.shape[0]
    shape = np.broadcast_shapes(z.shape, inc.shape[1:])
    z = np.broadcast_to(z, shape).copy()
    status = np.zeros(shape, dtype=np.int8)
    fail_step = np.full(shape, -1, dtype=np.int64)
    poles = field.poles

    if record is None:
        rec_idx = np.zeros(0, dtype=int)
    elif isinstance(record, str) and record == "all":
        rec_idx = np.arange(n + 1)
    else:
        rec_idx = np.asarray(record, dtype=int)
    states = np.empty((len(rec_idx),) + shape, dtype=complex) if len(rec_idx) else None
    r = 0
    if len(rec_idx) and rec_idx[0] == 0:
        states[0] = z
        r = 1

    heun = scheme == "heun"
    with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
        for k in range(n):
            du = inc[k]
            f0 = field.value(z)
            drift = f0 * dt
            zp = _project(z + drift + du)
            if heun:
                z1 = _project(z + 0.5 * (f0 + field.value(zp)) * dt + du)
            else:
                z1 = zp
            stall = (drift + du) == 0
            if stall.any():
                stall &= status == OK
                if stall.any():
                    du_s = np.broadcast_to(du, shape)[stall]
                    z1[stall] = _escape(field, z[stall], du_s, dt, scheme)
            bad = ~np.isfinite(z1) | (np.abs(z1) > r_max)
            sing = np.zeros(shape, dtype=bool)
            if poles.size:
                sing = np.min(np.abs(z1[..., None] - poles), axis=-1) < SINGULAR_TOL
            new_fail = (bad | sing) & (status == OK)
            if new_fail.any():
                t_fail = t_start + (k + 1) * dt
                if errors == "raise":
                    idx = np.argwhere(new_fail)
                    if (sing & new_fail).any():
                        where = tuple(np.argwhere(sing & new_fail)[0])
                        raise SingularityError(
                            f"trajectory reached a singularity of the {field.kind} field at t={t_fail:.6g}",
                            point=z1[where], time=t_fail)
                    raise ExplosionError(
                        f"trajectory exceeded |Z| > {r_max:g} at t={t_fail:.6g}",
                        time=t_fail, indices=[tuple(i) for i in idx])
                status[new_fail & sing] = SINGULAR
                status[new_fail & ~sing] = EXPLODED
                fail_step[new_fail] = k + 1
            if (status != OK).any():
                z1 = np.where(status == OK, z1, np.nan + 0j)
            z = z1
            if r < len(rec_idx) and rec_idx[r] == k + 1:
                states[r] = z
                r += 1
    return Evolution(z, states, status, fail_step)


# -- public operations -----------------------------------------------------------

@dataclass
class Trajectory:
    s: float
    times: np.ndarray
    states: np.ndarray
    field_id: dict
    path_id: str
    step: float


@dataclass
class BoundaryCurve:
    s: float
    t: float
    params: np.ndarray
    points: np.ndarray
    meta: dict = dc_field(default_factory=dict)

    def to_csv(self):
        rows = ["x,re,im"]
        rows += [f"{x:.17g},{p.real:.17g},{p.imag:.17g}" for x, p in zip(self.params, self.points)]
        return "\n".join(rows) + "\n"


def _span(path, s, t):
    if s > t:
        raise ParameterError(f"need s <= t, got s={s}, t={t}")
    i0 = path.index_of(s)
    i1 = path.index_of(t)
    return i0, i1


def _check_start(z):
    z = np.asarray(z, dtype=complex)
    if np.any(z.imag < 0):
        raise ParameterError("initial points must lie in the closed upper half-plane")
    return z


def integrate(field, path, s, t, z, scheme="heun", r_max=R_MAX):
    """Trajectory of a single initial point from time s to t."""
    z = complex(_check_start(z))
    i0, i1 = _span(path, s, t)
    ev = evolve(field, z, path.increments[i0:i1], path.dt, scheme, r_max,
                record="all", t_start=path.t0 + i0 * path.dt)
    times = path.times[i0:i1 + 1]
    return Trajectory(times[0], times, ev.states, field.describe(), path.ident, path.dt)


def flow_map(field, path, s, t, zs, scheme="heun", r_max=R_MAX, errors="raise", workers=1):
    """phi(s, t, z) for every z in ``zs`` against one shared driver path.

    With ``errors="mask"`` returns ``(values, status)`` where failed points
    are NaN and ``status`` is 0 (ok), 1 (explosion) or 2 (singularity).
    """
    zs = _check_start(zs)
    i0, i1 = _span(path, s, t)
    flat = zs.ravel()
    inc = path.increments[i0:i1]
    t_start = path.t0 + i0 * path.dt

    def run(chunk):
        return evolve(field, chunk, inc, path.dt, scheme, r_max, errors=errors, t_start=t_start)

    chunks = [flat[i:i + CHUNK] for i in range(0, flat.size, CHUNK)] or [flat]
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, chunks))
    else:
        results = [run(c) for c in chunks]
    values = np.concatenate([r.final for r in results]).reshape(zs.shape)
    if errors == "mask":
        status = np.concatenate([r.status for r in results]).reshape(zs.shape)
        return values, status
    return values


def boundary_curve(field, path, s, t, a, b, n, delta=None, max_levels=12,
                   max_points=200_000, scheme="heun", workers=1):
    """Image of [a, b] under phi(s, t, .), refined by bisection.

    Parameters are bisected wherever adjacent images are further apart than
    ``delta`` (default ``1e-2 * (b - a)``), until no gap exceeds it or the
    level/point cap is hit; the cap is recorded in ``meta`` and warned.
    """
    if not a < b:
        raise ParameterError(f"need a < b, got [{a}, {b}]")
    if n < 2:
        raise ParameterError(f"need n >= 2, got {n}")
    if delta is None:
        delta = 1e-2 * (b - a)
    params = np.linspace(a, b, int(n))
    points = flow_map(field, path, s, t, params.astype(complex), scheme, workers=workers)
    capped = False
    level = 0
    while True:
        gaps = np.abs(np.diff(points))
        wide = np.nonzero(gaps > delta)[0]
        if wide.size == 0:
            break
        if level >= max_levels or params.size + wide.size > max_points:
            capped = True
            break
        mids = 0.5 * (params[wide] + params[wide + 1])
        new = flow_map(field, path, s, t, mids.astype(complex), scheme, workers=workers)
        params = np.insert(params, wide + 1, mids)
        points = np.insert(points, wide + 1, new)
        level += 1
    meta = {"delta": delta, "levels": level, "cap_reached": capped, "n_points": int(params.size),
            "field": field.describe(), "path": path.describe(), "step": path.dt, "scheme": scheme}
    if capped:
        warnings.warn(f"boundary curve subdivision cap reached after {level} levels "
                      f"({params.size} points, delta={delta:g})", SubdivisionCapWarning, stacklevel=2)
    return BoundaryCurve(float(path.times[path.index_of(s, warn=False)]),
                         float(path.times[path.index_of(t, warn=False)]), params, points, meta)


def check_flow_property(field, path, s, u, t, z, scheme="heun"):
    """|phi(s,t,z) - phi(u,t,phi(s,u,z))| on one path."""
    if not s <= u <= t:
        raise ParameterError(f"need s <= u <= t, got {s}, {u}, {t}")
    direct = flow_map(field, path, s, t, np.atleast_1d(z), scheme)
    mid = flow_map(field, path, s, u, np.atleast_1d(z), scheme)
    composed = flow_map(field, path, u, t, mid, scheme)
    res = np.abs(direct - composed)
    return float(res[0]) if np.ndim(z) == 0 else res


def closed_form_power_flow(alpha, s, t, z):
    """Noise-free flow of F(z) = z**alpha: {(1-a)(t-s) + z**(1-a)}**(1/(1-a))."""
    z = np.asarray(z, dtype=complex) + 0j
    if t == s:
        return z[()] if z.ndim == 0 else z
    e = 1.0 - alpha
    zero = z == 0
    zpow = np.where(zero, 0j, np.exp(e * np.log(np.where(zero, 1.0, z))))
    base = e * (t - s) + zpow
    out = np.exp(np.log(base) / e)
    return out[()] if out.ndim == 0 else out
