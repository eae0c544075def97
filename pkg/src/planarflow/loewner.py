"""Chordal Loewner chains driven by a DriverPath.

The driver is held constant on each grid step, where the Loewner equation
dg/dt = 2 / (g - U) has the exact solution

    g <- U_k + sqrt((g - U_k)**2 + 4 dt)

with the root taken in the closed upper half-plane.  The chain is therefore
exact for the piecewise-constant driver, and the reverse flow is the exact
inverse composed in the opposite order.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import ParameterError, SingularityError
from .flow import SINGULAR_TOL

NEVER = np.inf


def _sqrt_upper(w, side):
    """Root of w in the closed upper half-plane; a real root keeps ``side``'s sign."""
    r = np.sqrt(w + 0j)
    r = np.where(r.imag < 0, -r, r)
    real = r.imag == 0
    if np.any(real):
        r = np.where(real & (side < 0), -np.abs(r.real) + 0j, r)
        r = np.where(real & (side >= 0), np.abs(r.real) + 0j, r)
    return r


def _nearly_real(g):
    return g.imag <= 1e-12 * (1.0 + np.abs(g))


def _forward(path, zs, m, record=None):
    """Slit-map chain over steps 0..m-1 for an array of points.

    Returns ``(g, T, states)``: ``g`` is NaN for swallowed points, ``T`` the
    swallowing time (``inf`` if not swallowed) and ``states`` the values at
    the requested step indices (NaN once swallowed).
    """
    g = np.array(zs, dtype=complex).ravel() + 0j
    T = np.full(g.shape, NEVER)
    T[g == 0] = path.t0
    alive = g != 0
    g[~alive] = np.nan
    U = path.values
    dt = path.dt
    rec = [] if record is None else list(record)
    states = np.empty((len(rec), g.size), dtype=complex)
    r = 0
    while r < len(rec) and rec[r] == 0:
        states[r] = g
        r += 1
    for k in range(m):
        if not alive.any():
            break
        w0 = g - U[k]
        sq = w0 * w0
        # the point meets the driver inside this step: (g - U)**2 is real
        # and moves linearly from sq to sq + 4 dt through 0
        hit = alive & (sq.imag == 0) & (sq.real <= 0) & (sq.real >= -4 * dt * (1 + 1e-9)) & (w0.imag > 0)
        gn = U[k] + _sqrt_upper(sq + 4 * dt, w0.real)
        if hit.any():
            T[hit] = path.t0 + k * dt + np.minimum(-sq.real[hit], 4 * dt) / 4.0
            alive &= ~hit
        # a real point that the driver jumps across at the step boundary
        if k + 1 < len(U):
            flip = alive & _nearly_real(gn) & (np.sign(gn.real - U[k]) * np.sign(gn.real - U[k + 1]) < 0)
            if flip.any():
                frac = (gn.real[flip] - U[k]) / (U[k + 1] - U[k])
                T[flip] = path.t0 + (k + np.clip(frac, 0.0, 1.0)) * dt
                alive &= ~flip
        g = np.where(alive, gn, np.nan + 0j)
        while r < len(rec) and rec[r] == k + 1:
            states[r] = g
            r += 1
    return g, T, states


@dataclass
class ForwardResult:
    t: float
    z: np.ndarray
    values: np.ndarray
    swallow_times: np.ndarray

    @property
    def swallowed(self):
        return np.isfinite(self.swallow_times)


def forward_lde(path, z, t):
    """g_t(z) for each z; swallowed points give NaN and a finite T_z."""
    z = np.asarray(z, dtype=complex)
    if np.any(z.imag < 0):
        raise ParameterError("forward Loewner flow needs Im z >= 0")
    m = path.index_of(t)
    g, T, _ = _forward(path, z, m)
    return ForwardResult(float(path.times[m]), z, g.reshape(z.shape), T.reshape(z.shape))


def swallowing_time(path, z):
    """T_z over the whole driver span; ``inf`` if z survives to the horizon."""
    z = np.asarray(z, dtype=complex)
    if np.any(z.imag < 0):
        raise ParameterError("swallowing time needs Im z >= 0")
    _, T, _ = _forward(path, z, path.n_steps)
    T = T.reshape(z.shape)
    return float(T) if T.ndim == 0 else T


def hull(path, t, grid):
    """Membership of each grid point in K_t, i.e. T_z <= t."""
    m = path.index_of(t)
    grid = np.asarray(grid, dtype=complex)
    _, T, _ = _forward(path, grid, m)
    return (T <= path.times[m] + 1e-12).reshape(grid.shape)


def hull_csv(grid, member):
    rows = ["re,im,member"]
    for z, b in zip(np.ravel(grid), np.ravel(member)):
        rows.append(f"{z.real:.17g},{z.imag:.17g},{int(b)}")
    return "\n".join(rows) + "\n"


def _hcap_probes(R):
    e = R * np.exp(0.25j * np.pi)
    return np.array([1j * R, e, -np.conj(e)])


def hcap_estimate(path, t, probe_radius=100.0):
    """b_t from the 1/z coefficient of g_t, read off at |z| = R."""
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    out = _hcap_many(path, ts, probe_radius)
    return float(out[0]) if np.ndim(t) == 0 else out


def _hcap_many(path, ts, R):
    if not R > 0:
        raise ParameterError(f"probe radius must be > 0, got {R}")
    idx = np.array([path.index_of(t) for t in ts])
    order = np.unique(idx)
    probes = _hcap_probes(R)
    _, T, states = _forward(path, probes, int(order[-1]), record=order)
    if np.any(np.isfinite(T[:]) & (T <= path.times[order[-1]])):
        raise ParameterError(f"probe radius {R} is inside the hull; increase it")
    b = np.mean(np.real((states - probes) * probes), axis=1)
    lookup = dict(zip(order.tolist(), b.tolist()))
    return np.array([lookup[i] for i in idx])


@dataclass
class ReverseTrajectory:
    t: float
    z: complex
    s: np.ndarray
    states: np.ndarray

    @property
    def final(self):
        return complex(self.states[-1])


def reverse_lde(path, t, z):
    """h_s(z) for s in [0, t]; h_t(z) = g_t^{-1}(z + U_t).

    Each step adds the reversed-driver increment and then applies the exact
    solution of dh/ds = -2/h, h <- sqrt(h**2 - 4 dt).
    """
    z = complex(z)
    if z.imag < 0:
        raise ParameterError("reverse Loewner flow needs Im z >= 0")
    m = path.index_of(t)
    U = path.values
    dt = path.dt
    h = np.empty(m + 1, dtype=complex)
    h[0] = z
    cur = z
    for j in range(m):
        cur = cur + (U[m - j] - U[m - j - 1])
        if abs(cur) < SINGULAR_TOL:
            s = (j + 1) * dt
            raise SingularityError(f"reverse Loewner flow reached 0 at s={s:.6g}", point=cur, time=s)
        cur = complex(_sqrt_upper(np.array(cur * cur - 4 * dt), np.array(cur.real)))
        h[j + 1] = cur
    return ReverseTrajectory(float(path.times[m]), z, np.arange(m + 1) * dt, h)


def _reverse_many(path, idx, starts):
    """g_{t_m}^{-1}(U_m + start) for each (m, start) pair, batched."""
    U = path.values
    dt = path.dt
    idx = np.asarray(idx)
    a = U[idx] + np.asarray(starts, dtype=complex)
    for k in range(int(idx.max()) - 1, -1, -1):
        act = idx > k
        w = a[act] - U[k]
        if np.any(np.abs(w) < SINGULAR_TOL):
            raise SingularityError(f"reverse Loewner flow reached the driver at step {k}",
                                   time=path.t0 + k * dt)
        a[act] = U[k] + _sqrt_upper(w * w - 4 * dt, w.real)
    return a


@dataclass
class TraceResult:
    times: np.ndarray
    points: np.ndarray
    eps: float
    coarse: np.ndarray
    fine: np.ndarray

    @property
    def error_proxy(self):
        """|gamma(eps) - gamma(eps/2)| per time."""
        return np.abs(self.coarse - self.fine)

    def to_csv(self):
        rows = ["t,re,im"]
        rows += [f"{t:.17g},{p.real:.17g},{p.imag:.17g}" for t, p in zip(self.times, self.points)]
        return "\n".join(rows) + "\n"


def trace(path, times, eps=None):
    """gamma_t from the reverse flow started at i*eps and at i*eps/2.

    The two are combined as (4 gamma(eps/2) - gamma(eps)) / 3, which removes
    the leading eps**2 term; gamma at the start time is 0.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if eps is None:
        eps = float(np.sqrt(path.dt))
    if not eps > 0:
        raise ParameterError(f"eps must be > 0, got {eps}")
    idx = np.array([path.index_of(t) for t in times])
    pos = idx > 0
    coarse = np.zeros(times.shape, dtype=complex)
    fine = np.zeros(times.shape, dtype=complex)
    if pos.any():
        both = _reverse_many(path, np.concatenate([idx[pos], idx[pos]]),
                             np.concatenate([np.full(pos.sum(), 1j * eps), np.full(pos.sum(), 0.5j * eps)]))
        n = pos.sum()
        coarse[pos], fine[pos] = both[:n], both[n:]
    points = (4.0 * fine - coarse) / 3.0
    points = np.where(points.imag < 0, points.real + 0j, points)
    return TraceResult(path.times[idx], points, eps, coarse, fine)


@dataclass
class LoewnerChain:
    """A driver with a horizon, and the evaluations made against it."""

    driver: object
    horizon: float | None = None
    records: list = dc_field(default_factory=list)

    def __post_init__(self):
        if self.horizon is None:
            self.horizon = self.driver.t1
        if self.horizon > self.driver.t1 + 1e-12:
            raise ParameterError(f"horizon {self.horizon} beyond driver span {self.driver.t1}")

    def _log(self, kind, **kw):
        self.records.append({"kind": kind, **kw})

    def g(self, z, t):
        r = forward_lde(self.driver, z, t)
        self._log("g", t=r.t, z=r.z, value=r.values, T=r.swallow_times)
        return r

    def h(self, t, z):
        r = reverse_lde(self.driver, t, z)
        self._log("h", t=r.t, z=r.z, value=r.final)
        return r

    def hcap(self, t, probe_radius=100.0):
        b = hcap_estimate(self.driver, t, probe_radius)
        self._log("hcap", t=t, value=b)
        return b

    def trace(self, times, eps=None):
        r = trace(self.driver, times, eps)
        self._log("trace", t=r.times, value=r.points)
        return r

    def swallowing_time(self, z):
        full = self.driver.restrict(0, self.driver.index_of(self.horizon))
        T = swallowing_time(full, z)
        self._log("T", z=z, value=T)
        return T

    def hull(self, t, grid):
        return hull(self.driver, t, grid)
