"""Discretized real drivers U on uniform grids.

All randomness in the package comes from here.  Normal variates are produced
by the inverse CDF of uniforms drawn from a Philox counter-based stream
keyed by ``(seed, stream)``; variate ``k`` lives in block ``k // BLOCK`` of
that stream, so any sub-range of increments can be regenerated on its own
and the result never depends on how the work was split.
"""

from dataclasses import dataclass, field as dc_field
import io
import warnings

import numpy as np
from scipy.special import ndtri

from .errors import ParameterError, SnapWarning, SpanError, UnsupportedFieldError

BLOCK = 4096
_U64 = 2 ** 64


def _stream_key(seed, stream):
    if not 0 <= seed < _U64:
        raise ParameterError(f"seed must fit in 64 bits, got {seed}")
    return int(seed) + (int(stream) << 64)


def standard_normals(seed, start, count, stream=0):
    """Normals number ``start .. start+count-1`` of stream ``(seed, stream)``."""
    if count <= 0:
        return np.zeros(0)
    key = _stream_key(seed, stream)
    b0, b1 = start // BLOCK, (start + count - 1) // BLOCK
    chunks = []
    for b in range(b0, b1 + 1):
        bg = np.random.Philox(counter=[0, 0, 0, b], key=key)
        chunks.append(bg.random_raw(BLOCK))
    raw = np.concatenate(chunks)[start - b0 * BLOCK:start - b0 * BLOCK + count]
    # 53-bit uniforms on the open interval (0, 1)
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53
    return ndtri(u)


def path_seed(master_seed, index):
    """Per-path seed derived from a master seed and a path index."""
    ss = np.random.SeedSequence([int(master_seed), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True, eq=False)
class DriverPath:
    t0: float
    t1: float
    n_steps: int
    values: np.ndarray
    seed: int | None = None
    scale: float = 0.0
    kind: str = "custom"
    level: int = 0
    _origin: tuple | None = dc_field(default=None, repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.n_steps + 1,):
            raise ParameterError(f"expected {self.n_steps + 1} values, got {v.shape}")
        if v[0] != 0:
            raise ParameterError("driver paths start at U = 0")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dt(self):
        return (self.t1 - self.t0) / self.n_steps

    @property
    def times(self):
        return self.t0 + np.arange(self.n_steps + 1) * self.dt

    @property
    def increments(self):
        return np.diff(self.values)

    @property
    def ident(self):
        return f"{self.kind}(seed={self.seed},scale={self.scale},t=[{self.t0},{self.t1}],n={self.n_steps},level={self.level})"

    def describe(self):
        return {"kind": self.kind, "seed": self.seed, "scale": self.scale, "t0": self.t0,
                "t1": self.t1, "n_steps": self.n_steps, "level": self.level}

    def index_of(self, t, warn=True):
        """Grid index of ``t``; off-grid times snap to the nearest node."""
        span = self.t1 - self.t0
        tol = 1e-9 * max(span, 1.0)
        if t < self.t0 - tol or t > self.t1 + tol:
            raise SpanError(f"t={t} outside path span [{self.t0}, {self.t1}]")
        x = (t - self.t0) / self.dt
        k = int(round(x))
        k = min(max(k, 0), self.n_steps)
        if abs(x - k) > 1e-7 and warn:
            warnings.warn(f"t={t} is off the driver grid (step {self.dt}); snapped to {self.t0 + k * self.dt}",
                          SnapWarning, stacklevel=2)
        return k

    def value_at(self, t):
        """U(t) with linear interpolation between grid points."""
        t = np.asarray(t, dtype=float)
        if np.any(t < self.t0 - 1e-12) or np.any(t > self.t1 + 1e-12):
            raise SpanError(f"times outside path span [{self.t0}, {self.t1}]")
        return np.interp(t, self.times, self.values)

    def restrict(self, i0, i1):
        """Sub-path on grid indices [i0, i1], re-based so that it starts at 0."""
        v = self.values[i0:i1 + 1] - self.values[i0]
        kind = self.kind if i0 == 0 else "custom"
        return DriverPath(self.t0 + i0 * self.dt, self.t0 + i1 * self.dt, i1 - i0, v,
                          self.seed, self.scale, kind, self.level)

    def to_csv(self, fh=None):
        buf = io.StringIO()
        buf.write("t,u\n")
        for t, u in zip(self.times, self.values):
            buf.write(f"{t:.17g},{u:.17g}\n")
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text


def zero_path(t0, t1, n_steps):
    _check_grid(t0, t1, n_steps)
    return DriverPath(float(t0), float(t1), int(n_steps), np.zeros(n_steps + 1), kind="zero")


def custom_path(t0, t1, values):
    values = np.asarray(values, dtype=float)
    _check_grid(t0, t1, len(values) - 1)
    return DriverPath(float(t0), float(t1), len(values) - 1, values, kind="custom")


def _check_grid(t0, t1, n_steps):
    if not t0 < t1:
        raise ParameterError(f"need t0 < t1, got [{t0}, {t1}]")
    if int(n_steps) != n_steps or n_steps < 1:
        raise ParameterError(f"n_steps must be a positive integer, got {n_steps}")


def sample_brownian(seed, t0, t1, n_steps, scale=1.0):
    """scale * B on a uniform grid of ``n_steps`` steps over [t0, t1]."""
    _check_grid(t0, t1, n_steps)
    if not scale >= 0:
        raise ParameterError(f"scale must be >= 0, got {scale}")
    dt = (t1 - t0) / n_steps
    inc = standard_normals(seed, 0, n_steps) * (scale * np.sqrt(dt))
    values = np.concatenate([[0.0], np.cumsum(inc)])
    return DriverPath(float(t0), float(t1), int(n_steps), values, int(seed), float(scale), "brownian")


def time_reversal(path, t):
    """The path s -> U_t - U_{t-s} on [0, t - t0]."""
    m = path.index_of(t)
    if m == 0:
        raise SpanError("time reversal needs t > t0")
    origin = path._origin
    if origin is not None and m == path.n_steps:
        # reversing a reversal: return the source exactly instead of
        # re-subtracting, which is not exact in floating point
        src, src_m = origin
        return src.restrict(0, src_m)
    v = path.values[m] - path.values[m::-1]
    kind = "zero" if path.kind == "zero" else "custom"
    return DriverPath(0.0, m * path.dt, m, v, path.seed, path.scale, kind, path.level,
                      _origin=(path, m))


def refine(path, factor, sub_seed=0):
    """Insert Brownian-bridge points so each step is split into ``factor``.

    Coarse-grid values are copied unchanged.  Bridge variates use stream
    ``(seed, level, sub_seed)``, one variate per inserted point.
    """
    if int(factor) != factor or factor < 2:
        raise ParameterError(f"refinement factor must be an integer >= 2, got {factor}")
    factor = int(factor)
    n = path.n_steps * factor
    if path.kind == "zero":
        return zero_path(path.t0, path.t1, n)
    if path.kind != "brownian":
        raise UnsupportedFieldError(f"cannot refine a {path.kind} path")
    level = path.level + 1
    stream = (level << 32) | (int(sub_seed) & 0xFFFFFFFF)
    dt = path.dt
    coarse = path.values
    out = np.empty(n + 1)
    out[::factor] = coarse
    z = standard_normals(path.seed, 0, path.n_steps * (factor - 1), stream)
    z = z.reshape(path.n_steps, factor - 1)
    left = coarse[:-1].copy()
    right = coarse[1:]
    h = dt / factor
    for j in range(1, factor):
        remaining = factor - j + 1
        mean = left + (right - left) / remaining
        sd = path.scale * np.sqrt(h * (remaining - 1) / remaining)
        left = mean + sd * z[:, j - 1]
        out[j::factor] = left
    return DriverPath(path.t0, path.t1, n, out, path.seed, path.scale, "brownian", level)
