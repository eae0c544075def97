"""Monte Carlo scaling experiments and regularity diagnostics.

Paths are generated per index from ``path_seed(master_seed, index)`` and
processed in fixed chunks of ``PATH_CHUNK``; per-path results are
concatenated in index order before any reduction, so every estimate is
independent of the number of workers.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
import warnings

import numpy as np

from .derivative import theta_panels
from .errors import (CensoringWarning, ParameterError, SnapWarning, ThresholdWarning,
                     TruncationWarning, UnsupportedFieldError)
from .fields import IteratedField, PowerField
from .flow import OK, BoundaryCurve, evolve, flow_map
from .paths import path_seed, refine, standard_normals

PATH_CHUNK = 64
N_BOOT = 200
AXES = ("time-s", "time-t", "space")


def _increments(master_seed, i0, i1, n_steps, dt, scale):
    cols = [standard_normals(path_seed(master_seed, i), 0, n_steps) for i in range(i0, i1)]
    return np.stack(cols, axis=1) * (scale * np.sqrt(dt))


def _map_chunks(fn, n_paths, workers):
    bounds = [(i, min(i + PATH_CHUNK, n_paths)) for i in range(0, n_paths, PATH_CHUNK)]
    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda b: fn(*b), bounds))
    return [fn(*b) for b in bounds]


def _snap_lags(lags, step):
    lags = np.asarray(lags, dtype=float)
    k = np.rint(lags / step).astype(int)
    off = np.abs(lags / step - k) > 1e-7
    if off.any():
        warnings.warn(f"lags {lags[off].tolist()} snapped to multiples of the step {step}",
                      SnapWarning, stacklevel=3)
    return k


def _check_lags(lags):
    lags = np.asarray(lags, dtype=float)
    if np.any(lags <= 0):
        raise ParameterError("lags must be positive")
    u = np.unique(lags)
    decades = np.log10(u[-1] / u[0]) if u.size else 0.0
    if decades < 1 or u.size < 5 * decades - 1e-9:
        raise ParameterError(f"need lags spanning a decade with at least 5 per decade, "
                             f"got {u.tolist()}")


def ols_slope(x, y):
    """Slope, intercept and standard error of an ordinary least-squares fit."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    xm = x - x.mean()
    sxx = np.sum(xm * xm)
    slope = np.sum(xm * (y - y.mean())) / sxx
    icept = y.mean() - slope * x.mean()
    resid = y - icept - slope * x
    se = np.sqrt(np.sum(resid ** 2) / (n - 2) / sxx) if n > 2 else np.inf
    return float(slope), float(icept), float(se)


def _holder_of(field):
    return field.alpha if isinstance(field, PowerField) else 1.0


@dataclass
class MomentReport:
    quantity: str
    p: float
    axis: str
    lags: np.ndarray
    estimates: np.ndarray
    slope: float
    stderr: float
    se_ols: float
    se_boot: float
    intercept: float
    n_paths: int
    n_censored: int
    master_seed: int
    step: float
    base: dict
    field: dict = dc_field(default_factory=dict)

    @property
    def censored_fraction(self):
        return self.n_censored / self.n_paths

    def to_csv(self):
        rows = ["lag,estimate"] + [f"{l:.17g},{e:.17g}" for l, e in zip(self.lags, self.estimates)]
        return "\n".join(rows) + "\n"

    def as_dict(self):
        return {"quantity": self.quantity, "p": self.p, "axis": self.axis,
                "lags": self.lags.tolist(), "estimates": self.estimates.tolist(),
                "slope": self.slope, "stderr": self.stderr, "se_ols": self.se_ols,
                "se_boot": self.se_boot, "intercept": self.intercept, "n_paths": self.n_paths,
                "n_censored": self.n_censored, "censored_fraction": self.censored_fraction,
                "master_seed": self.master_seed, "step": self.step, "base": self.base,
                "field": self.field}


def _regress(values, lags, master_seed):
    """OLS on log-log means; bootstrap over paths for the sampling error."""
    means = values.mean(axis=1)
    if np.any(means <= 0):
        raise ParameterError("moment estimate is zero at some lag (increment identically 0); "
                             "no log-log fit possible")
    x = np.log(lags)
    slope, icept, se_ols = ols_slope(x, np.log(means))
    n = values.shape[1]
    rng = np.random.default_rng(np.random.SeedSequence([int(master_seed), 0xB007]))
    idx = rng.integers(0, n, size=(N_BOOT, n))
    boot = np.stack([values[:, r].mean(axis=1) for r in idx], axis=1)
    xm = x - x.mean()
    ly = np.log(boot)
    slopes = (xm @ (ly - ly.mean(axis=0))) / np.sum(xm * xm)
    se_boot = float(np.std(slopes, ddof=1))
    return means, slope, icept, se_ols, se_boot


def _finish(quantity, p, axis, lags, per_path, censored, n_paths, master_seed, step, base, field):
    keep = ~censored
    n_cens = int(censored.sum())
    if n_cens:
        warnings.warn(f"{n_cens} of {n_paths} paths censored by explosion or singularity",
                      CensoringWarning, stacklevel=3)
    if keep.sum() < 2:
        raise ParameterError("fewer than two uncensored paths")
    means, slope, icept, se_ols, se_boot = _regress(per_path[:, keep], lags, master_seed)
    return MomentReport(quantity, p, axis, lags, means, slope,
                        float(np.hypot(se_ols, se_boot)), se_ols, se_boot, icept,
                        n_paths, n_cens, int(master_seed), step, base, field.describe())


def phi_increments(field, p, axis, s, t, z, lags, n_paths, master_seed, step,
                   scale=1.0, direction=1.0, workers=1):
    """Per-path |phi(s,t,z) - phi(lagged)|**p, shape (len(lags), n_paths), and censoring."""
    if axis not in AXES:
        raise ParameterError(f"axis must be one of {AXES}, got {axis!r}")
    if not p >= 2:
        raise ParameterError(f"p must be >= 2, got {p}")
    if complex(z).imag < 0:
        raise ParameterError("z must lie in the closed upper half-plane")
    lags = np.asarray(lags, dtype=float)
    i0 = int(round(s / step))
    it = int(round(t / step))
    if it < i0:
        raise ParameterError("need s <= t")
    if axis == "space":
        k = None
        n_steps = it
    else:
        k = _snap_lags(lags, step)
        if axis == "time-s" and np.any(i0 + k > it):
            raise ParameterError("time-s lags must keep s + lag <= t")
        n_steps = it + (k.max() if axis == "time-t" else 0)
    n_steps = max(n_steps, 1)
    z = complex(z)

    def chunk(a, b):
        inc = _increments(master_seed, a, b, n_steps, step, scale)
        if axis == "time-t":
            rec = np.concatenate([[it - i0], it - i0 + k])
            ev = evolve(field, z, inc[i0:], step, record=rec, errors="mask")
            vals = np.abs(ev.states[1:] - ev.states[0]) ** p
            bad = ev.status != OK
        elif axis == "time-s":
            base = evolve(field, z, inc[i0:it], step, errors="mask")
            vals, bad = [], base.status != OK
            for kk in k:
                ev = evolve(field, z, inc[i0 + kk:it], step, errors="mask")
                vals.append(np.abs(ev.final - base.final) ** p)
                bad = bad | (ev.status != OK)
            vals = np.array(vals)
        else:
            z0 = (z + direction * np.concatenate([[0.0], lags]))[:, None]
            ev = evolve(field, z0, inc[i0:it][:, None, :], step, errors="mask")
            vals = np.abs(ev.final[1:] - ev.final[0]) ** p
            bad = np.any(ev.status != OK, axis=0)
        return vals, bad

    res = _map_chunks(chunk, n_paths, workers)
    vals = np.concatenate([r[0] for r in res], axis=1)
    bad = np.concatenate([r[1] for r in res])
    vals = np.where(bad[None, :], 0.0, vals)
    used = lags if axis == "space" else k * step
    return used, vals, bad


def moment_scaling(field, p, axis, base, lags, n_paths, master_seed, step=1e-3,
                   scale=1.0, direction=1.0, workers=1):
    """Slope of log E|phi(s,t,z) - phi(lagged)|**p against log lag.

    ``base`` is ``(s, t, z)``.  The lag moves t (``time-t``), s (``time-s``)
    or z along ``direction`` (``space``).
    """
    s, t, z = base
    _check_lags(lags)
    used, vals, bad = phi_increments(field, p, axis, s, t, z, lags, n_paths, master_seed,
                                     step, scale, direction, workers)
    _check_lags(used)
    return _finish("phi", p, axis, used, vals, bad, n_paths, master_seed, step,
                   {"s": s, "t": t, "z": [complex(z).real, complex(z).imag]}, field)


def theta_average_f(field, X, Y, theta_nodes=16, block=128):
    """Per-step theta-average of F((1-theta) Y_k + theta X_k), k < N.

    Processed in blocks of time steps to bound memory.
    """
    n = X.shape[0] - 1
    out = np.empty((n,) + X.shape[1:], dtype=complex)
    for a in range(0, n, block):
        b = min(a + block, n)
        x, y = X[a:b], Y[a:b]
        if x is y or np.array_equal(x, y):
            out[a:b] = field.value(x)
            continue
        th, wt = theta_panels(field, x, y, theta_nodes)
        W = th * x[..., None] + (1.0 - th) * y[..., None]
        with np.errstate(invalid="ignore"):
            FW = np.where(wt > 0, field.value(W), 0.0)
        out[a:b] = np.sum(wt * FW, axis=-1)
    return out


def j_increments(field, p, axis, s, t, z, w, lags, n_paths, master_seed, step,
                 scale=1.0, direction=1.0, theta_nodes=16, workers=1):
    if isinstance(field, IteratedField):
        raise UnsupportedFieldError("J increments need closed-form field values along segments")
    if axis not in AXES:
        raise ParameterError(f"axis must be one of {AXES}, got {axis!r}")
    if not p >= 2:
        raise ParameterError(f"p must be >= 2, got {p}")
    alpha = _holder_of(field)
    if p < 2.0 / alpha:
        warnings.warn(f"p={p} is below 2/alpha={2.0 / alpha:g} for this field", ThresholdWarning,
                      stacklevel=3)
    lags = np.asarray(lags, dtype=float)
    i0 = int(round(s / step))
    it = int(round(t / step))
    if it <= i0:
        raise ParameterError("need s < t")
    k = None if axis == "space" else _snap_lags(lags, step)
    if axis == "time-s" and np.any(i0 + k >= it):
        raise ParameterError("time-s lags must keep s + lag < t")
    n_steps = it + (k.max() if axis == "time-t" else 0)
    z, w = complex(z), complex(w)

    def J_of(starts_z, starts_w, inc):
        X = evolve(field, starts_z, inc, step, record="all", errors="mask")
        Y = evolve(field, starts_w, inc, step, record="all", errors="mask")
        Xs, Ys = np.broadcast_arrays(X.states, Y.states)
        with np.errstate(invalid="ignore"):
            f = theta_average_f(field, Xs, Ys, theta_nodes)
        bad = (X.status != OK) | (Y.status != OK)
        dU = inc.reshape(inc.shape + (1,) * (f.ndim - inc.ndim))
        return f * dU, bad

    def chunk(a, b):
        inc = _increments(master_seed, a, b, n_steps, step, scale)
        if axis == "time-t":
            terms, bad = J_of(z, w, inc[i0:])
            cum = np.concatenate([np.zeros((1,) + terms.shape[1:]), np.cumsum(terms, axis=0)])
            base = cum[it - i0]
            vals = np.abs(cum[it - i0 + k] - base) ** p
        elif axis == "time-s":
            terms, bad = J_of(z, w, inc[i0:it])
            base = terms.sum(axis=0)
            vals = []
            for kk in k:
                tk, bk = J_of(z, w, inc[i0 + kk:it])
                vals.append(np.abs(tk.sum(axis=0) - base) ** p)
                bad = bad | bk
            vals = np.array(vals)
        else:
            zs = (z + direction * np.concatenate([[0.0], lags]))[:, None]
            terms, bad = J_of(zs, np.full(zs.shape, w), inc[i0:it][:, None, :])
            Js = terms.sum(axis=0)
            vals = np.abs(Js[1:] - Js[0]) ** p
            bad = np.any(bad, axis=0)
        return vals, bad

    res = _map_chunks(chunk, n_paths, workers)
    vals = np.concatenate([r[0] for r in res], axis=1)
    bad = np.concatenate([r[1] for r in res])
    vals = np.where(bad[None, :], 0.0, vals)
    used = lags if axis == "space" else k * step
    return used, vals, bad


def j_moment_scaling(field, p, axis, base, lags, n_paths, master_seed, step=1e-3,
                     scale=1.0, direction=1.0, theta_nodes=16, workers=1):
    """Slope of log E|J(s,t,z,w) - J(lagged)|**p against log lag; ``base`` = (s, t, z, w)."""
    s, t, z, w = base
    _check_lags(lags)
    used, vals, bad = j_increments(field, p, axis, s, t, z, w, lags, n_paths, master_seed,
                                   step, scale, direction, theta_nodes, workers)
    _check_lags(used)
    return _finish("J", p, axis, used, vals, bad, n_paths, master_seed, step,
                   {"s": s, "t": t, "z": [z.real, z.imag] if isinstance(z, complex) else [z, 0.0],
                    "w": [complex(w).real, complex(w).imag]}, field)


# -- curve regularity ---------------------------------------------------------------

@dataclass
class RegularityReport:
    curve_id: str
    eta: float
    band: tuple
    eta_raw: float
    gaps: np.ndarray
    moduli: np.ndarray
    corner: dict | None = None

    def as_dict(self):
        return {"curve_id": self.curve_id, "eta": self.eta, "band": list(self.band),
                "eta_raw": self.eta_raw, "gaps": self.gaps.tolist(),
                "moduli": self.moduli.tolist(), "corner": self.corner}


def _resample(curve, lo, hi, n):
    x = np.linspace(lo, hi, n)
    pts = np.interp(x, curve.params, curve.points.real) + 1j * np.interp(x, curve.params, curve.points.imag)
    return x, pts


def holder_exponent(curve, center=None, window=None, n_blocks=8, seed=0):
    """Hoelder exponent of the parameter-to-image map from dyadic moduli.

    The curve is resampled on a uniform parameter grid (restricted to
    ``[center - window, center + window]`` if given) and the modulus of
    continuity max |P(x + h) - P(x)| is regressed on h for dyadic h.  The
    band is the 2.5-97.5 % range over block-bootstrap replicates.
    """
    if curve.params.size < 100:
        raise ParameterError(f"need a curve with >= 100 points, got {curve.params.size}")
    if np.all(curve.points == curve.points[0]):
        raise ParameterError("degenerate curve: all points coincide")
    lo, hi = curve.params[0], curve.params[-1]
    if center is not None:
        lo, hi = max(lo, center - window), min(hi, center + window)
    n = 1 + 2 ** int(np.floor(np.log2(max(curve.params.size, 129) - 1)))
    x, pts = _resample(curve, lo, hi, n)
    h0 = x[1] - x[0]
    gaps = 2 ** np.arange(int(np.log2((n - 1) // 4)) + 1)
    diffs = [np.abs(pts[g:] - pts[:-g]) for g in gaps]
    moduli = np.array([d.max() for d in diffs])
    if np.any(moduli <= 0):
        raise ParameterError("degenerate curve: zero modulus at some gap")
    lx = np.log(gaps * h0)
    eta_raw, _, _ = ols_slope(lx, np.log(moduli))
    # block bootstrap: blocks of the parameter range resampled with replacement
    edges = np.linspace(0, n - 1, n_blocks + 1).astype(int)
    block_max = np.empty((len(gaps), n_blocks))
    for gi, (g, d) in enumerate(zip(gaps, diffs)):
        for b in range(n_blocks):
            seg = d[edges[b]:max(edges[b + 1] - g, edges[b] + 1)]
            block_max[gi, b] = seg.max() if seg.size else 0.0
    rng = np.random.default_rng(seed)
    reps = []
    for _ in range(N_BOOT):
        pick = rng.integers(0, n_blocks, n_blocks)
        m = block_max[:, pick].max(axis=1)
        if np.all(m > 0):
            reps.append(ols_slope(lx, np.log(m))[0])
    band = (float(np.percentile(reps, 2.5)), float(np.percentile(reps, 97.5))) if reps else (eta_raw, eta_raw)
    eta = float(min(max(eta_raw, np.finfo(float).tiny), 1.0))
    cid = str(curve.meta.get("id", "curve"))
    return RegularityReport(cid, eta, band, float(eta_raw), gaps * h0, moduli)


def _ray_direction(v):
    u = v / np.abs(v)
    d = np.sqrt(np.sum(u * u))
    if d == 0:
        raise ParameterError("tangent direction undetermined on this window")
    d = d / abs(d)
    if np.sum(np.real(u * np.conj(d))) < 0:
        d = -d
    return d


def corner_angle(curve, center_param, window, min_samples=10):
    """Interior angle at the image of ``center_param``, in (0, 2 pi).

    Each one-sided arc within ``window`` gives a least-squares tangent ray
    from the center image; the angle is measured counter-clockwise from the
    right ray to the left ray, so a straight segment gives pi.
    """
    params, pts = curve.params, curve.points
    left = (params >= center_param - window) & (params < center_param)
    right = (params > center_param) & (params <= center_param + window)
    if left.sum() < min_samples or right.sum() < min_samples:
        raise ParameterError(f"window {window} too small: {left.sum()} left and {right.sum()} "
                             f"right samples, need {min_samples} each")
    exact = np.nonzero(params == center_param)[0]
    if exact.size:
        p0 = pts[exact[0]]
    else:
        p0 = (np.interp(center_param, params, pts.real) + 1j * np.interp(center_param, params, pts.imag))
    dl = _ray_direction(pts[left] - p0)
    dr = _ray_direction(pts[right] - p0)
    ang = float(np.angle(dl / dr)) % (2 * np.pi)
    return ang if ang > 0 else 2 * np.pi


def _local_params(center, window, per_side):
    g = np.linspace(window / per_side, window, per_side)
    return np.concatenate([center - g[::-1], [center], center + g])


@dataclass
class CornerSequence:
    windows: np.ndarray
    steps: np.ndarray
    angles: np.ndarray
    curves: list

    @property
    def deviations(self):
        return np.abs(np.pi - self.angles)

    @property
    def monotone(self):
        return bool(np.all(np.diff(self.deviations) <= 0))

    def as_dict(self):
        return {"windows": self.windows.tolist(), "steps": self.steps.tolist(),
                "angles": self.angles.tolist(), "deviations_from_pi": self.deviations.tolist(),
                "monotone": self.monotone}


def corner_sequence(field, path, s, t, center, windows, refine_factor=None, per_side=20,
                    workers=1):
    """Corner angle over shrinking windows.

    With ``refine_factor`` the driver is refined by Brownian-bridge
    insertion between consecutive windows, so the grid resolves each window
    on the same relative scale; otherwise one path is used throughout.
    """
    windows = np.asarray(windows, dtype=float)
    angles, steps, curves = [], [], []
    cur = path
    for j, win in enumerate(windows):
        if j and refine_factor:
            cur = refine(cur, refine_factor)
        params = _local_params(center, win, per_side)
        pts = flow_map(field, cur, s, t, params.astype(complex), workers=workers)
        c = BoundaryCurve(s, t, params, pts, {"window": float(win), "step": cur.dt})
        angles.append(corner_angle(c, center, win))
        steps.append(cur.dt)
        curves.append(c)
    return CornerSequence(windows, np.array(steps), np.array(angles), curves)


# -- the exponentially weighted transform ------------------------------------------

@dataclass
class PhiEstimate:
    z: complex
    lam: float
    value: complex
    stderr: float
    residual: complex | None
    n_paths: int
    master_seed: int
    step: float
    horizon: float

    def as_dict(self):
        c = lambda v: None if v is None else [v.real, v.imag]
        return {"z": c(self.z), "lambda": self.lam, "value": c(self.value), "stderr": self.stderr,
                "residual": c(self.residual), "n_paths": self.n_paths,
                "master_seed": self.master_seed, "step": self.step, "horizon": self.horizon}


def _phi_samples(field, lam, zs, n_paths, master_seed, step, horizon, scale, workers):
    n = int(round(horizon / step))
    wts = np.exp(-lam * step * np.arange(n + 1)) * step
    wts[0] *= 0.5
    wts[-1] *= 0.5
    zs = np.asarray(zs, dtype=complex)

    def chunk(a, b):
        inc = _increments(master_seed, a, b, n, step, scale)
        ev = evolve(field, zs[:, None], inc[:, None, :], step, record="all")
        Fv = field.value(ev.states)
        return np.tensordot(wts, Fv, axes=(0, 0)), np.max(np.abs(Fv[-1]))

    res = _map_chunks(chunk, n_paths, workers)
    samples = np.concatenate([r[0] for r in res], axis=1)
    tail = max(r[1] for r in res)
    return samples, tail


def phi_transform_estimate(field, lam, z, n_paths, horizon=None, master_seed=0, step=1e-3,
                           scale=1.0, fd_step=1e-2, tol=1e-6, workers=1):
    """z + int_0^T exp(-lam r) E[F(phi(0, r, z))] dr by Monte Carlo.

    The time integral is the trapezoid rule on the driver grid.  The
    residual of 1/2 Phi'' + F Phi' - lam (Phi - z) is formed by central
    differences in z with the same driver samples at every stencil point.
    """
    if not lam > 0:
        raise ParameterError(f"lambda must be > 0, got {lam}")
    if n_paths < 2:
        raise ParameterError("need at least two paths")
    z = complex(z)
    if horizon is None:
        horizon = 20.0 / lam
    if isinstance(field, IteratedField):
        raise UnsupportedFieldError("the transform estimator needs a closed-form field")
    interior = z.imag > fd_step
    stencil = np.array([z, z + fd_step, z - fd_step]) if interior else np.array([z])
    samples, tail = _phi_samples(field, lam, stencil, n_paths, master_seed, step, horizon,
                                 scale, workers)
    if np.exp(-lam * horizon) * tail > tol:
        warnings.warn(f"truncation at T={horizon:g} leaves exp(-lam T) sup|F| = "
                      f"{np.exp(-lam * horizon) * tail:.3g} > {tol:g}", TruncationWarning,
                      stacklevel=2)
    means = stencil + samples.mean(axis=1)
    value = complex(means[0])
    stderr = float(np.std(samples[0], ddof=1) / np.sqrt(n_paths))
    residual = None
    if interior:
        p0, pp, pm = means
        d1 = (pp - pm) / (2 * fd_step)
        d2 = (pp - 2 * p0 + pm) / fd_step ** 2
        Fz = complex(field.value(np.array(z)))
        residual = complex(0.5 * d2 + Fz * d1 - lam * (p0 - z))
    return PhiEstimate(z, lam, value, stderr, residual, n_paths, int(master_seed), step, horizon)
