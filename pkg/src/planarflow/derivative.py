"""The exponential identity phi(z) - phi(w) = (z - w) exp V and phi' = exp V.

For two trajectories X = phi(s, ., z), Y = phi(s, ., w) on a shared path and
W^theta = theta X + (1 - theta) Y:

    I = avg_theta [ G(W_t) - G(W_s) - int F(W) (theta F(X) + (1-theta) F(Y)) dr ]
    J = avg_theta [ int F(W) dU ]                     (left-point sums)
    V = 2 (I - J) + Q

2(I - J) recovers int avg_theta F'(W) dr through the Ito correction, i.e.
only to the extent that the driver's realized quadratic variation matches
dr.  ``Q = -sum_k D_k (dU_k**2 - dt)`` removes that mismatch step by step,
where ``D_k = (F(X_k) - F(Y_k)) / (X_k - Y_k)`` is the exact theta-average of
F'(W_k).  Q vanishes in the Brownian limit and supplies the whole of
int F' dr for a driver with no quadratic variation (e.g. U = 0).  Pass
``compensate_qv=False`` for the uncompensated V = 2(I - J).

The theta-average at each step is a Gauss-Legendre rule.  When the field
has singular or branch points, each step's interval [0, 1] is split at the
theta where the segment [Y_k, X_k] passes closest to the nearest such point,
with ``theta_nodes`` nodes per panel.
"""

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import ParameterError, UnsupportedFieldError
from .fields import IteratedField
from .flow import _check_start, _span, evolve, flow_map


@dataclass
class DerivativeReport:
    s: float
    t: float
    z: complex
    w: complex
    I_val: complex
    J_val: complex
    V_val: complex
    qv_correction: complex
    phi_z: complex
    phi_w: complex
    phi_prime: complex | None
    theta_nodes: int
    step: float

    def as_dict(self):
        def c(v):
            return None if v is None else [v.real, v.imag]
        return {"s": self.s, "t": self.t, "z": c(self.z), "w": c(self.w),
                "I": c(self.I_val), "J": c(self.J_val), "V": c(self.V_val),
                "qv_correction": c(self.qv_correction), "phi_z": c(self.phi_z),
                "phi_w": c(self.phi_w), "phi_prime": c(self.phi_prime),
                "theta_nodes": self.theta_nodes, "step": self.step}


def _gl01(n):
    x, w = leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def theta_panels(field, X, Y, theta_nodes):
    """Per-step nodes and weights on [0, 1], shape ``X.shape + (q,)``."""
    xs, ws = _gl01(theta_nodes)
    sp = field.singular_points
    if sp.size == 0:
        th = np.broadcast_to(xs, X.shape + xs.shape)
        wt = np.broadcast_to(ws, X.shape + ws.shape)
        return th, wt
    d = (X - Y)[..., None]
    rel = sp - Y[..., None]
    dd = np.abs(d) ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        cand = np.clip(np.real(rel * np.conj(d)) / np.where(dd > 0, dd, 1.0), 0.0, 1.0)
    dist = np.abs(Y[..., None] + cand * d - sp)
    best = np.take_along_axis(cand, np.argmin(dist, axis=-1)[..., None], axis=-1)
    th = np.concatenate([best * xs, best + (1.0 - best) * xs], axis=-1)
    wt = np.concatenate([best * ws, (1.0 - best) * ws], axis=-1)
    return th, wt


def _divided_difference(field, X, Y, FX, FY):
    same = X == Y
    with np.errstate(invalid="ignore", divide="ignore"):
        D = (FX - FY) / np.where(same, 1.0, X - Y)
    if same.any():
        D = np.where(same, field.derivative(np.where(same, X, 1j)), D)
    return D


def v_terms(field, X, Y, dU, dt, theta_nodes=16, compensate_qv=True):
    """I, J and Q from stored trajectories; time is the leading axis.

    ``X`` and ``Y`` have shape ``(N+1,) + b`` and ``dU`` broadcasts to
    ``(N,) + b``.  Returns ``(I, J, Q)`` each of shape ``b``.
    """
    if isinstance(field, IteratedField):
        raise UnsupportedFieldError("V needs an antiderivative; iterated fields have none")
    dU = np.asarray(dU, dtype=float)
    if dU.ndim < X.ndim:
        dU = dU.reshape(dU.shape + (1,) * (X.ndim - dU.ndim))
    FX = field.value(X)
    FY = field.value(Y)
    if np.array_equal(X, Y):
        I = field.antiderivative(X[-1]) - field.antiderivative(X[0]) - dt * np.sum(FX[:-1] ** 2, axis=0)
        J = np.sum(FX[:-1] * dU, axis=0)
    else:
        th, wt = theta_panels(field, X, Y, theta_nodes)
        W = th * X[..., None] + (1.0 - th) * Y[..., None]
        with np.errstate(invalid="ignore"):
            FW = np.where(wt > 0, field.value(W), 0.0)
            GN = np.where(wt[-1] > 0, field.antiderivative(W[-1]), 0.0)
            G0 = np.where(wt[0] > 0, field.antiderivative(W[0]), 0.0)
        g_inc = np.sum(wt[-1] * GN, axis=-1) - np.sum(wt[0] * G0, axis=-1)
        mix = th[:-1] * FX[:-1, ..., None] + (1.0 - th[:-1]) * FY[:-1, ..., None]
        drift = np.sum(wt[:-1] * FW[:-1] * mix, axis=-1)
        I = g_inc - dt * np.sum(drift, axis=0)
        avg_f = np.sum(wt[:-1] * FW[:-1], axis=-1)
        J = np.sum(avg_f * dU, axis=0)
    if compensate_qv:
        D = _divided_difference(field, X[:-1], Y[:-1], FX[:-1], FY[:-1])
        Q = -np.sum(D * (dU ** 2 - dt), axis=0)
    else:
        Q = np.zeros_like(I)
    return I, J, Q


def compute_V(field, path, s, t, z, w, theta_nodes=16, scheme="heun", compensate_qv=True):
    if theta_nodes < 1:
        raise ParameterError(f"theta_nodes must be >= 1, got {theta_nodes}")
    z, w = (complex(v) for v in _check_start([z, w]))
    i0, i1 = _span(path, s, t)
    s_, t_ = path.times[i0], path.times[i1]
    if isinstance(field, IteratedField):
        raise UnsupportedFieldError("V needs an antiderivative; iterated fields have none")
    if i0 == i1:
        zero = 0j
        return DerivativeReport(s_, t_, z, w, zero, zero, zero, zero, z, w,
                                1 + 0j if z == w else None, theta_nodes, path.dt)
    dU = path.increments[i0:i1]
    ev = evolve(field, np.array([z, w]), dU, path.dt, scheme, record="all",
                t_start=path.t0 + i0 * path.dt)
    X, Y = ev.states[:, 0], ev.states[:, 1]
    I, J, Q = v_terms(field, X, Y, dU, path.dt, theta_nodes, compensate_qv)
    I, J, Q = complex(I), complex(J), complex(Q)
    V = 2.0 * (I - J) + Q
    phi_prime = complex(np.exp(V)) if z == w else None
    return DerivativeReport(s_, t_, z, w, I, J, V, Q, complex(X[-1]), complex(Y[-1]),
                            phi_prime, theta_nodes, path.dt)


def derivative(field, path, s, t, z, theta_nodes=16, scheme="heun", compensate_qv=True):
    """phi'(s, t, z) = exp V(s, t, z, z)."""
    return compute_V(field, path, s, t, z, z, theta_nodes, scheme, compensate_qv).phi_prime


def derivative_field(field, path, s, t, xs, scheme="heun", compensate_qv=True):
    """phi'(s, t, x) for every x in ``xs`` (one batched integration)."""
    xs = _check_start(np.atleast_1d(xs))
    i0, i1 = _span(path, s, t)
    if i0 == i1:
        return np.ones(xs.shape, dtype=complex)
    dU = path.increments[i0:i1]
    ev = evolve(field, xs, dU, path.dt, scheme, record="all", t_start=path.t0 + i0 * path.dt)
    I, J, Q = v_terms(field, ev.states, ev.states, dU, path.dt, 1, compensate_qv)
    return np.exp(2.0 * (I - J) + Q)


def identity_residual(field, path, s, t, z, w, theta_nodes=16, scheme="heun", compensate_qv=True):
    """|phi(z) - phi(w) - (z - w) exp V(z, w)| / |z - w|."""
    if z == w:
        raise ParameterError("identity residual needs z != w")
    r = compute_V(field, path, s, t, z, w, theta_nodes, scheme, compensate_qv)
    return abs(r.phi_z - r.phi_w - (r.z - r.w) * np.exp(r.V_val)) / abs(r.z - r.w)


def finite_difference_derivative(field, path, s, t, z, h, scheme="heun"):
    """(phi(z + h) - phi(z)) / h on a shared path; works for any field."""
    if not h > 0:
        raise ParameterError(f"h must be > 0, got {h}")
    v = flow_map(field, path, s, t, np.array([z, z + h], dtype=complex), scheme)
    return complex((v[1] - v[0]) / h)


def finite_difference_check(field, path, s, t, z, h, theta_nodes=16, scheme="heun"):
    fd = finite_difference_derivative(field, path, s, t, z, h, scheme)
    return abs(fd - derivative(field, path, s, t, z, theta_nodes, scheme))
