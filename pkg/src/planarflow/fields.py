"""Holomorphic vector fields F: H -> H and their antiderivatives.

Every field exposes three vectorized evaluators used by the integrators,
``value`` (F), ``antiderivative`` (G with G' = F) and ``derivative`` (F'),
none of which validate their input.  The module-level ``eval_field`` and
``eval_antiderivative`` are the checked entry points.

Branches: powers and logarithms of ``z`` take arg in [0, pi], which is
continuous on the closed upper half-plane minus the origin.  The Herglotz
log term is evaluated at ``x_j - z``, which lives in the closed lower
half-plane, so its arg is taken in [-pi, 0].
"""

from dataclasses import dataclass, field as dc_field
import threading

import numpy as np

from .errors import (DomainError, ParameterError, SingularityError,
                     SpanError, UnsupportedFieldError)

_EMPTY = np.zeros(0, dtype=complex)


def _as_upper(z):
    # adding +0j turns a -0.0 imaginary part into +0.0 so that points of R
    # are treated as limits from above by the principal log
    return np.asarray(z, dtype=complex) + 0j


class HalfPlaneField:
    """Base class; subclasses implement the unchecked evaluators."""

    kind = "abstract"

    def value(self, z):
        raise NotImplementedError

    def antiderivative(self, z):
        raise UnsupportedFieldError(f"{self.kind} field has no closed-form antiderivative")

    def derivative(self, z):
        raise UnsupportedFieldError(f"{self.kind} field has no closed-form derivative")

    @property
    def singular_points(self):
        """Complex points where F is singular or not Lipschitz."""
        return _EMPTY

    @property
    def poles(self):
        """Singular points at which F itself is undefined."""
        return _EMPTY

    def describe(self):
        return {"kind": self.kind}

    def __call__(self, z):
        return eval_field(self, z)


@dataclass(frozen=True)
class HerglotzField(HalfPlaneField):
    C: float = 0.0
    D: float = 0.0
    atoms: tuple = ()

    kind = "herglotz"

    def __post_init__(self):
        if not np.isfinite(self.C) or not np.isfinite(self.D):
            raise ParameterError("herglotz: C and D must be finite")
        if self.D < 0:
            raise ParameterError(f"herglotz: D must be >= 0, got {self.D}")
        atoms = tuple((float(x), float(w)) for x, w in self.atoms)
        for x, w in atoms:
            if not w > 0:
                raise ParameterError(f"herglotz: atom weight must be > 0, got {w} at x={x}")
        object.__setattr__(self, "atoms", atoms)

    @property
    def _xw(self):
        if not self.atoms:
            return np.zeros(0), np.zeros(0)
        a = np.array(self.atoms, dtype=float)
        return a[:, 0], a[:, 1]

    def value(self, z):
        z = _as_upper(z)
        out = self.C + self.D * z
        x, w = self._xw
        if x.size:
            zz = z[..., None]
            out = out + np.sum(w * (1.0 / (x - zz) - x / (1.0 + x * x)), axis=-1)
        return out

    def antiderivative(self, z):
        z = _as_upper(z)
        out = self.C * z + 0.5 * self.D * z * z
        x, w = self._xw
        if x.size:
            zz = z[..., None]
            lg = np.log(x - zz)
            # x - z on the negative real axis comes out with arg +pi; the
            # branch continuous on the closed lower half-plane wants -pi
            lg = np.where(lg.imag > 0, lg - 2j * np.pi, lg)
            out = out + np.sum(w * (-lg - x * zz / (1.0 + x * x)), axis=-1)
        return out

    def derivative(self, z):
        z = _as_upper(z)
        out = self.D + 0 * z
        x, w = self._xw
        if x.size:
            zz = z[..., None]
            out = out + np.sum(w / (x - zz) ** 2, axis=-1)
        return out

    @property
    def singular_points(self):
        return self._xw[0].astype(complex)

    @property
    def poles(self):
        return self.singular_points

    def describe(self):
        return {"kind": self.kind, "C": self.C, "D": self.D,
                "atoms": [list(a) for a in self.atoms]}


@dataclass(frozen=True)
class PowerField(HalfPlaneField):
    """F(z) = z**alpha, principal branch, F(0) = 0."""

    alpha: float = 0.5

    kind = "power"

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ParameterError(f"power: alpha must be in (0, 1), got {self.alpha}")

    def _pow(self, z, e):
        z = _as_upper(z)
        zero = z == 0
        safe = np.where(zero, 1.0, z)
        return np.where(zero, 0j, np.exp(e * np.log(safe)))

    def value(self, z):
        return self._pow(z, self.alpha)

    def antiderivative(self, z):
        return self._pow(z, 1.0 + self.alpha) / (1.0 + self.alpha)

    def derivative(self, z):
        z = _as_upper(z)
        zero = z == 0
        safe = np.where(zero, 1.0, z)
        d = self.alpha * np.exp((self.alpha - 1.0) * np.log(safe))
        return np.where(zero, complex(np.inf, 0), d)

    @property
    def singular_points(self):
        return np.zeros(1, dtype=complex)

    def describe(self):
        return {"kind": self.kind, "alpha": self.alpha}


@dataclass(frozen=True)
class InversionField(HalfPlaneField):
    """F(z) = (-2/kappa) / z."""

    kappa: float = 2.0

    kind = "inversion"

    def __post_init__(self):
        if not self.kappa > 0:
            raise ParameterError(f"inversion: kappa must be > 0, got {self.kappa}")

    @property
    def _a(self):
        return -2.0 / self.kappa

    def value(self, z):
        return self._a / _as_upper(z)

    def antiderivative(self, z):
        return self._a * np.log(_as_upper(z))

    def derivative(self, z):
        z = _as_upper(z)
        return -self._a / (z * z)

    @property
    def singular_points(self):
        return np.zeros(1, dtype=complex)

    @property
    def poles(self):
        return self.singular_points

    def describe(self):
        return {"kind": self.kind, "kappa": self.kappa}


@dataclass(frozen=True)
class ConstantField(HalfPlaneField):
    c: complex = 1j

    kind = "constant"

    def __post_init__(self):
        c = complex(self.c)
        if c.imag < 0:
            raise ParameterError(f"constant: Im c must be >= 0, got {c}")
        object.__setattr__(self, "c", c)

    def value(self, z):
        z = np.asarray(z, dtype=complex)
        return np.full(z.shape, self.c, dtype=complex)

    def antiderivative(self, z):
        return self.c * np.asarray(z, dtype=complex)

    def derivative(self, z):
        return np.zeros(np.shape(z), dtype=complex)

    def describe(self):
        return {"kind": self.kind, "c": [self.c.real, self.c.imag]}


@dataclass(frozen=True)
class ShiftedField(HalfPlaneField):
    """z -> F(z + i y); holomorphic on a neighbourhood of the closed half-plane."""

    base: HalfPlaneField
    y: float

    @property
    def kind(self):
        return f"{self.base.kind}-shifted"

    def value(self, z):
        return self.base.value(_as_upper(z) + 1j * self.y)

    def antiderivative(self, z):
        return self.base.antiderivative(_as_upper(z) + 1j * self.y)

    def derivative(self, z):
        return self.base.derivative(_as_upper(z) + 1j * self.y)

    @property
    def singular_points(self):
        return self.base.singular_points - 1j * self.y

    def describe(self):
        return {"kind": "shifted", "y": self.y, "base": self.base.describe()}


@dataclass(frozen=True, eq=False)
class IteratedField(HalfPlaneField):
    """F_n(z) = phi^{F_{n-1}}(0, 1, z) over one shared driver path.

    Values are cached per query point; there is no interpolation between
    points.
    """

    base: HalfPlaneField
    increments: np.ndarray
    dt: float
    depth: int = 1
    path_id: str = ""
    _cache: dict = dc_field(default_factory=dict, repr=False, compare=False)
    _lock: object = dc_field(default_factory=threading.Lock, repr=False, compare=False)

    kind = "iterated"

    @property
    def inner(self):
        if self.depth == 1:
            return self.base
        return IteratedField(self.base, self.increments, self.dt, self.depth - 1, self.path_id)

    def value(self, z):
        from .flow import evolve

        z = _as_upper(z)
        flat = z.ravel()
        out = np.empty(flat.shape, dtype=complex)
        with self._lock:
            hits = [self._cache.get(v) for v in flat.tolist()]
        miss = np.array([h is None for h in hits], dtype=bool)
        for i, h in enumerate(hits):
            if h is not None:
                out[i] = h
        if miss.any():
            todo = np.unique(flat[miss])
            res = evolve(self._inner_cached, todo, self.increments, self.dt, errors="raise").final
            lookup = dict(zip(todo.tolist(), res.tolist()))
            with self._lock:
                self._cache.update(lookup)
            out[miss] = [lookup[v] for v in flat[miss].tolist()]
        return out.reshape(z.shape)

    @property
    def _inner_cached(self):
        # the inner field object is rebuilt on demand; keep one instance so
        # its own cache survives across steps of the outer integration
        key = "_inner_obj"
        inner = self.__dict__.get(key)
        if inner is None:
            inner = self.inner
            object.__setattr__(self, key, inner)
        return inner

    def describe(self):
        return {"kind": self.kind, "depth": self.depth, "step": self.dt,
                "path": self.path_id, "base": self.base.describe()}


# -- constructors -----------------------------------------------------------

def herglotz(C=0.0, D=0.0, atoms=()):
    return HerglotzField(float(C), float(D), tuple(atoms))


def power(alpha):
    return PowerField(float(alpha))


def inversion(kappa):
    return InversionField(float(kappa))


def constant(c):
    return ConstantField(complex(c))


# -- checked operations ------------------------------------------------------

def _check_point(field, z):
    z = _as_upper(z)
    if np.any(z.imag < 0):
        raise DomainError(f"field evaluated below the real axis: {z[z.imag < 0].ravel()[:3]}")
    poles = field.poles
    if poles.size and np.any(z[..., None] == poles):
        bad = z[np.any(z[..., None] == poles, axis=-1)].ravel()[0]
        raise SingularityError(f"{field.kind} field is singular at {bad}", point=bad)
    return z


def eval_field(field, z):
    """F(z) for z in the closed upper half-plane."""
    z = _check_point(field, z)
    out = field.value(z)
    return out[()] if out.ndim == 0 else out


def eval_antiderivative(field, z):
    """G(z) with G' = F, normalized by the closed forms of each field kind."""
    if isinstance(field, IteratedField):
        raise UnsupportedFieldError("iterated fields have no closed-form antiderivative")
    z = _check_point(field, z)
    out = field.antiderivative(z)
    return out[()] if out.ndim == 0 else out


def shift_field(field, y):
    if not y > 0:
        raise ParameterError(f"shift must be > 0, got {y}")
    if isinstance(field, ConstantField):
        return field
    return ShiftedField(field, float(y))


def iterate_field(base, path, n, step=None):
    """Depth-``n`` iterate of ``base`` over the driver restricted to [0, 1].

    ``step`` may be a multiple of the path's grid step, in which case the
    path is subsampled (exact for a Brownian path).
    """
    if int(n) != n or n < 1:
        raise ParameterError(f"iteration depth must be an integer >= 1, got {n}")
    if path.t0 > 0 or path.t1 < 1 - 1e-12:
        raise SpanError(f"iterated field needs a path covering [0, 1], got [{path.t0}, {path.t1}]")
    i0 = path.index_of(0.0)
    i1 = path.index_of(1.0)
    values = path.values[i0:i1 + 1]
    dt = path.dt
    if step is not None:
        stride = int(round(step / path.dt))
        if stride < 1 or abs(stride * path.dt - step) > 1e-9 * step:
            raise ParameterError(f"step {step} is not a multiple of the path step {path.dt}")
        if (i1 - i0) % stride:
            raise ParameterError(f"step {step} does not divide [0, 1]")
        values = values[::stride]
        dt = path.dt * stride
    inc = np.diff(values)
    inc.setflags(write=False)
    return IteratedField(base, inc, float(dt), int(n), path.ident)
