"""Reference values computed independently of the package code paths."""

import numpy as np
from scipy.integrate import solve_ivp


def power_flow_ode(alpha, t, z, rtol=1e-12, atol=1e-14):
    """Noise-free flow of z**alpha by adaptive Runge-Kutta on (Re, Im).

    Starting exactly at 0 the ODE is non-unique; the flow of interest is
    the maximal solution, which leaves 0 immediately.
    """
    def rhs(_, y):
        w = complex(y[0], y[1])
        if w == 0:
            return [0.0, 0.0]
        r, th = abs(w), np.angle(w)
        if th < 0:
            th = 0.0
        v = r ** alpha * np.exp(1j * alpha * th)
        return [v.real, v.imag]

    z = complex(z)
    if z == 0:
        # z**alpha is not Lipschitz at 0; start from the explicit small-time
        # solution x(t) = ((1 - alpha) t)**(1 / (1 - alpha)) instead
        t0 = 1e-6
        z0 = ((1 - alpha) * t0) ** (1 / (1 - alpha))
        sol = solve_ivp(rhs, (t0, t), [z0, 0.0], method="DOP853", rtol=rtol, atol=atol)
    else:
        sol = solve_ivp(rhs, (0.0, t), [z.real, z.imag], method="DOP853", rtol=rtol, atol=atol)
    return complex(sol.y[0, -1], sol.y[1, -1])


def power_flow_derivative(alpha, t, z):
    """d/dz of ((1-a) t + z**(1-a))**(1/(1-a)), differentiated by hand."""
    e = 1.0 - alpha
    z = complex(z)
    zp = np.exp(e * np.log(z))
    return np.exp(-alpha * np.log(z)) * ((e * t + zp) ** (alpha / e))


def inversion_flow(kappa, t, z):
    """dz/dt = (-2/kappa)/z  =>  z**2 - (4/kappa) t, root in the upper half-plane."""
    r = np.sqrt(complex(z) ** 2 - 4.0 * t / kappa)
    return r if r.imag >= 0 else -r


def slit_map(z, t):
    z = np.asarray(z, dtype=complex)
    r = np.sqrt(z ** 2 + 4.0 * t)
    r = np.where(r.imag < 0, -r, r)
    # real points keep their side of the driver
    return np.where((z.imag == 0) & (z.real < 0), -np.abs(r), r)


def numeric_derivative(f, z, h=1e-6):
    """Central difference of a holomorphic function along the real direction."""
    return (f(z + h) - f(z - h)) / (2 * h)
