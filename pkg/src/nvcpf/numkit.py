"""Minimal dense complex linear algebra for the gate simulator.

Everything downstream represents operators and density matrices as dense
complex ``numpy.ndarray`` matrices (row-major).  The composite Hilbert space
never exceeds a few hundred dimensions, so dense storage is deliberate.

All functions are pure; nothing here holds state.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
import scipy.linalg

# Right-hand side contract for propagate_ode: f(t, y) -> dy/dt, with y and
# the result flat complex vectors of equal length.  Evaluation must be pure.
OdeRightHandSide = Callable[[float, np.ndarray], np.ndarray]


class DivergenceError(RuntimeError):
    """Raised when an ODE solution leaves the finite range."""


def as_complex_matrix(a) -> np.ndarray:
    """Coerce input to a 2-D complex ndarray without copying when possible."""
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got ndim={m.ndim}")
    return m


def is_hermitian(a, tol: float = 1e-12) -> bool:
    """True iff max|A - A^dagger| <= tol."""
    m = as_complex_matrix(a)
    if m.shape[0] != m.shape[1]:
        return False
    return bool(np.max(np.abs(m - m.conj().T)) <= tol)


def kron(a, b) -> np.ndarray:
    """Kronecker product: entry ((i*br+k),(j*bc+l)) = a[i,j] * b[k,l]."""
    return np.kron(as_complex_matrix(a), as_complex_matrix(b))


def kron_all(*mats) -> np.ndarray:
    """Left-to-right Kronecker product of any number of factors."""
    out = np.array([[1.0 + 0.0j]])
    for m in mats:
        out = np.kron(out, as_complex_matrix(m))
    return out


def expm(a) -> np.ndarray:
    """Matrix exponential e^a of a square matrix.

    Backed by scipy's scaling-and-squaring Pade implementation, which meets
    the <=1e-12 relative accuracy needed for norms up to ~50.
    """
    m = as_complex_matrix(a)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"expm needs a square matrix, got shape {m.shape}")
    return scipy.linalg.expm(m)


def propagate_ode(
    f: OdeRightHandSide,
    y0: np.ndarray,
    t0: float,
    t1: float,
    dt: float,
) -> np.ndarray:
    """Integrate dy/dt = f(t, y) from t0 to t1 with classical fixed-step RK4.

    The final step is shortened so the endpoint t1 is hit exactly.  Output is
    deterministic (bit-for-bit) for identical inputs.

    Raises:
        DivergenceError: if the state acquires non-finite entries; the message
            names the offending step index.
        ValueError: if dt <= 0 or t1 < t0.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if t1 < t0:
        raise ValueError(f"t1 must be >= t0, got t0={t0}, t1={t1}")
    y = np.asarray(y0, dtype=complex).copy()
    t = t0
    step = 0
    while t < t1 - 1e-15 * max(1.0, abs(t1)):
        h = min(dt, t1 - t)
        k1 = f(t, y)
        k2 = f(t + 0.5 * h, y + (0.5 * h) * k1)
        k3 = f(t + 0.5 * h, y + (0.5 * h) * k2)
        k4 = f(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
        step += 1
        if not np.all(np.isfinite(y.view(float))):
            raise DivergenceError(f"non-finite state after step {step} (t={t!r})")
    return y
