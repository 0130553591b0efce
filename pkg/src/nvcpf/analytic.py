"""Closed-form gate mathematics for the three-qubit conditional phase flip.

Qubits 1 and 2 are encoded in {f, g}; qubit 3 in {g, e}.  Only g <-> e Raman
transitions couple to the cavity, so f is a strict spectator and the four
computational states ending in g3 are stationary.  Driving all three sites for
t0 = (2k+1) pi / g3 (g3 the weak coupling) realizes diag(1, alpha, 1, beta, 1,
beta, 1, -1) on the computational subspace, with alpha, beta -> 1 as the
asymmetry ratio m -> 0.

Computational basis order (fixed everywhere):
{ggg, gge, gfg, gfe, fgg, fge, ffg, ffe}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import SystemLayout, build_layout

COMPUTATIONAL_LABELS = ("ggg", "gge", "gfg", "gfe", "fgg", "fge", "ffg", "ffe")


@dataclass(frozen=True)
class AnalyticParams:
    """Effective couplings (g1 = g2 >= g3 > 0) and derived combinations."""

    g1: float
    g2: float
    g3: float

    def __post_init__(self):
        if self.g3 <= 0:
            raise ValueError(f"g3 must be positive, got {self.g3}")
        if abs(self.g1 - self.g2) > 1e-12 * max(abs(self.g1), abs(self.g2)):
            raise ValueError(f"symmetric couplings required, got g1={self.g1}, g2={self.g2}")
        if abs(self.m * self.g1 - self.g3) > 1e-12 * abs(self.g3):
            raise ValueError("inconsistent m * g1 vs g3")

    @classmethod
    def from_ratio(cls, m: float, g3: float = 1.0) -> "AnalyticParams":
        """Couplings (g3/m, g3/m, g3) from the asymmetry ratio m = g3/g1.

        m = 1 (degenerate) is allowed; m > 1 violates the weak-third-coupling
        premise and is rejected rather than clamped.
        """
        if not 0 < m <= 1:
            raise ValueError(f"m must be in (0, 1], got {m}")
        if g3 <= 0:
            raise ValueError(f"g3 must be positive, got {g3}")
        return cls(g3 / m, g3 / m, g3)

    @property
    def m(self) -> float:
        return self.g3 / self.g1

    def g_pair(self, k: int) -> float:
        """sqrt(g_k^2 + g3^2) for k in {1, 2}: pair Rabi rate of site k with site 3."""
        gk = (self.g1, self.g2)[k - 1]
        return math.sqrt(gk**2 + self.g3**2)

    @property
    def g_all(self) -> float:
        """sqrt(g1^2 + g2^2 + g3^2): collective Rabi rate of all three sites."""
        return math.sqrt(self.g1**2 + self.g2**2 + self.g3**2)

    @property
    def norm_pair(self) -> float:
        return 1.0 / self.g_pair(1) ** 2

    @property
    def norm_all(self) -> float:
        return 1.0 / self.g_all**2


@dataclass(frozen=True)
class GatePhases:
    """Diagonal phase factors of the realized gate at t0 = (2k+1) pi / g3."""

    alpha: float
    beta: float
    t0: float
    k: int


def gate_phases(m: float, k: int = 0, g3: float = 1.0) -> GatePhases:
    """Gate phases for asymmetry ratio m at the k-th odd-multiple gate time.

    alpha = [m^2 cos(sqrt(m^2+2) (2k+1) pi / m) + 2] / (m^2 + 2)
    beta  = [m^2 cos(sqrt(m^2+1) (2k+1) pi / m) + 1] / (m^2 + 1)

    Both depend only on m and the odd multiple (2k+1), not on the absolute
    coupling scale; t0 = (2k+1) pi / g3 carries the units.
    """
    if m <= 0:
        raise ValueError(f"m must be positive, got {m}")
    if m > 1:
        raise ValueError(f"m must be <= 1, got {m}")
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    odd = 2 * k + 1
    alpha = (m**2 * math.cos(math.sqrt(m**2 + 2.0) * odd * math.pi / m) + 2.0) / (m**2 + 2.0)
    beta = (m**2 * math.cos(math.sqrt(m**2 + 1.0) * odd * math.pi / m) + 1.0) / (m**2 + 1.0)
    return GatePhases(alpha=alpha, beta=beta, t0=odd * math.pi / g3, k=k)


def analytic_layout(n_max: int = 1) -> SystemLayout:
    """Default effective-model layout the analytic state vectors live in."""
    return build_layout(3, with_E_level=False, n_max=n_max)


def analytic_evolve(
    initial: str, t: float, p: AnalyticParams, layout: SystemLayout | None = None
) -> np.ndarray:
    """Closed-form state at time t for a computational initial state.

    ``initial`` is one of the eight computational labels; the cavity starts in
    vacuum.  The result is a normalized state vector over the effective-model
    layout.  The three nontrivial evolutions, writing c1 = cos(g_pair t) and
    c2 = cos(g_all t):

    |f f e; 0>  ->  cos(g3 t)|f f e; 0> - i sin(g3 t)|f f g; 1>

    |g_k f_j e; 0>  ->  N1 { [g3^2 c1 + g_k^2] |g_k f_j e; 0>
                             + g3 g_k (c1 - 1) |e_k f_j g; 0>
                             - i g3 g_pair sin(g_pair t) |g_k f_j g; 1> }

    |g g e; 0>  ->  N2 { [g3^2 c2 + g1^2 + g2^2] |g g e; 0>
                         + g3 (c2 - 1) (g1 |e g g; 0> + g2 |g e g; 0>)
                         - i g3 g_all sin(g_all t) |g g g; 1> }

    States ending in g are stationary.
    """
    if initial not in COMPUTATIONAL_LABELS:
        raise ValueError(f"label {initial!r} is not one of {COMPUTATIONAL_LABELS}")
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    if layout is None:
        layout = analytic_layout()
    psi = np.zeros(layout.dim, dtype=complex)
    if initial.endswith("g"):
        psi[layout.index(initial, 0)] = 1.0
        return psi
    if initial == "ffe":
        g3t = p.g3 * t
        psi[layout.index("ffe", 0)] = math.cos(g3t)
        psi[layout.index("ffg", 1)] = -1j * math.sin(g3t)
        return psi
    if initial == "gge":
        ga = p.g_all
        c = math.cos(ga * t)
        s = math.sin(ga * t)
        n2 = p.norm_all
        psi[layout.index("gge", 0)] = n2 * (p.g3**2 * c + p.g1**2 + p.g2**2)
        psi[layout.index("egg", 0)] = n2 * p.g3 * (c - 1.0) * p.g1
        psi[layout.index("geg", 0)] = n2 * p.g3 * (c - 1.0) * p.g2
        psi[layout.index("ggg", 1)] = -1j * n2 * p.g3 * ga * s
        return psi
    # gfe (site 1 active) or fge (site 2 active)
    k = 1 if initial == "gfe" else 2
    gk = (p.g1, p.g2)[k - 1]
    gp = p.g_pair(k)
    c = math.cos(gp * t)
    s = math.sin(gp * t)
    n1 = 1.0 / gp**2
    stay = list(initial)
    flip = list(initial)
    flip[k - 1] = "e"
    flip[2] = "g"
    photon = list(initial)
    photon[2] = "g"
    psi[layout.index(stay, 0)] = n1 * (p.g3**2 * c + gk**2)
    psi[layout.index(flip, 0)] = n1 * p.g3 * gk * (c - 1.0)
    psi[layout.index(photon, 1)] = -1j * n1 * p.g3 * gp * s
    return psi


def ideal_gate() -> np.ndarray:
    """The target conditional phase flip diag(1,1,1,1,1,1,1,-1)."""
    return np.diag([1, 1, 1, 1, 1, 1, 1, -1]).astype(complex)


def realized_gate(m: float, k: int = 0) -> np.ndarray:
    """Gate actually realized at t0: diag(1, alpha, 1, beta, 1, beta, 1, -1)."""
    ph = gate_phases(m, k)
    return np.diag(
        [1.0, ph.alpha, 1.0, ph.beta, 1.0, ph.beta, 1.0, -1.0]
    ).astype(complex)
