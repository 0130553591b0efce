"""Composite Hilbert space, Hamiltonians, collapse operators, derived parameters.

Each NV site is a three-level system (g, e, f) in the effective model or a
four-level system (g, e, f, E) in the full model; the shared cavity mode is
truncated at ``n_max`` photons.

Basis convention (fixed; all matrices, CSV outputs and gate matrices use it):
site 1 varies slowest, then site 2, then site 3, and the cavity photon number
varies fastest.  ``SystemLayout.index`` maps (site labels, photon number) to
the flat basis index under this convention.

Unit convention: simulation rates are dimensionless, expressed in units of the
weak effective coupling (the third site's Raman rate); SI units appear only in
the physical-parameter derivation at the bottom of this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.constants

from . import numkit

EFFECTIVE_LEVELS = ("g", "e", "f")
FULL_LEVELS = ("g", "e", "f", "E")


class ModelError(ValueError):
    """Raised when an operator is requested from an incompatible layout."""


@dataclass(frozen=True)
class SystemLayout:
    """Tensor-factor bookkeeping for n_sites NV sites and one cavity mode."""

    n_sites: int
    levels: tuple[str, ...]
    n_max: int

    def __post_init__(self):
        if self.n_sites < 1:
            raise ValueError(f"n_sites must be >= 1, got {self.n_sites}")
        if self.n_max < 1:
            raise ValueError(f"n_max must be >= 1, got {self.n_max}")
        if self.levels not in (EFFECTIVE_LEVELS, FULL_LEVELS):
            raise ValueError(f"unsupported level set {self.levels}")

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def n_photon_states(self) -> int:
        return self.n_max + 1

    @property
    def dim(self) -> int:
        return self.n_levels**self.n_sites * self.n_photon_states

    @property
    def has_upper_level(self) -> bool:
        return "E" in self.levels

    def level_index(self, label: str) -> int:
        try:
            return self.levels.index(label)
        except ValueError:
            raise ValueError(f"unknown level label {label!r}") from None

    def index(self, labels: Sequence[str], n_photon: int) -> int:
        """Flat basis index of |labels; n_photon> (site 1 slowest, cavity fastest)."""
        if len(labels) != self.n_sites:
            raise ValueError(f"expected {self.n_sites} site labels, got {len(labels)}")
        if not 0 <= n_photon <= self.n_max:
            raise ValueError(f"photon number {n_photon} outside 0..{self.n_max}")
        i = 0
        for lab in labels:
            i = i * self.n_levels + self.level_index(lab)
        return i * self.n_photon_states + n_photon

    def labels(self, index: int) -> tuple[tuple[str, ...], int]:
        """Inverse of :meth:`index`."""
        if not 0 <= index < self.dim:
            raise ValueError(f"index {index} outside 0..{self.dim - 1}")
        index, n_photon = divmod(index, self.n_photon_states)
        labs = []
        for _ in range(self.n_sites):
            index, lev = divmod(index, self.n_levels)
            labs.append(self.levels[lev])
        return tuple(reversed(labs)), n_photon

    def basis_state(self, labels: Sequence[str], n_photon: int = 0) -> np.ndarray:
        psi = np.zeros(self.dim, dtype=complex)
        psi[self.index(labels, n_photon)] = 1.0
        return psi


def build_layout(n_sites: int, with_E_level: bool, n_max: int) -> SystemLayout:
    """Layout with (3 or 4)^n_sites x (n_max+1) basis states."""
    return SystemLayout(n_sites, FULL_LEVELS if with_E_level else EFFECTIVE_LEVELS, n_max)


def site_op(layout: SystemLayout, upper: str, lower: str) -> np.ndarray:
    """Single-site operator |upper><lower| in the layout's level ordering."""
    op = np.zeros((layout.n_levels, layout.n_levels), dtype=complex)
    op[layout.level_index(upper), layout.level_index(lower)] = 1.0
    return op


def embed(layout: SystemLayout, site: int, local_op: np.ndarray) -> np.ndarray:
    """Embed a single-site operator: identity on all other factors.

    ``site`` is 1-based, matching the labeling of the NV centers.
    """
    local_op = numkit.as_complex_matrix(local_op)
    if local_op.shape != (layout.n_levels, layout.n_levels):
        raise ValueError(
            f"local operator shape {local_op.shape} does not match "
            f"{layout.n_levels} levels per site"
        )
    if not 1 <= site <= layout.n_sites:
        raise ValueError(f"site {site} outside 1..{layout.n_sites}")
    factors = [
        local_op if s == site else np.eye(layout.n_levels, dtype=complex)
        for s in range(1, layout.n_sites + 1)
    ]
    factors.append(np.eye(layout.n_photon_states, dtype=complex))
    return numkit.kron_all(*factors)


def cavity_op(layout: SystemLayout, which: str) -> np.ndarray:
    """Truncated cavity operator on the full space: a, a^dagger or a^dagger a.

    ``which`` is one of "annihilate", "create", "number"; a|n> = sqrt(n)|n-1>.
    """
    n = layout.n_photon_states
    a = np.diag(np.sqrt(np.arange(1, n, dtype=float)), 1).astype(complex)
    if which == "annihilate":
        local = a
    elif which == "create":
        local = a.conj().T
    elif which == "number":
        local = a.conj().T @ a
    else:
        raise ValueError(f"unknown cavity operator {which!r}")
    return numkit.kron_all(np.eye(layout.n_levels**layout.n_sites, dtype=complex), local)


@dataclass(frozen=True)
class ModelParams:
    """Physical rates of the model, in a single consistent unit system.

    For simulations everything is dimensionless (units of the weak effective
    coupling g_tilde[-1], i.e. g_tilde3 = 1 canonically).  ``delta``, ``g``,
    ``omega`` parameterize the full model; ``g_tilde`` the effective one.
    Whenever both are populated, g_tilde[j] must equal g[j]*omega[j]/delta[j]
    to 1e-12 relative.
    """

    delta: tuple[float, ...] | None = None
    g: tuple[float, ...] | None = None
    omega: tuple[float, ...] | None = None
    g_tilde: tuple[float, ...] | None = None
    kappa: float = 0.0
    gamma_eg: float = 0.0
    gamma_fg: float = 0.0
    compensate_shifts: bool = True

    def __post_init__(self):
        for name in ("kappa", "gamma_eg", "gamma_fg"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.delta is not None and any(d == 0 for d in self.delta):
            raise ValueError("detunings must be nonzero")
        full = (self.delta, self.g, self.omega)
        if any(x is not None for x in full) and any(x is None for x in full):
            raise ValueError("delta, g, omega must be given together")
        if self.g_tilde is not None and self.delta is not None:
            for j, gt in enumerate(self.g_tilde):
                ref = self.g[j] * self.omega[j] / self.delta[j]
                if abs(gt - ref) > 1e-12 * max(abs(gt), abs(ref), 1e-300):
                    raise ValueError(
                        f"g_tilde[{j}]={gt} inconsistent with g*omega/delta={ref}"
                    )

    @property
    def n_sites(self) -> int:
        for x in (self.g_tilde, self.delta):
            if x is not None:
                return len(x)
        raise ValueError("no per-site couplings populated")

    def effective_couplings(self) -> tuple[float, ...]:
        if self.g_tilde is not None:
            return self.g_tilde
        return tuple(
            self.g[j] * self.omega[j] / self.delta[j] for j in range(len(self.delta))
        )

    @classmethod
    def effective(
        cls,
        m: float,
        kappa: float = 0.0,
        gamma_eg: float = 0.0,
        gamma_fg: float = 0.0,
    ) -> "ModelParams":
        """Canonical effective-model parameters: g_tilde = (1/m, 1/m, 1).

        ``m`` is the coupling asymmetry g_tilde3 / g_tilde1 with 0 < m <= 1.
        """
        if not 0 < m <= 1:
            raise ValueError(f"m must be in (0, 1], got {m}")
        return cls(
            g_tilde=(1.0 / m, 1.0 / m, 1.0),
            kappa=kappa,
            gamma_eg=gamma_eg,
            gamma_fg=gamma_fg,
        )


def build_full_hamiltonian(layout: SystemLayout, params: ModelParams) -> np.ndarray:
    """Rotating-wave Hamiltonian of N driven Lambda systems sharing the cavity.

    Per site j:  delta_j |E_j><E_j| + (g_j a^dag |g_j><E_j| + omega_j |E_j><e_j|
    + h.c.).  With ``params.compensate_shifts`` the second-order level shifts
    induced by the far-detuned E level (laser shift on |e_j> and photon shift
    on |g_j>) are cancelled by counter-terms, emulating auxiliary compensation
    fields; the compensated model then reduces, for large detuning, to the
    pure Raman flip-flop model of :func:`build_effective_hamiltonian`.
    """
    if not layout.has_upper_level:
        raise ModelError("full Hamiltonian requires a layout with the E level")
    if params.delta is None:
        raise ValueError("full model needs delta, g, omega")
    a = cavity_op(layout, "annihilate")
    ad = a.conj().T
    n_op = ad @ a
    dim = layout.dim
    h = np.zeros((dim, dim), dtype=complex)
    for j in range(1, layout.n_sites + 1):
        dlt = params.delta[j - 1]
        gj = params.g[j - 1]
        om = params.omega[j - 1]
        h += dlt * embed(layout, j, site_op(layout, "E", "E"))
        raise_g = gj * (ad @ embed(layout, j, site_op(layout, "g", "E")))
        raise_e = om * embed(layout, j, site_op(layout, "E", "e"))
        h += raise_g + raise_g.conj().T
        h += raise_e + raise_e.conj().T
        if params.compensate_shifts:
            # Second-order shifts are -omega^2/delta on |e> and -g^2/delta per
            # photon on |g>; add their negatives so the compensated levels sit
            # where the effective model assumes them.
            h += (om**2 / dlt) * embed(layout, j, site_op(layout, "e", "e"))
            h += (gj**2 / dlt) * (n_op @ embed(layout, j, site_op(layout, "g", "g")))
    return h


def build_effective_hamiltonian(
    layout: SystemLayout, params: ModelParams, with_shifts: bool = False
) -> np.ndarray:
    """Raman-transition Hamiltonian after eliminating the E levels.

    Without shifts: sum_j g_tilde_j (|e_j><g_j| a + |g_j><e_j| a^dag).
    With shifts, the dynamic level shifts omega_j^2/delta_j |e_j><e_j| and
    g_j^2/delta_j a^dag a |g_j><g_j| are included as well (this variant needs
    the full-model couplings to be populated).
    """
    if layout.has_upper_level:
        raise ModelError("effective Hamiltonian requires the 3-level layout")
    g_tilde = params.effective_couplings()
    if len(g_tilde) != layout.n_sites:
        raise ValueError(
            f"{len(g_tilde)} couplings for {layout.n_sites} sites"
        )
    a = cavity_op(layout, "annihilate")
    ad = a.conj().T
    dim = layout.dim
    h = np.zeros((dim, dim), dtype=complex)
    for j in range(1, layout.n_sites + 1):
        flip = g_tilde[j - 1] * (embed(layout, j, site_op(layout, "e", "g")) @ a)
        h += flip + flip.conj().T
    if with_shifts:
        if params.delta is None:
            raise ValueError("shift terms need delta, g, omega")
        n_op = ad @ a
        for j in range(1, layout.n_sites + 1):
            h += (params.omega[j - 1] ** 2 / params.delta[j - 1]) * embed(
                layout, j, site_op(layout, "e", "e")
            )
            h += (params.g[j - 1] ** 2 / params.delta[j - 1]) * (
                n_op @ embed(layout, j, site_op(layout, "g", "g"))
            )
    return h


def build_collapse_ops(layout: SystemLayout, params: ModelParams) -> list[np.ndarray]:
    """Collapse operators scaled so the standard dissipator matches the
    rate-doubled master-equation convention kappa(2 a rho a^dag - ...).

    Returns 1 + 2*n_sites operators: sqrt(2 kappa) a, then per site
    sqrt(2 gamma_eg) |g><e| and sqrt(2 gamma_fg) |g><f|.  Zero-rate operators
    are included as zero matrices.
    """
    ops = [math.sqrt(2.0 * params.kappa) * cavity_op(layout, "annihilate")]
    for j in range(1, layout.n_sites + 1):
        ops.append(
            math.sqrt(2.0 * params.gamma_eg) * embed(layout, j, site_op(layout, "g", "e"))
        )
    for j in range(1, layout.n_sites + 1):
        ops.append(
            math.sqrt(2.0 * params.gamma_fg) * embed(layout, j, site_op(layout, "g", "f"))
        )
    return ops


def excitation_number_op(layout: SystemLayout) -> np.ndarray:
    """Conserved excitation number: sum_j (|e_j><e_j| [+ |E_j><E_j|]) + a^dag a."""
    n = cavity_op(layout, "number")
    for j in range(1, layout.n_sites + 1):
        n = n + embed(layout, j, site_op(layout, "e", "e"))
        if layout.has_upper_level:
            n = n + embed(layout, j, site_op(layout, "E", "E"))
    return n


# --------------------------------------------------------------------------
# Physical parameter derivation (SI units).
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PhysicalInputs:
    """SI inputs for the NV/microsphere operating point.

    wavelength: E<->g transition wavelength (m); gamma0: spontaneous decay of
    the optically excited state (rad/s); v_m: cavity mode volume (m^3);
    q: quality factor; c: speed of light (m/s).
    """

    wavelength: float
    gamma0: float
    v_m: float
    q: float
    c: float = scipy.constants.c

    def __post_init__(self):
        for name in ("wavelength", "gamma0", "v_m", "q", "c"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class PhysicalDerived:
    """Derived operating-point quantities plus reference comparisons.

    All formula evaluations use the inputs verbatim; where the formula value
    disagrees with the published reference number, both appear in
    ``comparisons`` and nothing is reconciled silently.
    """

    v_a: float          # characteristic interaction volume (m^3)
    g_max: float        # maximal NV-cavity coupling (rad/s), formula value
    kappa: float        # cavity decay (rad/s), reading: omega_cavity / Q
    gamma_eg_est: float # estimated spin decay (rad/s), formula value
    p_e: float          # virtual excited-state population fraction
    t0: float           # gate time (s)
    comparisons: tuple[str, ...] = field(default_factory=tuple)


# Published reference values for this operating point (rad/s unless noted).
REF_G_MAX = 2 * math.pi * 5.5e9
REF_KAPPA = 2 * math.pi * 0.5e6
REF_GAMMA_EG = 2 * math.pi * 0.83e6
REF_P_E = 0.022
REF_T0 = 0.009e-6  # s


def derive_physical_params(
    inputs: PhysicalInputs, omega_max: float, delta: float, g_tilde3: float
) -> PhysicalDerived:
    """Evaluate the operating-point formulas and compare against references.

    Formulas: v_a = 3 c lambda^2 / (4 pi gamma0); g_max = gamma0 sqrt(v_a/v_m)/2;
    kappa = omega_cavity/Q with omega_cavity = 2 pi c / lambda (the published
    "c/(lambda Q)" shorthand is dimensionally omega/Q; this reading reproduces
    the quoted number); gamma_eg ~= gamma0 omega g / delta^2; p_e = g omega /
    delta^2; t0 = pi / g_tilde3.  All quantities are angular frequencies.
    """
    for name, val in (("omega_max", omega_max), ("delta", delta), ("g_tilde3", g_tilde3)):
        if val <= 0:
            raise ValueError(f"{name} must be positive")
    v_a = 3.0 * inputs.c * inputs.wavelength**2 / (4.0 * math.pi * inputs.gamma0)
    g_max = inputs.gamma0 * math.sqrt(v_a / inputs.v_m) / 2.0
    kappa = 2.0 * math.pi * inputs.c / (inputs.wavelength * inputs.q)
    gamma_eg = inputs.gamma0 * omega_max * g_max / delta**2
    gamma_eg_ref_g = inputs.gamma0 * omega_max * REF_G_MAX / delta**2
    gamma_eg_alt = inputs.gamma0 * omega_max**2 / delta**2
    p_e = g_max * omega_max / delta**2
    p_e_ref_g = REF_G_MAX * omega_max / delta**2
    t0 = math.pi / g_tilde3

    def mhz(x):
        return x / (2 * math.pi) / 1e6

    comparisons = (
        f"g_max formula = 2pi x {mhz(g_max):.6g} MHz; "
        f"reference = 2pi x {mhz(REF_G_MAX):.6g} MHz "
        f"[FLAGGED: formula and reference disagree; reported unreconciled]",
        f"kappa (omega_cavity/Q reading) = 2pi x {mhz(kappa):.6g} MHz; "
        f"reference = 2pi x {mhz(REF_KAPPA):.6g} MHz "
        f"(within {abs(kappa - REF_KAPPA) / REF_KAPPA * 100:.1f}%)",
        f"gamma_eg formula (gamma0*omega*g_max/delta^2, formula g_max) = "
        f"2pi x {mhz(gamma_eg):.6g} MHz; with reference g_max = "
        f"2pi x {mhz(gamma_eg_ref_g):.6g} MHz; alternative reading "
        f"gamma0*omega^2/delta^2 = 2pi x {mhz(gamma_eg_alt):.6g} MHz; "
        f"reference = 2pi x {mhz(REF_GAMMA_EG):.6g} MHz "
        f"[FLAGGED: only the alternative reading matches the reference]",
        f"p_e formula (formula g_max) = {p_e:.6g}; with reference g_max = "
        f"{p_e_ref_g:.6g}; reference = {REF_P_E:.6g}",
        f"t0 = pi/g_tilde3 = {t0 * 1e6:.6g} us; reference = {REF_T0 * 1e6:.6g} us",
    )
    return PhysicalDerived(
        v_a=v_a,
        g_max=g_max,
        kappa=kappa,
        gamma_eg_est=gamma_eg,
        p_e=p_e,
        t0=t0,
        comparisons=comparisons,
    )


def excited_fraction(g: float, omega: float, delta: float) -> float:
    """Virtual population fraction of the eliminated level, g*omega/delta^2."""
    return g * omega / delta**2
