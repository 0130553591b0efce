"""End-to-end acceptance suite.

One test per acceptance criterion, each printing a PASS/FAIL line (run with
``pytest tests/test_acceptance.py -v -s``).  Regression constants (panel peak
fidelities) were frozen from the first verified run of this implementation at
the default grid and step rule; tolerance 1e-8.

Criterion 5(iv) — gate fidelity at t0 non-increasing point-by-point in the
asymmetry ratio m across [0.02, 0.2] — is implemented exactly as stated and is
expected to FAIL: the gate phases alpha(m) and beta(m) contain cos(pi*sqrt(
m^2+2)/m)-type factors whose oscillation amplitude is the same order (~m^2) as
the envelope decline, so any dense sampling of F(t0; m) rises and falls on the
scale of adjacent grid points (measured up-jumps up to +5e-3 against envelope
steps of ~-1e-3).  The declining envelope itself is verified in
test_engine.py::TestSweep::test_panel_d_trend and below via the endpoint
comparison.
"""

import math
from contextlib import contextmanager

import numpy as np
import pytest

from nvcpf import cli, engine, model, numkit
from nvcpf.analytic import (
    COMPUTATIONAL_LABELS,
    AnalyticParams,
    analytic_evolve,
    analytic_layout,
    gate_phases,
)
from nvcpf.cli import RunConfig, dispatch, panel_spec
from nvcpf.engine import (
    DensityState,
    NoiseParams,
    compare_full_effective,
    extract_gate,
    gate_fidelity_run,
    propagate_lindblad,
    propagate_unitary,
    sweep,
)
from nvcpf.model import (
    ModelParams,
    PhysicalInputs,
    build_collapse_ops,
    build_effective_hamiltonian,
    build_layout,
    derive_physical_params,
    excitation_number_op,
)

# Frozen regression constants: panel-a peak fidelities on the default
# 120-point grid with the default step rule (first verified run).
FROZEN_PEAKS = {
    0.01: 0.9788372496872819,
    0.02: 0.9755420884432731,
    0.05: 0.965958862633716,
}


@contextmanager
def criterion(num: str, desc: str):
    try:
        yield
    except Exception:
        print(f"FAIL criterion {num}: {desc}")
        raise
    print(f"PASS criterion {num}: {desc}")


@pytest.fixture(scope="module")
def panel_a_table():
    return sweep(panel_spec("a", RunConfig()))


def test_criterion_1_gate_phases():
    with criterion("1", "gate phases alpha/beta at m=0.1 match the quoted values"):
        ph = gate_phases(0.1, 0)
        assert abs(ph.alpha - 0.999247) < 5e-7
        assert abs(ph.beta - 0.999879) < 5e-7


def test_criterion_2_analytic_numeric_equivalence():
    with criterion("2", "closed-form evolutions match expm propagation to 1e-9"):
        layout = analytic_layout()
        basis = np.stack(
            [layout.basis_state(lab, 0) for lab in COMPUTATIONAL_LABELS], axis=1
        )
        for m in (0.04, 0.1, 0.5):
            p = AnalyticParams.from_ratio(m)
            h = build_effective_hamiltonian(layout, ModelParams.effective(m))
            for t in np.linspace(0.0, math.pi, 100):
                evolved = numkit.expm(-1j * t * h) @ basis
                for j, lab in enumerate(COMPUTATIONAL_LABELS):
                    got = analytic_evolve(lab, t, p, layout)
                    assert np.max(np.abs(got - evolved[:, j])) < 1e-9


def test_criterion_3_realized_gate_extraction():
    with criterion("3", "extracted gate diagonal is (1,a,1,b,1,b,1,-1), leakage < 0.02"):
        got = extract_gate(0.1, NoiseParams())
        ph = gate_phases(0.1)
        expected = np.array([1.0, ph.alpha, 1.0, ph.beta, 1.0, ph.beta, 1.0, -1.0])
        diag = np.diag(got)
        assert np.max(np.abs(diag - expected)) < 1e-9
        assert np.max(np.abs(got - np.diag(diag))) < 0.02


def test_criterion_4_lindblad_convention():
    with criterion("4", "rate-doubled decay convention and closed-system limit"):
        # pure cavity amplitude damping: <1|rho|1> = exp(-2 kappa t)
        kappa = 0.25
        layout = build_layout(1, False, 1)
        c_ops = build_collapse_ops(layout, ModelParams(g_tilde=(0.0,), kappa=kappa))
        h0 = np.zeros((layout.dim, layout.dim), dtype=complex)
        psi1 = layout.basis_state("g", 1)
        grid = np.linspace(0.0, 2.0, 11)
        states = propagate_lindblad(
            h0, c_ops, DensityState(np.outer(psi1, psi1.conj()), layout), grid, 1e-3
        )
        idx = layout.index("g", 1)
        for t, st in zip(grid, states):
            assert abs(st.rho[idx, idx].real - math.exp(-2.0 * kappa * t)) < 1e-6
        # zero-noise propagation equals unitary conjugation
        lay3 = build_layout(3, False, 1)
        params = ModelParams.effective(0.3)
        h = build_effective_hamiltonian(lay3, params)
        zeros = build_collapse_ops(lay3, params)
        psi0 = lay3.basis_state("gge", 0)
        grid = np.linspace(0.0, 1.0, 20)
        states = propagate_lindblad(
            h, zeros, DensityState(np.outer(psi0, psi0.conj()), lay3), grid,
            engine.default_dt(0.3),
        )
        for t, st in zip(grid, states):
            psi = propagate_unitary(h, psi0, t)
            assert np.max(np.abs(st.rho - np.outer(psi, psi.conj()))) < 1e-8


def test_criterion_5_time_panel_structure(panel_a_table):
    with criterion(
        "5(i-iii)", "fidelity peaks at the gate time, ordered in kappa, above 0.95"
    ):
        t = panel_a_table.column("g3_t")
        step = t[1] - t[0]
        peaks = {}
        for kappa in (0.01, 0.02, 0.05):
            f = panel_a_table.column(f"fidelity_kappa_{kappa:g}")
            i = int(np.argmax(f))
            assert abs(t[i] - math.pi) <= step, (
                f"peak at {t[i]:.6f}, {abs(t[i] - math.pi) / step:.2f} grid steps from pi"
            )
            peaks[kappa] = f[i]
        assert peaks[0.01] > peaks[0.02] > peaks[0.05]
        assert peaks[0.01] > 0.95
        for kappa, frozen in FROZEN_PEAKS.items():
            assert abs(peaks[kappa] - frozen) <= 1e-8, (
                f"regression: peak({kappa}) = {peaks[kappa]!r}, frozen {frozen!r}"
            )


def test_criterion_5iv_asymmetry_panel_monotonicity():
    with criterion(
        "5(iv)", "fidelity at t0 non-increasing in m across the panel-d grid"
    ):
        table = sweep(panel_spec("d", RunConfig()))
        f = table.column("fidelity_at_t0")
        m = table.column("m")
        # declining envelope: endpoints must be ordered (verified property)
        assert f[0] > f[-1]
        up = np.flatnonzero(np.diff(f) > 0)
        assert up.size == 0, (
            "F(t0; m) rises between grid points "
            + ", ".join(f"m={m[i]:.4f}->{m[i + 1]:.4f} (dF=+{f[i + 1] - f[i]:.2e})" for i in up[:4])
            + f" and {max(up.size - 4, 0)} more; the cosine factors in the gate "
            "phases oscillate with amplitude ~m^2, the same order as the "
            "envelope decline, so point-by-point monotonicity cannot hold on "
            "a dense m grid"
        )


def test_criterion_6_adiabatic_elimination():
    with criterion(
        "6", "elimination error decreases with detuning; virtual occupancy ~2.2%"
    ):
        tab = compare_full_effective(0.1, (10.0, 20.0, 40.0), math.pi, dt=0.01)
        eps = tab.column("eps")
        assert eps[0] > eps[1] > eps[2]
        # published operating ratios: time-averaged occupancy of the
        # eliminated level over the full Raman cycle, within a factor of 2
        # of g*omega/delta^2 = 0.022
        op = compare_full_effective(0.1, (engine.OPERATING_DELTA_OVER_G,), math.pi)
        occupancy = op.column("cycle_e_pop_mean")[0]
        assert 0.022 / 2 < occupancy < 0.022 * 2


def test_criterion_7_physical_parameters(capsys):
    with criterion("7", "derived operating-point values match quoted references"):
        derived = derive_physical_params(
            PhysicalInputs(
                wavelength=637e-9, gamma0=2 * math.pi * 83e6, v_m=20e-18, q=1e9
            ),
            omega_max=2 * math.pi * 2.5e9,
            delta=2 * math.pi * 25e9,
            g_tilde3=2 * math.pi * 55e6,
        )
        assert abs(derived.kappa - model.REF_KAPPA) / model.REF_KAPPA < 0.06
        # quoted 0.009 us is the 1-significant-figure rounding of t0 =
        # (100/11) ns; the exact discrepancy is 1/100 of t0, so allow float
        # roundoff on the boundary
        assert abs(derived.t0 - model.REF_T0) <= 0.01 * derived.t0 * (1 + 1e-12)
        text = "\n".join(derived.comparisons)
        assert text.count("FLAGGED") >= 2  # g_max and gamma_eg stay unreconciled
        assert f"{derived.g_max / (2 * math.pi) / 1e6:.6g}" in text
        # the same lines reach the CLI report
        code = dispatch(
            [
                "params",
                "--lambda", "637e-9",
                "--gamma0", str(2 * math.pi * 83e6),
                "--vm", "20e-18",
                "--q", "1e9",
                "--omega-max", str(2 * math.pi * 2.5e9),
                "--delta", str(2 * math.pi * 25e9),
                "--gtilde3", str(2 * math.pi * 55e6),
            ]
        )
        assert code == 0
        assert "FLAGGED" in capsys.readouterr().out


def test_criterion_8_invariant_suite(tmp_path):
    with criterion("8", "trace/Hermiticity/positivity/excitation/n_max/dt/CSV checks"):
        # density-matrix invariants and excitation monotonicity on a noisy run
        layout = build_layout(3, False, 1)
        params = ModelParams.effective(0.3, kappa=0.02, gamma_eg=0.02, gamma_fg=1e-5)
        h = build_effective_hamiltonian(layout, params)
        c_ops = build_collapse_ops(layout, params)
        psi0 = sum(layout.basis_state(lab, 0) for lab in COMPUTATIONAL_LABELS)
        psi0 /= np.linalg.norm(psi0)
        grid = np.linspace(0.0, 1.5, 25)
        states = propagate_lindblad(
            h, c_ops, DensityState(np.outer(psi0, psi0.conj()), layout), grid,
            engine.default_dt(0.3),
        )
        n_ex = excitation_number_op(layout)
        vals = []
        for st in states:
            assert abs(np.trace(st.rho) - 1.0) <= 1e-8
            assert np.max(np.abs(st.rho - st.rho.conj().T)) <= 1e-10
            assert np.min(np.diag(st.rho).real) >= -1e-10
            vals.append(float(np.real(np.trace(n_ex @ st.rho))))
        assert all(b <= a + 1e-9 for a, b in zip(vals, vals[1:]))

        # n_max independence on the single-excitation subspace
        amps = {}
        for n_max in (1, 2):
            lay = build_layout(3, False, n_max)
            h_n = build_effective_hamiltonian(lay, ModelParams.effective(0.1))
            psi = propagate_unitary(h_n, lay.basis_state("gge", 0), 0.63 * math.pi)
            amps[n_max] = {
                lay.labels(i): psi[i] for i in np.flatnonzero(np.abs(psi) > 1e-15)
            }
        assert set(amps[1]) == set(amps[2])
        assert all(abs(amps[1][k] - amps[2][k]) < 1e-12 for k in amps[1])

        # dt-halving changes reported fidelity by < 1e-8
        noise = NoiseParams(0.01, 0.01, 1e-6)
        dt = engine.default_dt(0.3)
        a = gate_fidelity_run(0.3, noise, (0.0, math.pi), dt=dt)
        b = gate_fidelity_run(0.3, noise, (0.0, math.pi), dt=dt / 2)
        assert abs(a.column("fidelity")[-1] - b.column("fidelity")[-1]) < 1e-8

        # CSV determinism: identical panel runs are byte-identical
        cfg = tmp_path / "quick.cfg"
        cfg.write_text("t_max = 1.2\ngrid_points = 20\nm = 0.25\n")
        out1, out2 = tmp_path / "p1.csv", tmp_path / "p2.csv"
        for out in (out1, out2):
            assert dispatch(
                ["sweep", "--panel", "a", "--out", str(out), "--config", str(cfg)]
            ) == 0
        assert out1.read_bytes() == out2.read_bytes()
