"""Simulator of a one-step three-qubit conditional phase flip (CPF) gate for
NV-center spin qubits sharing a whispering-gallery-mode cavity bus.

Subpackages map onto the layers of the artifact:

- ``numkit``   -- dense complex linear algebra and a fixed-step RK4 propagator
- ``model``    -- Hilbert-space layout, Hamiltonians, collapse operators,
  physical parameter derivation
- ``analytic`` -- closed-form gate evolutions, gate phases, ideal/realized gates
- ``engine``   -- unitary and Lindblad propagation, fidelity metrics, sweeps
- ``cli``      -- command-line frontend emitting deterministic CSV artifacts
"""

__version__ = "0.1.0"
