"""Physical parameters, Pauli algebra and Hamiltonians for two charge qubits.

Conventions
-----------
* Every energy is stored as a frequency ``E/h`` in GHz and every time in ns,
  so a propagator is ``exp(-2j*pi*H*t)``.
* Single-qubit position basis is ``{L, R}`` with ``sigma_z|L> = +|L>``.
* Two-qubit basis is ``{LL, LR, RL, RR}`` (left double dot first).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

PLANCK_EV_S = 4.135667696e-15
"""Planck constant in eV*s."""

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)

BASIS_1Q = ("L", "R")
BASIS_2Q = ("LL", "LR", "RL", "RR")


class InvalidParameterError(ValueError):
    """A physical parameter is non-finite or violates a model invariant."""


def _require_finite(**values: float) -> None:
    for name, value in values.items():
        if not math.isfinite(value):
            raise InvalidParameterError(f"{name} must be finite, got {value!r}")


def ueV_to_ghz(energy_ueV: float) -> float:
    """Convert an energy in micro-eV to a frequency E/h in GHz."""
    return energy_ueV * 1e-6 / PLANCK_EV_S * 1e-9


def ghz_to_ueV(freq_ghz: float) -> float:
    """Convert a frequency E/h in GHz to an energy in micro-eV."""
    return freq_ghz * 1e9 * PLANCK_EV_S * 1e6


@dataclass(frozen=True)
class QubitParams:
    """Parameters of one double-dot charge qubit.

    Parameters
    ----------
    tc : float
        Tunnel coupling t_c/h in GHz.
    eps_init : float
        Initialization (and readout) detuning in GHz.
    eps_idle : float, optional
        Parking detuning used while the partner qubit is driven.
    latch_state_index : int
        Index in the ``{L, R}`` basis of the inner-dot state, i.e. the state
        that triggers latching. The qubit initializes into the other one.
    init_ratio : float
        Minimum ``|eps_init| / tc`` accepted as a localized initialization.
    """

    tc: float
    eps_init: float
    eps_idle: float | None = None
    latch_state_index: int = 1
    init_ratio: float = field(default=5.0, compare=False)

    def __post_init__(self) -> None:
        _require_finite(tc=self.tc, eps_init=self.eps_init)
        if self.eps_idle is not None:
            _require_finite(eps_idle=self.eps_idle)
        if not self.tc > 0:
            raise InvalidParameterError(f"tc must be > 0, got {self.tc}")
        if abs(self.eps_init) < self.init_ratio * self.tc:
            raise InvalidParameterError(
                f"eps_init: |{self.eps_init}| GHz does not localize the electron "
                f"(need >= {self.init_ratio} * tc = {self.init_ratio * self.tc} GHz)"
            )
        if self.latch_state_index not in (0, 1):
            raise InvalidParameterError(
                f"latch_state_index must be 0 or 1, got {self.latch_state_index}"
            )

    @property
    def init_state_index(self) -> int:
        """Position-basis index of the outer dot the qubit initializes into."""
        return 1 - self.latch_state_index

    def initial_state(self) -> np.ndarray:
        """Density matrix of the initialized (outer-dot) position state."""
        rho = np.zeros((2, 2), dtype=complex)
        rho[self.init_state_index, self.init_state_index] = 1.0
        return rho


@dataclass(frozen=True)
class CoupledParams:
    """Two capacitively coupled charge qubits.

    ``g_latch`` is the capacitive shift produced by a qubit frozen in its
    latched state; it defaults to ``g``.
    """

    left: QubitParams
    right: QubitParams
    g: float
    g_latch: float | None = None

    def __post_init__(self) -> None:
        _require_finite(g=self.g)
        if self.g < 0:
            raise InvalidParameterError(f"g must be >= 0, got {self.g}")
        if self.g_latch is None:
            object.__setattr__(self, "g_latch", self.g)
        _require_finite(g_latch=self.g_latch)

    @classmethod
    def default_orientation(
        cls, tc_left: float, tc_right: float, g: float, *,
        eps_init: float = 150.0, eps_idle: float | None = None,
        g_latch: float | None = None,
    ) -> "CoupledParams":
        """Left qubit initializes in |L>, right qubit in |R> (outer dots)."""
        left = QubitParams(tc=tc_left, eps_init=-abs(eps_init), eps_idle=eps_idle,
                           latch_state_index=1)
        right = QubitParams(tc=tc_right, eps_init=abs(eps_init), latch_state_index=0)
        return cls(left=left, right=right, g=g, g_latch=g_latch)

    def qubit(self, name: str) -> QubitParams:
        if name == "L":
            return self.left
        if name == "R":
            return self.right
        raise KeyError(f"unknown qubit {name!r}; expected 'L' or 'R'")

    def with_g(self, g: float) -> "CoupledParams":
        return replace(self, g=g, g_latch=g)

    def initial_state(self) -> np.ndarray:
        return np.kron(self.left.initial_state(), self.right.initial_state())


def build_h1q(eps: float, tc: float) -> np.ndarray:
    """Single charge-qubit Hamiltonian ``(eps/2) sigma_z + tc sigma_x`` in GHz."""
    _require_finite(eps=eps, tc=tc)
    return np.array([[eps / 2, tc], [tc, -eps / 2]], dtype=complex)


def coupling_term(g: float) -> np.ndarray:
    """``(g/4)(I - sigma_z) x (I - sigma_z)``; adds ``g`` to |RR> only."""
    proj = IDENTITY - SIGMA_Z
    return (g / 4) * np.kron(proj, proj)


def build_h2q(eps_left: float, eps_right: float, params: CoupledParams, *,
              tc_left: float | None = None, tc_right: float | None = None,
              g: float | None = None) -> np.ndarray:
    """Coupled two-qubit Hamiltonian in the ``{LL, LR, RL, RR}`` basis.

    The keyword overrides exist so a latched (frozen) qubit can be modelled
    with zero tunnelling and the latched-state coupling.
    """
    tl = params.left.tc if tc_left is None else tc_left
    tr = params.right.tc if tc_right is None else tc_right
    gg = params.g if g is None else g
    _require_finite(eps_left=eps_left, eps_right=eps_right, tc_left=tl,
                    tc_right=tr, g=gg)
    h = (eps_left / 2) * np.kron(SIGMA_Z, IDENTITY)
    h += tl * np.kron(SIGMA_X, IDENTITY)
    h += (eps_right / 2) * np.kron(IDENTITY, SIGMA_Z)
    h += tr * np.kron(IDENTITY, SIGMA_X)
    h += coupling_term(gg)
    return h


def splitting(eps: float, tc: float) -> float:
    """Qubit transition frequency ``sqrt(eps^2 + 4 tc^2)`` in GHz."""
    return math.hypot(eps, 2.0 * tc)


def conditional_detuning(eps: float, control_in_latchside: bool, g: float) -> float:
    """Detuning seen by one qubit given the partner's position state.

    A partner sitting in its ``sigma_z = -1`` (R-side) state shifts the
    anti-crossing by ``+g``.
    """
    return eps + g if control_in_latchside else eps


def is_hermitian(matrix: np.ndarray, rtol: float = 1e-12) -> bool:
    scale = max(1.0, float(np.max(np.abs(matrix))))
    return bool(np.max(np.abs(matrix - matrix.conj().T)) <= rtol * scale)


def validate_density_matrix(rho: np.ndarray, *, trace_tol: float = 1e-12,
                            eig_tol: float = 1e-10) -> np.ndarray:
    """Return ``rho`` as a complex array after checking the state invariants."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape not in ((2, 2), (4, 4)):
        raise InvalidParameterError(f"density matrix must be 2x2 or 4x4, got {rho.shape}")
    if not np.all(np.isfinite(rho)):
        raise InvalidParameterError("density matrix has non-finite entries")
    if not is_hermitian(rho):
        raise InvalidParameterError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > trace_tol:
        raise InvalidParameterError(f"density matrix trace {np.trace(rho).real} != 1")
    if np.min(np.linalg.eigvalsh(rho)) < -eig_tol:
        raise InvalidParameterError("density matrix has negative eigenvalues")
    return rho


def pure_state(vector) -> np.ndarray:
    psi = np.asarray(vector, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return np.outer(psi, psi.conj())
