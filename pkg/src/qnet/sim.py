"""Dense statevector simulation kernels.

Conventions used throughout the package:

- Qubit 0 is the least-significant bit of the basis-state index, so the
  amplitude at index ``k`` belongs to the basis state whose qubit-q bit is
  ``(k >> q) & 1``.
- ``RX(t) = exp(-i*t*X/2)``, ``RZ(t) = exp(-i*t*Z/2)`` and
  ``ROT3(a, b, c) = RZ(c) @ RY(b) @ RZ(a)`` (Z-Y-Z Euler angles, ``a``
  applied first).
- Gate application mutates the amplitude buffer in place and returns the
  same :class:`StateVector` for chaining.  A state is exclusively owned by
  its caller during mutation; copy first if the input must survive.

Noise is simulated with Monte Carlo trajectories (pure states with sampled
Pauli errors), not density matrices, so memory stays at one amplitude
vector per trajectory.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

MAX_QUBITS = 26  # 2**26 complex128 amplitudes = 1 GiB

GATE_KINDS = ("RX", "RZ", "ROT3", "H", "CNOT", "CPHASE", "SWAP", "MCX")
_ANGLE_COUNT = {"RX": 1, "RZ": 1, "CPHASE": 1, "ROT3": 3,
                "H": 0, "CNOT": 0, "SWAP": 0, "MCX": 0}

_SQRT2_INV = 1.0 / math.sqrt(2.0)
_H_MATRIX = np.array([[_SQRT2_INV, _SQRT2_INV], [_SQRT2_INV, -_SQRT2_INV]],
                     dtype=complex)
_PAULI = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class CapacityError(ValueError):
    """Qubit count exceeds what the dense simulator is willing to allocate."""


@dataclass
class StateVector:
    """Pure quantum state over ``num_qubits`` qubits as 2**n dense amplitudes."""

    num_qubits: int
    amplitudes: np.ndarray

    def copy(self) -> "StateVector":
        return StateVector(self.num_qubits, self.amplitudes.copy())

    def norm_sq(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))


@dataclass(frozen=True)
class GateOp:
    """A single gate: kind, target qubits, control qubits, bound angles.

    ``angles`` entries are radians.  At the circuit layer they may instead be
    :class:`~qnet.circuit.ParamRef` placeholders; the simulator itself only
    accepts numbers.  ``tag`` is a free-form layer label carried through to
    depth analysis and circuit dumps.
    """

    kind: str
    targets: tuple[int, ...]
    controls: tuple[int, ...] = ()
    angles: tuple = ()
    tag: str | None = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        expected = _ANGLE_COUNT[self.kind]
        if len(self.angles) != expected:
            raise ValueError(
                f"{self.kind} takes {expected} angle(s), got {len(self.angles)}")
        touched = self.targets + self.controls
        if len(set(touched)) != len(touched):
            raise ValueError(f"{self.kind} qubit indices must be distinct: {touched}")

    @property
    def qubits(self) -> tuple[int, ...]:
        return self.targets + self.controls


@dataclass(frozen=True)
class NoiseSpec:
    """Single-qubit depolarizing noise with error probability ``p``."""

    p: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"depolarizing probability must be in [0, 1], got {self.p}")


def init_zero(num_qubits: int) -> StateVector:
    """Allocate |0...0> on ``num_qubits`` qubits."""
    if not 1 <= num_qubits <= MAX_QUBITS:
        raise CapacityError(
            f"num_qubits must be in [1, {MAX_QUBITS}], got {num_qubits}")
    amps = np.zeros(1 << num_qubits, dtype=complex)
    amps[0] = 1.0
    return StateVector(num_qubits, amps)


# --- gate matrices -----------------------------------------------------------

def rx_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2.0), math.sin(theta / 2.0)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


def ry_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2.0), math.sin(theta / 2.0)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz_matrix(theta: float) -> np.ndarray:
    e = cmath.exp(-0.5j * theta)
    return np.array([[e, 0], [0, e.conjugate()]], dtype=complex)


def rot3_matrix(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """Z-Y-Z Euler rotation: RZ(gamma) @ RY(beta) @ RZ(alpha), in closed form."""
    c, s = math.cos(beta / 2.0), math.sin(beta / 2.0)
    return np.array(
        [[c * cmath.exp(-0.5j * (alpha + gamma)),
          -s * cmath.exp(0.5j * (alpha - gamma))],
         [s * cmath.exp(-0.5j * (alpha - gamma)),
          c * cmath.exp(0.5j * (alpha + gamma))]])


def gate_matrix_1q(kind: str, angles: tuple) -> np.ndarray:
    """2x2 unitary for a single-qubit gate kind."""
    if kind == "RX":
        return rx_matrix(angles[0])
    if kind == "RZ":
        return rz_matrix(angles[0])
    if kind == "ROT3":
        return rot3_matrix(*angles)
    if kind == "H":
        return _H_MATRIX
    raise ValueError(f"{kind} is not a single-qubit matrix gate")


# --- kernels -----------------------------------------------------------------

def _apply_matrix_1q(amps: np.ndarray, mat: np.ndarray, qubit: int) -> np.ndarray:
    # View as (high, 2, low) with low = 2**qubit; axis 1 is the target qubit.
    # One broadcast matmul; the caller swaps in the returned buffer.
    view = amps.reshape(-1, 2, 1 << qubit)
    return np.matmul(mat, view).reshape(-1)


# index arrays for permutation/phase gates, keyed by (num_qubits, qubits...)
_flip_cache: dict[tuple, np.ndarray] = {}
_phase_cache: dict[tuple, np.ndarray] = {}


def _mcx_source_indices(num_qubits: int, controls: tuple[int, ...],
                        target: int) -> np.ndarray:
    """Basis indices with all controls set and target clear."""
    key = (num_qubits, controls, target)
    cached = _flip_cache.get(key)
    if cached is None:
        idx = np.arange(1 << num_qubits)
        mask = 0
        for c in controls:
            mask |= 1 << c
        sel = (idx & mask) == mask
        sel &= (idx >> target) & 1 == 0
        cached = idx[sel]
        _flip_cache[key] = cached
    return cached


def _both_ones_indices(num_qubits: int, q0: int, q1: int) -> np.ndarray:
    key = (num_qubits, q0, q1)
    cached = _phase_cache.get(key)
    if cached is None:
        idx = np.arange(1 << num_qubits)
        sel = ((idx >> q0) & 1 == 1) & ((idx >> q1) & 1 == 1)
        cached = idx[sel]
        _phase_cache[key] = cached
    return cached


def _apply_mcx(amps: np.ndarray, num_qubits: int,
               controls: tuple[int, ...], target: int) -> None:
    src = _mcx_source_indices(num_qubits, controls, target)
    dst = src | (1 << target)
    tmp = amps[src].copy()
    amps[src] = amps[dst]
    amps[dst] = tmp


def _apply_swap(amps: np.ndarray, num_qubits: int, q0: int, q1: int) -> None:
    idx = _mcx_source_indices(num_qubits, (q0,), q1)  # q0=1, q1=0
    partner = idx ^ ((1 << q0) | (1 << q1))
    tmp = amps[idx].copy()
    amps[idx] = amps[partner]
    amps[partner] = tmp


def _apply_cphase(amps: np.ndarray, num_qubits: int, control: int,
                  target: int, theta: float) -> None:
    sel = _both_ones_indices(num_qubits, control, target)
    amps[sel] *= cmath.exp(1j * theta)


def apply_gate(state: StateVector, gate: GateOp) -> StateVector:
    """Apply one gate in place; returns ``state``."""
    n = state.num_qubits
    for q in gate.qubits:
        if not 0 <= q < n:
            raise IndexError(f"qubit {q} out of range for {n}-qubit state")
    kind = gate.kind
    if kind in ("RX", "RZ", "ROT3", "H"):
        state.amplitudes = _apply_matrix_1q(
            state.amplitudes, gate_matrix_1q(kind, gate.angles), gate.targets[0])
    elif kind == "CNOT":
        _apply_mcx(state.amplitudes, n, gate.controls, gate.targets[0])
    elif kind == "MCX":
        _apply_mcx(state.amplitudes, n, gate.controls, gate.targets[0])
    elif kind == "SWAP":
        _apply_swap(state.amplitudes, n, gate.targets[0], gate.targets[1])
    elif kind == "CPHASE":
        _apply_cphase(state.amplitudes, n, gate.controls[0], gate.targets[0],
                      gate.angles[0])
    return state


def adjoint_gate(gate: GateOp) -> GateOp:
    """GateOp whose unitary is the adjoint of ``gate``'s."""
    kind = gate.kind
    if kind in ("RX", "RZ", "CPHASE"):
        angles = (-gate.angles[0],)
    elif kind == "ROT3":
        a, b, c = gate.angles
        angles = (-c, -b, -a)
    else:  # H, CNOT, SWAP, MCX are involutions
        angles = ()
    return GateOp(kind, gate.targets, gate.controls, angles, gate.tag)


# --- QFT ---------------------------------------------------------------------

def qft_gate_sequence(qubits: list[int] | tuple[int, ...], inverse: bool = False,
                      swaps: bool = True, tag: str | None = None) -> list[GateOp]:
    """Standard QFT circuit over ``qubits``.

    ``qubits[0]`` is the least-significant bit of the transformed index.  With
    ``swaps=True`` the realized unitary is exactly the DFT matrix
    ``U[k, j] = exp(2*pi*i*j*k/N) / sqrt(N)`` on that index; ``swaps=False``
    leaves the output in bit-reversed order (useful when the caller conjugates
    a permutation-symmetric operator, where the reversal cancels).
    """
    qs = list(qubits)
    if len(qs) != len(set(qs)):
        raise ValueError(f"QFT qubit list has duplicates: {qs}")
    if not qs:
        raise ValueError("QFT qubit list is empty")
    m = len(qs)
    ops: list[GateOp] = []
    for i in range(m - 1, -1, -1):
        ops.append(GateOp("H", (qs[i],), tag=tag))
        for k in range(i - 1, -1, -1):
            theta = math.pi / (1 << (i - k))
            ops.append(GateOp("CPHASE", (qs[i],), (qs[k],), (theta,), tag=tag))
    if swaps:
        for j in range(m // 2):
            ops.append(GateOp("SWAP", (qs[j], qs[m - 1 - j]), tag=tag))
    if inverse:
        ops = [adjoint_gate(op) for op in reversed(ops)]
    return ops


def apply_qft(state: StateVector, qubits: list[int] | tuple[int, ...],
              inverse: bool = False) -> StateVector:
    """Apply the QFT (or its adjoint) restricted to ``qubits``, in place."""
    for op in qft_gate_sequence(qubits, inverse=inverse):
        apply_gate(state, op)
    return state


# --- measurement -------------------------------------------------------------

def pauli_z_expectations(state: StateVector) -> np.ndarray:
    """<Z_q> for every qubit q, each in [-1, 1]."""
    probs = np.abs(state.amplitudes) ** 2
    out = np.empty(state.num_qubits)
    for q in range(state.num_qubits):
        p1 = probs.reshape(-1, 2, 1 << q)[:, 1, :].sum()
        out[q] = 1.0 - 2.0 * p1
    return out


# --- noise -------------------------------------------------------------------

def apply_depolarizing_trajectory(state: StateVector,
                                  qubits: list[int] | tuple[int, ...],
                                  noise: NoiseSpec,
                                  rng: np.random.Generator) -> StateVector:
    """One Monte Carlo depolarizing step on each listed qubit, in place.

    Per qubit: identity with probability 1-p, otherwise one of X/Y/Z drawn
    uniformly (p/3 each).
    """
    p = noise.p
    if p == 0.0:
        return state
    for q in qubits:
        if rng.random() < p:
            pauli = ("X", "Y", "Z")[rng.integers(3)]
            state.amplitudes = _apply_matrix_1q(state.amplitudes,
                                                _PAULI[pauli], q)
    return state
