"""Gradients of Pauli-Z expectations with respect to circuit parameters.

Three routes with one contract: given a circuit, a parameter vector, an input
state, and an upstream cotangent ``c`` (one weight per qubit), return
``d(sum_q c_q <Z_q>) / d theta`` for every parameter slot.  Slots referenced
by several gates accumulate one contribution per occurrence.

- :func:`adjoint_gradient` — reverse sweep over the unitary circuit,
  O(gates) per backward pass; the training default.  Requires noise-free
  execution.
- :func:`parameter_shift_gradient` — two shifted executions per angle
  occurrence; works on trajectory-averaged noisy expectations with common
  random numbers across shifts.
- :func:`finite_difference_gradient` — central differences; the slow oracle
  for cross-checking the other two.
"""

from __future__ import annotations

import math

import numpy as np

from .circuit import BindingError, Circuit, ParamRef, bind, execute_ops
from .sim import (GateOp, NoiseSpec, StateVector, gate_matrix_1q, ry_matrix,
                  rz_matrix, _apply_cphase, _apply_matrix_1q, _apply_mcx,
                  _apply_swap)

_KX = np.array([[0, -0.5j], [-0.5j, 0]])          # d/dt exp(-i t X/2) factor
_KZ = np.array([[-0.5j, 0], [0, 0.5j]])           # d/dt exp(-i t Z/2) factor
_KY = np.array([[0, -0.5], [0.5, 0]])             # d/dt exp(-i t Y/2) factor


class UnsupportedModeError(RuntimeError):
    """Requested gradient mode cannot serve this execution mode."""


def _z_diagonal(num_qubits: int, cotangent: np.ndarray) -> np.ndarray:
    """Diagonal of sum_q c_q Z_q in the computational basis."""
    idx = np.arange(1 << num_qubits)
    diag = np.zeros(1 << num_qubits)
    for q in range(num_qubits):
        signs = 1.0 - 2.0 * ((idx >> q) & 1)
        diag += cotangent[q] * signs
    return diag


def _cotangent_vector(circuit: Circuit, cotangent) -> np.ndarray:
    cot = np.asarray(cotangent, dtype=float).reshape(-1)
    if cot.shape != (circuit.num_qubits,):
        raise ValueError(
            f"cotangent must have {circuit.num_qubits} entries, got {cot.size}")
    return cot


def expectation(circuit: Circuit, params, input_state: StateVector, cotangent,
                noise: NoiseSpec | None = None, trajectories: int = 8,
                seed: int = 0) -> float:
    """sum_q cotangent_q <Z_q> after running the circuit.

    Noisy mode averages ``trajectories`` Monte Carlo runs with seeds derived
    from ``seed`` so repeated calls see identical noise realizations.
    """
    ops = bind(circuit, params)
    return _objective(ops, circuit.num_qubits, input_state,
                      _cotangent_vector(circuit, cotangent),
                      noise, trajectories, seed)


def _seed_parts(seed) -> list[int]:
    if isinstance(seed, (tuple, list)):
        return [int(s) for s in seed]
    return [int(seed)]


def _objective(ops, num_qubits, input_state, cot, noise, trajectories, seed):
    diag = _z_diagonal(num_qubits, cot)
    if noise is None:
        state = execute_ops(ops, input_state)
        return float(np.real(np.vdot(state.amplitudes, diag * state.amplitudes)))
    base = _seed_parts(seed)
    total = 0.0
    for t in range(trajectories):
        rng = np.random.default_rng(base + [t])
        state = execute_ops(ops, input_state, noise, rng)
        total += float(np.real(np.vdot(state.amplitudes,
                                       diag * state.amplitudes)))
    return total / trajectories


# --- adjoint mode ------------------------------------------------------------

def _rotation_derivatives(op: GateOp) -> dict[int, np.ndarray]:
    """2x2 derivative matrix per angle position for RX/RZ/ROT3."""
    if op.kind == "RX":
        return {0: _KX @ gate_matrix_1q("RX", op.angles)}
    if op.kind == "RZ":
        return {0: _KZ @ gate_matrix_1q("RZ", op.angles)}
    if op.kind == "ROT3":
        a, b, c = op.angles
        u = gate_matrix_1q("ROT3", op.angles)
        return {
            0: u @ _KZ,                                     # alpha (applied first)
            1: rz_matrix(c) @ _KY @ ry_matrix(b) @ rz_matrix(a),
            2: _KZ @ u,                                     # gamma (applied last)
        }
    raise UnsupportedModeError(
        f"adjoint differentiation supports parameterized single-qubit "
        f"rotations only, got {op.kind}")


def _pair_overlap(bra: np.ndarray, ket: np.ndarray, qubit: int) -> np.ndarray:
    """O[r, c] = <bra_r | ket_c> restricted to one qubit's two slices."""
    bv = bra.reshape(-1, 2, 1 << qubit)
    kv = ket.reshape(-1, 2, 1 << qubit)
    return np.einsum("hrl,hcl->rc", bv.conj(), kv)


def adjoint_value_and_grad(circuit: Circuit, params,
                           input_state: StateVector, cotangent,
                           final_state: StateVector | None = None,
                           noise: NoiseSpec | None = None
                           ) -> tuple[np.ndarray, np.ndarray]:
    """Per-qubit <Z> values plus the full parameter gradient in one sweep.

    ``final_state`` may supply the already-computed forward result to skip
    the internal forward pass; it must correspond exactly to
    ``(circuit, params, input_state)``.
    """
    if noise is not None:
        raise UnsupportedModeError(
            "adjoint differentiation requires unitary evolution; use "
            "parameter_shift_gradient for noisy circuits")
    cot = _cotangent_vector(circuit, cotangent)
    params = np.asarray(params, dtype=float)
    if circuit.num_parameters > len(params):
        raise BindingError(
            f"parameter index {circuit.num_parameters - 1} unbound "
            f"(vector has length {len(params)})")
    ops = bind(circuit, params)
    refs = {i: [(j, a.index, a.scale) for j, a in enumerate(op.angles)
                if isinstance(a, ParamRef)]
            for i, op in enumerate(circuit.ops)}

    if final_state is None:
        final_state = execute_ops(ops, input_state)
    probs = np.abs(final_state.amplitudes) ** 2
    values = np.empty(circuit.num_qubits)
    for q in range(circuit.num_qubits):
        values[q] = 1.0 - 2.0 * probs.reshape(-1, 2, 1 << q)[:, 1, :].sum()

    n = circuit.num_qubits
    diag = _z_diagonal(n, cot)
    bra = diag * final_state.amplitudes
    ket = final_state.amplitudes.copy()
    grad = np.zeros(len(params))
    for i in range(len(ops) - 1, -1, -1):
        op = ops[i]
        kind = op.kind
        if kind in ("RX", "RZ", "ROT3", "H"):
            inv = gate_matrix_1q(kind, op.angles).conj().T
            ket = _apply_matrix_1q(ket, inv, op.targets[0])
        elif kind == "CPHASE":
            _apply_cphase(ket, n, op.controls[0], op.targets[0], -op.angles[0])
        elif kind == "SWAP":
            _apply_swap(ket, n, op.targets[0], op.targets[1])
        else:  # CNOT / MCX are involutions
            _apply_mcx(ket, n, op.controls, op.targets[0])
        op_refs = refs[i]
        if op_refs:
            derivs = _rotation_derivatives(op)
            overlap = _pair_overlap(bra, ket, op.targets[0])
            for angle_pos, slot, scale in op_refs:
                contrib = 2.0 * float(np.real(np.sum(derivs[angle_pos] * overlap)))
                grad[slot] += scale * contrib
        if kind in ("RX", "RZ", "ROT3", "H"):
            bra = _apply_matrix_1q(bra, inv, op.targets[0])
        elif kind == "CPHASE":
            _apply_cphase(bra, n, op.controls[0], op.targets[0], -op.angles[0])
        elif kind == "SWAP":
            _apply_swap(bra, n, op.targets[0], op.targets[1])
        else:
            _apply_mcx(bra, n, op.controls, op.targets[0])
    return values, grad


def adjoint_gradient(circuit: Circuit, params, input_state: StateVector,
                     cotangent, noise: NoiseSpec | None = None) -> np.ndarray:
    """Gradient via the adjoint reverse sweep (noise-free circuits only)."""
    _, grad = adjoint_value_and_grad(circuit, params, input_state, cotangent,
                                     noise=noise)
    return grad


# --- parameter-shift mode ------------------------------------------------------

def parameter_shift_gradient(circuit: Circuit, params,
                             input_state: StateVector, cotangent,
                             noise: NoiseSpec | None = None,
                             trajectories: int = 8,
                             seed: int = 0) -> np.ndarray:
    """Gradient via +-pi/2 shifts, one pair of executions per occurrence.

    Valid for angles entering as half-angle Pauli rotations (RX/RZ and the
    ROT3 components).  Under noise, every shifted evaluation averages the
    same ``trajectories`` seeded noise realizations, so the difference
    estimator sees common random numbers.
    """
    params = np.asarray(params, dtype=float)
    cot = _cotangent_vector(circuit, cotangent)
    ops = bind(circuit, params)
    num_qubits = circuit.num_qubits
    grad = np.zeros(len(params))
    for i, j, ref in circuit.param_refs():
        base_op = ops[i]
        for sign in (1.0, -1.0):
            angles = list(base_op.angles)
            angles[j] += sign * math.pi / 2.0
            ops[i] = GateOp(base_op.kind, base_op.targets, base_op.controls,
                            tuple(angles), base_op.tag)
            value = _objective(ops, num_qubits, input_state, cot,
                               noise, trajectories, seed)
            grad[ref.index] += ref.scale * sign * value / 2.0
        ops[i] = base_op
    return grad


# --- finite differences --------------------------------------------------------

def finite_difference_gradient(circuit: Circuit, params,
                               input_state: StateVector, cotangent,
                               step: float = 1e-5,
                               noise: NoiseSpec | None = None,
                               trajectories: int = 8,
                               seed: int = 0) -> np.ndarray:
    """Central finite differences over parameter slots; test oracle."""
    params = np.asarray(params, dtype=float)
    cot = _cotangent_vector(circuit, cotangent)
    num_qubits = circuit.num_qubits
    grad = np.zeros(len(params))
    shifted = params.copy()
    for k in range(len(params)):
        shifted[k] = params[k] + step
        up = _objective(bind(circuit, shifted), num_qubits, input_state, cot,
                        noise, trajectories, seed)
        shifted[k] = params[k] - step
        down = _objective(bind(circuit, shifted), num_qubits, input_state, cot,
                          noise, trajectories, seed)
        shifted[k] = params[k]
        grad[k] = (up - down) / (2.0 * step)
    return grad
