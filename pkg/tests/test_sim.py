"""Statevector kernel tests: gate semantics, QFT vs the dense DFT oracle,
measurement sums, and depolarizing-trajectory statistics."""

import numpy as np
import pytest

from qnet import sim
from qnet.sim import (CapacityError, GateOp, NoiseSpec, StateVector,
                      adjoint_gate, apply_depolarizing_trajectory, apply_gate,
                      apply_qft, init_zero, pauli_z_expectations)


def random_state(num_qubits, rng):
    amps = rng.normal(size=1 << num_qubits) + 1j * rng.normal(size=1 << num_qubits)
    amps /= np.linalg.norm(amps)
    return StateVector(num_qubits, amps)


def basis_state(num_qubits, index):
    state = init_zero(num_qubits)
    state.amplitudes[0] = 0.0
    state.amplitudes[index] = 1.0
    return state


def dft_matrix(m):
    """Independent dense DFT oracle: U[k, j] = w^(jk)/sqrt(N)."""
    n = 1 << m
    j, k = np.meshgrid(np.arange(n), np.arange(n))
    return np.exp(2j * np.pi * j * k / n) / np.sqrt(n)


class TestInitZero:
    def test_two_qubits(self):
        assert np.array_equal(init_zero(2).amplitudes, [1, 0, 0, 0])

    def test_z_expectation_of_ground_state(self):
        assert pauli_z_expectations(init_zero(1)) == pytest.approx([1.0])

    def test_capacity_guard(self):
        with pytest.raises(CapacityError, match="26"):
            init_zero(27)
        with pytest.raises(CapacityError):
            init_zero(0)


class TestGateOpValidation:
    def test_angle_counts(self):
        with pytest.raises(ValueError):
            GateOp("ROT3", (0,), angles=(0.1, 0.2))
        with pytest.raises(ValueError):
            GateOp("RX", (0,))
        with pytest.raises(ValueError):
            GateOp("H", (0,), angles=(0.1,))

    def test_distinct_indices(self):
        with pytest.raises(ValueError):
            GateOp("CNOT", (1,), (1,))
        with pytest.raises(ValueError):
            GateOp("MCX", (2,), (0, 0))

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            GateOp("RY", (0,), angles=(0.1,))

    def test_index_out_of_range_at_apply(self):
        with pytest.raises(IndexError):
            apply_gate(init_zero(2), GateOp("H", (2,)))


class TestSingleQubitGates:
    def test_rx_pi_flips_to_minus_i_one(self):
        state = apply_gate(init_zero(1), GateOp("RX", (0,), angles=(np.pi,)))
        np.testing.assert_allclose(state.amplitudes, [0, -1j], atol=1e-12)
        assert pauli_z_expectations(state) == pytest.approx([-1.0])

    def test_rz_is_phase_only_on_zero(self):
        state = apply_gate(init_zero(1), GateOp("RZ", (0,), angles=(np.pi / 2,)))
        assert pauli_z_expectations(state) == pytest.approx([1.0])

    def test_hadamard_balances_z(self):
        state = apply_gate(init_zero(1), GateOp("H", (0,)))
        assert pauli_z_expectations(state)[0] == pytest.approx(0.0, abs=1e-12)

    def test_rot3_matches_euler_composition(self):
        angles = (0.3, -1.1, 2.0)
        composed = (sim.rz_matrix(angles[2]) @ sim.ry_matrix(angles[1])
                    @ sim.rz_matrix(angles[0]))
        np.testing.assert_allclose(sim.rot3_matrix(*angles), composed,
                                   atol=1e-14)


class TestMultiQubitGates:
    def test_mcx_truth_table_example(self):
        # controls on qubits 0,1 (both set), target 2
        state = basis_state(3, 0b011)
        apply_gate(state, GateOp("MCX", (2,), (0, 1)))
        assert np.argmax(np.abs(state.amplitudes)) == 0b111

    @pytest.mark.parametrize("num_qubits", [2, 3, 4, 5])
    def test_mcx_is_the_controlled_flip_permutation(self, num_qubits):
        controls = tuple(range(num_qubits - 1))
        target = num_qubits - 1
        mask = (1 << (num_qubits - 1)) - 1
        for index in range(1 << num_qubits):
            state = basis_state(num_qubits, index)
            apply_gate(state, GateOp("MCX", (target,), controls))
            expected = index ^ (1 << target) if (index & mask) == mask else index
            assert np.argmax(np.abs(state.amplitudes)) == expected

    def test_swap_exchanges_bits(self):
        state = basis_state(2, 0b01)
        apply_gate(state, GateOp("SWAP", (0, 1)))
        assert np.argmax(np.abs(state.amplitudes)) == 0b10

    def test_cphase_phases_the_11_component(self):
        state = apply_gate(init_zero(2), GateOp("H", (0,)))
        apply_gate(state, GateOp("H", (1,)))
        apply_gate(state, GateOp("CPHASE", (1,), (0,), (np.pi / 3,)))
        expected = np.full(4, 0.5, dtype=complex)
        expected[3] *= np.exp(1j * np.pi / 3)
        np.testing.assert_allclose(state.amplitudes, expected, atol=1e-12)


def random_gate(num_qubits, rng):
    kind = rng.choice(["RX", "RZ", "ROT3", "H", "CNOT", "CPHASE", "SWAP", "MCX"])
    qubits = rng.permutation(num_qubits)
    if kind in ("RX", "RZ", "H", "ROT3"):
        n_angles = {"RX": 1, "RZ": 1, "H": 0, "ROT3": 3}[kind]
        return GateOp(kind, (int(qubits[0]),),
                      angles=tuple(rng.uniform(-np.pi, np.pi, n_angles)))
    if kind in ("CNOT", "CPHASE"):
        angles = (float(rng.uniform(-np.pi, np.pi)),) if kind == "CPHASE" else ()
        return GateOp(kind, (int(qubits[0]),), (int(qubits[1]),), angles)
    if kind == "SWAP":
        return GateOp("SWAP", (int(qubits[0]), int(qubits[1])))
    n_controls = int(rng.integers(1, num_qubits))
    return GateOp("MCX", (int(qubits[0]),),
                  tuple(int(q) for q in qubits[1:1 + n_controls]))


class TestUnitarity:
    def test_norm_preserved_over_random_sequences(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            state = random_state(4, rng)
            for _ in range(30):
                apply_gate(state, random_gate(4, rng))
            assert abs(state.norm_sq() - 1.0) <= 1e-10

    def test_gate_then_adjoint_restores_input(self):
        rng = np.random.default_rng(8)
        for _ in range(40):
            gate = random_gate(3, rng)
            state = random_state(3, rng)
            original = state.amplitudes.copy()
            apply_gate(state, gate)
            apply_gate(state, adjoint_gate(gate))
            np.testing.assert_allclose(state.amplitudes, original, atol=1e-10)


class TestQft:
    def test_all_zeros_goes_uniform(self):
        state = apply_qft(init_zero(2), [0, 1])
        np.testing.assert_allclose(state.amplitudes, np.full(4, 0.5), atol=1e-12)

    def test_roundtrip_is_identity(self):
        rng = np.random.default_rng(3)
        state = random_state(3, rng)
        original = state.amplitudes.copy()
        apply_qft(state, [0, 1, 2])
        apply_qft(state, [0, 1, 2], inverse=True)
        np.testing.assert_allclose(state.amplitudes, original, atol=1e-10)

    def test_basis_one_column(self):
        # oracle: second column of the 4x4 DFT matrix
        expected = dft_matrix(2) @ np.eye(4)[:, 1]
        state = apply_qft(basis_state(2, 1), [0, 1])
        np.testing.assert_allclose(state.amplitudes, expected, atol=1e-12)
        np.testing.assert_allclose(expected, 0.5 * np.array([1, 1j, -1, -1j]),
                                   atol=1e-15)

    @pytest.mark.parametrize("m", [1, 2, 3, 4])
    def test_matrix_equals_dft_oracle(self, m):
        realized = np.zeros((1 << m, 1 << m), dtype=complex)
        for j in range(1 << m):
            state = apply_qft(basis_state(m, j), list(range(m)))
            realized[:, j] = state.amplitudes
        np.testing.assert_allclose(realized, dft_matrix(m), atol=1e-10)

    def test_on_a_sub_register(self):
        # QFT over qubits [2, 0] of a 3-qubit register: qubit 2 is the low
        # bit of the transformed pair, qubit 1 untouched.
        state = basis_state(3, 0b100)  # sub-index 1 in (q2, q0) order
        apply_qft(state, [2, 0])
        sub = dft_matrix(1 << 0)  # placeholder to keep names obvious
        expected = np.zeros(8, dtype=complex)
        col = dft_matrix(2)[:, 1]
        for k in range(4):
            low, high = k & 1, (k >> 1) & 1
            expected[(low << 2) | high] = col[k]
        np.testing.assert_allclose(state.amplitudes, expected, atol=1e-12)

    def test_duplicate_qubits_rejected(self):
        with pytest.raises(ValueError):
            apply_qft(init_zero(2), [0, 0])


class TestPauliZExpectations:
    def test_plus_tensor_zero(self):
        state = apply_gate(init_zero(2), GateOp("H", (0,)))
        np.testing.assert_allclose(pauli_z_expectations(state), [0.0, 1.0],
                                   atol=1e-12)

    def test_one_one(self):
        state = basis_state(2, 0b11)
        np.testing.assert_allclose(pauli_z_expectations(state), [-1.0, -1.0])

    def test_matches_probability_sum_oracle(self):
        rng = np.random.default_rng(11)
        state = random_state(4, rng)
        got = pauli_z_expectations(state)
        probs = np.abs(state.amplitudes) ** 2
        for q in range(4):
            signs = np.array([1.0 if not (i >> q) & 1 else -1.0
                              for i in range(16)])
            assert got[q] == pytest.approx(float(signs @ probs), abs=1e-12)
        assert np.all(got >= -1.0) and np.all(got <= 1.0)


class TestDepolarizing:
    def test_p_zero_is_identity(self):
        rng = np.random.default_rng(0)
        state = random_state(2, rng)
        before = state.amplitudes.copy()
        apply_depolarizing_trajectory(state, [0, 1], NoiseSpec(0.0),
                                      np.random.default_rng(1))
        assert np.array_equal(state.amplitudes, before)

    def test_p_validation(self):
        with pytest.raises(ValueError):
            NoiseSpec(1.5)
        with pytest.raises(ValueError):
            NoiseSpec(-0.1)

    @pytest.mark.parametrize("p,expected", [(1.0, 1.0 - 4.0 / 3.0),
                                            (0.1, 1.0 - 0.4 / 3.0)])
    def test_trajectory_average_matches_channel(self, p, expected):
        # single-qubit depolarizing channel: <Z> -> (1 - 4p/3) <Z>
        rng = np.random.default_rng(42)
        shots = 30_000
        total = 0.0
        for _ in range(shots):
            state = init_zero(1)
            apply_depolarizing_trajectory(state, [0], NoiseSpec(p), rng)
            total += pauli_z_expectations(state)[0]
        assert total / shots == pytest.approx(expected, abs=0.02)

    def test_three_sigma_channel_convergence(self):
        # variance of a single-trajectory <Z> outcome is known exactly:
        # outcomes are +-1 with mean mu = 1 - 4p/3.
        p = 0.3
        mu = 1.0 - 4.0 * p / 3.0
        shots = 20_000
        sigma = np.sqrt((1.0 - mu ** 2) / shots)
        rng = np.random.default_rng(5)
        total = 0.0
        for _ in range(shots):
            state = init_zero(1)
            apply_depolarizing_trajectory(state, [0], NoiseSpec(p), rng)
            total += pauli_z_expectations(state)[0]
        assert abs(total / shots - mu) <= 3.0 * sigma
