"""QNet encoder circuit construction and the canonical parameter table.

A QNet instance over ``n`` tokens with ``d`` embedding dimensions uses
``n * d`` qubits; token ``i``'s dimension ``j`` lives on qubit ``i*d + j``
(zero based).  The trainable parameter table is a flat vector of length
``9 * d * blocks``, laid out per block as::

    [mixture triples (alpha, beta, gamma) x d]
    [feedforward layer-1 triples x d]
    [feedforward layer-2 triples x d]

Mixture triples are shared across the n token qubits of a dimension;
feedforward triples are indexed by dimension and shared across tokens.

The circuit structure per input:

- encoding: ``RX(x[i, j])`` then ``RZ(i * pi / n)`` on every qubit, once;
- per block: a mixture layer (per dimension: QFT over the token qubits,
  a shared ROT3 on each, inverse QFT), then a feedforward layer (per token:
  ROT3 per dimension, the Grover-style involution G across the token's
  qubits, a second ROT3 layer, G again);
- a single terminal Pauli-Z measurement of every qubit, reshaped to (n, d).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import sim
from .circuit import Circuit, ParamRef, bind, concat, execute_ops
from .sim import GateOp, NoiseSpec, StateVector, init_zero, pauli_z_expectations

ABLATIONS = ("full", "mixture_only", "feedforward_only")


@dataclass(frozen=True)
class QNetConfig:
    """Shape of one QNet encoder: tokens, embedding dims, block repeats."""

    n: int
    d: int
    blocks: int = 1

    def __post_init__(self):
        if self.n < 1 or self.d < 1 or self.blocks < 1:
            raise ValueError(f"n, d, blocks must all be >= 1, got {self}")

    @property
    def num_qubits(self) -> int:
        return self.n * self.d


def qubit_index(config: QNetConfig, token: int, dim: int) -> int:
    """Qubit holding (token, dim), both zero based."""
    return token * config.d + dim


def count_parameters(config: QNetConfig) -> int:
    """Length of the trainable parameter table: 9 * d * blocks."""
    return 9 * config.d * config.blocks


def input_slot_base(config: QNetConfig) -> int:
    """First slot of the encoding angles in the extended parameter vector."""
    return count_parameters(config)


def _mixture_slot(config: QNetConfig, block: int, dim: int) -> int:
    return 9 * config.d * block + 3 * dim


def _ff_slot(config: QNetConfig, block: int, layer: int, dim: int) -> int:
    # layer is 1 or 2
    return 9 * config.d * block + 3 * config.d * layer + 3 * dim


def _check_block(config: QNetConfig, block: int) -> None:
    if not 0 <= block < config.blocks:
        raise ValueError(f"block {block} out of range for blocks={config.blocks}")


def _validate_tokens(config: QNetConfig, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (config.n, config.d):
        raise ValueError(
            f"token matrix must have shape ({config.n}, {config.d}), got {x.shape}")
    return x


# --- segment builders ----------------------------------------------------------

def build_encoding(config: QNetConfig, x: np.ndarray) -> Circuit:
    """Input encoding: RX(x[i, j]) then the positional RZ(i * pi / n)."""
    x = _validate_tokens(config, x)
    ops = []
    for i in range(config.n):
        pos = i * math.pi / config.n
        for j in range(config.d):
            q = qubit_index(config, i, j)
            ops.append(GateOp("RX", (q,), angles=(float(x[i, j]),), tag="enc"))
            ops.append(GateOp("RZ", (q,), angles=(pos,), tag="enc"))
    return Circuit(config.num_qubits, tuple(ops))


def _encoding_template_ops(config: QNetConfig) -> list[GateOp]:
    # Same structure as build_encoding, but RX angles reference extended
    # parameter slots so inputs participate in differentiation.
    base = input_slot_base(config)
    ops = []
    for i in range(config.n):
        pos = i * math.pi / config.n
        for j in range(config.d):
            q = qubit_index(config, i, j)
            ops.append(GateOp("RX", (q,),
                              angles=(ParamRef(base + q),), tag="enc"))
            ops.append(GateOp("RZ", (q,), angles=(pos,), tag="enc"))
    return ops


def build_mixture_layer(config: QNetConfig, block: int) -> Circuit:
    """Token mixing for one block: per dimension, QFT over the token qubits,
    one shared ROT3 triple on each, then the inverse QFT.

    The QFT bit-reversal swaps are omitted on both sides: the conjugated
    operator is the same rotation on every qubit, which commutes with any
    qubit permutation, so the realized unitary is unchanged.
    """
    _check_block(config, block)
    tag = f"mix[{block}]"
    ops: list[GateOp] = []
    for j in range(config.d):
        token_qubits = [qubit_index(config, i, j) for i in range(config.n)]
        s = _mixture_slot(config, block, j)
        triple = (ParamRef(s), ParamRef(s + 1), ParamRef(s + 2))
        ops.extend(sim.qft_gate_sequence(token_qubits, swaps=False, tag=tag))
        for q in token_qubits:
            ops.append(GateOp("ROT3", (q,), angles=triple, tag=tag))
        ops.extend(sim.qft_gate_sequence(token_qubits, inverse=True,
                                         swaps=False, tag=tag))
    return Circuit(config.num_qubits, tuple(ops))


def _g_operator_ops(qubits: list[int], tag: str) -> list[GateOp]:
    # H on all, multi-controlled X onto the last qubit, H on all.
    # With a single qubit this degenerates to H X H = Z.
    ops = [GateOp("H", (q,), tag=tag) for q in qubits]
    ops.append(GateOp("MCX", (qubits[-1],), tuple(qubits[:-1]), tag=tag))
    ops += [GateOp("H", (q,), tag=tag) for q in qubits]
    return ops


def build_feedforward_layer(config: QNetConfig, block: int) -> Circuit:
    """Per-token feedforward: ROT3 layer, G, second ROT3 layer, G.

    ROT3 triples are indexed by embedding dimension and shared across tokens.
    """
    _check_block(config, block)
    tag = f"ff[{block}]"
    ops: list[GateOp] = []
    for i in range(config.n):
        token_qubits = [qubit_index(config, i, j) for j in range(config.d)]
        for layer in (1, 2):
            for j in range(config.d):
                s = _ff_slot(config, block, layer, j)
                triple = (ParamRef(s), ParamRef(s + 1), ParamRef(s + 2))
                ops.append(GateOp("ROT3", (token_qubits[j],), angles=triple,
                                  tag=tag))
            ops.extend(_g_operator_ops(token_qubits, tag))
    return Circuit(config.num_qubits, tuple(ops))


def _body_segments(config: QNetConfig, ablation: str) -> list[Circuit]:
    if ablation not in ABLATIONS:
        raise ValueError(f"ablation must be one of {ABLATIONS}, got {ablation!r}")
    segments = []
    for b in range(config.blocks):
        if ablation != "feedforward_only":
            segments.append(build_mixture_layer(config, b))
        if ablation != "mixture_only":
            segments.append(build_feedforward_layer(config, b))
    return segments


def build_qnet(config: QNetConfig, x: np.ndarray, ablation: str = "full") -> Circuit:
    """Complete QNet circuit for a concrete input: encoding once, then the
    [mixture, feedforward] body repeated ``blocks`` times."""
    return concat(config.num_qubits, build_encoding(config, x),
                  *_body_segments(config, ablation))


_template_cache: dict[tuple, Circuit] = {}


def build_qnet_template(config: QNetConfig, ablation: str = "full") -> Circuit:
    """QNet circuit with the encoding angles as extended parameter slots.

    Slots ``[0, 9*d*blocks)`` are the parameter table; slots
    ``[9*d*blocks, 9*d*blocks + n*d)`` hold the input matrix, flattened in
    qubit order.  Used for end-to-end differentiation through the inputs.
    """
    key = (config.n, config.d, config.blocks, ablation)
    cached = _template_cache.get(key)
    if cached is None:
        enc = Circuit(config.num_qubits, tuple(_encoding_template_ops(config)))
        cached = concat(config.num_qubits, enc, *_body_segments(config, ablation))
        _template_cache[key] = cached
    return cached


def extended_params(config: QNetConfig, params, x: np.ndarray) -> np.ndarray:
    """Concatenate the parameter table with the flattened input matrix."""
    x = _validate_tokens(config, x)
    params = np.asarray(params, dtype=float)
    if params.shape != (count_parameters(config),):
        raise ValueError(
            f"parameter table must have length {count_parameters(config)}, "
            f"got shape {params.shape}")
    return np.concatenate([params, x.reshape(-1)])


def qnet_forward(config: QNetConfig, x: np.ndarray, params,
                 noise: NoiseSpec | None = None,
                 rng: np.random.Generator | None = None,
                 ablation: str = "full") -> np.ndarray:
    """Run QNet and return the (n, d) matrix of per-qubit Z expectations.

    With ``noise`` set this is a single depolarizing trajectory; average
    several calls (distinct rng streams) for channel statistics.
    """
    template = build_qnet_template(config, ablation)
    ops = bind(template, extended_params(config, params, x))
    state = execute_ops(ops, init_zero(config.num_qubits), noise, rng)
    return pauli_z_expectations(state).reshape(config.n, config.d)


def zero_parameters(config: QNetConfig) -> np.ndarray:
    """All-zero parameter table (mixture and feedforward act as identity)."""
    return np.zeros(count_parameters(config))
