"""Circuit representation, execution, and depth/gate-count analysis.

A :class:`Circuit` is an immutable ordered list of :class:`~qnet.sim.GateOp`
records over a fixed qubit count.  Angles are either plain radians or
:class:`ParamRef` placeholders (``angle = scale * params[index] + offset``)
resolved at execution time against a flat parameter vector.

The text dump format is line oriented, one gate per line::

    KIND q<target>... c<control>... [angle|@index[*scale+offset]]...  [# tag]

e.g. ``CPHASE q3 c1 1.5707963267948966`` or ``ROT3 q0 @4 @5 @6  # mix[0]``.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .sim import (GateOp, NoiseSpec, StateVector, adjoint_gate, apply_gate,
                  apply_depolarizing_trajectory)


class BindingError(ValueError):
    """A ParamRef points outside the supplied parameter vector."""


@dataclass(frozen=True)
class ParamRef:
    """Symbolic angle: ``scale * params[index] + offset``."""

    index: int
    scale: float = 1.0
    offset: float = 0.0

    def resolve(self, params) -> float:
        return self.scale * float(params[self.index]) + self.offset

    def negated(self) -> "ParamRef":
        return ParamRef(self.index, -self.scale, -self.offset)


@dataclass(frozen=True)
class Circuit:
    """Immutable gate list over ``num_qubits`` qubits."""

    num_qubits: int
    ops: tuple[GateOp, ...]

    def __post_init__(self):
        for op in self.ops:
            for q in op.qubits:
                if not 0 <= q < self.num_qubits:
                    raise ValueError(
                        f"qubit {q} out of range for {self.num_qubits}-qubit circuit")

    @property
    def num_parameters(self) -> int:
        """1 + highest referenced parameter slot (0 when fully constant)."""
        high = -1
        for op in self.ops:
            for a in op.angles:
                if isinstance(a, ParamRef):
                    high = max(high, a.index)
        return high + 1

    def param_refs(self):
        """Yield (op_position, angle_position, ref) for every symbolic angle."""
        for i, op in enumerate(self.ops):
            for j, a in enumerate(op.angles):
                if isinstance(a, ParamRef):
                    yield i, j, a


def concat(num_qubits: int, *segments: Circuit) -> Circuit:
    """Join circuit segments over a common register."""
    ops: list[GateOp] = []
    for seg in segments:
        if seg.num_qubits != num_qubits:
            raise ValueError("segment qubit counts differ")
        ops.extend(seg.ops)
    return Circuit(num_qubits, tuple(ops))


def adjoint_circuit(circuit: Circuit) -> Circuit:
    """Circuit realizing the adjoint unitary (reversed, per-gate inverted)."""
    ops = []
    for op in reversed(circuit.ops):
        if any(isinstance(a, ParamRef) for a in op.angles):
            if op.kind == "ROT3":
                a, b, c = op.angles
                angles = tuple(x.negated() if isinstance(x, ParamRef) else -x
                               for x in (c, b, a))
            else:
                angles = tuple(x.negated() if isinstance(x, ParamRef) else -x
                               for x in op.angles)
            ops.append(GateOp(op.kind, op.targets, op.controls, angles, op.tag))
        else:
            ops.append(adjoint_gate(op))
    return Circuit(circuit.num_qubits, tuple(ops))


# --- binding and execution ---------------------------------------------------

def bind(circuit: Circuit, params) -> list[GateOp]:
    """Resolve every ParamRef against ``params``; returns concrete ops."""
    n_params = len(params)
    ops = []
    for op in circuit.ops:
        if not op.angles:
            ops.append(op)
            continue
        angles = []
        for a in op.angles:
            if isinstance(a, ParamRef):
                if a.index >= n_params:
                    raise BindingError(
                        f"parameter index {a.index} unbound "
                        f"(vector has length {n_params})")
                angles.append(a.resolve(params))
            else:
                angles.append(float(a))
        ops.append(GateOp(op.kind, op.targets, op.controls, tuple(angles), op.tag))
    return ops


def execute_ops(ops, input_state: StateVector, noise: NoiseSpec | None = None,
                rng: np.random.Generator | None = None) -> StateVector:
    """Apply concrete ops to a copy of ``input_state``.

    With ``noise`` set, a depolarizing trajectory step hits each gate's qubits
    right after the gate (per-gate insertion).
    """
    state = input_state.copy()
    if noise is not None and rng is None:
        rng = np.random.default_rng(noise.seed)
    for op in ops:
        apply_gate(state, op)
        if noise is not None:
            apply_depolarizing_trajectory(state, op.qubits, noise, rng)
    return state


def bind_and_execute(circuit: Circuit, params, input_state: StateVector,
                     noise: NoiseSpec | None = None,
                     rng: np.random.Generator | None = None) -> StateVector:
    """Bind ``params`` and run the circuit on a copy of ``input_state``."""
    return execute_ops(bind(circuit, params), input_state, noise, rng)


# --- analysis ----------------------------------------------------------------

class CostModel:
    """Per-gate depth costs: every gate is depth 1 except MCX, which costs
    one unit per qubit touched (linear-depth decomposition)."""

    def cost(self, op: GateOp) -> int:
        if op.kind == "MCX":
            return max(1, len(op.qubits))
        return 1


DEFAULT_COST_MODEL = CostModel()


@dataclass
class DepthReport:
    total_depth: int
    per_layer_depth: dict[str, int] = field(default_factory=dict)
    gate_count: dict[str, int] = field(default_factory=dict)


def _schedule_depth(ops, num_qubits: int, cost_model: CostModel) -> int:
    # List scheduling: a gate starts once all its qubits are free.
    free = [0] * num_qubits
    depth = 0
    for op in ops:
        cost = cost_model.cost(op)
        start = max(free[q] for q in op.qubits)
        finish = start + cost
        for q in op.qubits:
            free[q] = finish
        if finish > depth:
            depth = finish
    return depth


def analyze_depth(circuit: Circuit,
                  cost_model: CostModel = DEFAULT_COST_MODEL) -> DepthReport:
    """Depth by list scheduling, overall and per layer tag."""
    total = _schedule_depth(circuit.ops, circuit.num_qubits, cost_model)
    by_tag: dict[str, list[GateOp]] = {}
    for op in circuit.ops:
        if op.tag is not None:
            by_tag.setdefault(op.tag, []).append(op)
    per_layer = {tag: _schedule_depth(ops, circuit.num_qubits, cost_model)
                 for tag, ops in by_tag.items()}
    return DepthReport(total, per_layer, count_gates(circuit))


def count_gates(circuit: Circuit) -> dict[str, int]:
    """Exact gate counts by kind; empty circuit gives an empty map."""
    return dict(Counter(op.kind for op in circuit.ops))


# --- text dump ---------------------------------------------------------------

def _format_angle(a) -> str:
    if isinstance(a, ParamRef):
        if a.scale == 1.0 and a.offset == 0.0:
            return f"@{a.index}"
        return f"@{a.index}*{a.scale:g}+{a.offset:g}"
    return repr(float(a))


def dump_circuit(circuit: Circuit) -> str:
    """Render the circuit in the line-oriented text format."""
    lines = []
    for op in circuit.ops:
        parts = [op.kind]
        parts += [f"q{q}" for q in op.targets]
        parts += [f"c{q}" for q in op.controls]
        parts += [_format_angle(a) for a in op.angles]
        line = " ".join(parts)
        if op.tag is not None:
            line += f"  # {op.tag}"
        lines.append(line)
    return "\n".join(lines) + ("\n" if lines else "")


def _parse_angle(tok: str):
    if not tok.startswith("@"):
        return float(tok)
    body = tok[1:]
    scale, offset = 1.0, 0.0
    if "*" in body:
        body, rest = body.split("*", 1)
        scale_str, offset_str = rest.split("+", 1)
        scale, offset = float(scale_str), float(offset_str)
    return ParamRef(int(body), scale, offset)


def parse_circuit(text: str, num_qubits: int) -> Circuit:
    """Inverse of :func:`dump_circuit`."""
    ops = []
    for line in text.splitlines():
        tag = None
        if "#" in line:
            line, tag_part = line.split("#", 1)
            tag = tag_part.strip() or None
        toks = line.split()
        if not toks:
            continue
        kind, targets, controls, angles = toks[0], [], [], []
        for tok in toks[1:]:
            if tok.startswith("q"):
                targets.append(int(tok[1:]))
            elif tok.startswith("c"):
                controls.append(int(tok[1:]))
            else:
                angles.append(_parse_angle(tok))
        ops.append(GateOp(kind, tuple(targets), tuple(controls), tuple(angles), tag))
    return Circuit(num_qubits, tuple(ops))
