"""Hybrid quantum-classical models: the standalone QNet classifier and the
residual ResQNet stack, with task heads, losses, metrics, and end-to-end
gradients.

ResQNet per residual block (input h, all shapes (n, d)):

    u = h * w_b            per-dimension scale vector
    y = qnet(u)            one depth-1 QNet circuit, one measurement pass
    h' = standardize(h + y)   parameter-free per-token normalization

The standalone QNet variant is embeddings -> one QNet circuit (any block
depth) -> head, with no scales and no residual.

Encoder parameter accounting covers circuit angles plus scale vectors only;
embeddings and task heads are excluded (they depend on vocabulary and task).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import encoder, gradients
from .circuit import bind, execute_ops
from .data import DataError, Example
from .encoder import QNetConfig, build_qnet_template, extended_params
from .sim import NoiseSpec, init_zero, pauli_z_expectations

HEAD_KINDS = ("sentence-classify", "regress", "token-classify")
LOSS_KINDS = ("bce", "cce", "mse", "token_cce")

NORM_EPS = 1e-5


@dataclass(frozen=True)
class ModelConfig:
    """Architecture description shared by checkpoints and the CLI."""

    model: str  # "qnet" | "resqnet"
    n: int
    d: int
    blocks: int = 1
    head: str = "sentence-classify"
    num_classes: int = 1
    ablation: str = "full"

    def __post_init__(self):
        if self.model not in ("qnet", "resqnet"):
            raise ValueError(f"model must be 'qnet' or 'resqnet', got {self.model!r}")
        if self.head not in HEAD_KINDS:
            raise ValueError(f"head must be one of {HEAD_KINDS}, got {self.head!r}")
        if self.blocks < 1:
            raise ValueError("blocks must be >= 1")
        QNetConfig(self.n, self.d, self.blocks)  # range checks

    @property
    def head_width(self) -> int:
        if self.head == "regress":
            return 1
        return self.num_classes

    @property
    def head_in(self) -> int:
        return self.d if self.head == "token-classify" else self.n * self.d

    def circuit_config(self) -> QNetConfig:
        """Config of one quantum circuit: full depth for the standalone QNet,
        depth 1 inside each ResQNet block."""
        if self.model == "qnet":
            return QNetConfig(self.n, self.d, self.blocks)
        return QNetConfig(self.n, self.d, 1)


def encoder_parameter_count(config: ModelConfig) -> int:
    """Trainable encoder size: circuit angles, plus d scales per ResQNet block."""
    if config.model == "qnet":
        return encoder.count_parameters(QNetConfig(config.n, config.d,
                                                   config.blocks))
    per_block = encoder.count_parameters(QNetConfig(config.n, config.d, 1))
    return config.blocks * (per_block + config.d)


def default_loss_kind(config: ModelConfig) -> str:
    if config.head == "regress":
        return "mse"
    if config.head == "token-classify":
        return "token_cce"
    return "bce" if config.num_classes == 1 else "cce"


# --- normalization ---------------------------------------------------------------

def standardize_rows(x: np.ndarray, eps: float = NORM_EPS) -> np.ndarray:
    """Zero mean, unit variance per row (the embedding axis)."""
    mu = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps)


def _standardize_backward(x: np.ndarray, grad_out: np.ndarray,
                          eps: float = NORM_EPS) -> np.ndarray:
    mu = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    s = np.sqrt(var + eps)
    z = (x - mu) / s
    g_mean = grad_out.mean(axis=1, keepdims=True)
    gz_mean = (grad_out * z).mean(axis=1, keepdims=True)
    return (grad_out - g_mean - z * gz_mean) / s


# --- losses ----------------------------------------------------------------------

def _log_sum_exp(z: np.ndarray) -> float:
    m = float(np.max(z))
    return m + math.log(float(np.sum(np.exp(z - m))))


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - np.max(z, axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def loss(head_output, target, kind: str, pad_mask=None) -> float:
    """Scalar task loss; cross-entropies take logits (stable log-sum-exp).

    ``token_cce`` needs ``pad_mask`` and scores non-PAD positions only.
    """
    if kind == "token_cce":
        value, _ = token_loss_and_grad(head_output, target, pad_mask)
        return value
    value, _ = loss_and_output_grad(head_output, target, kind)
    return value


def loss_and_output_grad(head_output, target, kind: str):
    """Loss plus its gradient with respect to the head output."""
    if kind == "bce":
        z = float(np.asarray(head_output).reshape(-1)[0])
        t = float(target)
        value = max(z, 0.0) - z * t + math.log1p(math.exp(-abs(z)))
        sigma = 1.0 / (1.0 + math.exp(-z))
        return value, np.array([sigma - t])
    if kind == "cce":
        z = np.asarray(head_output, dtype=float).reshape(-1)
        label = int(target)
        if not 0 <= label < z.size:
            raise DataError(f"label {label} out of range for {z.size} classes")
        value = _log_sum_exp(z) - float(z[label])
        grad = _softmax(z)
        grad[label] -= 1.0
        return value, grad
    if kind == "mse":
        pred = np.asarray(head_output, dtype=float).reshape(-1)
        tgt = np.asarray(target, dtype=float).reshape(-1)
        if pred.shape != tgt.shape:
            raise ValueError(f"mse shape mismatch: {pred.shape} vs {tgt.shape}")
        diff = pred - tgt
        return float(np.mean(diff ** 2)), 2.0 * diff / diff.size
    if kind == "token_cce":
        raise ValueError("token_cce needs a pad mask; use loss(..., pad_mask=) "
                         "or token_loss_and_grad")
    raise ValueError(f"unknown loss kind {kind!r}")


def token_loss_and_grad(logits: np.ndarray, tags: np.ndarray,
                        pad_mask: np.ndarray):
    """Per-token cross entropy averaged over non-PAD positions."""
    logits = np.asarray(logits, dtype=float)
    tags = np.asarray(tags, dtype=int).reshape(-1)
    mask = np.asarray(pad_mask, dtype=bool).reshape(-1)
    if logits.shape[0] != tags.size or tags.size != mask.size:
        raise ValueError("token_cce shape mismatch")
    n_real = int(mask.sum())
    if n_real == 0:
        raise DataError("token_cce: every position is padding")
    num_classes = logits.shape[1]
    total = 0.0
    grad = np.zeros_like(logits)
    for i in np.nonzero(mask)[0]:
        label = int(tags[i])
        if not 0 <= label < num_classes:
            raise DataError(
                f"tag {label} out of range for {num_classes} classes")
        z = logits[i]
        total += _log_sum_exp(z) - float(z[label])
        g = _softmax(z)
        g[label] -= 1.0
        grad[i] = g / n_real
    return total / n_real, grad


# --- metrics ---------------------------------------------------------------------

def metric_f1_non_o(pred_tags, gold_tags, o_tag_id: int, pad_mask) -> float:
    """Micro-averaged F1 over every tag except O; 0 without true positives."""
    pred = np.asarray(pred_tags).reshape(-1)
    gold = np.asarray(gold_tags).reshape(-1)
    mask = np.asarray(pad_mask, dtype=bool).reshape(-1)
    if pred.shape != gold.shape or gold.shape != mask.shape:
        raise ValueError("f1 inputs must share one length")
    pred, gold = pred[mask], gold[mask]
    tp = int(np.sum((pred == gold) & (gold != o_tag_id)))
    if tp == 0:
        return 0.0
    precision = tp / int(np.sum(pred != o_tag_id))
    recall = tp / int(np.sum(gold != o_tag_id))
    return 2.0 * precision * recall / (precision + recall)


# --- the model -------------------------------------------------------------------

class Model:
    """Parameter container plus forward/backward for both model variants.

    ``params`` maps group names to arrays: ``embeddings`` (V, d), ``qnet``
    (num_circuits, table_len), ``head_w``, ``head_b``, and for ResQNet
    ``scales`` (blocks, d).
    """

    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray]):
        self.config = config
        self.params = params
        self._circuit_config = config.circuit_config()

    @classmethod
    def init(cls, config: ModelConfig, vocab_size: int, seed: int) -> "Model":
        """Fresh parameters: circuit angles ~ U[-0.1, 0.1], embeddings
        ~ N(0, 0.5), head weights ~ N(0, 1/sqrt(d)), zero biases, unit scales."""
        rng = np.random.default_rng(seed)
        circuit_cfg = config.circuit_config()
        table_len = encoder.count_parameters(circuit_cfg)
        num_circuits = config.blocks if config.model == "resqnet" else 1
        params = {
            "embeddings": rng.normal(0.0, 0.5, (vocab_size, config.d)),
            "qnet": rng.uniform(-0.1, 0.1, (num_circuits, table_len)),
            "head_w": rng.normal(0.0, config.d ** -0.5,
                                 (config.head_in, config.head_width)),
            "head_b": np.zeros(config.head_width),
        }
        if config.model == "resqnet":
            params["scales"] = np.ones((config.blocks, config.d))
        return cls(config, params)

    # -- head ----------------------------------------------------------------

    def _head_forward(self, h: np.ndarray) -> np.ndarray:
        w, b = self.params["head_w"], self.params["head_b"]
        if self.config.head == "token-classify":
            return h @ w + b
        return h.reshape(-1) @ w + b

    def _head_backward(self, h: np.ndarray, grad_out: np.ndarray):
        w = self.params["head_w"]
        if self.config.head == "token-classify":
            grad_w = h.T @ grad_out
            grad_b = grad_out.sum(axis=0)
            grad_h = grad_out @ w.T
        else:
            flat = h.reshape(-1)
            grad_w = np.outer(flat, grad_out)
            grad_b = grad_out.copy()
            grad_h = (w @ grad_out).reshape(h.shape)
        return grad_w, grad_b, grad_h

    # -- quantum block ---------------------------------------------------------

    def _circuit_forward(self, table: np.ndarray, x: np.ndarray,
                         noise: NoiseSpec | None, trajectories: int, seed):
        """Returns (y, trace) where y is the (n, d) expectation matrix."""
        cfg = self._circuit_config
        template = build_qnet_template(cfg, self.config.ablation)
        ext = extended_params(cfg, table, x)
        if noise is None:
            ops = bind(template, ext)
            state = execute_ops(ops, init_zero(cfg.num_qubits))
            y = pauli_z_expectations(state).reshape(cfg.n, cfg.d)
            return y, (template, ext, state)
        total = np.zeros(cfg.num_qubits)
        ops = bind(template, ext)
        for t in range(trajectories):
            rng = np.random.default_rng(list(seed) + [t])
            state = execute_ops(ops, init_zero(cfg.num_qubits), noise, rng)
            total += pauli_z_expectations(state)
        y = (total / trajectories).reshape(cfg.n, cfg.d)
        return y, (template, ext, None)

    def _circuit_backward(self, trace, cotangent: np.ndarray,
                          noise: NoiseSpec | None, trajectories: int, seed):
        """d(objective)/d(table) and d(objective)/d(input matrix)."""
        cfg = self._circuit_config
        template, ext, state = trace
        if noise is None:
            _, grad = gradients.adjoint_value_and_grad(
                template, ext, init_zero(cfg.num_qubits), cotangent,
                final_state=state)
        else:
            grad = gradients.parameter_shift_gradient(
                template, ext, init_zero(cfg.num_qubits), cotangent,
                noise=noise, trajectories=trajectories, seed=seed)
        split = encoder.input_slot_base(cfg)
        return grad[:split], grad[split:].reshape(cfg.n, cfg.d)

    # -- full passes -----------------------------------------------------------

    def forward(self, token_ids: np.ndarray, noise: NoiseSpec | None = None,
                trajectories: int = 8, seed: int = 0,
                trace: list | None = None) -> np.ndarray:
        """Head output for one example; optionally records intermediates."""
        ids = np.asarray(token_ids, dtype=int)
        if ids.shape != (self.config.n,):
            raise ValueError(f"token_ids must have length {self.config.n}")
        h = self.params["embeddings"][ids]
        if self.config.model == "qnet":
            y, circuit_trace = self._circuit_forward(
                self.params["qnet"][0], h, noise, trajectories, [seed, 0])
            if trace is not None:
                trace.append(("qnet", h, circuit_trace, y))
            return self._head_forward(y)
        for b in range(self.config.blocks):
            u = h * self.params["scales"][b]
            y, circuit_trace = self._circuit_forward(
                self.params["qnet"][b], u, noise, trajectories, [seed, b])
            pre_norm = h + y
            if trace is not None:
                trace.append(("block", h, u, circuit_trace, pre_norm))
            h = standardize_rows(pre_norm)
        if trace is not None:
            trace.append(("final", h))
        return self._head_forward(h)

    def loss_and_grads(self, example: Example, loss_kind: str,
                       noise: NoiseSpec | None = None, trajectories: int = 8,
                       seed: int = 0):
        """One example's loss and full parameter-gradient dict.

        Noise-free gradients run through the adjoint sweep; with ``noise``
        set, quantum gradients switch to parameter shift over the same
        trajectory seeds the forward pass used.
        """
        ids = np.asarray(example.token_ids, dtype=int)
        trace: list = []
        out = self.forward(ids, noise, trajectories, seed, trace)

        if loss_kind == "token_cce":
            if example.pad_mask is None:
                raise DataError("token task requires a pad mask")
            value, grad_out = token_loss_and_grad(out, example.target,
                                                  example.pad_mask)
        else:
            value, grad_out = loss_and_output_grad(out, example.target,
                                                   loss_kind)

        grads = {name: np.zeros_like(arr) for name, arr in self.params.items()}
        if self.config.model == "qnet":
            _, h0, circuit_trace, _y = trace[0]
            grad_w, grad_b, grad_y = self._head_backward(_y, grad_out)
            grads["head_w"] += grad_w
            grads["head_b"] += grad_b
            grad_table, grad_x = self._circuit_backward(
                circuit_trace, grad_y.reshape(-1), noise, trajectories,
                [seed, 0])
            grads["qnet"][0] += grad_table
            np.add.at(grads["embeddings"], ids, grad_x)
            return value, grads

        h_final = trace[-1][1]
        grad_w, grad_b, grad_h = self._head_backward(h_final, grad_out)
        grads["head_w"] += grad_w
        grads["head_b"] += grad_b
        for b in range(self.config.blocks - 1, -1, -1):
            _, h_prev, u, circuit_trace, pre_norm = trace[b]
            grad_pre = _standardize_backward(pre_norm, grad_h)
            grad_table, grad_u = self._circuit_backward(
                circuit_trace, grad_pre.reshape(-1), noise, trajectories,
                [seed, b])
            grads["qnet"][b] += grad_table
            grads["scales"][b] += (grad_u * h_prev).sum(axis=0)
            grad_h = grad_pre + grad_u * self.params["scales"][b]
        np.add.at(grads["embeddings"], ids, grad_h)
        return value, grads

    def predict(self, token_ids: np.ndarray):
        """Hard prediction: class id, regression value, or per-token tag ids."""
        out = self.forward(token_ids)
        if self.config.head == "regress":
            return float(out[0])
        if self.config.head == "token-classify":
            return np.argmax(out, axis=1)
        if self.config.num_classes == 1:
            return int(out[0] > 0.0)
        return int(np.argmax(out))


def evaluate(model: Model, examples: list[Example],
             loss_kind: str | None = None) -> dict:
    """Dataset-level metrics: accuracy, mse, or non-O F1, plus mean loss."""
    if not examples:
        raise DataError("cannot evaluate on an empty dataset")
    cfg = model.config
    kind = loss_kind or default_loss_kind(cfg)
    losses = []
    if cfg.head == "token-classify":
        preds, golds, masks = [], [], []
        for ex in examples:
            out = model.forward(ex.token_ids)
            value, _ = token_loss_and_grad(out, ex.target, ex.pad_mask)
            losses.append(value)
            preds.append(np.argmax(out, axis=1))
            golds.append(ex.target)
            masks.append(ex.pad_mask)
        f1 = metric_f1_non_o(np.concatenate(preds), np.concatenate(golds), 0,
                             np.concatenate(masks))
        return {"loss": float(np.mean(losses)), "f1_non_o": f1}
    if cfg.head == "regress":
        for ex in examples:
            out = model.forward(ex.token_ids)
            losses.append(loss(out, ex.target, kind))
        return {"loss": float(np.mean(losses)), "mse": float(np.mean(losses))}
    correct = 0
    for ex in examples:
        out = model.forward(ex.token_ids)
        losses.append(loss(out, ex.target, kind))
        pred = int(out[0] > 0.0) if cfg.num_classes == 1 else int(np.argmax(out))
        correct += int(pred == int(ex.target))
    return {"loss": float(np.mean(losses)),
            "accuracy": correct / len(examples)}


# --- checkpoint io -----------------------------------------------------------------

def save_checkpoint(model: Model, path: str) -> None:
    """Single-document JSON checkpoint with every number as a decimal double."""
    cfg = model.config
    head = [model.params["head_w"].tolist(), model.params["head_b"].tolist()]
    scales = (model.params["scales"].tolist()
              if cfg.model == "resqnet" else [])
    doc = {
        "format": 1,
        "config": {
            "model": cfg.model, "n": cfg.n, "d": cfg.d, "blocks": cfg.blocks,
            "head": cfg.head, "num_classes": cfg.num_classes,
            "ablation": cfg.ablation,
            "vocab_size": int(model.params["embeddings"].shape[0]),
        },
        "params": {
            "embeddings": model.params["embeddings"].tolist(),
            "scales": scales,
            "qnet": model.params["qnet"].tolist(),
            "head": head,
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def _expect_shape(name: str, arr: np.ndarray, shape: tuple) -> np.ndarray:
    if arr.shape != shape:
        raise DataError(f"checkpoint {name} has shape {arr.shape}, "
                        f"expected {shape}")
    return arr


def load_checkpoint(path: str) -> Model:
    """Load and shape-validate a checkpoint written by :func:`save_checkpoint`."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != 1:
        raise DataError(f"unsupported checkpoint format {doc.get('format')!r}")
    c = doc["config"]
    config = ModelConfig(c["model"], c["n"], c["d"], c["blocks"], c["head"],
                         c["num_classes"], c.get("ablation", "full"))
    vocab_size = int(c["vocab_size"])
    table_len = encoder.count_parameters(config.circuit_config())
    num_circuits = config.blocks if config.model == "resqnet" else 1
    p = doc["params"]
    params = {
        "embeddings": _expect_shape(
            "embeddings", np.asarray(p["embeddings"], float),
            (vocab_size, config.d)),
        "qnet": _expect_shape(
            "qnet", np.asarray(p["qnet"], float), (num_circuits, table_len)),
        "head_w": _expect_shape(
            "head weight", np.asarray(p["head"][0], float),
            (config.head_in, config.head_width)),
        "head_b": _expect_shape(
            "head bias", np.asarray(p["head"][1], float),
            (config.head_width,)),
    }
    if config.model == "resqnet":
        params["scales"] = _expect_shape(
            "scales", np.asarray(p["scales"], float),
            (config.blocks, config.d))
    return Model(config, params)
