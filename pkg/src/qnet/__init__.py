"""Quantum-native sequence encoder: statevector simulation, QNet/ResQNet
circuit construction, circuit gradients, and the hybrid training stack."""

from .sim import (CapacityError, GateOp, NoiseSpec, StateVector,
                  apply_depolarizing_trajectory, apply_gate, apply_qft,
                  init_zero, pauli_z_expectations)
from .circuit import (BindingError, Circuit, CostModel, DepthReport, ParamRef,
                      adjoint_circuit, analyze_depth, bind_and_execute,
                      count_gates, dump_circuit, parse_circuit)
from .encoder import (QNetConfig, build_encoding, build_feedforward_layer,
                      build_mixture_layer, build_qnet, build_qnet_template,
                      count_parameters, qnet_forward)
from .gradients import (UnsupportedModeError, adjoint_gradient,
                        expectation, finite_difference_gradient,
                        parameter_shift_gradient)
from .model import (Model, ModelConfig, encoder_parameter_count, evaluate,
                    load_checkpoint, loss, metric_f1_non_o, save_checkpoint,
                    standardize_rows)
from .data import (DataError, Example, Vocab, encode, load_dataset,
                   normalize_and_tokenize, split, synthetic_corpora)
from .train import (AdamState, LrSchedule, TrainConfig, TrainingError,
                    TrainRun, adam_step, global_lr, lr_at, train)

__all__ = [name for name in dir() if not name.startswith("_")]
