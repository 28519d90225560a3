"""Restricted Boltzmann machine circuit solvers.

Small RBMs are trained on logic truth tables, merged along shared visible
units into multipliers and 3SAT networks, quantized to fixed point and
sampled by clamped block Gibbs sampling in a float engine or a bit-exact
fixed-point engine driven by per-unit LFSRs.
"""

__version__ = "0.1.0"

from .model import (BinaryState, ClampPattern, DimensionError, Distribution, EnumerationLimitError,
                    Rbm, energy, exact_distribution, free_energy, hidden_activation, kl_divergence,
                    total_variation, visible_activation)
from .sampler import GibbsChains, gibbs_step, sample_chain
from .circuits import CircuitFunction, Dataset, generate_truth_table, lookup
from .trainer import TrainConfig, cd_update, quant_aware_retrain, train
from .merge import CircuitSpec, MergeSpec, compose, intermediate_dataset, merge, parse_circuit
from .quantize import FixedRbm, LutConfig, QuantGrid, SigmoidLut, build_sigmoid_lut, quantize_model, quantize_value
from .fixsim import FixedEngine, LfsrState, lfsr_step, masked_accumulate, node_update, run
from .tasks import (RunStats, TaskInstance, decode_mode, encode, hitting_time, p_correct,
                    verify_early_stop)
from .modelio import load_model, save_model

__all__ = [name for name in dir() if not name.startswith("_")]
