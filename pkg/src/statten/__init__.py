"""Spiking-transformer kernels with block-wise spatial-temporal attention.

Library layers: a numpy-backed autograd core (:mod:`statten.autograd`),
leaky integrate-and-fire dynamics (:mod:`statten.neuron`), the
spike-attention operator zoo (:mod:`statten.attention`), model assembly
(:mod:`statten.model`), measurement and energy accounting
(:mod:`statten.analysis`), datasets (:mod:`statten.data`), and the
experiment harness/CLI (:mod:`statten.harness`, :mod:`statten.cli`).
"""

from .analysis import (
    EnergyConstants,
    EnergyReport,
    FiringStats,
    active_neurons,
    attention_energy,
    energy_report,
    entropy,
    firing_rate,
    memory_estimate,
)
from .attention import (
    AttentionConfig,
    Variant,
    attention_mac_count,
    dssa,
    qkta,
    sdsa,
    spatial_attn,
    ssa,
    st_attn,
    statten,
    statten_with_ranges,
    temporal_attn,
    vanilla_attention,
)
from .autograd import BatchNorm, GradTape, Tensor, TensorError
from .data import gen_synthetic_temporal, load_cifar10_binary, rule_classify
from .harness import ExperimentConfig, run_experiment, sweep_blocksize, \
    sweep_temporal_combination
from .model import (
    ModelConfig,
    SpikingClassifier,
    cross_entropy,
    load_checkpoint,
    save_checkpoint,
    sequentialize,
    train_step,
)
from .neuron import LifParams, MembraneState, lif_over_time, lif_step, \
    surrogate_grad
from .optim import AdamW

__version__ = "0.1.0"
