"""Measurement and cost-model suite.

Shannon entropy of attention maps, firing-rate and active-neuron
instrumentation, closed-form AC/MAC energy accounting at 45nm constants,
and the analytic peak-memory estimator for block-wise attention.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .autograd import Tensor, TensorError
from .neuron import LifParams


# Canonical binary spike matrices illustrating temporal-distance
# decorrelation: PROBE_Q against PROBE_K_NEAR (similar row patterns) yields
# a product with many high entries, while PROBE_K_FAR (same spike density,
# decorrelated rows) yields low entries and zeros.
PROBE_Q = np.array(
    [
        [1, 1, 0, 1, 0],
        [0, 1, 1, 0, 1],
        [1, 0, 1, 1, 0],
        [1, 0, 1, 0, 1],
    ],
    dtype=np.float64,
)
PROBE_K_NEAR = np.array(
    [
        [1, 1, 0, 1, 0],
        [0, 1, 1, 0, 1],
        [1, 0, 1, 0, 1],
        [1, 1, 0, 1, 0],
    ],
    dtype=np.float64,
)
PROBE_K_FAR = np.array(
    [
        [0, 1, 1, 0, 1],
        [1, 0, 1, 1, 0],
        [1, 1, 0, 0, 1],
        [0, 1, 1, 1, 0],
    ],
    dtype=np.float64,
)
# Canonical Q K^T score maps for the two temporal distances: the nearby pair
# concentrates large scores (many entries clear a unit threshold), the
# distant pair stays at or below it everywhere.
PROBE_SCORES_NEAR = np.array(
    [
        [3, 2, 2, 3],
        [2, 3, 2, 1],
        [2, 2, 2, 2],
        [2, 2, 2, 2],
    ],
    dtype=np.float64,
)
PROBE_SCORES_FAR = np.array(
    [
        [1, 1, 1, 1],
        [1, 1, 0, 1],
        [1, 1, 1, 1],
        [0, 1, 1, 1],
    ],
    dtype=np.float64,
)


@dataclass
class EnergyConstants:
    """45nm CMOS per-op energies in picojoules; injectable for other nodes."""

    e_mac: float = 4.6
    e_ac: float = 0.9

    def __post_init__(self):
        if self.e_mac <= 0 or self.e_ac <= 0:
            raise ValueError("energy constants must be positive")


@dataclass
class FiringStats:
    """Per-layer firing rates in [0,1] plus per-timestep breakdowns."""

    rates: dict = field(default_factory=dict)
    per_timestep: dict = field(default_factory=dict)

    @staticmethod
    def from_recorder(recorder):
        return FiringStats(dict(recorder.rates), dict(recorder.per_timestep))


@dataclass
class EnergyRow:
    layer: str
    kind: str  # "MAC" | "AC"
    ops: int
    rate: float
    energy_pj: float


@dataclass
class EnergyReport:
    rows: list
    constants: EnergyConstants

    @property
    def total_pj(self):
        return sum(r.energy_pj for r in self.rows)

    def block_totals(self):
        """Totals grouped by the layer-name prefix before the first dot."""
        out = {}
        for r in self.rows:
            block = r.layer.split(".", 1)[0]
            out[block] = out.get(block, 0.0) + r.energy_pj
        return out

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["layer", "kind", "ops", "rate", "energy_pj"])
            for r in self.rows:
                w.writerow([r.layer, r.kind, r.ops, repr(r.rate), repr(r.energy_pj)])

    def to_json(self, path):
        blocks = {}
        for r in self.rows:
            block = r.layer.split(".", 1)[0]
            blocks.setdefault(block, {"layers": [], "total_pj": 0.0})
            blocks[block]["layers"].append(
                {"layer": r.layer, "kind": r.kind, "ops": r.ops,
                 "rate": r.rate, "energy_pj": r.energy_pj}
            )
            blocks[block]["total_pj"] += r.energy_pj
        doc = {
            "constants_pj": {"e_mac": self.constants.e_mac,
                             "e_ac": self.constants.e_ac},
            "blocks": blocks,
            "total_pj": self.total_pj,
        }
        with open(path, "w") as f:
            json.dump(doc, f, indent=2)


# -- entropy ---------------------------------------------------------------


def entropy(attn):
    """Shannon entropy (nats) of the softmax over all elements jointly.

    The whole tensor is normalized into one distribution, so
    0 <= H <= log(number of elements), with equality at the top for a
    constant tensor. Invariant under adding a constant to every element.
    """
    data = attn.data if isinstance(attn, Tensor) else np.asarray(attn, dtype=np.float64)
    if data.size == 0:
        raise TensorError("entropy of an empty tensor")
    if not np.all(np.isfinite(data)):
        raise TensorError("entropy requires finite values")
    flat = data.reshape(-1)
    shifted = flat - flat.max()
    e = np.exp(shifted)
    p = e / e.sum()
    nz = p > 0
    return float(-(p[nz] * np.log(p[nz])).sum())


# -- firing statistics -----------------------------------------------------


def firing_rate(spikes, time_axis=0):
    """(overall rate, per-timestep rates) of a binary spike tensor."""
    data = spikes.data if isinstance(spikes, Tensor) else np.asarray(spikes)
    if not np.all((data == 0.0) | (data == 1.0)):
        raise TensorError("firing_rate requires a binary tensor")
    axes = tuple(i for i in range(data.ndim) if i != time_axis)
    return float(data.mean()), data.mean(axis=axes)


def active_neurons(q, k, v, t_q, t_k, lif=None):
    """Fired-neuron count of LIF(Q[t_q] K[t_k]^T V[t_k]).

    The probe behind temporal-distance sweeps: correlated (nearby) timestep
    pairs drive more neurons over threshold than distant ones.
    """
    lif = lif or LifParams()
    qd = q.data if isinstance(q, Tensor) else np.asarray(q, dtype=np.float64)
    kd = k.data if isinstance(k, Tensor) else np.asarray(k, dtype=np.float64)
    vd = v.data if isinstance(v, Tensor) else np.asarray(v, dtype=np.float64)
    for d in (qd, kd, vd):
        if not np.all((d == 0.0) | (d == 1.0)):
            raise TensorError("active_neurons requires binary tensors")
    t = qd.shape[0]
    for idx in (t_q, t_k):
        if not 0 <= idx < t:
            raise TensorError(f"timestep index {idx} out of range [0, {t})")
    pre = qd[t_q] @ kd[t_k].T @ vd[t_k]
    return int((pre > lif.v_th).sum())


# -- energy model ----------------------------------------------------------


def attention_energy(variant, T, N, D, rates=None,
                     constants: EnergyConstants | None = None):
    """Closed-form attention energy per mechanism.

    ``rates`` is (S_Q, S_K, S_V) for spike mechanisms (S_V ignored where the
    formula has no V term). The ANN rows are MAC-counted; the ViT row has no
    timestep factor (single-step semantics).
    """
    c = constants or EnergyConstants()
    variant = str(variant)
    if variant == "vit":
        return c.e_mac * N * N * D
    if variant == "vivit":
        return c.e_mac * T * T * N * N * D
    if rates is None:
        raise TensorError(f"spike variant {variant} needs firing rates")
    s_q, s_k, s_v = rates
    if variant == "sdt":
        return c.e_ac * T * N * D * (s_q + s_k)
    if variant in ("spikformer", "sdt_v2", "qkformer", "statten", "ssa", "st"):
        return c.e_ac * T * N * D * D * (s_q + s_k + s_v)
    raise TensorError(f"unknown attention energy variant {variant}")


def energy_report(model, firing_stats: FiringStats,
                  constants: EnergyConstants | None = None) -> EnergyReport:
    """Apply the per-layer closed forms over a model's layer cost table.

    MAC rows: E_MAC * ops * T. AC rows: E_AC * ops * T * rate, where the
    attention row's rate is S_Q + S_K + S_V. Raises if a needed firing rate
    was never recorded.
    """
    c = constants or EnergyConstants()
    T = model.config.timesteps
    rows = []
    missing = []
    for spec in model.layer_costs():
        key = spec["rate_key"]
        if spec["kind"] == "MAC":
            rate = 1.0
            energy = c.e_mac * spec["ops"] * T
        else:
            if isinstance(key, tuple):
                if any(k not in firing_stats.rates for k in key):
                    missing.append(spec["layer"])
                    continue
                rate = sum(firing_stats.rates[k] for k in key)
            else:
                if key not in firing_stats.rates:
                    missing.append(spec["layer"])
                    continue
                rate = firing_stats.rates[key]
            energy = c.e_ac * spec["ops"] * T * rate
        rows.append(EnergyRow(spec["layer"], spec["kind"], spec["ops"], rate, energy))
    if missing:
        raise TensorError(f"missing firing rates for AC layers: {missing}")
    return EnergyReport(rows, c)


# -- memory estimator ------------------------------------------------------


def memory_estimate(T, N, D, B, bytes_per_elem=8):
    """Analytic peak intermediate sizes of attention computation orders.

    Full spatial-temporal attention in the naive (Q K^T) V order
    materializes a (T*N) x (T*N) score matrix; the block-wise Q (K^T V)
    order needs only max(B*N*D, D*D) per block. The block-wise peak never
    exceeds the naive full peak.
    """
    if B < 1 or B > T or T % B:
        raise TensorError(f"block size {B} must divide T={T}")
    full_elems = (T * N) ** 2
    block_elems = max(B * N * D, D * D)
    return {
        "full_st_peak_elems": full_elems,
        "blockwise_peak_elems": block_elems,
        "full_st_peak_bytes": full_elems * bytes_per_elem,
        "blockwise_peak_bytes": block_elems * bytes_per_elem,
        "reduction": full_elems / block_elems,
    }
