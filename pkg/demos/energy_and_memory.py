"""Theoretical energy accounting and the block-wise memory argument.

Spike-driven layers cost one accumulate (0.9 pJ) per incoming spike;
float layers cost multiply-accumulates (4.6 pJ) unconditionally. Firing
rates therefore scale the energy of everything after the first layer.
"""

import numpy as np

from statten import (
    EnergyConstants,
    FiringStats,
    attention_energy,
    energy_report,
    memory_estimate,
)
from statten.attention import AttentionConfig
from statten.model import ModelConfig, Recorder, SpikingClassifier

print("== closed-form attention energies, T=4 N=64 D=384, rates 10% each")
rates = (0.1, 0.1, 0.1)
rows = {
    "analog single-step": attention_energy("vit", 4, 64, 384),
    "analog per-timestep": attention_energy("vivit", 4, 64, 384),
    "spiking masking": attention_energy("sdt", 4, 64, 384, rates),
    "spiking self-attention": attention_energy("statten", 4, 64, 384, rates),
}
for name, pj in rows.items():
    print(f"  {name:24s} {pj / 1e6:10.3f} uJ")

print("\n== per-layer report for a small trained-shape model")
att = AttentionConfig(variant="statten", T=4, B=2)
cfg = ModelConfig(depth=1, dim=32, timesteps=4, attention=att,
                  input_mode="synthetic", num_classes=8, mlp_ratio=2,
                  in_channels=1, in_spatial=16, embed_channels=16)
model = SpikingClassifier(cfg, seed=0)
rng = np.random.default_rng(0)
x = (rng.random((8, 4, 1, 16)) < 0.4).astype(float)
rec = Recorder()
model.forward(x, training=False, record=rec)
report = energy_report(model, FiringStats.from_recorder(rec),
                       EnergyConstants())
for row in report.rows:
    print(f"  {row.layer:14s} {row.kind:3s} rate {row.rate:5.3f} "
          f"-> {row.energy_pj:12.1f} pJ")
print(f"  total {report.total_pj / 1e6:.4f} uJ "
      "(note: only the first conv pays the 4.6 pJ multiply rate)")

print("\n== peak-memory: naive score matrix vs block-wise early product")
for b in (1, 2, 4):
    m = memory_estimate(T=4, N=64, D=128, B=b)
    print(f"  B={b}: naive {m['full_st_peak_elems']:>7d} elems, "
          f"block-wise {m['blockwise_peak_elems']:>6d} "
          f"({m['reduction']:.1f}x smaller)")
