"""Why distant timesteps silence neurons: binary products and entropy.

Binary matrix products between similar spike patterns concentrate large
values; between decorrelated patterns the products flatten toward zero and
fewer neurons clear the firing threshold.
"""

import numpy as np

from statten import active_neurons, entropy
from statten.analysis import (
    PROBE_K_FAR,
    PROBE_K_NEAR,
    PROBE_Q,
    PROBE_SCORES_FAR,
    PROBE_SCORES_NEAR,
)
from statten.neuron import LifParams

print("== canonical score maps at two temporal distances")
print("nearby pair (correlated rows):")
print(PROBE_SCORES_NEAR.astype(int))
print("distant pair (same spike density, decorrelated):")
print(PROBE_SCORES_FAR.astype(int))
v_th = 1.0
print(f"sum {PROBE_SCORES_NEAR.sum():.0f} vs {PROBE_SCORES_FAR.sum():.0f}; "
      f"neurons over threshold {int((PROBE_SCORES_NEAR > v_th).sum())} vs "
      f"{int((PROBE_SCORES_FAR > v_th).sum())}")

print("\n== the same effect measured on random spike tensors")
rng = np.random.default_rng(0)
near = far = 0
trials = 50
for _ in range(trials):
    base = (rng.random((8, 16)) < 0.5).astype(float)
    flip = rng.random((8, 16)) < 0.1
    k_near = np.where(flip, 1 - base, base)  # nearby: mildly perturbed
    k_far = (rng.random((8, 16)) < 0.5).astype(float)  # distant: fresh
    q = np.stack([base, base])
    k = np.stack([k_near, k_far])
    v = np.stack([base, base])
    lif = LifParams(v_th=12.0)
    near += active_neurons(q, k, v, 0, 0, lif=lif)
    far += active_neurons(q, k, v, 0, 1, lif=lif)
print(f"  average active neurons: nearby {near / trials:.1f}, "
      f"distant {far / trials:.1f}")

print("\n== attention-map entropy as a flatness measure")
peaked = np.zeros((2, 4, 8))
peaked[0, 0, 0] = 12.0
flat = np.zeros((2, 4, 8))
print(f"  one dominant element: {entropy(peaked):.3f} nats")
print(f"  perfectly flat map:   {entropy(flat):.3f} nats "
      f"(= log(T*N*D) = {np.log(flat.size):.3f})")
