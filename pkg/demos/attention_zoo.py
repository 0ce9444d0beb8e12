"""Tour of the spike-attention variants on one toy input.

Every variant maps binary [T, N, D] query/key/value tensors to binary
outputs without a softmax; the block-wise operator interpolates between
per-timestep and full spatial-temporal attention.
"""

import numpy as np

from statten import (
    dssa,
    qkta,
    sdsa,
    ssa,
    st_attn,
    statten,
    temporal_attn,
    vanilla_attention,
)

rng = np.random.default_rng(0)
T, N, D = 4, 6, 8
q, k, v = ((rng.random((T, N, D)) < 0.4).astype(float) for _ in range(3))

print(f"input: binary Q/K/V of shape [T={T}, N={N}, D={D}]\n")

variants = {
    "per-timestep (spatial)": ssa(q, k, v),
    "per-token (temporal)": temporal_attn(q, k, v),
    "full spatial-temporal": st_attn(q, k, v),
    "block-wise, B=2": statten(q, k, v, 2),
    "mask-and-sum (sdsa)": sdsa(q, k, v),
    "token-sum gate (qkta)": qkta(q, k),
}
for name, out in variants.items():
    rate = out.data.mean()
    print(f"  {name:28s} firing rate {rate:.3f}")

print("\n== block size interpolates between the extremes")
for b in (1, 2, 4):
    out = statten(q, k, v, b).data
    same_ssa = np.array_equal(out, ssa(q, k, v).data)
    same_st = np.array_equal(out, st_attn(q, k, v).data)
    print(f"  B={b}: equals per-timestep? {same_ssa}  "
          f"equals full? {same_st}")

print("\n== the analog reference (softmax attention) for comparison")
out = vanilla_attention(q[0], k[0], v[0])
print(f"  rows sum to value-averages; output range "
      f"[{out.data.min():.3f}, {out.data.max():.3f}] (real-valued, "
      "multiply-heavy -- exactly what the spiking variants avoid)")
