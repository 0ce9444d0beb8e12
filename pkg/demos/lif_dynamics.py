"""Leaky integrate-and-fire dynamics and the surrogate gradient.

Walks a neuron through a constant-input drive, shows the
integrate/fire/reset cycle, and compares the hard threshold against its
smooth training-time relaxation.
"""

import numpy as np

from statten import LifParams, lif_over_time, surrogate_grad
from statten.autograd import Tensor
from statten.neuron import smooth_spike

params = LifParams(tau=0.5, v_th=1.0)

print("== constant drive 0.6, tau=0.5, v_th=1.0")
drive = np.full((8, 1), 0.6)
spikes, _ = lif_over_time(drive, params)
u = 0.0
for t, x in enumerate(drive[:, 0]):
    u = params.tau * u + x
    fired = int(spikes.data[t, 0])
    print(f"  t={t}: membrane {u:.3f} -> {'SPIKE' if fired else '.'}")
    if fired:
        u = 0.0
print("  (the membrane needs two steps to cross 1.0, then resets)")

print("\n== surrogate gradient around the threshold")
us = np.linspace(0.0, 2.0, 9)
g = surrogate_grad(us, params).data
s = smooth_spike(us, params).data
for ui, gi, si in zip(us, g, s):
    bar = "#" * int(round(gi * 40))
    print(f"  u={ui:.2f}  smooth={si:.3f}  grad={gi:.3f} {bar}")
print("  peak sits exactly at v_th; far from it the gradient vanishes")

print("\n== gradients flow through spikes during training")
x = Tensor(np.full((4, 3), 0.7), requires_grad=True)
out, _ = lif_over_time(x, params)
out.sum().backward()
print("  d(total spikes)/d(input) per timestep:")
for t in range(4):
    print("   ", np.round(x.grad[t], 4))
