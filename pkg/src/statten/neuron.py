"""Leaky integrate-and-fire dynamics with surrogate-gradient spikes.

Membrane update: u' = tau * u + input. A neuron fires iff u' is strictly
above the threshold, after which its stored potential hard-resets to zero.
The forward spike is an exact Heaviside; the backward pass substitutes an
arctan-family surrogate derivative (straight-through estimator).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import Tensor, TensorError, add, custom_grad, mul, stack


@dataclass
class LifParams:
    """Neuron constants. tau in (0,1] is the leak, v_th > 0 the threshold,
    surrogate_width the lambda of the arctan surrogate."""

    tau: float = 0.5
    v_th: float = 1.0
    surrogate_width: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must be in (0, 1], got {self.tau}")
        if self.v_th <= 0:
            raise ValueError(f"v_th must be > 0, got {self.v_th}")
        if self.surrogate_width <= 0:
            raise ValueError(f"surrogate_width must be > 0, got {self.surrogate_width}")


@dataclass
class MembraneState:
    """Per-neuron membrane potentials; zero wherever the neuron just fired."""

    u: Tensor

    @staticmethod
    def zeros(shape):
        return MembraneState(Tensor(np.zeros(shape)))


def surrogate_grad(u, params: LifParams):
    """d(spike)/d(u) stand-in: lambda / (pi * (1 + (lambda*(u - v_th))^2)).

    The primitive is arctan(lambda*(u - v_th))/pi + 1/2, a smooth relaxation
    of the Heaviside step; the derivative peaks at u = v_th and decays to
    zero in both tails.
    """
    u = u.data if isinstance(u, Tensor) else np.asarray(u, dtype=np.float64)
    lam = params.surrogate_width
    return Tensor(lam / (np.pi * (1.0 + (lam * (u - params.v_th)) ** 2)))


def smooth_spike(u, params: LifParams):
    """Smooth relaxation of the spike function (the surrogate's primitive)."""
    u = u.data if isinstance(u, Tensor) else np.asarray(u, dtype=np.float64)
    lam = params.surrogate_width
    return np.arctan(lam * (u - params.v_th)) / np.pi + 0.5


def spike_fn(u, params: LifParams, smooth=False):
    """Binary spike with surrogate backward.

    Forward is Heaviside(u - v_th) with strict inequality; ``smooth=True``
    swaps in the surrogate primitive so finite differences of the whole
    graph match the analytic (surrogate) gradients.
    """

    def forward(ud):
        if np.isnan(ud).any():
            raise TensorError("NaN membrane potential in spike_fn")
        if smooth:
            return smooth_spike(ud, params)
        return (ud > params.v_th).astype(np.float64)

    def backward(g, ud):
        lam = params.surrogate_width
        return (g * lam / (np.pi * (1.0 + (lam * (ud - params.v_th)) ** 2)),)

    return custom_grad((u,), forward, backward)


def lif_step(state: MembraneState, input_current, params: LifParams, smooth=False):
    """One membrane update: returns (spikes, new state).

    Fired positions reset to exactly zero via u_next = u' * (1 - spike),
    which also routes surrogate gradient through the reset path.
    """
    x = input_current if isinstance(input_current, Tensor) else Tensor(input_current)
    if np.isnan(x.data).any():
        raise TensorError("NaN in LIF input current")
    if state.u.shape != x.shape:
        raise TensorError(
            f"LIF state shape {state.u.shape} != input shape {x.shape}"
        )
    u = add(mul(state.u, params.tau), x)
    s = spike_fn(u, params, smooth=smooth)
    u_next = mul(u, add(mul(s, -1.0), 1.0))
    return s, MembraneState(u_next)


def lif_over_time(inputs, params: LifParams, initial_state=None, smooth=False):
    """Fold lif_step along the leading (time) axis; output is binary.

    ``inputs`` has shape [T, ...]; the returned spike tensor matches it.
    """
    x = inputs if isinstance(inputs, Tensor) else Tensor(inputs)
    if x.shape[0] == 0:
        raise TensorError("lif_over_time needs at least one timestep")
    state = initial_state or MembraneState.zeros(x.shape[1:])
    spikes = []
    for t in range(x.shape[0]):
        s, state = lif_step(state, x[t], params, smooth=smooth)
        spikes.append(s)
    return stack(spikes, axis=0), state


def lif_single(pre_activation, params: LifParams, smooth=False):
    """Single-step LIF from fresh zero state: spike iff input > v_th.

    This is the form applied to attention pre-activations, where each
    forward call is an independent thresholding rather than a temporal fold.
    """
    x = pre_activation if isinstance(pre_activation, Tensor) else Tensor(pre_activation)
    return spike_fn(x, params, smooth=smooth)
