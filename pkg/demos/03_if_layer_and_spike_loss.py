"""
The IF layer as a differentiable camera model
=============================================

A rendered intensity is pushed through the same integrate-and-fire dynamics
as the sensor, and the generated count is compared with the observed one.
Spikes are steps, so the backward pass uses a constant surrogate 1/v_th.
"""

import numpy as np

from spikefield.sim import NonuniformityMap, SpikeCameraModel, simulate_stream
from spikefield.snn import IFLayerConfig, count_gradient, if_forward, spike_render_loss

cfg = IFLayerConfig(v_th=1.0, steps=256)

# forward: identical to the simulator when the threshold carries R
for level, r in ((0.3, 1.0), (0.3, 1.1), (0.72, 0.9)):
    count, _ = if_forward(level, r, cfg)
    sensor = SpikeCameraModel(1.0, np.zeros((1, 1)), NonuniformityMap(np.full((1, 1), r)))
    sim = simulate_stream(np.full((1, 1), level), sensor, 256).counts()[0, 0]
    print(f"L={level} R={r}: IF layer {int(count)}, simulator {sim}")

# backward with the reset detached: every step adds t / v_th, T(T+1)/2 in total
_, trace = if_forward(0.4, 1.0, cfg)
print("detached gradient", count_gradient(trace)[0], "closed form", 256 * 257 / 2)

# with the reset differentiated the gradient telescopes to T / v_th, the true slope
_, trace = if_forward(0.4, 1.0, IFLayerConfig(1.0, 256, detach_reset=False))
print("full BPTT gradient", count_gradient(trace)[0])

# the loss is flat inside one count quantum and rises outside it
observed, _ = if_forward(0.37, 1.0, cfg)
for guess in (0.30, 0.35, 0.37, 0.372, 0.40):
    loss, grad = spike_render_loss(guess, observed, 1.0, cfg)
    print(f"rendered {guess:.3f}: loss {float(loss):6.1f}  gradient sign {np.sign(grad)}")
