"""Spatially invariant, spatially varying and spatially adaptive convolution."""
import numpy as np

from focalholo.sac import (compose_sa_kernel, sa_conv_reference, sac_backward, sac_forward,
                           si_conv, sv_conv)

rng = np.random.default_rng(0)
c_in, c_out, h, w, k = 2, 3, 8, 8, 3
x = rng.normal(size=(c_in, h, w))
v = rng.normal(size=(h, w, c_in, k, k))      # one kernel per pixel, single output channel
W = rng.normal(size=(c_out, c_in, k, k))     # shared across pixels

print(si_conv(np.ones((1, 3, 3)), np.ones((1, 1, 3, 3)))[0])

fused = sac_forward(x, v, W)
A = compose_sa_kernel(v, W)                  # what the fused path never allocates
print("materialized kernel has", A.size, "entries versus", v.size + W.size, "for the factors")
print("fused vs brute force:", np.abs(fused - sa_conv_reference(x, A)).max())

# the two limits
print("W = 1 reproduces SV conv:", np.abs(sac_forward(x, v, np.ones_like(W))[0] - sv_conv(x, v)[0]).max())
print("V = 1 reproduces SI conv:", np.abs(sac_forward(x, np.ones_like(v), W) - si_conv(x, W)).max())

# gradients, spot-checked by central differences
g = rng.normal(size=fused.shape)
gx, gv, gw = sac_backward(g, x, v, W)
eps = 1e-5
W[1, 0, 2, 1] += eps
hi = np.sum(g * sac_forward(x, v, W))
W[1, 0, 2, 1] -= 2 * eps
lo = np.sum(g * sac_forward(x, v, W))
W[1, 0, 2, 1] += eps
print("dL/dW analytic", gw[1, 0, 2, 1], "numeric", (hi - lo) / (2 * eps))
