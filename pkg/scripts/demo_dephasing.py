"""Two phased components on a 1+1D line: how far the polar factor of U sits
from its leading midpoint symbol as the phase scale grows."""

import numpy as np

from holofield.fields import ScalarKernel
from holofield.holo import PhaseFamily, dephasing_U, fit_slope, polar_V
from holofield.lattice import Grid
from holofield.microlocal import microlocal_V_leading

n = 256
g = Grid((2, n))
x = np.array(g.positions(centered=False))[1]


def kernel(f):
    return ScalarKernel(g, f(np.array(g.momenta())), func=f)


kernels = [kernel(lambda p: np.ones_like(p[1])), kernel(lambda p: 0.5 * np.exp(-0.5 * p[1] ** 2))]
scales, devs = [], []
for m in (8, 4, 2, 1):
    le = n / (2 * np.pi * m)
    ph = PhaseFamily(g, np.array([np.cos(x / le), np.sin(x / le + 0.3)]), 1 / le, 1.0, 0)
    V = polar_V(dephasing_U(ph, kernels))
    dev = (V - microlocal_V_leading(ph, kernels)).norm()
    scales.append(le)
    devs.append(dev)
    print(f"l_lambda = {le:7.3f}   ||V - V_leading|| = {dev:.3e}")
print(f"slope in l_min / l_lambda: {-fit_slope(scales, devs):.3f}")
