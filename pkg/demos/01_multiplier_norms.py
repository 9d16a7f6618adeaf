# Estimating trilinear multiplier norms on finite groups.
# alt_max gives certified lower bounds, cs_upper gives Cauchy-Schwarz upper bounds.
import math

import numpy as np

from xsbound.lattice import SeparableMultiplier, TupleMultiplier, cycle
from xsbound.norms import AltMaxConfig, alt_max, cs_upper_min, k2_exact, tt_star

# %% the constant multiplier on Z/3: norm sqrt(3), reached by characters
g = cycle(3)
one = TupleMultiplier.from_rule(g, 3, lambda xs: np.ones(len(xs[0]), dtype=complex))
x = np.arange(3)
chars = [[np.exp(2j * np.pi * q * x / 3)] * 3 for q in range(3)]
est = alt_max(one, seeds=chars)
print("constant on Z/3:", est.lower, "expected", math.sqrt(3))

# %% two slots: the norm is the sup of |m|
rng = np.random.default_rng(0)
m2 = TupleMultiplier.from_dense(cycle(16), 2, rng.normal(size=16))
print("k=2:", alt_max(m2).lower, "sup:", k2_exact(m2))

# %% a multiplier depending on one variable: the norm is its l2 norm
a = rng.normal(size=64)
box = SeparableMultiplier(cycle(64), [a, np.ones(64), np.ones(64)])
print("one-variable:", alt_max(box, AltMaxConfig(restarts=4)).lower,
      cs_upper_min(box), np.linalg.norm(a))

# %% TT*: the square root of the doubled form matches the original
m = TupleMultiplier.from_dense(cycle(6), 3, rng.random((6, 6)))
print("TT*:", math.sqrt(alt_max(tt_star(m)).lower), alt_max(m).lower)
