# Closed-form block bounds and their numerical check on a grid.
from fractions import Fraction as Q

from xsbound.blocks import BlockGrid, BlockParams, block_bound, block_multiplier, extremizer
from xsbound.norms import AltMaxConfig, alt_max, rayleigh

# %% case selection for KdV blocks
for N, L, H in [((4, 4, 1), (64, 4, 1), 32), ((2, 2, 4), (32, 16, 1), 16),
                ((1, 4, 4), (64, 8, 2), 32), ((4, 1, 1), (16, 4, 1), 4)]:
    b = block_bound("kdv-r", BlockParams(N, L, H))
    print(N, L, H, "->", b.case_label, b.value)

# %% wave blocks normalize the signs first
b = block_bound("wave", BlockParams((8, 2, 8), (1, 1, 2), 2, (1, 1, -1), 2))
print("wave:", b.case_label, b.value, "frame", b.frame)

# %% numerical block: the bound sits between the extremizer and alt_max
p = BlockParams((2, 2, 4), (32, 16, 1), 16)
grid = BlockGrid(64, Q(1, 4))
m = block_multiplier(p, "kdv-r", grid)
b = block_bound("kdv-r", p)
fs = extremizer(p, "kdv-r", b.case_label, m)
low = rayleigh(m, fs)
est = alt_max(m, AltMaxConfig(restarts=4, iterations=60, seed=1), seeds=[fs])
print(f"{b.case_label}: extremizer {low:.3f} <= alt_max {est.lower:.3f}, bound {b.value:.3f}")
