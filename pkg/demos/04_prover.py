# Reducing bilinear estimates to dyadic sums and reading the verdicts.
from fractions import Fraction as Q

from xsbound.dyadic import ONE
from xsbound.prover import AveragingRefused, EstimateSpec, apply_averaging, prove, run_spec

# %% built-in cases
for name, params in [("kpv2", {}), ("kpv3", {}), ("borg_l4", {}), ("kpv_t", {}), ("qij", {}),
                     ("new_schro", {"s": Q(-1, 5)}), ("new_schro", {"s": Q(-3, 10)})]:
    r = prove(name, params)
    print(f"{name:10s} {params} -> {r.overall.name}")

# %% the endpoint case needs the refinement to converge
r = prove("wave_endpoint", {"d": 3})
print("wave endpoint:", r.extra)

# %% product estimates in Sobolev spaces
for s in [(0, 0, Q(1, 2)), (Q(1, 4), Q(1, 4), Q(1, 4))]:
    print("sobolev", s, prove("sobolev", {"d": 1, "s1": s[0], "s2": s[1], "s3": s[2]}).overall.name)

# %% a custom estimate and the averaging rule
spec = EstimateSpec("kdv-t", ONE, (Q(1, 3), Q(1, 3), 0), equal_frequencies=True)
print("custom periodic:", run_spec(spec).overall.name)
try:
    apply_averaging(EstimateSpec("kdv-r", ONE, (Q(1, 2), 0, 0)), 1, 2)
except AveragingRefused as e:
    print(e)
