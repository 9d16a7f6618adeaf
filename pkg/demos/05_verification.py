# Batch verification of KdV blocks and the randomized property suite.
import sys

from xsbound.harness import KDV_SWEEPS, emit_report, run_property_suite, run_sweep

# %% one-parameter sweeps in the smallest modulation
rows = []
for sw in KDV_SWEEPS:
    res = run_sweep(sw)
    rows += res.rows
    print(f"{sw.name:15s} slope {res.measured_slope:.3f} (formula {res.formula_slope:.2f})")
print("ratio_lower >=", min(r.ratio_lower for r in rows), " ratio_upper <=",
      max(r.ratio_upper for r in rows))

# %% reports
emit_report(rows[:3], "csv", sys.stdout)

# %% a short property suite run
res = run_property_suite(seed=42, trials=10)
print("suite ok:", res.ok, sum(c["passed"] for c in res.counts.values()), "instances")
