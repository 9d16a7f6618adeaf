# Deciding convergence of dyadic sums in log coordinates.
from fractions import Fraction as Q

from xsbound.dyadic import (
    DyadicSumProblem, at_least_one, brute_force_sum, format_problem, growth_exponent, leq,
    schur_refine, solve_problem, var,
)

L, N = var("L"), var("N")

# %% sum over 1 <= L <= N of 1: one log per N
p = DyadicSumProblem.build({"N": "sup", "L": "sum"}, [at_least_one("L"), leq(L, N)], N ** 0)
print(format_problem(p))
v = solve_problem(p)
print(v.verdict.name, "log degree", v.log_degree)
print("partial sums:", [brute_force_sum(p, c) for c in (5, 10, 20)])

# %% orthogonality in L turns the sum into a sup
print("after refinement:", solve_problem(schur_refine(p, "L")).verdict.name)

# %% geometric decay and growth rates
q = DyadicSumProblem.build({"N": "sup", "L": "sum"}, [at_least_one("L"), leq(L, N)],
                           L ** Q(-1, 2) * N ** Q(1, 3))
print(solve_problem(q).verdict.name, "growth in N:", growth_exponent(q, "N"))
