"""Lowest-order iterates against an independent projected-gradient solution
of the same discrete variational inequality.

    python demos/oracle_comparison.py [seed]
"""

import sys

from fospg.cli import oracle_problem, run_oracle_check
from fospg.mesh import unit_square_triangles

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 1
pr = oracle_problem(seed)
res = run_oracle_check(unit_square_triangles(4), pr, pr.alpha, target_sum=1e6)

print(f"oracle: {res['oracle_iterations']} gradient steps, KKT residual {res['kkt']:.1e}")
print(f"{'k':>3} {'sum alpha':>10} {'L2 error':>10} {'ratio':>8}")
for s in res["steps"][::3] + res["steps"][-1:]:
    print(f"{s['k']:3d} {s['alpha_sum']:10.3e} {s['err']:10.3e} {s['ratio']:8.1e}")

# cells where the oracle sits on the obstacle
active = res["oracle"].u < 1e-8
print(f"{active.sum()} of {active.size} cells in contact")
