"""Convergence on the biactive benchmark, where the exact solution touches
the obstacle along a line with vanishing multiplier.

    python demos/biactive_rates.py [p] [levels]
"""

import sys

from fospg.cli import RunConfig, convergence_records

p = int(sys.argv[1]) if len(sys.argv) > 1 else 1
levels = int(sys.argv[2]) if len(sys.argv) > 2 else 3

records = convergence_records(RunConfig(problem="biactive", refinements=levels), p)
print(f"{'h':>8} {'|u-u_h|':>10} {'rate':>5} {'|u-U(psi)|':>10} {'rate':>5} {'|q-q_h|':>10} {'rate':>5} {'steps':>5}")
for r in records:
    print(
        f"{r.h:8.4f} {r.err_u:10.3e} {r.rate_u:5.2f} {r.err_latent:10.3e} {r.rate_latent:5.2f} "
        f"{r.err_flux:10.3e} {r.rate_flux:5.2f} {r.extra['iterations']:5d}"
    )
print(f"expected order {p + 1}")
