"""Accelerated vs plain iteration on a stiff chain.

The random generator's instances are strongly block-diagonally dominant,
so one sweep contracts error by 10x and there is nothing to accelerate.
A discretized chain of coupled segments is the opposite regime: adjacent
blocks interact as strongly as the blocks themselves and the per-sweep
contraction factor is ~0.93.  Three behaviours show up:

  * momentum races ahead early (gap below 1e-8 in a quarter of the
    sweeps the plain iteration needs),
  * but near the solution it oscillates, so the plain linear iteration
    reaches the tight stopping tolerance first,
  * periodic restarts keep the early speed without the oscillating tail.

The recorded traces are replayed through the complexity certificates,
which re-check the objective-gap guarantee at every recorded iteration.
"""

import numpy as np

from sgsqp import (
    BlockPartition,
    BlockSymOperator,
    BlockVector,
    CompositeQP,
    StepSchedule,
    StopRule,
    ToleranceSchedule,
    complexity_certificates,
    contraction_factor,
    solve,
)
from sgsqp.oracle import dense_optimum


def chain_problem(n_per=8, s=4):
    # second-difference operator on a chain, cut into s segments; the
    # off-diagonal blocks carry the single coupling entry at each seam
    N = n_per * s
    L = 2.0 * np.eye(N) - np.eye(N, k=1) - np.eye(N, k=-1)
    part = BlockPartition((n_per,) * s)
    blocks = {}
    for i in range(s):
        si = slice(i * n_per, (i + 1) * n_per)
        blocks[(i, i)] = L[si, si]
        for j in range(i + 1, s):
            B = L[si, j * n_per:(j + 1) * n_per]
            if np.any(B):
                blocks[(i, j)] = B
    load = np.zeros(N)
    load[N // 3] = 1.0          # point load a third of the way along
    return CompositeQP(BlockSymOperator(part, blocks),
                       BlockVector(part, load))


prob = chain_problem()
x_star, f_star = dense_optimum(prob)
stop = StopRule(kkt_tol=1e-9, max_iter=5000)

print(f"chain of {prob.partition.s} segments, {prob.partition.total} "
      f"unknowns, F* = {f_star:.8f}")
print(f"worst-case per-sweep contraction factor: "
      f"{contraction_factor(prob.majorizer()):.4f}\n")


def first_below(tr, tol):
    for r in tr.rows:
        if r.F - f_star <= tol:
            return r.k
    return tr.iterations


runs = [
    ("plain sweeps", StepSchedule.constant(), ToleranceSchedule.exact(),
     "exact"),
    ("accelerated", StepSchedule.nesterov(), ToleranceSchedule.exact(),
     "exact"),
    ("accelerated, restart 20", StepSchedule.restart(20),
     ToleranceSchedule.exact(), "exact"),
    ("accelerated, inexact inner", StepSchedule.nesterov(),
     ToleranceSchedule.power(1e-3, 2.0), "inexact"),
]
print(f"{'':28s} {'sweeps':>6s} {'gap<=1e-8 at':>13s}   certificates")
for label, steps, tols, mode in runs:
    tr = solve(prob, steps=steps, tols=tols, mode=mode, stop=stop,
               x_star=x_star)
    rep = complexity_certificates(tr, prob, steps, tols, f_star)
    if rep.rows or rep.linear_rows:
        cert = (f"{'ok' if rep.ok else 'VIOLATED'} ({len(rep.rows)} gap rows"
                + (f", {len(rep.linear_rows)} envelope rows"
                   if rep.linear_rows else "") + ")")
    else:
        cert = "no closed-form certificate for restarted momentum"
    print(f"{label:28s} {tr.iterations:6d} {first_below(tr, 1e-8):13d}   "
          f"{cert}")

tr = solve(prob, steps=StepSchedule.nesterov(), stop=stop, x_star=x_star)
rep = complexity_certificates(tr, prob, StepSchedule.nesterov(),
                              ToleranceSchedule.exact(), f_star)
print("\naccelerated objective gap vs guarantee (every 30th iteration):")
for k, lhs, rhs, ok in rep.rows[::30]:
    print(f"  k={k:4d}   F-F* = {lhs:9.3e}   bound = {rhs:9.3e}")
