"""
Teleportation with mid-circuit feedforward
==========================================

A cardinal state is teleported from Q0 to Q2. The Bell-basis results on Q0
and Q1 are read mid-circuit and drive conditional X and virtual-Z
corrections on Q2 through the FPROC path. The ideal statevector backend
gives expectation values of exactly +-1 for eigenstates and binomial noise
around 0 otherwise, both overall and inside every outcome partition.
"""

import sys

from distproc import circuits, qbackend
from distproc.hardware import Setup

shots = int(sys.argv[1]) if len(sys.argv) > 1 else 10_000
hw = Setup.default()


def backend():
    return qbackend.StatevectorBackend(["Q0", "Q1", "Q2"])


# %% Expectation table: rows are input states, columns measurement bases
print(f"{'state':>6} " + " ".join(f"{b:>16}" for b in circuits.BASES))
for state in ("0", "1", "+", "-", "+i", "-i"):
    cells = []
    for basis in circuits.BASES:
        records = hw.run_shots(circuits.teleport(state, basis), backend, shots, seed=7)
        e = qbackend.expectation(records, "Q2", basis)
        cells.append(f"{e['expectation']:+.3f} ({e['stderr']:.3f})")
    print(f"{state:>6} " + " ".join(f"{c:>16}" for c in cells))

# %% Conditioning on the two mid-circuit bits: the correction is right in every branch
records = hw.run_shots(circuits.teleport("+", "X"), backend, shots, seed=7)
for key, group in sorted(qbackend.partition(records, ["Q0", "Q1"]).items()):
    e = qbackend.expectation(group, "Q2", "X")
    print(f"m(Q0), m(Q1) = {key}: n = {e['n']:5d}, <X> = {e['expectation']:+.3f}")
