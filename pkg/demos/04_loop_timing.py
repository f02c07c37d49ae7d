"""
Loops and the qubit clock
=========================

Timestamps are absolute within a core's time frame, so a loop body compiled
once would replay its pulses at the same time stamps. Instead, the back edge
rewinds the core's reference clock by the body duration, and each iteration
plays exactly one body length after the previous one.
"""

from distproc import sim
from distproc.hardware import Setup
from distproc.ir.statements import IncQclk

hw = Setup.default()
prog = [{"name": "declare", "var": "i", "dtype": "int", "scope": ["Q0"]},
        {"name": "set_var", "var": "i", "value": 0},
        {"name": "loop", "cond_lhs": 10, "alu_cond": "gt", "cond_rhs": "i", "scope": ["Q0"],
         "body": [{"name": "X90", "qubit": ["Q0"]},
                  {"name": "alu", "op": "add", "lhs": 1, "rhs": "i", "out": "i"}]}]

compiled, images, cfg = hw.build(prog)
(rewind,) = [s for s in compiled.ir.statements if isinstance(s, IncQclk)]
print("scheduled body duration:", list(compiled.ir.meta["loop_durations"].values())[0], "cycles")
print("back-edge clock adjustment:", rewind.amount, "cycles")

trace = sim.run(sim.load(images, cfg, compiled.symbols))
times = [p.trigger_cycle for p in trace.pulses_on("Q0.qdrv")]
print("X90 trigger cycles:", times)
print("spacings:", sorted({b - a for a, b in zip(times, times[1:])}))
