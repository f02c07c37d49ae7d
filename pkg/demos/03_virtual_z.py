"""
Virtual-Z: compile time versus run time
=======================================

A virtual-Z gate is a frame change. The compiler can fold it into the phase
of later pulses, or bind the drive frequency to a phase register and update
that register at run time, which is needed when the rotation depends on a
measurement. Both produce the same pulses; only the instruction stream differs.
"""

import math

from distproc import sim
from distproc.hardware import Setup

hw = Setup.default()
body = [{"name": "X90", "qubit": ["Q0"]},
        {"name": "virtual_z", "qubit": "Q0", "phase": math.pi / 2},
        {"name": "X90", "qubit": ["Q0"]},
        {"name": "virtual_z", "qubit": "Q0", "phase": -0.3},
        {"name": "X90", "qubit": ["Q0"]}]
bound = [{"name": "declare", "var": "q0_phase", "dtype": "phase", "scope": ["Q0"]},
         {"name": "bind_phase", "var": "q0_phase", "qubit": "Q0"}] + body

for label, prog in (("software", body), ("bound register", bound)):
    compiled, images, cfg = hw.build(prog)
    trace = sim.run(sim.load(images, cfg, compiled.symbols))
    (ops,) = compiled.asm.values()
    print(f"{label}: {len(ops)} assembly ops")
    for op in ops:
        print("   ", {k: v for k, v in op.items() if k in ("op", "phase", "alu_op", "in0", "start_time")})
    print("  pulses (cycle, phase word):", [(p.trigger_cycle, p.phase_word) for p in trace.pulses])
