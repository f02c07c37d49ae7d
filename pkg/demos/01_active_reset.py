"""
Active reset on one qubit
=========================

A measurement result steers the program in real time: read Q1, and if the
discriminated bit is 1, play two X90 pulses to flip it back to the ground state.
The hand-written assembly is assembled, disassembled and simulated cycle by
cycle for both outcomes.
"""

from distproc import asm, isa, sim
from distproc.hardware import Setup, load_data
from distproc.qbackend import ScriptedBackend

hw = Setup.default()
program = load_data("active_reset.asm.json")
images = asm.assemble(program, hw.chan_cfg)
(image,) = images.values()

# %% The binary: eight 128-bit words
print(isa.disassemble(image.binary))

# %% Outcome 1 plays the conditional flip; outcome 0 skips it
for bit in (1, 0):
    trace = sim.run(sim.load(images, hw.sim_config()), ScriptedBackend({"Q1": [bit]}))
    print(f"measured {bit}:")
    for p in trace.pulses:
        print(f"  cycle {p.trigger_cycle:5d}  {p.channel:8s} duration {p.duration} cycles")
    (f,) = trace.fproc
    print(f"  FPROC read issued at {f.issue_cycle}, result ready at {f.ready_cycle}, value {f.value}")

# %% The idle boundary equals demodulation end plus the readout delay
(m,) = trace.measurements
print(f"demod window ends at {m.end_cycle}, result visible at {m.visible_cycle}")
