"""Instruction timing model shared by the scheduler, the linter and the simulator.

All three tools read issue costs from :class:`CostTable`, so changing a cost
here changes every consumer consistently.

Timing rules, in core-local cycles (``time_ref``):

* an instruction issued at ``t`` occupies the core until ``t + cost``;
* ``pulse_write_trig`` latches its fields by ``t + cost`` and then fires when
  ``time_ref == start_time``; ``start_time < t + cost`` is a missed trigger.
  The next instruction issues at ``start_time + 1``;
* ``idle`` releases the core at ``max(t + cost, end_time)``;
* FPROC instructions sample the result bank at ``t``, stall ``fproc_latency``
  cycles for the response and then take ``cost`` cycles to finish;
* ``inc_qclk`` adds its operand to ``time_ref`` when it completes.
"""

from dataclasses import dataclass, field
import math

CLOCK_FREQ = 500e6
DEFAULT_COST = 2
FPROC_LATENCY = 4
PROLOGUE_CYCLES = 5
PROGRAM_MEMORY_WORDS = 2048

MNEMONICS = (
    "pulse_write", "pulse_write_trig", "idle", "done_stb", "phase_reset",
    "reg_alu", "jump_i", "jump_cond", "alu_fproc", "jump_fproc", "inc_qclk",
)


@dataclass(frozen=True)
class CostTable:
    """Per-mnemonic issue cost in clock cycles."""

    default: int = DEFAULT_COST
    overrides: dict = field(default_factory=dict)
    fproc_latency: int = FPROC_LATENCY

    def __post_init__(self):
        if self.default < 1 or self.fproc_latency < 1:
            raise ValueError("issue costs and FPROC latency must be positive")
        for name, cost in self.overrides.items():
            if name not in MNEMONICS:
                raise ValueError(f"unknown mnemonic {name!r} in cost table")
            if cost < 1:
                raise ValueError(f"cost for {name} must be positive")

    def __getitem__(self, mnemonic):
        return self.overrides.get(mnemonic, self.default)

    def __hash__(self):
        return hash((self.default, tuple(sorted(self.overrides.items())), self.fproc_latency))


def to_cycles(seconds, clock_freq=CLOCK_FREQ):
    """Round a duration up to whole clock cycles, forgiving float fuzz."""
    x = seconds * clock_freq
    return max(0, int(math.ceil(x - 1e-6)))
