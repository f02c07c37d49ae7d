"""Cycle-accurate simulator for a bank of processor cores and the function processor.

All cores share one global cycle counter. A core's ``time_ref`` is the global
count plus the signed offset accumulated by its ``inc_qclk`` instructions.
Cycles in which no core changes state are skipped in bulk; pass
``every_cycle=True`` to :func:`run` to visit each cycle (same results, slower).
Timing rules are listed in :mod:`distproc.timing`.
"""

from dataclasses import dataclass, field, asdict
import csv
import io
import json

from . import isa
from .errors import (DecodeError, EmptySlot, FprocUnknownId, MaxCyclesExceeded, ProgramTooLarge,
                     SimulationError, TriggerMissed)
from .isa import FROM_REG
from .timing import CLOCK_FREQ, PROGRAM_MEMORY_WORDS, CostTable, to_cycles

RUNNING = "running"
WAITING_TRIGGER = "waiting_trigger"
WAITING_IDLE = "waiting_idle"
WAITING_FPROC = "waiting_fproc"
DONE = "done"

_FIELD_MASKS = {
    "env": (1 << 24) - 1,
    "phase": (1 << isa.PHASE_BITS) - 1,
    "freq": (1 << isa.FREQ_ADDR_BITS) - 1,
    "amp": (1 << isa.AMP_BITS) - 1,
}


@dataclass(frozen=True)
class ReadoutChannel:
    """A demodulation channel whose completed windows feed an FPROC result slot."""

    channel: str
    qubit: str
    func_id: int
    delay_cycles: int


def readout_from_fproc_map(fproc_map, chan_cfg, clock_freq=CLOCK_FREQ):
    """Readout table from an FPROC channel map document.

    Each entry ``name -> {"func_id", "measurement_delay", "channel"}``; the
    channel defaults to ``<qubit>.rdlo`` for names of the form ``<qubit>.meas``.
    """
    out = []
    for name, entry in dict(fproc_map).items():
        channel = entry.get("channel") or f"{name.split('.')[0]}.rdlo"
        qubit = chan_cfg[channel].qubit if chan_cfg is not None else channel.split(".")[0]
        out.append(ReadoutChannel(channel, qubit, int(entry["func_id"]),
                                  to_cycles(entry.get("measurement_delay", 0.0), clock_freq)))
    return tuple(out)


@dataclass(frozen=True)
class SimulationConfig:
    clock_freq: float = CLOCK_FREQ
    costs: CostTable = field(default_factory=CostTable)
    max_cycles: int = 1 << 32
    strict: bool = True
    max_cores: int = 16
    program_memory: int = PROGRAM_MEMORY_WORDS
    readout: tuple = ()

    def __post_init__(self):
        if self.clock_freq <= 0 or self.max_cycles <= 0 or self.max_cores <= 0 or self.program_memory <= 0:
            raise ValueError("simulation parameters must be positive")

    @property
    def fproc_latency(self):
        return self.costs.fproc_latency


@dataclass
class PulseEvent:
    core: int
    channel: str
    trigger_cycle: int
    start_time: int
    env_word: int
    phase_word: int
    freq_word: int
    amp_word: int
    cfg_word: int
    address: int = -1
    freq_hz: float = None

    @property
    def duration(self):
        return self.env_word & ((1 << isa.ENV_LEN_BITS) - 1)

    @property
    def env_addr(self):
        return self.env_word >> isa.ENV_LEN_BITS


@dataclass
class FprocRecord:
    core: int
    func_id: int
    issue_cycle: int
    ready_cycle: int
    value: int
    address: int
    measurement: int = None
    measurement_visible: int = None
    stale: bool = False


@dataclass
class MeasurementRecord:
    qubit: str
    channel: str
    func_id: int
    trigger_cycle: int
    end_cycle: int
    visible_cycle: int
    bit: int = None
    p1: float = None
    consumed: bool = False


@dataclass
class SimulationTrace:
    pulses: list = field(default_factory=list)
    fproc: list = field(default_factory=list)
    measurements: list = field(default_factory=list)
    phase_resets: list = field(default_factory=list)
    cycles: dict = field(default_factory=dict)
    status: str = DONE
    core_keys: list = field(default_factory=list)

    def pulses_on(self, channel):
        return [p for p in self.pulses if p.channel == channel]

    def to_jsonl(self):
        lines = [json.dumps({"type": "pulse", **asdict(p)}) for p in self.pulses]
        lines += [json.dumps({"type": "fproc", **asdict(f)}) for f in self.fproc]
        lines += [json.dumps({"type": "measurement", **asdict(m)}) for m in self.measurements]
        return "\n".join(lines) + ("\n" if lines else "")


class FprocBank:
    """Most-recent state-discrimination result per FPROC id."""

    def __init__(self, func_ids, strict=True):
        self.func_ids = set(func_ids)
        self.strict = strict
        self._writes = {i: [] for i in self.func_ids}

    def write(self, func_id, value, visible_cycle, record=None):
        self._writes[func_id].append((visible_cycle, value, record))

    def lookup(self, func_id, cycle):
        """Latest (value, record) visible at ``cycle``; ``None`` when the slot is empty."""
        if func_id not in self.func_ids:
            raise FprocUnknownId(f"FPROC id {func_id} is not connected to any result slot")
        best = None
        for visible, value, record in self._writes[func_id]:
            if visible <= cycle and (best is None or visible >= best[0]):
                best = (visible, value, record)
        return best

    def read(self, func_id, cycle=None):
        best = self.lookup(func_id, float("inf") if cycle is None else cycle)
        if best is None:
            if self.strict:
                raise EmptySlot(f"FPROC slot {func_id} has no completed measurement")
            return 0
        return best[1] & 0xFFFFFFFF

    def pending(self, func_id, cycle):
        return [rec for visible, _, rec in self._writes[func_id] if visible > cycle]


def fproc_read(bank, func_id, cycle=None):
    """Latest discrimination result for ``func_id`` as a 32-bit word (non-destructive)."""
    return bank.read(func_id, cycle)


class _Core:
    __slots__ = ("index", "key", "program", "regs", "pulse", "ip", "offset", "status", "wake",
                 "pending", "image", "cycles", "fproc_req")

    def __init__(self, index, key, program, image):
        self.index = index
        self.key = key
        self.program = program
        self.image = image
        self.regs = [0] * isa.N_REGS
        self.pulse = {"env": 0, "phase": 0, "freq": 0, "amp": 0, "cfg": 0}
        self.ip = 0
        self.offset = 0
        self.status = RUNNING
        self.wake = 0
        self.pending = None
        self.cycles = 0
        self.fproc_req = None

    def time_ref(self, cycle):
        return cycle + self.offset

    def snapshot(self):
        return (self.ip, tuple(self.regs), tuple(sorted(self.pulse.items())))


class Machine:
    """Loaded cores plus configuration; consumed by :func:`run`."""

    def __init__(self, cores, cfg, symbols=None):
        self.cores = cores
        self.cfg = cfg
        self.symbols = symbols or {}
        self.readout = {r.channel: r for r in cfg.readout}

    @property
    def core_keys(self):
        return [c.key for c in self.cores]

    def time_refs(self, cycle):
        return [c.time_ref(cycle) for c in self.cores]

    def fresh(self):
        """A reset copy sharing the decoded programs (cheap per-shot restart)."""
        cores = [_Core(c.index, c.key, c.program, c.image) for c in self.cores]
        return Machine(cores, self.cfg, self.symbols)


def load(images, cfg=None, symbols=None):
    """Decode core images and reset every core (synchronized ``time_ref = 0``).

    ``images`` maps core key -> :class:`~distproc.asm.CoreImage` or a plain
    word list. ``symbols`` is the compiler's debug table keyed by
    ``(core key string, address)``.
    """
    cfg = cfg or SimulationConfig()
    if len(images) > cfg.max_cores:
        raise SimulationError(f"{len(images)} core images but only {cfg.max_cores} cores configured")
    cores = []
    for index, (key, image) in enumerate(images.items()):
        words = image if isinstance(image, (list, tuple)) else image.binary
        if len(words) > cfg.program_memory:
            raise ProgramTooLarge(len(words), cfg.program_memory)
        program = []
        for addr, word in enumerate(words):
            try:
                program.append(isa.decode(word, strict=cfg.strict))
            except Exception as exc:
                raise DecodeError(key, addr, exc) from exc
        key = tuple(key.split(",")) if isinstance(key, str) else tuple(key)
        cores.append(_Core(index, key, program, None if isinstance(image, (list, tuple)) else image))
    return Machine(cores, cfg, symbols)


class NullBackend:
    """Backend that ignores pulses and measures 0."""

    def reset(self):
        pass

    def on_pulse(self, event, symbol):
        pass

    def on_phase_reset(self, core, cycle):
        pass

    def measure(self, qubit, rng=None):
        return 0


def _operand(core, x):
    return core.regs[x.index] if isinstance(x, isa.Reg) else x


def run(machine, backend=None, rng=None, every_cycle=False, observer=None):
    """Execute all cores until every core is done.

    ``observer(cycle, machine)`` is called after each processed cycle.
    Returns a :class:`SimulationTrace`.
    """
    backend = backend or NullBackend()
    cfg = machine.cfg
    costs = cfg.costs
    latency = cfg.fproc_latency
    readout = machine.readout
    bank = FprocBank({r.func_id for r in cfg.readout}, strict=cfg.strict)
    trace = SimulationTrace(core_keys=[c.key for c in machine.cores])
    # (end cycle, seq, readout channel, measurement record)
    completions = []
    active = [c for c in machine.cores if c.status != DONE]
    cycle = 0
    visited = False

    def finish_measurements(upto):
        nonlocal completions
        due = [m for m in completions if m[0] <= upto]
        if not due:
            return
        completions = [m for m in completions if m[0] > upto]
        for _, _, ro, rec in sorted(due, key=lambda m: (m[0], m[1])):
            bit = int(backend.measure(ro.qubit, rng))
            rec.bit = bit
            rec.p1 = getattr(backend, "last_p1", None)
            bank.write(ro.func_id, bit, rec.visible_cycle, rec)

    try:
        while active:
            if every_cycle:
                nxt = cycle + 1 if visited else 0
            else:
                nxt = min(c.wake for c in active)
                if completions:
                    nxt = min(nxt, min(m[0] for m in completions))
            cycle = nxt
            if cycle > cfg.max_cycles:
                trace.status = "max_cycles"
                raise MaxCyclesExceeded(f"simulation exceeded {cfg.max_cycles} cycles")
            finish_measurements(cycle)
            for core in active:
                while core.wake == cycle and core.status != DONE:
                    _step(core, cycle, machine, backend, bank, trace, costs, latency, readout, completions)
            visited = True
            if observer is not None:
                observer(cycle, machine)
            active = [c for c in active if c.status != DONE]
    except SimulationError as exc:
        if trace.status != "max_cycles":
            trace.status = "error"
        exc.trace = trace  # partial trace up to the failure
        raise
    finish_measurements(float("inf"))
    for core in machine.cores:
        trace.cycles[core.index] = core.cycles
    return trace


def _fire(core, cycle, machine, backend, trace, readout, completions):
    p = core.pulse
    cfg_word = p["cfg"]
    if cfg_word >= len(core.key):
        raise SimulationError(f"core {core.key}: cfg word {cfg_word} selects no channel")
    channel = core.key[cfg_word]
    freq_hz = core.image.freq_hz(channel, p["freq"]) if core.image is not None else None
    event = PulseEvent(core.index, channel, cycle, core.time_ref(cycle), p["env"], p["phase"],
                       p["freq"], p["amp"], cfg_word, core.ip, freq_hz)
    trace.pulses.append(event)
    symbol = machine.symbols.get((",".join(core.key), core.ip))
    backend.on_pulse(event, symbol)
    ro = readout.get(channel)
    if ro is not None:
        end = cycle + event.duration
        rec = MeasurementRecord(ro.qubit, channel, ro.func_id, cycle, end, end + ro.delay_cycles)
        trace.measurements.append(rec)
        completions.append((end, len(trace.measurements), ro, rec))


def _step(core, cycle, machine, backend, bank, trace, costs, latency, readout, completions):
    """Advance one core at ``cycle`` (its wake-up cycle)."""
    if core.status == WAITING_TRIGGER:
        _fire(core, cycle, machine, backend, trace, readout, completions)
        core.ip += 1
        core.status = RUNNING
        core.wake = cycle + 1
        return
    if core.status == WAITING_FPROC:
        instr, rec = core.pending
        value = isa.to_signed32(rec.value)
        if isinstance(instr, isa.JumpFproc):
            taken = isa.alu(instr.op, _operand(core, instr.in0), value)
            core.ip = instr.addr if taken else core.ip + 1
        else:
            core.regs[instr.dest_reg] = isa.alu(instr.op, _operand(core, instr.in0), value)
            core.ip += 1
        core.pending = None
        core.status = RUNNING
        core.wake = cycle + costs[instr.mnemonic]
        return

    # RUNNING or WAITING_IDLE: issue the instruction at ip
    if core.ip >= len(core.program) or core.ip < 0:
        raise SimulationError(f"core {core.key}: instruction pointer {core.ip} outside program")
    instr = core.program[core.ip]
    core.status = RUNNING
    core.cycles = cycle
    t = core.time_ref(cycle)
    cost = costs[instr.mnemonic]
    kind = type(instr)

    if kind is isa.PulseWriteTrig or kind is isa.PulseWrite:
        _latch(core, instr)
        if kind is isa.PulseWrite:
            core.ip += 1
            core.wake = cycle + cost
            return
        ready = t + cost
        start = instr.start_time
        if start < ready:
            if machine.cfg.strict:
                raise TriggerMissed(f"core {core.key} addr {core.ip}: start_time {start} "
                                    f"but the trigger is ready only at time_ref {ready}")
            start = ready
        core.status = WAITING_TRIGGER
        core.wake = cycle + (start - t)
    elif kind is isa.RegAlu:
        core.regs[instr.dest_reg] = isa.alu(instr.op, _operand(core, instr.in0), core.regs[instr.in1_reg])
        core.ip += 1
        core.wake = cycle + cost
    elif kind is isa.Jump:
        core.ip = instr.addr
        core.wake = cycle + cost
    elif kind is isa.JumpCond:
        taken = isa.alu(instr.op, _operand(core, instr.in0), core.regs[instr.in1_reg])
        core.ip = instr.addr if taken else core.ip + 1
        core.wake = cycle + cost
    elif kind is isa.JumpFproc or kind is isa.AluFproc:
        found = bank.lookup(instr.fproc_id, cycle)
        pending = bank.pending(instr.fproc_id, cycle)
        stale = any(r is not None for r in pending)
        in_flight = [m for m in trace.measurements
                     if m.func_id == instr.fproc_id and m.visible_cycle > cycle]
        stale = stale or bool(in_flight)
        if found is None:
            if machine.cfg.strict:
                raise EmptySlot(f"core {core.key} addr {core.ip}: FPROC slot {instr.fproc_id} read "
                                f"at cycle {cycle} before any result is available")
            value, mrec = 0, None
        else:
            _, value, mrec = found
            if mrec is not None:
                mrec.consumed = True
        rec = FprocRecord(core.index, instr.fproc_id, cycle, cycle + latency, value & 0xFFFFFFFF, core.ip,
                          None if mrec is None else trace.measurements.index(mrec),
                          None if mrec is None else mrec.visible_cycle, stale)
        trace.fproc.append(rec)
        core.pending = (instr, rec)
        core.status = WAITING_FPROC
        core.wake = cycle + latency
    elif kind is isa.IncQclk:
        core.offset += _operand(core, instr.in0)
        core.ip += 1
        core.wake = cycle + cost
    elif kind is isa.Idle:
        resume = max(t + cost, instr.end_time)
        core.ip += 1
        core.status = WAITING_IDLE
        core.wake = cycle + (resume - t)
    elif kind is isa.Done:
        core.status = DONE
        core.wake = cycle
    elif kind is isa.PhaseReset:
        trace.phase_resets.append((core.index, cycle))
        backend.on_phase_reset(core.index, cycle)
        core.ip += 1
        core.wake = cycle + cost
    else:
        raise SimulationError(f"unsupported instruction {instr!r}")


def _latch(core, instr):
    f = instr.fields
    for name in ("env", "phase", "freq", "amp"):
        value = getattr(f, name)
        if value is None:
            continue
        if value is FROM_REG:
            value = core.regs[instr.reg_addr] & _FIELD_MASKS[name]
        core.pulse[name] = value
    if f.cfg is not None:
        core.pulse["cfg"] = f.cfg


def simulate(images, cfg=None, backend=None, rng=None, symbols=None):
    """Load and run in one call."""
    machine = load(images, cfg, symbols)
    return run(machine, backend, rng)


# --- timeline ----------------------------------------------------------------

TIMELINE_COLUMNS = ("channel", "start_cycle", "duration", "freq", "phase", "amp")


def timeline(trace):
    """Per-channel ordered pulse table: list of row tuples (see ``TIMELINE_COLUMNS``)."""
    rows = []
    for p in trace.pulses:
        freq = p.freq_hz if p.freq_hz is not None else p.freq_word
        rows.append((p.channel, p.trigger_cycle, p.duration, freq, p.phase_word, p.amp_word))
    rows.sort(key=lambda r: (r[0], r[1]))
    return rows


def timeline_csv(trace):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TIMELINE_COLUMNS)
    for row in timeline(trace):
        w.writerow([row[0], row[1], row[2], repr(row[3]) if isinstance(row[3], float) else row[3],
                    row[4], row[5]])
    return buf.getvalue()


def parse_timeline_csv(text):
    rows = []
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != TIMELINE_COLUMNS:
        raise ValueError(f"unexpected timeline header {header}")
    for ch, start, dur, freq, phase, amp in reader:
        freq = float(freq) if any(c in freq for c in ".e") else int(freq)
        rows.append((ch, int(start), int(dur), freq, int(phase), int(amp)))
    return rows


def channel_overlaps(trace):
    """Pairs of pulses that overlap in time on the same channel."""
    out = []
    by_channel = {}
    for p in trace.pulses:
        by_channel.setdefault(p.channel, []).append(p)
    for ch, pulses in by_channel.items():
        pulses.sort(key=lambda p: p.trigger_cycle)
        for a, b in zip(pulses, pulses[1:]):
            if b.trigger_cycle < a.trigger_cycle + a.duration:
                out.append((ch, a, b))
    return out
