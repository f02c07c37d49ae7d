"""Pulse scheduling over the control-flow graph.

Times are absolute per-core ``time_ref`` values. For each core the scheduler
tracks a worst-case issue time, and for each channel the cycle at which it is
free and the end of its most recent pulse. At control-flow merges every
quantity takes its maximum over the incoming paths, so the shorter path simply
reaches its next timed instruction early and waits there.

Gate expansions are placed as groups. A group has one anchor cycle, its pulses
sit at fixed offsets from that anchor, and it blocks every channel of its
qubits until the last pulse ends.
"""

from dataclasses import dataclass, replace

from ..elementconfig import convert_phase
from ..errors import CompileError, UnschedulableProgram
from ..timing import CLOCK_FREQ, PROLOGUE_CYCLES, CostTable, to_cycles
from .cfg import build_cfg
from .passes import as_program
from .statements import (AluFproc, AluVar, Barrier, BindPhase, Declare, Delay, Done, Idle, IncQclk, Jump,
                         JumpCond, JumpFproc, Label, Pulse, SetVar, VirtualZ)

NEG = float("-inf")
_BARRIER_ROUNDS = 16


@dataclass(frozen=True)
class TimingModel:
    chan_cfg: object
    costs: CostTable = CostTable()
    clock_freq: float = CLOCK_FREQ
    prologue: int = PROLOGUE_CYCLES

    def duration(self, pulse):
        return self.chan_cfg[pulse.dest].element.env_length_cycles(pulse.env)

    def issue_cost(self, pulse):
        """Cycles a pulse needs before its trigger, including the temporary phase register.

        A pulse with a nonzero base phase may need ``reg_alu`` to add its base
        phase to a bound phase variable. The slot is reserved whether or not
        the frequency ends up bound, so software and hardware virtual-Z
        resolution schedule identically.
        """
        base = pulse.tag.base_phase if pulse.tag is not None else pulse.phase
        cost = self.costs["pulse_write_trig"]
        if convert_phase(base):
            cost += self.costs["reg_alu"]
        return cost


class _State:
    __slots__ = ("t", "free", "meas", "frame")

    def __init__(self, t, free, meas, frame):
        self.t, self.free, self.meas, self.frame = t, free, meas, frame

    def copy(self):
        return _State(dict(self.t), dict(self.free), dict(self.meas), dict(self.frame))

    @staticmethod
    def merge(states):
        first = states[0].copy()
        for st in states[1:]:
            for name in ("t", "free", "meas"):
                a, b = getattr(first, name), getattr(st, name)
                for k, v in b.items():
                    a[k] = max(a.get(k, NEG), v)
        # A core whose time_ref history differs between paths gets the tuple of
        # its per-path histories: cores that moved together on every path stay
        # comparable, cores that did not become unalignable.
        for c in first.frame:
            paths = tuple(st.frame.get(c, ()) for st in states)
            if len(set(paths)) > 1:
                first.frame[c] = ("merge",) + paths
        return first


class _Scheduler:
    def __init__(self, prog, model):
        self.prog = prog
        self.m = model
        self.cc = model.chan_cfg
        self.stmts = list(prog.statements)
        self.cores = set(prog.meta.get("program_cores", ()))
        for s in self.stmts:
            if s.cores:
                self.cores |= set(s.cores)
        self.headers = {}
        self.tails = {}
        self.loop_durations = {}
        self.anchors = {}

    def core_channels(self, cores):
        return [ch for ch in self.cc.channels if self.cc.core_of(ch) in cores]

    def initial(self):
        cost = self.m.costs["phase_reset"]
        return _State({c: cost for c in self.cores},
                      {ch: self.m.prologue for ch in self.cc.channels}, {}, {c: () for c in self.cores})

    def run(self):
        cfg = self.prog.cfg or build_cfg(self.stmts)
        exits = {}
        for b in cfg.reverse_postorder():
            preds = [exits[p] for p in cfg.forward_predecessors(b) if p in exits]
            state = _State.merge(preds) if preds else self.initial()
            blk = cfg.blocks[b]
            exits[b] = self.exec_range(state, blk.start, blk.end, self.stmts)
        return self.stmts

    # -- statements --------------------------------------------------------------

    def exec_range(self, st, start, end, out, record=None):
        """Schedule statements ``start:end``; results go into ``out`` (list of statements).

        With ``record`` set (barrier lookahead), first group anchors per
        core are recorded and execution stops at the next Barrier or Delay.
        """
        costs = self.m.costs
        i = start
        while i < end:
            s = out[i]
            cores = s.cores or frozenset()
            if record is not None and isinstance(s, (Barrier, Delay)):
                break
            if isinstance(s, Pulse):
                j = i + 1
                if s.tag is not None:
                    while j < end and isinstance(out[j], Pulse) and out[j].tag is not None \
                            and out[j].tag.instance == s.tag.instance:
                        j += 1
                self.place_group(st, out, i, j, record)
                i = j
                continue
            if isinstance(s, Label):
                self.label(st, s)
            elif isinstance(s, (VirtualZ, AluVar, SetVar)):
                for c in cores:
                    st.t[c] += costs["reg_alu"]
            elif isinstance(s, Jump):
                for c in cores:
                    st.t[c] += costs["jump_i"]
            elif isinstance(s, JumpCond):
                for c in cores:
                    st.t[c] += costs["jump_cond"]
            elif isinstance(s, (JumpFproc, AluFproc)):
                for c in cores:
                    st.t[c] += costs.fproc_latency + costs[s.name]
            elif isinstance(s, Idle):
                out[i] = self.idle(st, s)
            elif isinstance(s, IncQclk):
                out[i] = self.inc_qclk(st, s)
            elif isinstance(s, Delay):
                d = to_cycles(s.t, self.m.clock_freq)
                for ch in s.scope:
                    c = self.cc.core_of(ch)
                    st.free[ch] = max(st.free[ch], st.t.get(c, 0)) + d
            elif isinstance(s, Barrier):
                self.barrier(st, s, i, end, out)
            elif isinstance(s, (Declare, BindPhase, Done)):
                pass
            else:
                raise CompileError(f"schedule: unsupported statement {s.name!r}; lower the program first")
            i += 1
        return st

    def label(self, st, s):
        if s.loop is None:
            return
        if s.label == s.loop:
            self.headers[s.loop] = st.copy()
            return
        # loop exit: the loop cores now run in a rewound time frame
        tail = self.tails.get(s.loop)
        if tail is not None:
            tail_state, d = tail
            for ch, v in tail_state.meas.items():
                if self.cc.core_of(ch) in s.cores:
                    st.meas[ch] = max(st.meas.get(ch, NEG), v - d)
        for c in s.cores:
            st.frame[c] = st.frame.get(c, ()) + (s.loop,)

    def idle(self, st, s):
        costs = self.m.costs
        end = s.end_time
        if s.wait is not None:
            ch, delay = s.wait
            owner = self.cc.core_of(ch)
            for c in s.cores:
                if st.frame.get(c) != st.frame.get(owner, st.frame.get(c)):
                    raise UnschedulableProgram(f"FPROC wait on core {c} refers to {ch} in another time frame")
            end = int(st.meas[ch] + delay) if ch in st.meas else 0
        for c in s.cores:
            st.t[c] = max(st.t[c] + costs["idle"], end)
        return replace(s, end_time=end)

    def inc_qclk(self, st, s):
        costs = self.m.costs
        if s.loop is None:
            if not isinstance(s.amount, int):
                raise UnschedulableProgram("inc_qclk by a register value cannot be scheduled statically")
            for c in s.cores:
                st.t[c] += costs["inc_qclk"]
            self.shift(st, s.cores, s.amount, ("inc", id(s)))
            return s
        hdr = self.headers[s.loop]
        back = costs["inc_qclk"] + costs["jump_i"]
        need = 1
        for c in s.cores:
            need = max(need, st.t[c] + back - hdr.t[c])
        for ch in self.core_channels(s.cores):
            need = max(need, st.free[ch] - hdr.free[ch])
            if ch in st.meas and ch in hdr.meas:
                need = max(need, st.meas[ch] - hdr.meas[ch])
        d = int(need)
        self.loop_durations[s.loop] = d
        self.tails[s.loop] = (st.copy(), d)
        for c in s.cores:
            st.t[c] += costs["inc_qclk"]
        self.shift(st, s.cores, -d, None)
        return replace(s, amount=-d)

    def shift(self, st, cores, amount, frame_tag):
        for c in cores:
            st.t[c] += amount
            if frame_tag is not None:
                st.frame[c] = st.frame.get(c, ()) + (frame_tag,)
        for ch in self.core_channels(cores):
            st.free[ch] += amount
            if ch in st.meas:
                st.meas[ch] += amount

    def check_frames(self, st, cores, what):
        frames = {st.frame.get(c, ()) for c in cores}
        if len(frames) > 1:
            raise UnschedulableProgram(f"{what} spans cores {sorted(cores)} whose time references diverged "
                                       f"(loop or inc_qclk scoped to only some of them)")

    def place_group(self, st, out, i, j, record):
        pulses = out[i:j]
        cores = {self.cc.core_of(p.dest) for p in pulses}
        occupied = set(p.dest for p in pulses)
        if pulses[0].tag is not None:
            occupied |= set(pulses[0].tag.channels)
        self.check_frames(st, cores | {self.cc.core_of(ch) for ch in occupied}, "gate")
        offsets = [p.tag.t0 if p.tag is not None else 0 for p in pulses]
        durations = [self.m.duration(p) for p in pulses]
        fixed = all(p.start_time is not None for p in pulses)
        if fixed:
            starts = [p.start_time for p in pulses]
            anchor = starts[0] - offsets[0]
        else:
            anchor = max(st.free[ch] for ch in occupied)
            by_core = {}
            for k, p in enumerate(pulses):
                by_core.setdefault(self.cc.core_of(p.dest), []).append(k)
            for c, ks in by_core.items():
                first = ks[0]
                anchor = max(anchor, st.t[c] + self.m.issue_cost(pulses[first]) - offsets[first])
                for a, b in zip(ks, ks[1:]):
                    if offsets[b] - offsets[a] < 1 + self.m.issue_cost(pulses[b]):
                        raise UnschedulableProgram(
                            f"gate {pulses[0].tag.gate}: pulses on core {c} at offsets {offsets[a]} and "
                            f"{offsets[b]} are too close to trigger from one core")
            anchor = int(anchor)
            starts = [anchor + o for o in offsets]
        end = max(s + d for s, d in zip(starts, durations))
        for k, p in enumerate(pulses):
            c = self.cc.core_of(p.dest)
            st.t[c] = starts[k] + 1
            st.meas[p.dest] = starts[k] + durations[k]
            if record is None and p.start_time is None:
                out[i + k] = replace(p, start_time=starts[k])
        for ch in occupied:
            st.free[ch] = max(st.free[ch], end if pulses[0].tag is not None else 0)
        for k, p in enumerate(pulses):
            st.free[p.dest] = max(st.free[p.dest], starts[k] + durations[k])
        if record is not None:
            for ch in occupied:
                record.setdefault(self.cc.core_of(ch), anchor)
        elif pulses[0].tag is not None:
            self.anchors[pulses[0].tag.instance] = anchor

    def barrier(self, st, s, i, end, out):
        # The first pulse group on every core in scope starts at one common
        # anchor. Alignment is per core: a qubit's readout cannot share a start
        # with its own preceding drive pulse.
        chans = list(s.scope)
        cores = {self.cc.core_of(ch) for ch in chans}
        self.check_frames(st, cores, "barrier")
        floor = max([st.free[ch] for ch in chans] + [st.t.get(c, 0) for c in cores])
        for _ in range(_BARRIER_ROUNDS):
            trial = st.copy()
            for ch in chans:
                trial.free[ch] = floor
            record = {}
            self.exec_range(trial, i + 1, end, list(out), record)
            anchors = [record[c] for c in cores if c in record]
            if not anchors or min(anchors) == max(anchors) or max(anchors) == floor:
                break
            floor = max(anchors)
        if anchors and min(anchors) == max(anchors):
            # every barrier channel is released at the common start, whether or
            # not a pulse follows on it (keeps rescheduling a fixed point)
            floor = max(floor, anchors[0])
        for ch in chans:
            st.free[ch] = max(st.free[ch], floor)


def schedule(prog, chan_cfg, costs=None, clock_freq=CLOCK_FREQ, prologue=PROLOGUE_CYCLES):
    """Assign start times to every pulse, end times to FPROC waits and rewinds to loop back edges.

    Pulses that already carry a ``start_time`` keep it.
    """
    prog = as_program(prog)
    if prog.cfg is None:
        raise CompileError("schedule needs lowered control flow")
    model = TimingModel(chan_cfg, costs or CostTable(), clock_freq, prologue)
    sch = _Scheduler(prog, model)
    stmts = sch.run()
    return prog.evolve(stmts, {"schedule"}, build_cfg(stmts),
                       loop_durations=dict(sch.loop_durations), gate_anchors=dict(sch.anchors))
