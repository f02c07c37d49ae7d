"""Lowering passes: gate resolution, scoping, control-flow lowering, FPROC and virtual-Z resolution."""

from dataclasses import dataclass, field, replace
import itertools

from ..elementconfig import convert_phase, phase_from_word
from ..errors import (CompileError, DuplicateLabel, InconsistentPhaseAtMerge, ScopeViolation,
                      SchemaError, UndeclaredVariable, UnknownChannel)
from ..isa import PHASE_BITS
from ..timing import CLOCK_FREQ, to_cycles
from .cfg import build_cfg
from .statements import (CONTROL, AluFproc, AluVar, Barrier, BindPhase, BranchFproc, BranchVar, Declare,
                         Delay, Done, Gate, GateTag, Idle, IncQclk, Jump, JumpCond, JumpFproc, Label, Loop,
                         Pulse, Read, SetVar, VirtualZ, child_blocks, map_blocks, walk)

PHASE_MOD = 1 << PHASE_BITS


@dataclass(frozen=True)
class IRProgram:
    """A statement tuple plus what has been established about it.

    ``applied`` names the passes already run; ``cfg`` is present once control
    flow is lowered; ``meta`` carries pass results (variables, bindings, loop
    durations, phase ledger).
    """

    statements: tuple
    applied: frozenset = frozenset()
    cfg: object = None
    meta: dict = field(default_factory=dict)

    def evolve(self, statements=None, applied=None, cfg=None, **meta):
        new_meta = dict(self.meta)
        new_meta.update(meta)
        statements = self.statements if statements is None else tuple(statements)
        return IRProgram(statements, self.applied | set(applied or ()), cfg, new_meta)

    def __iter__(self):
        return iter(self.statements)

    def __len__(self):
        return len(self.statements)


def as_program(prog):
    if isinstance(prog, IRProgram):
        return prog
    from .statements import program_from_list
    if prog and isinstance(prog[0], dict):
        prog = program_from_list(prog)
    return IRProgram(tuple(prog))


# --- gate resolution ---------------------------------------------------------------

def resolve_gates(prog, cal, chan_cfg=None, clock_freq=CLOCK_FREQ):
    """Replace Gate and Read statements by their calibrated pulse/virtual-Z expansions.

    Expanded pulses carry a :class:`GateTag` with the gate's start offset in
    cycles and the channels the gate occupies (every channel of its qubits).
    """
    prog = as_program(prog)
    counter = itertools.count(prog.meta.get("gate_instances", 0))

    def channels_of(qubits, contents):
        chans = {c.dest for c, _, _ in contents if isinstance(c, Pulse)}
        if chan_cfg is not None:
            for q in qubits:
                chans.update(chan_cfg.qubit_channels(q))
        return tuple(sorted(chans))

    def expand(name, qubits):
        contents = cal.expansion(name, qubits)
        instance = next(counter)
        chans = channels_of(qubits, contents)
        out = []
        for stmt, t0, primary in contents:
            if isinstance(stmt, Pulse):
                stmt = replace(stmt, tag=GateTag(name, tuple(qubits), instance, primary,
                                                 to_cycles(t0, clock_freq), chans, float(stmt.phase)))
            out.append(stmt)
        return _order_expansion(out, name, qubits)

    def go(stmts):
        out = []
        for s in stmts:
            if isinstance(s, Gate):
                out.extend(expand(s.gate, s.qubits))
            elif isinstance(s, Read):
                for q in s.qubits:
                    out.extend(expand("read", (q,)))
            else:
                out.append(map_blocks(s, go))
        return out

    stmts = go(prog.statements)
    return prog.evolve(stmts, {"resolve_gates"}, prog.cfg, gate_instances=next(counter))


def _order_expansion(stmts, name, qubits):
    pulses = [s for s in stmts if isinstance(s, Pulse)]
    if not pulses:
        return stmts
    first = stmts.index(pulses[0])
    last = max(i for i, s in enumerate(stmts) if isinstance(s, Pulse))
    if any(isinstance(s, VirtualZ) for s in stmts[first:last]):
        raise SchemaError(f"calibration for {name}{list(qubits)}: virtual_z entries may not sit between pulses")
    body = sorted(stmts[first:last + 1], key=lambda p: p.tag.t0)
    return stmts[:first] + body + stmts[last + 1:]


# --- scoping ---------------------------------------------------------------------

def scope_channels(entries, chan_cfg):
    """Channel names for a scope list of qubits and/or channels (None = all channels)."""
    if entries is None:
        return tuple(sorted(chan_cfg.channels))
    chans = set()
    for e in entries:
        if e in chan_cfg:
            chans.add(e)
        else:
            qc = chan_cfg.qubit_channels(e)
            if not qc:
                raise UnknownChannel(f"scope entry {e!r} is neither a channel nor a qubit")
            chans.update(qc)
    return tuple(sorted(chans))


def freq_key(freq, cal):
    """Virtual-Z tracking key: frequencies compare by exact Hz value."""
    if cal is not None:
        return cal.freq_hz(freq)
    return freq if isinstance(freq, str) else float(freq)


def _vars_in(value):
    return [value] if isinstance(value, str) else []


class _Scoper:
    def __init__(self, chan_cfg, cal):
        self.chan_cfg = chan_cfg
        self.cal = cal
        self.declared = {}
        self.var_cores = {}
        self.bindings = {}
        self.freq_cores = {}
        self.all_cores = frozenset()

    def cores_of(self, channels):
        return frozenset(self.chan_cfg.core_of(c) for c in channels)

    def collect(self, stmts):
        for s in walk(stmts):
            if isinstance(s, Pulse):
                chans = {s.dest} | set(s.tag.channels if s.tag else ())
                self.all_cores |= self.cores_of(chans)
                key = freq_key(s.freq, self.cal)
                self.freq_cores.setdefault(key, set()).add(self.chan_cfg.core_of(s.dest))
            elif isinstance(s, (Gate, Read)):
                chans = scope_channels(s.qubits, self.chan_cfg)
                self.all_cores |= self.cores_of(chans)
            elif isinstance(s, Declare):
                if s.var in self.declared:
                    raise CompileError(f"variable {s.var!r} declared twice")
                self.declared[s.var] = s
                if s.scope is not None:
                    self.all_cores |= self.cores_of(scope_channels(s.scope, self.chan_cfg))
            elif isinstance(s, BindPhase):
                self.bindings[freq_key(s.freq, self.cal)] = s.var
            elif isinstance(s, (BranchVar, BranchFproc, Loop)) and s.scope is not None:
                self.all_cores |= self.cores_of(scope_channels(s.scope, self.chan_cfg))
        for var, d in self.declared.items():
            explicit = d.scope is not None
            self.var_cores[var] = self.cores_of(scope_channels(d.scope, self.chan_cfg)) if explicit else frozenset()

    def home_cores(self, freq):
        # the qubit's own cores for a named "<qubit>.<name>" frequency, so a
        # virtual-Z costs the same slot whether or not anything is pulsed at it
        if not isinstance(freq, str) or "." not in freq:
            return frozenset()
        prefix = freq.split(".")[0] + "."
        return self.cores_of(ch for ch in self.chan_cfg.channels if ch.startswith(prefix))

    def need_var(self, var, cores, what):
        if var not in self.declared:
            raise UndeclaredVariable(f"{what}: variable {var!r} is not declared")
        if cores <= self.var_cores[var]:
            return False
        if self.declared[var].scope is not None:
            raise ScopeViolation(f"{what}: variable {var!r} is scoped to cores {sorted(self.var_cores[var])} "
                                 f"but is used on cores {sorted(cores)}")
        self.var_cores[var] = self.var_cores[var] | cores
        return True

    def annotate(self, stmts, seen):
        """Annotate a block; returns (statements, touched cores). Tracks declaration order in ``seen``."""
        out, touched = [], frozenset()
        for s in stmts:
            s, cores = self.one(s, seen)
            out.append(s)
            touched |= cores
        return out, touched

    def _declared_before(self, var, seen, what):
        if var not in seen:
            raise UndeclaredVariable(f"{what}: variable {var!r} used before its declaration")

    def one(self, s, seen):
        cc = self.chan_cfg
        if isinstance(s, Pulse):
            cores = frozenset({cc.core_of(s.dest)})
            touched = self.cores_of({s.dest} | set(s.tag.channels if s.tag else ()))
            var = s.phase_var or self.bindings.get(freq_key(s.freq, self.cal))
            if var is not None:
                self._declared_before(var, seen, "pulse")
                self.changed |= self.need_var(var, cores, f"pulse on {s.dest}")
            return s.with_cores(cores), touched
        if isinstance(s, (Gate, Read)):
            cores = self.cores_of(scope_channels(s.qubits, cc))
            return s.with_cores(cores), cores
        if isinstance(s, VirtualZ):
            key = freq_key(s.freq, self.cal)
            cores = frozenset(self.freq_cores.get(key, ())) | self.home_cores(s.freq)
            var = self.bindings.get(key)
            if var is not None:
                cores |= self.var_cores.get(var, frozenset())
            return s.with_cores(cores), cores
        if isinstance(s, Declare):
            seen.add(s.var)
            if s.dtype not in ("int", "phase", "amp"):
                raise SchemaError(f"variable {s.var!r}: unknown dtype {s.dtype!r}")
            cores = self.var_cores[s.var]
            return s.with_cores(cores), cores
        if isinstance(s, BindPhase):
            self._declared_before(s.var, seen, "bind_phase")
            if self.declared[s.var].dtype != "phase":
                raise CompileError(f"bind_phase needs a phase variable; {s.var!r} is {self.declared[s.var].dtype}")
            cores = self.var_cores[s.var]
            return s.with_cores(cores), cores
        if isinstance(s, (SetVar, AluVar)):
            out_var = s.var if isinstance(s, SetVar) else s.out
            self._declared_before(out_var, seen, s.name)
            cores = self.var_cores[out_var]
            operands = _vars_in(s.value) if isinstance(s, SetVar) else _vars_in(s.lhs) + [s.rhs]
            for v in operands:
                self._declared_before(v, seen, s.name)
                self.changed |= self.need_var(v, cores, s.name)
            return s.with_cores(cores), cores
        if isinstance(s, CONTROL):
            blocks = {}
            touched = frozenset()
            for key, block in child_blocks(s).items():
                inner_seen = set(seen)
                blocks[key], t = self.annotate(block, inner_seen)
                touched |= t
            if s.scope is not None:
                cores = self.cores_of(scope_channels(s.scope, cc))
                if not touched <= cores:
                    raise ScopeViolation(f"{s.name} scoped to cores {sorted(cores)} but its body touches "
                                         f"cores {sorted(touched - cores)}")
            else:
                cores = touched
            operands = [s.cond_rhs] if not isinstance(s, BranchFproc) else []
            operands += _vars_in(s.cond_lhs)
            for v in operands:
                self._declared_before(v, seen, s.name)
                self.changed |= self.need_var(v, cores, s.name)
            s = replace(s, **{k: tuple(v) for k, v in blocks.items()})
            return s.with_cores(cores), cores
        if isinstance(s, (Delay, Barrier)):
            chans = scope_channels(s.scope, cc)
            cores = self.cores_of(chans)
            return replace(s, scope=chans, cores=cores), frozenset()
        if isinstance(s, (IncQclk, Idle, Jump, JumpCond, JumpFproc, AluFproc)):
            if s.cores is not None and s.scope is None:
                cores = s.cores
            elif s.scope is not None:
                cores = self.cores_of(scope_channels(s.scope, cc))
            else:
                cores = self.all_cores
            for v in _vars_in(getattr(s, "cond_rhs", None)) + _vars_in(getattr(s, "cond_lhs", None)) \
                    + _vars_in(getattr(s, "lhs", None)) + _vars_in(getattr(s, "out", None)) \
                    + _vars_in(getattr(s, "amount", None)):
                self._declared_before(v, seen, s.name)
                self.changed |= self.need_var(v, cores, s.name)
            return s.with_cores(cores), cores
        if isinstance(s, Label):
            cores = s.cores if s.cores is not None else self.all_cores
            return s.with_cores(cores), frozenset()
        if isinstance(s, Done):
            return s.with_cores(self.all_cores), frozenset()
        raise CompileError(f"scope resolution: unsupported statement {s!r}")


def scope_pass(prog, chan_cfg, cal=None):
    """Annotate every statement with the cores it runs on.

    Control-flow scopes default to the union of cores touched by their
    bodies; variable scopes default to every core that reads or writes them.
    Inference runs to a fixed point because widening a variable's scope can
    widen the statements that use it.
    """
    prog = as_program(prog)
    sc = _Scoper(chan_cfg, cal)
    sc.collect(prog.statements)
    for _ in range(64):
        sc.changed = False
        stmts, _ = sc.annotate(prog.statements, set())
        if not sc.changed:
            break
    else:
        raise CompileError("scope inference did not converge")
    variables = {v: (sc.declared[v].dtype, tuple(sorted(sc.var_cores[v]))) for v in sc.declared}
    return prog.evolve(stmts, {"scope"}, prog.cfg, variables=variables,
                       bindings=dict(sc.bindings), program_cores=tuple(sorted(sc.all_cores)))


# --- control flow ----------------------------------------------------------------

def lower_control_flow(prog):
    """Replace branches and loops by labels and jumps; attach the CFG.

    Branch layout (false block falls through, true block is the jump target)::

        jump_cond/jump_fproc cond -> true_N
        false_N: <false> ; jump_i end_N
        true_N:  <true>
        end_N:

    Loops are pre-test; the back edge rewinds ``time_ref`` by the body
    duration (filled in by the scheduler)::

        loop_N: jump_cond cond -> body_N ; jump_i endloop_N
        body_N: <body> ; inc_qclk -D ; jump_i loop_N
        endloop_N:
    """
    prog = as_program(prog)
    existing = {s.label for s in walk(prog.statements) if isinstance(s, Label)}
    counter = itertools.count(1)

    def fresh():
        while True:
            n = next(counter)
            names = {f"true_{n}", f"false_{n}", f"end_{n}", f"loop_{n}", f"body_{n}", f"endloop_{n}"}
            if not names & existing:
                return n

    def go(stmts):
        out = []
        for s in stmts:
            c = s.cores
            if isinstance(s, (BranchVar, BranchFproc)):
                n = fresh()
                if isinstance(s, BranchVar):
                    jump = JumpCond(cond_lhs=s.cond_lhs, alu_cond=s.alu_cond, cond_rhs=s.cond_rhs,
                                    label=f"true_{n}", cores=c)
                else:
                    jump = JumpFproc(cond_lhs=s.cond_lhs, alu_cond=s.alu_cond, func_id=s.func_id,
                                     label=f"true_{n}", cores=c)
                out.append(jump)
                out.append(Label(label=f"false_{n}", cores=c))
                out.extend(go(s.false))
                out.append(Jump(label=f"end_{n}", cores=c))
                out.append(Label(label=f"true_{n}", cores=c))
                out.extend(go(s.true))
                out.append(Label(label=f"end_{n}", cores=c))
            elif isinstance(s, Loop):
                n = fresh()
                loop_id = f"loop_{n}"
                out.append(Label(label=loop_id, loop=loop_id, cores=c))
                out.append(JumpCond(cond_lhs=s.cond_lhs, alu_cond=s.alu_cond, cond_rhs=s.cond_rhs,
                                    label=f"body_{n}", cores=c))
                out.append(Jump(label=f"endloop_{n}", cores=c))
                out.append(Label(label=f"body_{n}", cores=c))
                out.extend(go(s.body))
                out.append(IncQclk(loop=loop_id, cores=c))
                out.append(Jump(label=loop_id, cores=c))
                out.append(Label(label=f"endloop_{n}", loop=loop_id, cores=c))
            else:
                out.append(s)
        return out

    stmts = go(prog.statements)
    labels = [s.label for s in stmts if isinstance(s, Label)]
    if len(labels) != len(set(labels)):
        dup = next(l for l in labels if labels.count(l) > 1)
        raise DuplicateLabel(f"label {dup!r} defined twice")
    return prog.evolve(stmts, {"lower_control_flow"}, build_cfg(stmts))


# --- FPROC ------------------------------------------------------------------------

def resolve_fproc(prog, fproc_map, clock_freq=CLOCK_FREQ):
    """Numeric FPROC ids plus an ``Idle`` wait before every FPROC consumer.

    The wait names the demodulation channel and the measurement delay in
    cycles; the scheduler turns it into ``end of last demod window + delay``.
    """
    prog = as_program(prog)

    def go(stmts):
        out = []
        for s in stmts:
            if isinstance(s, (BranchFproc, JumpFproc, AluFproc)):
                entry = fproc_map.lookup(s.func_id)
                wait = (entry["channel"], to_cycles(entry["measurement_delay"], clock_freq))
                idle = Idle(wait=wait, cores=s.cores)
                if not (out and isinstance(out[-1], Idle) and out[-1].wait == wait):
                    out.append(idle)
                s = replace(s, func_id=entry["func_id"])
            out.append(map_blocks(s, go))
        return out

    stmts = go(prog.statements)
    cfg = build_cfg(stmts) if prog.cfg is not None else None
    return prog.evolve(stmts, {"resolve_fproc"}, cfg)


# --- virtual Z --------------------------------------------------------------------

@dataclass
class PhaseLedger:
    """Software phase (in phase words) per frequency at each block entry, plus hardware bindings."""

    block_entry: dict = field(default_factory=dict)
    bound: dict = field(default_factory=dict)


def resolve_virtualz(prog, cal=None):
    """Fold virtual-Z rotations into pulse phases, or into phase registers for bound frequencies.

    Arithmetic is done on phase words so software and hardware resolution
    produce bit-identical pulse phases.
    """
    prog = as_program(prog)
    if prog.cfg is None:
        raise CompileError("resolve_virtualz needs lowered control flow")
    cfg = prog.cfg
    stmts = list(prog.statements)
    bindings = {}
    for s in stmts:
        if isinstance(s, BindPhase):
            bindings[freq_key(s.freq, cal)] = s.var
    ledger = PhaseLedger(bound=dict(bindings))
    exit_state = {}
    names = {}
    delete = set()

    def merge(block):
        preds = cfg.forward_predecessors(block)
        if not preds:
            return {}
        states = [exit_state[p] for p in preds if p in exit_state]
        keys = set().union(*states) if states else set()
        out = {}
        for k in keys:
            vals = {st.get(k, 0) for st in states}
            if len(vals) > 1:
                raise InconsistentPhaseAtMerge(names.get(k, k), block)
            out[k] = vals.pop()
        return {k: v for k, v in out.items() if v}

    for b in cfg.reverse_postorder():
        state = merge(b)
        ledger.block_entry[b] = dict(state)
        blk = cfg.blocks[b]
        for i in range(blk.start, blk.end):
            s = stmts[i]
            if isinstance(s, VirtualZ):
                key = freq_key(s.freq, cal)
                names[key] = s.freq
                if key in bindings:
                    var = bindings[key]
                    stmts[i] = AluVar(op="add", lhs=float(s.phase), rhs=var, out=var, cores=s.cores)
                else:
                    state[key] = (state.get(key, 0) + convert_phase(s.phase)) % PHASE_MOD
                    state = {k: v for k, v in state.items() if v}
                    delete.add(i)
            elif isinstance(s, Pulse):
                key = freq_key(s.freq, cal)
                if key in bindings:
                    if s.phase_var is None:
                        stmts[i] = replace(s, phase_var=bindings[key])
                elif state.get(key):
                    word = (convert_phase(s.phase) + state[key]) % PHASE_MOD
                    stmts[i] = replace(s, phase=phase_from_word(word))
        exit_state[b] = state
    for src, dst in cfg.back_edges:
        header = ledger.block_entry.get(dst, {})
        tail = exit_state.get(src, {})
        for k in set(header) | set(tail):
            if header.get(k, 0) != tail.get(k, 0):
                raise InconsistentPhaseAtMerge(names.get(k, k), dst)
    stmts = [s for i, s in enumerate(stmts) if i not in delete]
    return prog.evolve(stmts, {"resolve_virtualz"}, build_cfg(stmts), phase_ledger=ledger)
