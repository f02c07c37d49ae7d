"""Pass pipeline driver and assembly emission."""

from dataclasses import dataclass, field
import json

from .. import asm as asm_mod
from ..elementconfig import convert_phase
from ..errors import CompileError, DistprocError, InvalidPassOrder, PassErrors
from ..timing import CLOCK_FREQ, PROLOGUE_CYCLES, CostTable
from .lint import lint_program
from .passes import (as_program, lower_control_flow, resolve_fproc, resolve_gates, resolve_virtualz,
                     scope_pass)
from .scheduler import schedule
from .statements import (CONTROL, AluFproc, AluVar, Barrier, BindPhase, Declare, Delay, Done, Gate, Idle,
                         IncQclk, Jump, JumpCond, JumpFproc, Label, Pulse, Read, SetVar, VirtualZ, walk)

PHASE_TMP = "_phase_tmp"
DEFAULT_PASSES = ("resolve_gates", "scope", "lower_control_flow", "resolve_fproc", "schedule",
                  "resolve_virtualz", "lint", "emit")


@dataclass
class CompileContext:
    chan_cfg: object
    cal: object = None
    fproc_map: object = None
    costs: CostTable = field(default_factory=CostTable)
    clock_freq: float = CLOCK_FREQ
    prologue: int = PROLOGUE_CYCLES


@dataclass
class CompiledProgram:
    """Per-core assembly (core key string -> op list) plus the debug symbol table.

    ``symbols`` maps ``(core key string, instruction address)`` to the gate
    provenance of the pulse at that address; ``ir_index`` is the position of
    the pulse in the lowered statement list ``ir.statements``.
    """

    asm: dict
    symbols: dict
    ir: object = None
    diagnostics: list = field(default_factory=list)

    def assemble(self, chan_cfg, elem_cfg=None):
        return asm_mod.assemble(self.asm, chan_cfg, elem_cfg)

    def symbols_json(self):
        return [dict(v, core=k[0], address=k[1]) for k, v in sorted(self.symbols.items())]

    @staticmethod
    def symbols_from_json(entries):
        out = {}
        for e in entries:
            e = dict(e)
            out[(e.pop("core"), e.pop("address"))] = e
        return out

    def to_json(self):
        return json.dumps({"asm": self.asm, "symbols": self.symbols_json()}, sort_keys=True)


# --- emission ----------------------------------------------------------------------

def _freq_hz(freq, cal):
    if isinstance(freq, str):
        if cal is None:
            raise CompileError(f"named frequency {freq!r} needs a calibration")
        return cal.freq_hz(freq)
    return float(freq)


def _emit_core(core, stmts, variables, ctx, symbols):
    key = ctx.chan_cfg.core_key(core)
    key_s = ",".join(key)
    ops = [{"op": "phase_reset"}]
    for var, (dtype, cores) in sorted(variables.items()):
        if core in cores:
            ops.append({"op": "declare_reg", "name": var, "dtype": dtype})
    needs_tmp = any(isinstance(s, Pulse) and s.phase_var and convert_phase(s.phase)
                    and core in (s.cores or ()) for s in stmts)
    if needs_tmp:
        ops.append({"op": "declare_reg", "name": PHASE_TMP, "dtype": "phase"})
    addr = 1

    def push(op):
        nonlocal addr
        ops.append(op)
        if op["op"] not in ("jump_label", "declare_reg"):
            addr += 1

    for index, s in enumerate(stmts):
        if s.cores is None or core not in s.cores:
            continue
        if isinstance(s, Pulse):
            if s.start_time is None:
                raise CompileError(f"pulse on {s.dest} has no start_time; run schedule or set it explicitly")
            phase = float(s.phase)
            if s.phase_var is not None:
                if convert_phase(phase):
                    push({"op": "reg_alu", "in0": phase, "alu_op": "add", "rhs": s.phase_var, "out": PHASE_TMP})
                    phase = PHASE_TMP
                else:
                    phase = s.phase_var
            tag = s.tag
            symbols[(key_s, addr)] = {
                "channel": s.dest,
                "gate": tag.gate if tag else None,
                "qubits": list(tag.qubits) if tag else [],
                "instance": tag.instance if tag else None,
                "primary": bool(tag.primary) if tag else False,
                "freq": s.freq,
                "phase_word": convert_phase(tag.base_phase if tag else float(s.phase)),
                "bound": s.phase_var,
                "ir_index": index,
            }
            push({"op": "pulse", "freq": _freq_hz(s.freq, ctx.cal), "phase": phase, "amp": s.amp,
                  "env": s.env, "start_time": int(s.start_time), "dest": s.dest})
        elif isinstance(s, AluVar):
            op = {"op": "reg_alu", "in0": s.lhs, "alu_op": s.op, "rhs": s.rhs, "out": s.out}
            push(op)
        elif isinstance(s, SetVar):
            push({"op": "reg_alu", "in0": s.value, "alu_op": "id0", "out": s.var})
        elif isinstance(s, Label):
            push({"op": "jump_label", "dest_label": s.label})
        elif isinstance(s, Jump):
            push({"op": "jump_i", "jump_label": s.label})
        elif isinstance(s, JumpCond):
            push({"op": "jump_cond", "in0": s.cond_lhs, "alu_op": s.alu_cond, "rhs": s.cond_rhs,
                  "jump_label": s.label})
        elif isinstance(s, JumpFproc):
            _check_fproc_id(s.func_id)
            push({"op": "jump_fproc", "in0": s.cond_lhs, "alu_op": s.alu_cond, "jump_label": s.label,
                  "func_id": s.func_id})
        elif isinstance(s, AluFproc):
            _check_fproc_id(s.func_id)
            push({"op": "alu_fproc", "in0": s.lhs, "alu_op": s.op, "out": s.out, "func_id": s.func_id})
        elif isinstance(s, Idle):
            if s.end_time is None:
                raise CompileError("idle without end_time; run schedule")
            push({"op": "idle", "end_time": int(s.end_time)})
        elif isinstance(s, IncQclk):
            if s.amount is None:
                raise CompileError("loop back edge has no time rewind; run schedule")
            push({"op": "inc_qclk", "in0": s.amount})
        elif isinstance(s, Done):
            push({"op": "done_stb"})
        elif isinstance(s, VirtualZ):
            raise CompileError("virtual_z left in the program; run resolve_virtualz")
        elif isinstance(s, (Gate, Read) + CONTROL):
            raise CompileError(f"{s.name} left in the program; the pass list must lower it before emission")
        elif isinstance(s, (Declare, BindPhase, Delay, Barrier)):
            pass
        else:
            raise CompileError(f"cannot emit {s!r}")
    if ops[-1]["op"] != "done_stb":
        push({"op": "done_stb"})
    return key_s, ops


def _check_fproc_id(func_id):
    if not isinstance(func_id, int):
        raise CompileError(f"FPROC id {func_id!r} is not numeric; run resolve_fproc")


def emit(prog, ctx):
    """Per-core assembly plus symbol table from a fully lowered, timed program."""
    prog = as_program(prog)
    stmts = prog.statements
    variables = {v: (d, set(c)) for v, (d, c) in prog.meta.get("variables", {}).items()}
    cores = set(prog.meta.get("program_cores", ()))
    for s in stmts:
        if isinstance(s, (Pulse, AluVar, SetVar, Jump, JumpCond, JumpFproc, AluFproc, Idle, IncQclk)) and s.cores:
            cores |= set(s.cores)
    symbols = {}
    program = {}
    for core in sorted(cores):
        key_s, ops = _emit_core(core, stmts, variables, ctx, symbols)
        program[key_s] = ops
    return CompiledProgram(program, symbols, prog)


def fproc_waits(ctx):
    if ctx.fproc_map is None:
        return None
    from ..timing import to_cycles
    return {e["func_id"]: (e["channel"], to_cycles(e["measurement_delay"], ctx.clock_freq))
            for _, e in ctx.fproc_map.items()}


def lint(prog, ctx):
    """Diagnostics for a lowered program with timestamps (empty when it is executable as timed)."""
    compiled = emit(prog, ctx)
    return lint_program(compiled.asm, ctx.chan_cfg, ctx.costs, fproc_waits(ctx))


# --- pipeline ------------------------------------------------------------------------

def _no_high_level(prog, kinds, what):
    if any(isinstance(s, kinds) for s in walk(prog.statements)):
        raise InvalidPassOrder(f"{what}: program still contains {'/'.join(k.name for k in kinds)} statements")


def _p_resolve_gates(prog, ctx):
    if ctx.cal is None:
        if any(isinstance(s, (Gate, Read)) for s in walk(prog.statements)):
            raise CompileError("gate statements need a calibration")
        return prog.evolve(applied={"resolve_gates"}, cfg=prog.cfg)
    return resolve_gates(prog, ctx.cal, ctx.chan_cfg, ctx.clock_freq)


def _p_scope(prog, ctx):
    return scope_pass(prog, ctx.chan_cfg, ctx.cal)


def _p_lower(prog, ctx):
    return lower_control_flow(prog)


def _p_fproc(prog, ctx):
    if ctx.fproc_map is None:
        if any(isinstance(s, (JumpFproc, AluFproc)) or s.name == "branch_fproc" for s in walk(prog.statements)):
            raise CompileError("FPROC statements need an FPROC channel map")
        return prog.evolve(applied={"resolve_fproc"}, cfg=prog.cfg)
    return resolve_fproc(prog, ctx.fproc_map, ctx.clock_freq)


def _p_schedule(prog, ctx):
    _no_high_level(prog, (Gate, Read), "schedule")
    return schedule(prog, ctx.chan_cfg, ctx.costs, ctx.clock_freq, ctx.prologue)


def _p_virtualz(prog, ctx):
    return resolve_virtualz(prog, ctx.cal)


def _p_lint(prog, ctx):
    diags = lint(prog, ctx)
    if diags:
        raise PassErrors([CompileError(str(d)) for d in diags])
    return prog.evolve(applied={"lint"}, cfg=prog.cfg, diagnostics=[])


PASSES = {
    "resolve_gates": (_p_resolve_gates, ()),
    "scope": (_p_scope, ()),
    "lower_control_flow": (_p_lower, ("scope",)),
    "resolve_fproc": (_p_fproc, ("scope",)),
    "schedule": (_p_schedule, ("scope", "lower_control_flow", "resolve_fproc")),
    "resolve_virtualz": (_p_virtualz, ("scope", "lower_control_flow")),
    "lint": (_p_lint, ("scope", "lower_control_flow")),
}


def check_pass_order(passes):
    passes = list(passes)
    if not passes or passes[-1] != "emit":
        raise InvalidPassOrder("the pass list must end with 'emit'")
    done = set()
    for name in passes[:-1]:
        if name == "emit":
            raise InvalidPassOrder("'emit' may only appear last")
        if name not in PASSES:
            raise InvalidPassOrder(f"unknown pass {name!r}; known passes: {', '.join(PASSES)}")
        missing = [r for r in PASSES[name][1] if r not in done]
        if missing:
            raise InvalidPassOrder(f"pass {name!r} needs {', '.join(missing)} to run first")
        done.add(name)
    if "scope" not in done:
        raise InvalidPassOrder("'emit' needs the 'scope' pass")
    return passes


def compile_program(prog, cal, chan_cfg, fproc_map=None, passes=DEFAULT_PASSES, *, costs=None,
                    clock_freq=None, prologue=PROLOGUE_CYCLES):
    """Run the pass list and emit per-core assembly.

    ``prog`` is an IR statement list (dicts or statements) or an IRProgram.
    Pass errors from independent failures are aggregated in :class:`PassErrors`.
    """
    passes = check_pass_order(passes)
    ctx = CompileContext(chan_cfg, cal, fproc_map, costs or CostTable(),
                         clock_freq or chan_cfg.clock_freq, prologue)
    prog = as_program(prog)
    for name in passes[:-1]:
        try:
            prog = PASSES[name][0](prog, ctx)
        except DistprocError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise CompileError(f"pass {name!r} failed: {exc}") from exc
    compiled = emit(prog, ctx)
    compiled.diagnostics = lint_program(compiled.asm, chan_cfg, ctx.costs, fproc_waits(ctx)) \
        if "lint" not in passes else []
    return compiled
