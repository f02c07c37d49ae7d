"""Multi-level IR and the pass pipeline that lowers it to per-core assembly."""

import json

from .calibration import FprocChannelMap, GateCalibration
from .cfg import BasicBlock, ControlFlowGraph, build_cfg
from .compiler import (DEFAULT_PASSES, PASSES, CompileContext, CompiledProgram, check_pass_order, compile_program,
                       emit, lint)
from .lint import Diagnostic, lint_core, lint_program
from .passes import (IRProgram, PhaseLedger, as_program, lower_control_flow, resolve_fproc, resolve_gates,
                     resolve_virtualz, scope_pass)
from .scheduler import TimingModel, schedule
from .statements import (AluFproc, AluVar, Barrier, BindPhase, BranchFproc, BranchVar, Declare, Delay, Done,
                         Gate, GateTag, Idle, IncQclk, Jump, JumpCond, JumpFproc, Label, Loop, Pulse, Read,
                         SetVar, VirtualZ, program_from_list, program_to_list, statement_from_dict,
                         statement_to_dict)

compile = compile_program  # noqa: A001


def load_program(path):
    """Read an IR program (JSON list of statements) after schema validation."""
    from ..asm import validate
    with open(path) as f:
        doc = json.load(f)
    validate(doc, "ir.schema.json")
    return program_from_list(doc)
