"""Instruction set: data model and bit-exact 128-bit encoding.

Two word formats exist.

ALU / control-flow format::

    127:124 opcode | 123 in0 is register | 122:120 ALU op | 119:88 ALU input 0
    87:84 ALU input 1 (register) | 83:68 dest reg or jump addr | 67:52 FPROC id
    51:0 zero

Pulse format (``pulse_write``, ``pulse_write_trig``, ``idle`` and the two
opcode-only instructions)::

    127:120 opcode | 119:116 reg addr | 115:114 env ctrl | 113:90 env word
    89:88 phase ctrl | 87:71 phase word | 70:69 freq ctrl | 68:60 freq word
    59:58 amp ctrl | 57:42 amp word | 41 cfg en | 40:37 cfg word
    36:5 start time | 4:0 zero

Each two-bit ctrl field holds write-enable in its low bit and register select
in its high bit.

Opcode table (single source of truth; see ``OPCODES``)::

    top nibble 0x1  reg_alu          0x4  alu_fproc
               0x2  jump_i           0x5  jump_fproc
               0x3  jump_cond        0x6  inc_qclk
    full byte  0x80 pulse_write      0x83 done_stb
               0x81 pulse_write_trig 0x84 phase_reset
               0x82 idle
"""

from dataclasses import dataclass, field
from enum import IntEnum
from typing import ClassVar, Union
import warnings

from .errors import IsaError, FieldOverflow, MalformedInstruction, NonzeroReservedBits, UnknownOpcode

WORD_BITS = 128
WORD_BYTES = 16
N_REGS = 16

# ALU-format opcode nibbles (bits 127:124)
OP_REG_ALU = 0x1
OP_JUMP_I = 0x2
OP_JUMP_COND = 0x3
OP_ALU_FPROC = 0x4
OP_JUMP_FPROC = 0x5
OP_INC_QCLK = 0x6
# pulse-format opcode bytes (bits 127:120)
OP_PULSE_WRITE = 0x80
OP_PULSE_WRITE_TRIG = 0x81
OP_IDLE = 0x82
OP_DONE = 0x83
OP_PHASE_RESET = 0x84

OPCODES = {
    "reg_alu": OP_REG_ALU,
    "jump_i": OP_JUMP_I,
    "jump_cond": OP_JUMP_COND,
    "alu_fproc": OP_ALU_FPROC,
    "jump_fproc": OP_JUMP_FPROC,
    "inc_qclk": OP_INC_QCLK,
    "pulse_write": OP_PULSE_WRITE,
    "pulse_write_trig": OP_PULSE_WRITE_TRIG,
    "idle": OP_IDLE,
    "done_stb": OP_DONE,
    "phase_reset": OP_PHASE_RESET,
}
PULSE_FAMILY = 0x8

# (lsb, width) of every field
F_OPCODE8 = (120, 8)
F_OPCODE4 = (124, 4)
F_IN0_IS_REG = (123, 1)
F_ALU_OP = (120, 3)
F_IN0 = (88, 32)
F_IN1 = (84, 4)
F_DEST = (68, 16)
F_FPROC = (52, 16)

F_REG_ADDR = (116, 4)
F_ENV_CTRL, F_ENV = (114, 2), (90, 24)
F_PHASE_CTRL, F_PHASE = (88, 2), (71, 17)
F_FREQ_CTRL, F_FREQ = (69, 2), (60, 9)
F_AMP_CTRL, F_AMP = (58, 2), (42, 16)
F_CFG_EN, F_CFG = (41, 1), (37, 4)
F_START = (5, 32)

PULSE_FIELD_LAYOUT = {
    # name: (ctrl field, word field)
    "env": (F_ENV_CTRL, F_ENV),
    "phase": (F_PHASE_CTRL, F_PHASE),
    "freq": (F_FREQ_CTRL, F_FREQ),
    "amp": (F_AMP_CTRL, F_AMP),
}

ENV_ADDR_BITS = 12
ENV_LEN_BITS = 12
PHASE_BITS = 17
FREQ_ADDR_BITS = 9
AMP_BITS = 16
CFG_BITS = 4


class AluOp(IntEnum):
    id0 = 0
    add = 1
    sub = 2
    id1 = 3
    eq = 4
    lt = 5
    gt = 6


def to_signed32(x):
    x &= 0xFFFFFFFF
    return x - (1 << 32) if x & 0x80000000 else x


def alu(op, in0, in1):
    """Evaluate one ALU operation on 32-bit signed operands."""
    op = AluOp(op)
    if op is AluOp.add:
        return to_signed32(in0 + in1)
    if op is AluOp.sub:
        return to_signed32(in0 - in1)
    if op is AluOp.id0:
        return to_signed32(in0)
    if op is AluOp.id1:
        return to_signed32(in1)
    if op is AluOp.eq:
        return int(in0 == in1)
    if op is AluOp.lt:
        return int(in0 < in1)
    return int(in0 > in1)


class _FromReg:
    """Marker for a pulse field sourced from the instruction's register."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "FROM_REG"

    def __reduce__(self):
        return (_FromReg, ())


FROM_REG = _FromReg()


@dataclass(frozen=True)
class Reg:
    index: int

    def __post_init__(self):
        if not 0 <= self.index < N_REGS:
            raise FieldOverflow("register", self.index, 4)

    def __str__(self):
        return f"r{self.index}"


Operand = Union[int, Reg]
FieldValue = Union[None, int, _FromReg]


@dataclass(frozen=True)
class PulseFields:
    """Pulse-register writes carried by one pulse instruction.

    Each field is ``None`` (not written), an immediate word, or ``FROM_REG``
    (value taken from the instruction's ``reg_addr``). ``cfg`` cannot come from
    a register.
    """

    env: FieldValue = None
    phase: FieldValue = None
    freq: FieldValue = None
    amp: FieldValue = None
    cfg: Union[None, int] = None

    def uses_register(self):
        return any(v is FROM_REG for v in (self.env, self.phase, self.freq, self.amp))


def env_word(address, length):
    """Pack a 12-bit envelope start address and 12-bit length (cycles)."""
    _check("env address", address, ENV_ADDR_BITS)
    _check("env length", length, ENV_LEN_BITS)
    return (address << ENV_LEN_BITS) | length


def split_env_word(word):
    return word >> ENV_LEN_BITS, word & ((1 << ENV_LEN_BITS) - 1)


class Instruction:
    mnemonic: ClassVar[str]


@dataclass(frozen=True)
class PulseWrite(Instruction):
    mnemonic: ClassVar[str] = "pulse_write"
    reg_addr: int = 0
    fields: PulseFields = field(default_factory=PulseFields)


@dataclass(frozen=True)
class PulseWriteTrig(Instruction):
    mnemonic: ClassVar[str] = "pulse_write_trig"
    reg_addr: int = 0
    fields: PulseFields = field(default_factory=PulseFields)
    start_time: int = 0


@dataclass(frozen=True)
class RegAlu(Instruction):
    mnemonic: ClassVar[str] = "reg_alu"
    op: AluOp
    in0: Operand
    in1_reg: int
    dest_reg: int


@dataclass(frozen=True)
class Jump(Instruction):
    mnemonic: ClassVar[str] = "jump_i"
    addr: int


@dataclass(frozen=True)
class JumpCond(Instruction):
    mnemonic: ClassVar[str] = "jump_cond"
    op: AluOp
    in0: Operand
    in1_reg: int
    addr: int


@dataclass(frozen=True)
class JumpFproc(Instruction):
    mnemonic: ClassVar[str] = "jump_fproc"
    op: AluOp
    in0: Operand
    addr: int
    fproc_id: int


@dataclass(frozen=True)
class AluFproc(Instruction):
    mnemonic: ClassVar[str] = "alu_fproc"
    op: AluOp
    in0: Operand
    dest_reg: int
    fproc_id: int


@dataclass(frozen=True)
class IncQclk(Instruction):
    mnemonic: ClassVar[str] = "inc_qclk"
    in0: Operand


@dataclass(frozen=True)
class Idle(Instruction):
    mnemonic: ClassVar[str] = "idle"
    end_time: int


@dataclass(frozen=True)
class Done(Instruction):
    mnemonic: ClassVar[str] = "done_stb"


@dataclass(frozen=True)
class PhaseReset(Instruction):
    mnemonic: ClassVar[str] = "phase_reset"


# --- encoding ----------------------------------------------------------------

def _check(name, value, width):
    if isinstance(value, bool) or not isinstance(value, int):
        raise MalformedInstruction(f"field {name!r} must be an int, got {value!r}")
    if not 0 <= value < (1 << width):
        raise FieldOverflow(name, value, width)


def _put(name, value, spec):
    lsb, width = spec
    _check(name, value, width)
    return value << lsb


def _get(word, spec):
    lsb, width = spec
    return (word >> lsb) & ((1 << width) - 1)


def _mask(*specs):
    m = 0
    for lsb, width in specs:
        m |= ((1 << width) - 1) << lsb
    return m


def _in0_bits(in0):
    if isinstance(in0, Reg):
        return _put("in0_is_reg", 1, F_IN0_IS_REG) | _put("in0", in0.index, F_IN0)
    if isinstance(in0, bool) or not isinstance(in0, int):
        raise MalformedInstruction(f"ALU input 0 must be an int or Reg, got {in0!r}")
    if not -(1 << 31) <= in0 < (1 << 31):
        raise FieldOverflow("in0", in0, 32)
    return _put("in0", in0 & 0xFFFFFFFF, F_IN0)


def _alu_op_bits(op):
    try:
        op = AluOp(op)
    except ValueError:
        raise MalformedInstruction(f"unknown ALU op {op!r}") from None
    return _put("alu_op", int(op), F_ALU_OP)


def _pulse_field_bits(fields):
    word = 0
    for name, (ctrl_spec, word_spec) in PULSE_FIELD_LAYOUT.items():
        value = getattr(fields, name)
        if value is None:
            continue
        if value is FROM_REG:
            word |= _put(f"{name} ctrl", 0b11, ctrl_spec)
        else:
            word |= _put(f"{name} ctrl", 0b01, ctrl_spec) | _put(name, value, word_spec)
    if fields.cfg is not None:
        if fields.cfg is FROM_REG:
            raise MalformedInstruction("cfg word must be an immediate")
        word |= _put("cfg_en", 1, F_CFG_EN) | _put("cfg", fields.cfg, F_CFG)
    return word


def encode(instr):
    """Encode one instruction into a 128-bit integer word."""
    if isinstance(instr, (PulseWrite, PulseWriteTrig)):
        word = _put("opcode", OPCODES[instr.mnemonic], F_OPCODE8)
        word |= _put("reg_addr", instr.reg_addr, F_REG_ADDR)
        word |= _pulse_field_bits(instr.fields)
        if isinstance(instr, PulseWriteTrig):
            word |= _put("start_time", instr.start_time, F_START)
        return word
    if isinstance(instr, Idle):
        return _put("opcode", OP_IDLE, F_OPCODE8) | _put("end_time", instr.end_time, F_START)
    if isinstance(instr, (Done, PhaseReset)):
        return _put("opcode", OPCODES[instr.mnemonic], F_OPCODE8)

    word = _put("opcode", OPCODES[instr.mnemonic], F_OPCODE4)
    if isinstance(instr, Jump):
        return word | _put("addr", instr.addr, F_DEST)
    if isinstance(instr, IncQclk):
        return word | _in0_bits(instr.in0)
    word |= _alu_op_bits(instr.op) | _in0_bits(instr.in0)
    if isinstance(instr, RegAlu):
        return word | _put("in1_reg", instr.in1_reg, F_IN1) | _put("dest_reg", instr.dest_reg, F_DEST)
    if isinstance(instr, JumpCond):
        return word | _put("in1_reg", instr.in1_reg, F_IN1) | _put("addr", instr.addr, F_DEST)
    if isinstance(instr, JumpFproc):
        return word | _put("addr", instr.addr, F_DEST) | _put("fproc_id", instr.fproc_id, F_FPROC)
    if isinstance(instr, AluFproc):
        return word | _put("dest_reg", instr.dest_reg, F_DEST) | _put("fproc_id", instr.fproc_id, F_FPROC)
    raise MalformedInstruction(f"not an instruction: {instr!r}")


# --- decoding ----------------------------------------------------------------

_ALU_COMMON = (F_OPCODE4, F_IN0_IS_REG, F_ALU_OP, F_IN0)
_USED_MASKS = {
    OP_REG_ALU: _mask(*_ALU_COMMON, F_IN1, F_DEST),
    OP_JUMP_I: _mask(F_OPCODE4, F_DEST),
    OP_JUMP_COND: _mask(*_ALU_COMMON, F_IN1, F_DEST),
    OP_ALU_FPROC: _mask(*_ALU_COMMON, F_DEST, F_FPROC),
    OP_JUMP_FPROC: _mask(*_ALU_COMMON, F_DEST, F_FPROC),
    OP_INC_QCLK: _mask(F_OPCODE4, F_IN0_IS_REG, F_IN0),
    OP_PULSE_WRITE: _mask(F_OPCODE8, F_REG_ADDR, F_ENV_CTRL, F_ENV, F_PHASE_CTRL, F_PHASE,
                          F_FREQ_CTRL, F_FREQ, F_AMP_CTRL, F_AMP, F_CFG_EN, F_CFG),
    OP_IDLE: _mask(F_OPCODE8, F_START),
    OP_DONE: _mask(F_OPCODE8),
    OP_PHASE_RESET: _mask(F_OPCODE8),
}
_USED_MASKS[OP_PULSE_WRITE_TRIG] = _USED_MASKS[OP_PULSE_WRITE] | _mask(F_START)

_NAMES = {v: k for k, v in OPCODES.items()}


def _reserved(mnemonic, mask, strict):
    if strict:
        raise NonzeroReservedBits(mnemonic, mask)
    warnings.warn(str(NonzeroReservedBits(mnemonic, mask)), stacklevel=3)


def _decode_in0(word):
    raw = _get(word, F_IN0)
    if _get(word, F_IN0_IS_REG):
        if raw >= N_REGS:
            raise MalformedInstruction(f"register operand {raw} out of range")
        return Reg(raw)
    return to_signed32(raw)


def _decode_pulse_fields(word, strict):
    values = {}
    stray = 0
    for name, (ctrl_spec, word_spec) in PULSE_FIELD_LAYOUT.items():
        ctrl = _get(word, ctrl_spec)
        value = _get(word, word_spec)
        if not ctrl & 1:
            values[name] = None
            if ctrl or value:
                stray |= _mask(ctrl_spec, word_spec)
        elif ctrl & 2:
            values[name] = FROM_REG
            if value:
                stray |= _mask(word_spec)
        else:
            values[name] = value
    cfg = _get(word, F_CFG)
    if _get(word, F_CFG_EN):
        values["cfg"] = cfg
    else:
        values["cfg"] = None
        if cfg:
            stray |= _mask(F_CFG)
    if stray:
        _reserved("pulse field", stray, strict)
    return PulseFields(**values)


def decode(word, strict=True):
    """Decode one 128-bit word. Inverse of :func:`encode` on well-formed words."""
    if not 0 <= word < (1 << WORD_BITS):
        raise FieldOverflow("word", word, WORD_BITS)
    top8 = _get(word, F_OPCODE8)
    top4 = top8 >> 4
    opcode = top8 if top4 == PULSE_FAMILY else top4
    if opcode not in _USED_MASKS:
        raise UnknownOpcode(top8)
    mnemonic = _NAMES[opcode]
    stray = word & ~_USED_MASKS[opcode] & ((1 << WORD_BITS) - 1)
    if stray:
        _reserved(mnemonic, stray, strict)

    if opcode in (OP_PULSE_WRITE, OP_PULSE_WRITE_TRIG):
        fields = _decode_pulse_fields(word, strict)
        reg_addr = _get(word, F_REG_ADDR)
        if opcode == OP_PULSE_WRITE:
            return PulseWrite(reg_addr, fields)
        return PulseWriteTrig(reg_addr, fields, _get(word, F_START))
    if opcode == OP_IDLE:
        return Idle(_get(word, F_START))
    if opcode == OP_DONE:
        return Done()
    if opcode == OP_PHASE_RESET:
        return PhaseReset()
    if opcode == OP_JUMP_I:
        return Jump(_get(word, F_DEST))
    if opcode == OP_INC_QCLK:
        return IncQclk(_decode_in0(word))

    raw_op = _get(word, F_ALU_OP)
    try:
        op = AluOp(raw_op)
    except ValueError:
        raise UnknownOpcode(top8) from None
    in0 = _decode_in0(word)
    dest = _get(word, F_DEST)
    if opcode == OP_REG_ALU:
        if dest >= N_REGS:
            raise MalformedInstruction(f"destination register {dest} out of range")
        return RegAlu(op, in0, _get(word, F_IN1), dest)
    if opcode == OP_JUMP_COND:
        return JumpCond(op, in0, _get(word, F_IN1), dest)
    if opcode == OP_JUMP_FPROC:
        return JumpFproc(op, in0, dest, _get(word, F_FPROC))
    if dest >= N_REGS:
        raise MalformedInstruction(f"destination register {dest} out of range")
    return AluFproc(op, in0, dest, _get(word, F_FPROC))


# --- binary format -----------------------------------------------------------

def words_to_bytes(words):
    """Flat little-endian byte image, 16 bytes per word."""
    return b"".join(int(w).to_bytes(WORD_BYTES, "little") for w in words)


def bytes_to_words(data):
    if len(data) % WORD_BYTES:
        raise ValueError(f"binary length {len(data)} is not a multiple of {WORD_BYTES}")
    return [int.from_bytes(data[i:i + WORD_BYTES], "little") for i in range(0, len(data), WORD_BYTES)]


# --- disassembly -------------------------------------------------------------

def _fmt_operand(x):
    return str(x) if isinstance(x, Reg) else str(int(x))


def _fmt_field(value):
    if value is FROM_REG:
        return "reg"
    return f"0x{value:x}"


def format_instruction(instr):
    """One-line text form of an instruction; parsed back by ``asm.parse_listing``."""
    name = instr.mnemonic
    if isinstance(instr, (PulseWrite, PulseWriteTrig)):
        parts = [name]
        if isinstance(instr, PulseWriteTrig):
            parts.append(f"start={instr.start_time}")
        if instr.reg_addr or instr.fields.uses_register():
            parts.append(f"reg=r{instr.reg_addr}")
        for fname in ("env", "phase", "freq", "amp", "cfg"):
            value = getattr(instr.fields, fname)
            if value is not None:
                parts.append(f"{fname}={_fmt_field(value)}")
        return " ".join(parts)
    if isinstance(instr, Idle):
        return f"{name} end={instr.end_time}"
    if isinstance(instr, (Done, PhaseReset)):
        return name
    if isinstance(instr, Jump):
        return f"{name} addr={instr.addr}"
    if isinstance(instr, IncQclk):
        return f"{name} in0={_fmt_operand(instr.in0)}"
    head = f"{name} op={AluOp(instr.op).name} in0={_fmt_operand(instr.in0)}"
    if isinstance(instr, RegAlu):
        return f"{head} in1=r{instr.in1_reg} dest=r{instr.dest_reg}"
    if isinstance(instr, JumpCond):
        return f"{head} in1=r{instr.in1_reg} addr={instr.addr}"
    if isinstance(instr, JumpFproc):
        return f"{head} addr={instr.addr} fproc={instr.fproc_id}"
    return f"{head} dest=r{instr.dest_reg} fproc={instr.fproc_id}"


def disassemble(words, strict=True):
    """Render a word sequence as a listing, one ``addr: text`` line per word."""
    lines = []
    for i, word in enumerate(words):
        try:
            instr = decode(word, strict=strict)
        except IsaError as exc:
            exc.index = i
            exc.args = (f"word {i}: {exc}",)
            raise
        lines.append(f"{i:04d}: {format_instruction(instr)}")
    return "\n".join(lines) + ("\n" if lines else "")
