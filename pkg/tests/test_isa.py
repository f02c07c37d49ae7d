import random

import pytest
from hypothesis import given, strategies as st

from distproc import isa
from distproc.errors import FieldOverflow, MalformedInstruction, NonzeroReservedBits, UnknownOpcode
from distproc.isa import (FROM_REG, AluFproc, AluOp, Done, Idle, IncQclk, Jump, JumpCond, JumpFproc,
                          PhaseReset, PulseFields, PulseWrite, PulseWriteTrig, Reg, RegAlu)

from conftest import golden
from oracles import ALU_FORMAT, PULSE_FORMAT, alu_reference, field_of

TYPES = {c.__name__: c for c in (AluFproc, Done, Idle, IncQclk, Jump, JumpCond, JumpFproc, PhaseReset,
                                 PulseWrite, PulseWriteTrig, RegAlu)}


def build(spec):
    spec = dict(spec)
    cls = TYPES[spec.pop("type")]

    def val(v):
        if isinstance(v, dict) and "reg" in v:
            return Reg(v["reg"])
        return FROM_REG if v == "reg" else v

    if "fields" in spec:
        spec["fields"] = PulseFields(**{k: val(v) for k, v in spec["fields"].items()})
    if "op" in spec:
        spec["op"] = AluOp[spec["op"]]
    if "in0" in spec:
        spec["in0"] = val(spec["in0"])
    return cls(**spec)


GOLDEN_WORDS = golden("isa_words.json")


@pytest.mark.parametrize("case", GOLDEN_WORDS, ids=[c["name"] for c in GOLDEN_WORDS])
def test_golden_layout(case):
    instr = build(case["instr"])
    word = isa.encode(instr)
    assert f"{word:032x}" == case["word"]
    assert isa.words_to_bytes([word]).hex() == case["bytes_le"]
    assert isa.decode(int(case["word"], 16)) == instr


def test_every_mnemonic_pinned():
    names = {build(c["instr"]).mnemonic for c in GOLDEN_WORDS}
    assert names == set(isa.OPCODES)


def test_start_time_bits():
    word = isa.encode(PulseWriteTrig(start_time=5))
    assert field_of(PULSE_FORMAT, word, "start") == 5
    assert word & 0x1F == 0


def test_idle_only_opcode_and_time():
    word = isa.encode(Idle(1184))
    assert word == (isa.OP_IDLE << 120) | (1184 << 5)


def test_jump_fproc_golden_fields():
    word = int(next(c for c in GOLDEN_WORDS if c["name"] == "jump_fproc_eq")["word"], 16)
    assert field_of(ALU_FORMAT, word, "fproc") == 1
    assert field_of(ALU_FORMAT, word, "dest") == 6
    assert isa.decode(word) == JumpFproc(AluOp.eq, 1, 6, 1)


def test_roundtrip_examples():
    assert isa.decode(isa.encode(PulseWrite())) == PulseWrite()
    i = RegAlu(AluOp.add, 3, 2, 5)
    assert isa.decode(isa.encode(i)) == i


def test_undefined_opcode():
    with pytest.raises(UnknownOpcode):
        isa.decode(0x7 << 124)
    with pytest.raises(UnknownOpcode):
        isa.decode(0x85 << 120)
    with pytest.raises(UnknownOpcode):  # ALU op 7 is unassigned
        isa.decode((1 << 124) | (7 << 120))


def test_reserved_bits_strict_and_lenient():
    word = isa.encode(RegAlu(AluOp.add, 3, 2, 5)) | 1
    with pytest.raises(NonzeroReservedBits):
        isa.decode(word)
    with pytest.warns(UserWarning):
        assert isa.decode(word, strict=False) == RegAlu(AluOp.add, 3, 2, 5)
    with pytest.raises(NonzeroReservedBits):
        isa.decode(isa.encode(Done()) | (1 << 7))


@pytest.mark.parametrize("instr", [
    PulseWriteTrig(start_time=1 << 32),
    PulseWrite(fields=PulseFields(phase=1 << 17)),
    PulseWrite(fields=PulseFields(freq=512)),
    PulseWrite(fields=PulseFields(amp=1 << 16)),
    PulseWrite(fields=PulseFields(env=1 << 24)),
    PulseWrite(fields=PulseFields(cfg=16)),
    PulseWrite(reg_addr=16),
    RegAlu(AluOp.add, 1 << 31, 0, 0),
    RegAlu(AluOp.add, -(1 << 31) - 1, 0, 0),
    Jump(1 << 16),
    JumpFproc(AluOp.eq, 0, 0, 1 << 16),
    Idle(-1),
])
def test_width_safety(instr):
    with pytest.raises(FieldOverflow):
        isa.encode(instr)


def test_register_index_checked():
    with pytest.raises(FieldOverflow):
        Reg(16)
    with pytest.raises(MalformedInstruction):
        isa.encode(PulseWrite(fields=PulseFields(cfg=FROM_REG)))


# ---------------------------------------------------------------- property tests

u = lambda bits: st.integers(0, (1 << bits) - 1)  # noqa: E731
regs = st.builds(Reg, st.integers(0, 15))
in0s = st.one_of(st.integers(-(1 << 31), (1 << 31) - 1), regs)
ops = st.sampled_from(list(AluOp))


def pulse_field(bits):
    return st.one_of(st.none(), u(bits), st.just(FROM_REG))


fields = st.builds(PulseFields, env=pulse_field(24), phase=pulse_field(17), freq=pulse_field(9),
                   amp=pulse_field(16), cfg=st.one_of(st.none(), u(4)))
instructions = st.one_of(
    st.builds(PulseWrite, u(4), fields),
    st.builds(PulseWriteTrig, u(4), fields, u(32)),
    st.builds(RegAlu, ops, in0s, u(4), u(4)),
    st.builds(Jump, u(16)),
    st.builds(JumpCond, ops, in0s, u(4), u(16)),
    st.builds(JumpFproc, ops, in0s, u(16), u(16)),
    st.builds(AluFproc, ops, in0s, u(4), u(16)),
    st.builds(IncQclk, in0s),
    st.builds(Idle, u(32)),
    st.just(Done()),
    st.just(PhaseReset()),
)


@given(instructions)
def test_roundtrip_property(instr):
    word = isa.encode(instr)
    assert 0 <= word < 1 << 128
    assert isa.decode(word) == instr
    assert isa.bytes_to_words(isa.words_to_bytes([word])) == [word]


@given(st.lists(instructions, max_size=12))
def test_listing_fixed_point(instrs):
    from distproc import asm
    words = [isa.encode(i) for i in instrs]
    listing = isa.disassemble(words)
    assert asm.assemble_listing(listing) == words
    assert isa.disassemble(asm.assemble_listing(listing)) == listing


def test_disassemble_empty():
    assert isa.disassemble([]) == ""


def test_disassemble_reports_index():
    with pytest.raises(UnknownOpcode) as exc:
        isa.disassemble([isa.encode(Done()), 0x7 << 124])
    assert exc.value.index == 1


def test_bulk_roundtrip_10k():
    rng = random.Random(1234)
    for _ in range(10_000):
        instr = random_instruction(rng)
        assert isa.decode(isa.encode(instr)) == instr


def random_instruction(rng):
    def imm_or_reg():
        return Reg(rng.randrange(16)) if rng.random() < 0.3 else rng.randrange(-(1 << 31), 1 << 31)

    def pf(bits):
        r = rng.random()
        return None if r < 0.25 else FROM_REG if r < 0.4 else rng.randrange(1 << bits)

    def flds():
        return PulseFields(pf(24), pf(17), pf(9), pf(16), None if rng.random() < 0.3 else rng.randrange(16))

    op = AluOp(rng.randrange(7))
    kind = rng.randrange(11)
    return [
        lambda: PulseWrite(rng.randrange(16), flds()),
        lambda: PulseWriteTrig(rng.randrange(16), flds(), rng.randrange(1 << 32)),
        lambda: RegAlu(op, imm_or_reg(), rng.randrange(16), rng.randrange(16)),
        lambda: Jump(rng.randrange(1 << 16)),
        lambda: JumpCond(op, imm_or_reg(), rng.randrange(16), rng.randrange(1 << 16)),
        lambda: JumpFproc(op, imm_or_reg(), rng.randrange(1 << 16), rng.randrange(1 << 16)),
        lambda: AluFproc(op, imm_or_reg(), rng.randrange(16), rng.randrange(1 << 16)),
        lambda: IncQclk(imm_or_reg()),
        lambda: Idle(rng.randrange(1 << 32)),
        lambda: Done(),
        lambda: PhaseReset(),
    ][kind]()


@given(ops, st.integers(-(1 << 31), (1 << 31) - 1), st.integers(-(1 << 31), (1 << 31) - 1))
def test_alu_matches_reference(op, a, b):
    assert isa.alu(op, a, b) == alu_reference(op.name, a, b)


def test_alu_wraparound():
    assert isa.alu(AluOp.add, (1 << 31) - 1, 1) == -(1 << 31)
    assert isa.alu(AluOp.sub, -(1 << 31), 1) == (1 << 31) - 1
    assert isa.alu(AluOp.lt, 3, 4) == 1 and isa.alu(AluOp.gt, 3, 4) == 0
