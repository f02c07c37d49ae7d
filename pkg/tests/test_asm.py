import copy
import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from distproc import asm, isa
from distproc.elementconfig import (ElementConfig, compute_freq_entry, convert_amp, convert_phase,
                                    generate_envelope)
from distproc.errors import (AmplitudeOutOfRange, BufferOverflow, DuplicateLabel, FrequencyOutOfRange,
                             NonPositiveWidth, ProgramTooLarge, RegisterTypeMismatch, SchemaError,
                             TooManyRegisters, UndefinedLabel, UndefinedRegister, UnknownChannel,
                             UnknownEnvelopeFunction)
from distproc.isa import AluOp, Done, Idle, Jump, JumpFproc, PhaseReset, PulseWriteTrig

KEY = "Q1.qdrv,Q1.rdrv,Q1.rdlo"


def one_core(instrs, key=KEY):
    return {key: instrs}


# ------------------------------------------------------------------ conversions

def test_convert_phase():
    assert convert_phase(0.0) == 0
    assert convert_phase(math.pi) == 65536
    assert convert_phase(2 * math.pi) == 0
    assert convert_phase(-math.pi / 2) == 3 * (1 << 15)


@given(st.floats(-100, 100, allow_nan=False))
def test_convert_phase_formula(phase):
    expected = round(((phase % (2 * math.pi)) / (2 * math.pi)) * (1 << 17)) % (1 << 17)
    assert abs(convert_phase(phase) - expected) in (0, 1, (1 << 17) - 1)


def test_convert_amp():
    assert convert_amp(0.0) == 0
    assert convert_amp(1.0) == 65535
    assert convert_amp(0.041) == 2687
    for bad in (-0.01, 1.01):
        with pytest.raises(AmplitudeOutOfRange):
            convert_amp(bad)


def test_freq_entry():
    elem = ElementConfig()
    assert compute_freq_entry(0, elem) == 0
    assert compute_freq_entry(elem.sample_rate / 4, elem) == 1 << 30
    assert compute_freq_entry(6.5578e9, elem) == round(6.5578 / 8 * 2 ** 32)
    with pytest.raises(FrequencyOutOfRange):
        compute_freq_entry(-1.0, elem)
    with pytest.raises(FrequencyOutOfRange):
        compute_freq_entry(elem.sample_rate, elem)
    guarded = ElementConfig(nyquist_guard=True)
    with pytest.raises(FrequencyOutOfRange):
        compute_freq_entry(6.5578e9, guarded)
    assert compute_freq_entry(1e9, guarded) == 1 << 29


def test_envelopes():
    elem = ElementConfig()
    rate = elem.env_sample_rate
    sq = generate_envelope({"env_func": "square", "paradict": {"amplitude": 1.0, "twidth": 4 / rate}}, elem)
    assert np.allclose(sq, [1, 1, 1, 1])
    drag = generate_envelope({"env_func": "DRAG", "paradict": {"alpha": 0, "sigmas": 3, "delta": -260.157e3,
                                                               "twidth": 3e-8}}, elem)
    assert np.all(drag.imag == 0) and np.all(drag.real > 0)
    assert np.all(np.abs(drag) <= 1)
    cos = generate_envelope({"env_func": "cos_edge_square",
                             "paradict": {"ramp_fraction": 0.1, "twidth": 100 / rate}}, elem)
    assert len(cos) == 100
    assert np.all(np.diff(cos.real[:10]) > 0)
    assert np.all(np.diff(cos.real[-10:]) < 0)
    assert np.allclose(cos[10:90], 1.0)
    with pytest.raises(UnknownEnvelopeFunction):
        generate_envelope({"env_func": "sinc", "paradict": {"twidth": 1e-8}}, elem)
    with pytest.raises(NonPositiveWidth):
        generate_envelope({"env_func": "square", "paradict": {"twidth": 0}}, elem)


# ---------------------------------------------------------------------- assembly

def test_reset_program_binary(reset_images):
    (image,) = reset_images.values()
    instrs = [isa.decode(w) for w in image.binary]
    kinds = [type(i) for i in instrs]
    assert kinds == [PhaseReset, PulseWriteTrig, PulseWriteTrig, Idle, JumpFproc, Jump, PulseWriteTrig, Done]
    assert [i.start_time for i in instrs if isinstance(i, PulseWriteTrig)] == [5, 325, 1195]
    assert instrs[3].end_time == 1184
    assert instrs[4] == JumpFproc(AluOp.eq, 1, image.labels["true_1"], 1)
    assert image.labels == {"false_1": 5, "true_1": 6, "end_1": 7}
    assert instrs[5].addr == 7
    assert len(image.binary) < 2048


def test_reset_program_fields(reset_images, chan_cfg):
    (image,) = reset_images.values()
    rdrv = isa.decode(image.binary[1]).fields
    assert rdrv.amp == 2687
    assert rdrv.cfg == chan_cfg["Q1.rdrv"].elem_ind
    assert isa.split_env_word(rdrv.env) == (0, 800)
    rdlo = isa.decode(image.binary[2]).fields
    assert isa.split_env_word(rdlo.env)[1] == 795
    assert image.freq_buffers["Q1.rdrv"].entries == [round(6.5578 / 8 * 2 ** 32)]


def test_empty_core(chan_cfg):
    images = asm.assemble(one_core([]), chan_cfg)
    (image,) = images.values()
    assert image.binary == []
    assert all(len(b.samples) == 0 for b in image.env_buffers.values())
    assert all(b.entries == [] for b in image.freq_buffers.values())


def pulse(dest="Q1.qdrv", env=None, freq=4.67035e9, **kw):
    env = env or {"env_func": "square", "paradict": {"amplitude": 1.0, "twidth": 2e-8}}
    return {"op": "pulse", "freq": freq, "phase": 0.0, "amp": 0.5, "env": env, "dest": dest, **kw}


def test_envelope_and_freq_dedup(chan_cfg):
    prog = one_core([pulse(start_time=10), pulse(start_time=30), pulse(freq=4.7e9, start_time=50)])
    (image,) = asm.assemble(prog, chan_cfg).values()
    f = [isa.decode(w).fields for w in image.binary]
    assert f[0].env == f[1].env == f[2].env
    assert len(image.env_buffers["Q1.qdrv"].addresses) == 1
    assert len(image.env_buffers["Q1.qdrv"].samples) == 10
    assert f[0].freq == f[1].freq == 0 and f[2].freq == 1


def test_address_integrity(reset_images):
    for image in reset_images.values():
        for w in image.binary:
            instr = isa.decode(w)
            if isinstance(instr, (isa.PulseWrite, PulseWriteTrig)):
                ch = image.core_key[instr.fields.cfg]
                start, length = isa.split_env_word(instr.fields.env)
                assert start + length <= len(image.env_buffers[ch].samples)
                assert instr.fields.freq < len(image.freq_buffers[ch].entries)


def test_determinism(reset_asm, chan_cfg):
    a = asm.assemble(reset_asm, chan_cfg)
    b = asm.assemble(copy.deepcopy(reset_asm), chan_cfg)
    assert a == b


def test_errors(chan_cfg):
    with pytest.raises(UnknownChannel):
        asm.assemble(one_core([pulse(dest="Q2.qdrv", start_time=5)]), chan_cfg)
    with pytest.raises(UndefinedLabel):
        asm.assemble(one_core([{"op": "jump_i", "jump_label": "nowhere"}]), chan_cfg)
    with pytest.raises(DuplicateLabel):
        asm.assemble(one_core([{"op": "jump_label", "dest_label": "a"}, {"op": "jump_label", "dest_label": "a"}]),
                     chan_cfg)
    with pytest.raises(UndefinedRegister):
        asm.assemble(one_core([{"op": "reg_alu", "in0": 1, "alu_op": "add", "rhs": "x", "out": "x"}]), chan_cfg)
    with pytest.raises(SchemaError):
        asm.assemble(one_core([{"op": "idle", "end_time": 3, "typo": 1}]), chan_cfg)
    with pytest.raises(SchemaError):
        asm.assemble(one_core([{"op": "jump_fproc", "in0": 1, "alu_op": "eq", "jump_label": "a",
                                "func_id": 300}, {"op": "jump_label", "dest_label": "a"}]), chan_cfg)
    regs = [{"op": "declare_reg", "name": f"r{i}", "dtype": "int"} for i in range(17)]
    with pytest.raises(TooManyRegisters):
        asm.assemble(one_core(regs), chan_cfg)


def test_register_typing(chan_cfg):
    decl = [{"op": "declare_reg", "name": "ph", "dtype": "phase"},
            {"op": "declare_reg", "name": "a", "dtype": "amp"},
            {"op": "declare_reg", "name": "i", "dtype": "int"}]
    with pytest.raises(RegisterTypeMismatch):
        asm.assemble(one_core(decl + [{"op": "reg_alu", "in0": "a", "alu_op": "add", "rhs": "ph",
                                       "out": "ph"}]), chan_cfg)
    (image,) = asm.assemble(one_core(decl + [{"op": "reg_alu", "in0": math.pi, "alu_op": "add", "rhs": "ph",
                                              "out": "ph"}]), chan_cfg).values()
    assert isa.decode(image.binary[0]) == isa.RegAlu(AluOp.add, 65536, 0, 0)
    (image,) = asm.assemble(one_core(decl + [pulse(phase="ph", start_time=9)]), chan_cfg).values()
    f = isa.decode(image.binary[0]).fields
    assert f.phase is isa.FROM_REG
    with pytest.raises(RegisterTypeMismatch):
        asm.assemble(one_core(decl + [pulse(phase="a", start_time=9)]), chan_cfg)


def test_program_too_large(chan_cfg):
    prog = one_core([{"op": "done_stb"}] * 2049)
    with pytest.raises(ProgramTooLarge):
        asm.assemble(prog, chan_cfg)
    assert len(next(iter(asm.assemble(one_core([{"op": "done_stb"}] * 2048), chan_cfg).values())).binary) == 2048


def test_env_buffer_overflow(chan_cfg):
    long = {"env_func": "square", "paradict": {"amplitude": 1.0, "twidth": 4000 / 500e6}}
    other = {"env_func": "square", "paradict": {"amplitude": 0.9, "twidth": 200 / 500e6}}
    with pytest.raises(BufferOverflow):
        asm.assemble(one_core([pulse(env=long, start_time=5), pulse(env=other, start_time=9000)]), chan_cfg)


def test_freq_buffer_overflow(chan_cfg):
    prog = one_core([pulse(freq=1e6 * (k + 1)) for k in range(513)])
    with pytest.raises(BufferOverflow):
        asm.assemble(prog, chan_cfg)


def test_label_correctness(chan_cfg):
    prog = one_core([{"op": "jump_label", "dest_label": "top"}, {"op": "idle", "end_time": 10},
                     {"op": "jump_label", "dest_label": "mid"}, {"op": "jump_i", "jump_label": "end"},
                     {"op": "jump_i", "jump_label": "top"}, {"op": "jump_i", "jump_label": "mid"},
                     {"op": "jump_label", "dest_label": "end"}, {"op": "done_stb"}])
    (image,) = asm.assemble(prog, chan_cfg).values()
    assert [isa.decode(w) for w in image.binary][1:4] == [Jump(4), Jump(0), Jump(1)]


def test_disassembly_fixed_point(reset_images):
    (image,) = reset_images.values()
    listing = isa.disassemble(image.binary)
    assert len(listing.splitlines()) == 8
    for m in ("pulse", "idle", "jump_fproc"):
        assert m in listing
    assert asm.assemble_listing(listing) == image.binary


def test_write_and_load_images(tmp_path, reset_images):
    path = asm.write_images(reset_images, tmp_path)
    images, manifest = asm.load_images(path)
    (a,), (b,) = reset_images.values(), images.values()
    assert a.binary == b.binary and a.labels == b.labels
    ch = "Q1.rdrv"
    assert a.freq_buffers[ch].entries == b.freq_buffers[ch].entries
    assert np.allclose(a.env_buffers[ch].samples, b.env_buffers[ch].samples, atol=1 / 32767)
    assert json.load(open(path))["format"] == manifest["format"]
