"""JSON assembly language -> per-core binaries plus envelope/frequency buffers."""

from dataclasses import dataclass, field
from importlib import resources
import functools
import json
import os
import re
import struct

import jsonschema
import numpy as np

from . import isa
from .channels import ChannelConfig
from .errors import (BufferOverflow, DuplicateLabel, ListingSyntaxError, ProgramTooLarge,
                     RegisterTypeMismatch, SchemaError, TooManyRegisters, UndefinedLabel,
                     UndefinedRegister, UnknownChannel)
from .isa import FROM_REG, AluOp, PulseFields, Reg
from .timing import PROGRAM_MEMORY_WORDS

ENV_BUFFER_SAMPLES = 1 << isa.ENV_ADDR_BITS
FREQ_BUFFER_ENTRIES = 1 << isa.FREQ_ADDR_BITS
REG_DTYPES = ("int", "phase", "amp")
_ARITH = (AluOp.id0, AluOp.id1, AluOp.add, AluOp.sub)


@functools.lru_cache(maxsize=None)
def load_schema(name):
    return json.loads(resources.files("distproc.schemas").joinpath(name).read_text())


def validate(doc, schema_name):
    """Validate a JSON document against one of the bundled schemas."""
    try:
        jsonschema.validate(doc, load_schema(schema_name))
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        raise SchemaError(f"{schema_name}: at /{path}: {exc.message}") from None


def _jsonify(value):
    if isinstance(value, (list, tuple)):
        return [_jsonify(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonify(v) for k, v in value.items()}
    if isinstance(value, np.ndarray):
        return [[float(v.real), float(v.imag)] for v in value.astype(complex)]
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, np.generic):
        return value.item()
    return value


def core_key_str(key):
    return ",".join(key) if not isinstance(key, str) else key


def normalize_program(program):
    """Core keys as tuples; instruction bodies as plain JSON values."""
    out = {}
    for key, instrs in program.items():
        if isinstance(key, str):
            key = tuple(k.strip() for k in key.split(","))
        out[tuple(key)] = [_jsonify(dict(i)) for i in instrs]
    return out


@dataclass
class EnvBuffer:
    samples: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))
    addresses: dict = field(default_factory=dict)

    def __eq__(self, other):
        return (isinstance(other, EnvBuffer) and self.addresses == other.addresses
                and np.array_equal(self.samples, other.samples))


@dataclass
class FreqBuffer:
    entries: list = field(default_factory=list)
    freqs: list = field(default_factory=list)


@dataclass
class CoreImage:
    core_key: tuple
    binary: list
    env_buffers: dict
    freq_buffers: dict
    registers: dict = field(default_factory=dict)
    labels: dict = field(default_factory=dict)
    elements: dict = field(default_factory=dict, compare=False)

    def freq_hz(self, channel, address):
        buf = self.freq_buffers.get(channel)
        if buf is None or address >= len(buf.freqs):
            return None
        return buf.freqs[address]


class _CoreAssembler:
    def __init__(self, key, chan_cfg, elem_cfg, max_words):
        self.key = key
        self.chan_cfg = chan_cfg
        self.max_words = max_words
        self.core = chan_cfg.resolve_core_key(key)
        self.elements = {}
        for name in key:
            ch = chan_cfg[name]
            if elem_cfg is None:
                self.elements[name] = ch.element
            else:
                self.elements[name] = elem_cfg.updated(ch.attrs.get("element", {}))
        self.env = {name: EnvBuffer() for name in key}
        self.freq = {name: FreqBuffer() for name in key}
        self.registers = {}
        self.labels = {}
        self._env_keys = {name: {} for name in key}
        self._env_chunks = {name: [] for name in key}

    # registers / operands ---------------------------------------------------

    def _declare(self, name, dtype):
        if name in self.registers:
            raise SchemaError(f"register {name!r} declared twice")
        if dtype not in REG_DTYPES:
            raise SchemaError(f"unknown register type {dtype!r}")
        if len(self.registers) >= isa.N_REGS:
            raise TooManyRegisters(f"more than {isa.N_REGS} registers declared on core {self.key}")
        self.registers[name] = (len(self.registers), dtype)

    def _reg(self, name):
        try:
            return self.registers[name]
        except KeyError:
            raise UndefinedRegister(f"register {name!r} is not declared on core {self.key}") from None

    def _imm(self, value, dtype):
        if dtype == "phase":
            return self.elements[self.key[0]].phase_word(float(value))
        if dtype == "amp":
            return self.elements[self.key[0]].amp_word(float(value))
        if isinstance(value, float) and not value.is_integer():
            raise RegisterTypeMismatch(f"non-integer immediate {value} for an int operand")
        return int(value)

    @staticmethod
    def _unify(types, what):
        typed = {t for t in types if t is not None}
        if len(typed) > 1:
            raise RegisterTypeMismatch(f"{what}: operands mix register types {sorted(typed)}")
        return typed.pop() if typed else "int"

    def _alu_operands(self, instr, out=None, use_rhs=True):
        """Resolve in0 / in1 / out of an ALU-style instruction with type checks."""
        op = AluOp[instr["alu_op"]]
        in0 = instr["in0"]
        rhs = instr.get("rhs") if use_rhs else None
        types = []
        if isinstance(in0, str):
            types.append(self._reg(in0)[1])
        if rhs is not None:
            types.append(self._reg(rhs)[1])
        out_type = self._reg(out)[1] if out is not None else None
        if out_type is not None and (op in _ARITH or not use_rhs):
            types.append(out_type)
        dtype = self._unify(types, instr["op"])
        if out_type is not None and op not in _ARITH and use_rhs and out_type != "int":
            raise RegisterTypeMismatch(f"comparison result must go to an int register, not {out!r}")
        in0_val = Reg(self._reg(in0)[0]) if isinstance(in0, str) else self._imm(in0, dtype)
        in1 = self._reg(rhs)[0] if rhs is not None else 0
        dest = self._reg(out)[0] if out is not None else None
        return op, in0_val, in1, dest

    def _func_id(self, func_id):
        if isinstance(func_id, list):
            channel, attr = func_id
            func_id = self.chan_cfg.attr(channel, attr)
        if isinstance(func_id, str):
            raise SchemaError(f"named FPROC id {func_id!r} must be resolved before assembly")
        if not 0 <= int(func_id) <= 255:
            raise SchemaError(f"FPROC id {func_id} outside 0..255")
        return int(func_id)

    # buffers -------------------------------------------------------------

    def _env_addr(self, channel, spec):
        elem = self.elements[channel]
        key = json.dumps(_jsonify(spec), sort_keys=True)
        table = self._env_keys[channel]
        if key not in table:
            samples = elem.envelope(spec)
            start = sum(len(c) for c in self._env_chunks[channel])
            if start + len(samples) > ENV_BUFFER_SAMPLES:
                raise BufferOverflow(f"envelope buffer for {channel} exceeds {ENV_BUFFER_SAMPLES} samples")
            length = elem.env_length_cycles(spec, len(samples))
            self._env_chunks[channel].append(samples)
            table[key] = (start, length)
            self.env[channel].addresses[key] = (start, len(samples))
        start, length = table[key]
        return isa.env_word(start, length)

    def _freq_addr(self, channel, freq):
        elem = self.elements[channel]
        entry = elem.freq_entry(float(freq))
        buf = self.freq[channel]
        if float(freq) in buf.freqs:
            return buf.freqs.index(float(freq))
        if len(buf.entries) >= FREQ_BUFFER_ENTRIES:
            raise BufferOverflow(f"frequency buffer for {channel} exceeds {FREQ_BUFFER_ENTRIES} entries")
        buf.entries.append(entry)
        buf.freqs.append(float(freq))
        return len(buf.entries) - 1

    # instructions --------------------------------------------------------

    def _pulse(self, instr):
        dest = instr["dest"]
        if dest not in self.chan_cfg:
            raise UnknownChannel(f"unknown channel {dest!r}")
        if dest not in self.key:
            raise UnknownChannel(f"channel {dest!r} is not driven by core {self.key}")
        elem = self.elements[dest]
        reg_names = set()
        values = {}

        def from_reg(name, allowed):
            idx, dtype = self._reg(name)
            if dtype not in allowed:
                raise RegisterTypeMismatch(f"pulse field expects a {'/'.join(allowed)} register; {name!r} is {dtype}")
            reg_names.add(name)
            return FROM_REG

        if "freq" in instr:
            f = instr["freq"]
            values["freq"] = from_reg(f, ("int",)) if isinstance(f, str) else self._freq_addr(dest, f)
        if "phase" in instr:
            p = instr["phase"]
            values["phase"] = from_reg(p, ("phase", "int")) if isinstance(p, str) else elem.phase_word(float(p))
        if "amp" in instr:
            a = instr["amp"]
            values["amp"] = from_reg(a, ("amp", "int")) if isinstance(a, str) else elem.amp_word(float(a))
        if "env" in instr:
            e = instr["env"]
            values["env"] = from_reg(e, ("int",)) if isinstance(e, str) else self._env_addr(dest, e)
        values["cfg"] = instr.get("cfg", self.chan_cfg[dest].elem_ind)
        if len(reg_names) > 1:
            raise RegisterTypeMismatch(f"pulse reads several registers {sorted(reg_names)}; only one is allowed")
        reg_addr = self._reg(reg_names.pop())[0] if reg_names else 0
        fields = PulseFields(**values)
        if "start_time" in instr:
            return isa.PulseWriteTrig(reg_addr, fields, int(instr["start_time"]))
        return isa.PulseWrite(reg_addr, fields)

    def _label_addr(self, label):
        try:
            return self.labels[label]
        except KeyError:
            raise UndefinedLabel(f"jump target {label!r} is not defined on core {self.key}") from None

    def _translate(self, instr):
        op = instr["op"]
        if op == "pulse":
            return self._pulse(instr)
        if op == "phase_reset":
            return isa.PhaseReset()
        if op == "done_stb":
            return isa.Done()
        if op == "idle":
            return isa.Idle(int(instr["end_time"]))
        if op == "jump_i":
            return isa.Jump(self._label_addr(instr["jump_label"]))
        if op == "inc_qclk":
            in0 = instr["in0"]
            if isinstance(in0, str):
                self._unify([self._reg(in0)[1], "int"], op)
                return isa.IncQclk(Reg(self._reg(in0)[0]))
            return isa.IncQclk(self._imm(in0, "int"))
        if op == "reg_alu":
            alu_op, in0, in1, dest = self._alu_operands(instr, out=instr["out"])
            return isa.RegAlu(alu_op, in0, in1, dest)
        if op == "jump_cond":
            alu_op, in0, in1, _ = self._alu_operands(instr)
            return isa.JumpCond(alu_op, in0, in1, self._label_addr(instr["jump_label"]))
        if op == "jump_fproc":
            alu_op, in0, _, _ = self._alu_operands(instr, use_rhs=False)
            return isa.JumpFproc(alu_op, in0, self._label_addr(instr["jump_label"]),
                                 self._func_id(instr["func_id"]))
        if op == "alu_fproc":
            alu_op, in0, _, dest = self._alu_operands(instr, out=instr["out"], use_rhs=False)
            return isa.AluFproc(alu_op, in0, dest, self._func_id(instr["func_id"]))
        raise SchemaError(f"unknown op {op!r}")

    def run(self, instrs):
        addr = 0
        for instr in instrs:
            op = instr["op"]
            if op == "jump_label":
                label = instr["dest_label"]
                if label in self.labels:
                    raise DuplicateLabel(f"label {label!r} defined twice on core {self.key}")
                self.labels[label] = addr
            elif op == "declare_reg":
                self._declare(instr["name"], instr.get("dtype", "int"))
            else:
                addr += 1
        if addr > self.max_words:
            raise ProgramTooLarge(addr, self.max_words)
        binary = [isa.encode(self._translate(i)) for i in instrs
                  if i["op"] not in ("jump_label", "declare_reg")]
        for name, chunks in self._env_chunks.items():
            if chunks:
                self.env[name].samples = np.concatenate(chunks)
        return CoreImage(core_key=self.key, binary=binary, env_buffers=self.env,
                         freq_buffers=self.freq, registers=dict(self.registers),
                         labels=dict(self.labels), elements=dict(self.elements))


def assemble(program, chan_cfg, elem_cfg=None, *, max_words=PROGRAM_MEMORY_WORDS, check_schema=True):
    """Assemble a program (core key -> instruction list) into core images.

    ``elem_cfg``, when given, replaces the channel configuration's element
    defaults; per-channel ``element`` overrides still apply.
    """
    if not isinstance(chan_cfg, ChannelConfig):
        chan_cfg = ChannelConfig.from_dict(chan_cfg)
    program = normalize_program(program)
    if check_schema:
        validate({core_key_str(k): v for k, v in program.items()}, "asm.schema.json")
    images = {}
    for key, instrs in program.items():
        images[key] = _CoreAssembler(key, chan_cfg, elem_cfg, max_words).run(instrs)
    return images


# --- raw listings ----------------------------------------------------------

_LINE = re.compile(r"^\s*(?:\d+\s*:\s*)?(?P<body>[^#]*?)\s*(?:#.*)?$")


def _parse_operand(text):
    if re.fullmatch(r"r\d+", text):
        return Reg(int(text[1:]))
    return int(text, 0)


def _parse_reg(text):
    if not re.fullmatch(r"r\d+", text):
        raise ListingSyntaxError(f"expected a register, got {text!r}")
    return int(text[1:])


def _parse_field(text):
    return FROM_REG if text == "reg" else int(text, 0)


def parse_listing(text):
    """Parse a disassembly listing back into instructions."""
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        body = _LINE.match(line).group("body")
        if not body:
            continue
        mnemonic, *args = body.split()
        try:
            kv = dict(a.split("=", 1) for a in args)
        except ValueError:
            raise ListingSyntaxError(f"line {lineno}: malformed argument list") from None
        try:
            out.append(_parse_one(mnemonic, kv))
        except (KeyError, ValueError) as exc:
            raise ListingSyntaxError(f"line {lineno}: {mnemonic}: {exc}") from None
    return out


def _parse_one(mnemonic, kv):
    if mnemonic in ("pulse_write", "pulse_write_trig"):
        fields = PulseFields(**{k: _parse_field(kv[k]) for k in ("env", "phase", "freq", "amp", "cfg") if k in kv})
        reg = _parse_reg(kv["reg"]) if "reg" in kv else 0
        if mnemonic == "pulse_write":
            return isa.PulseWrite(reg, fields)
        return isa.PulseWriteTrig(reg, fields, int(kv["start"], 0))
    if mnemonic == "idle":
        return isa.Idle(int(kv["end"], 0))
    if mnemonic == "done_stb":
        return isa.Done()
    if mnemonic == "phase_reset":
        return isa.PhaseReset()
    if mnemonic == "jump_i":
        return isa.Jump(int(kv["addr"], 0))
    if mnemonic == "inc_qclk":
        return isa.IncQclk(_parse_operand(kv["in0"]))
    op = AluOp[kv["op"]]
    in0 = _parse_operand(kv["in0"])
    if mnemonic == "reg_alu":
        return isa.RegAlu(op, in0, _parse_reg(kv["in1"]), _parse_reg(kv["dest"]))
    if mnemonic == "jump_cond":
        return isa.JumpCond(op, in0, _parse_reg(kv["in1"]), int(kv["addr"], 0))
    if mnemonic == "jump_fproc":
        return isa.JumpFproc(op, in0, int(kv["addr"], 0), int(kv["fproc"], 0))
    if mnemonic == "alu_fproc":
        return isa.AluFproc(op, in0, _parse_reg(kv["dest"]), int(kv["fproc"], 0))
    raise ListingSyntaxError(f"unknown mnemonic {mnemonic!r}")


def assemble_listing(text, max_words=PROGRAM_MEMORY_WORDS):
    words = [isa.encode(i) for i in parse_listing(text)]
    if len(words) > max_words:
        raise ProgramTooLarge(len(words), max_words)
    return words


# --- files -------------------------------------------------------------------

def _safe(name):
    return re.sub(r"[^A-Za-z0-9_.-]", "_", name)


def write_env_buffer(path, samples):
    """u32 count, then count (int16 I, int16 Q) pairs, little endian."""
    iq = np.empty((len(samples), 2), dtype="<i2")
    iq[:, 0] = np.round(np.real(samples) * 32767)
    iq[:, 1] = np.round(np.imag(samples) * 32767)
    with open(path, "wb") as f:
        f.write(struct.pack("<I", len(samples)))
        f.write(iq.tobytes())


def read_env_buffer(path):
    with open(path, "rb") as f:
        (n,) = struct.unpack("<I", f.read(4))
        iq = np.frombuffer(f.read(4 * n), dtype="<i2").reshape(n, 2)
    return (iq[:, 0] + 1j * iq[:, 1]) / 32767


def write_freq_buffer(path, entries):
    """u32 count, then count u32 phase increments, little endian."""
    with open(path, "wb") as f:
        f.write(struct.pack(f"<I{len(entries)}I", len(entries), *entries))


def read_freq_buffer(path):
    with open(path, "rb") as f:
        (n,) = struct.unpack("<I", f.read(4))
        return list(struct.unpack(f"<{n}I", f.read(4 * n)))


def write_images(images, out_dir, extra=None):
    """Write binaries, buffers and ``manifest.json``; return the manifest path."""
    os.makedirs(out_dir, exist_ok=True)
    cores = []
    for key, image in images.items():
        stem = _safe(core_key_str(key).replace(",", "_"))
        bin_name = f"{stem}.bin"
        with open(os.path.join(out_dir, bin_name), "wb") as f:
            f.write(isa.words_to_bytes(image.binary))
        env, freq = {}, {}
        for ch, buf in image.env_buffers.items():
            name = f"{stem}.{_safe(ch)}.env"
            write_env_buffer(os.path.join(out_dir, name), buf.samples)
            env[ch] = {"file": name, "addresses": {k: list(v) for k, v in buf.addresses.items()}}
        for ch, buf in image.freq_buffers.items():
            name = f"{stem}.{_safe(ch)}.freq"
            write_freq_buffer(os.path.join(out_dir, name), buf.entries)
            freq[ch] = {"file": name, "freqs": buf.freqs}
        cores.append({"core_key": list(key), "binary": bin_name, "n_words": len(image.binary),
                      "env_buffers": env, "freq_buffers": freq,
                      "registers": {k: list(v) for k, v in image.registers.items()},
                      "labels": image.labels})
    manifest = {"format": "distproc-manifest/1", "cores": cores}
    manifest.update(extra or {})
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    return path


def load_images(manifest_path):
    """Read core images back from a manifest. Envelope samples come back quantized."""
    with open(manifest_path) as f:
        manifest = json.load(f)
    root = os.path.dirname(os.path.abspath(manifest_path))
    images = {}
    for core in manifest["cores"]:
        key = tuple(core["core_key"])
        with open(os.path.join(root, core["binary"]), "rb") as f:
            binary = isa.bytes_to_words(f.read())
        env = {ch: EnvBuffer(read_env_buffer(os.path.join(root, e["file"])),
                             {k: tuple(v) for k, v in e["addresses"].items()})
               for ch, e in core["env_buffers"].items()}
        freq = {ch: FreqBuffer(read_freq_buffer(os.path.join(root, e["file"])), list(e["freqs"]))
                for ch, e in core["freq_buffers"].items()}
        images[key] = CoreImage(key, binary, env, freq,
                                {k: tuple(v) for k, v in core["registers"].items()}, dict(core["labels"]))
    return images, manifest


def image_summary(image):
    """Word count and buffer usage of one image."""
    return {
        "words": len(image.binary),
        "env_samples": {ch: len(b.samples) for ch, b in image.env_buffers.items()},
        "freq_entries": {ch: len(b.entries) for ch, b in image.freq_buffers.items()},
        "fraction_of_memory": len(image.binary) / PROGRAM_MEMORY_WORDS,
    }

