"""Exception hierarchy shared by every stage of the toolchain."""


class DistprocError(Exception):
    """Base class for all toolchain errors."""


# --- isa -------------------------------------------------------------------

class IsaError(DistprocError):
    pass


class FieldOverflow(IsaError):
    def __init__(self, field, value, width):
        self.field, self.value, self.width = field, value, width
        super().__init__(f"field {field!r}: value {value} does not fit in {width} bits")


class MalformedInstruction(IsaError):
    pass


class UnknownOpcode(IsaError):
    def __init__(self, bits, index=None):
        self.bits, self.index = bits, index
        where = f" (word {index})" if index is not None else ""
        super().__init__(f"unknown opcode 0x{bits:02x}{where}")


class NonzeroReservedBits(IsaError):
    def __init__(self, mnemonic, mask):
        self.mnemonic, self.mask = mnemonic, mask
        super().__init__(f"{mnemonic}: nonzero bits outside the instruction's fields (mask 0x{mask:032x})")


# --- asm -------------------------------------------------------------------

class AsmError(DistprocError):
    pass


class SchemaError(AsmError):
    pass


class UnknownChannel(AsmError):
    pass


class UndefinedLabel(AsmError):
    pass


class DuplicateLabel(AsmError):
    pass


class RegisterTypeMismatch(AsmError):
    pass


class UndefinedRegister(AsmError):
    pass


class TooManyRegisters(AsmError):
    pass


class ProgramTooLarge(AsmError):
    def __init__(self, n_words, limit):
        self.n_words, self.limit = n_words, limit
        super().__init__(f"program has {n_words} words; program memory holds {limit}")


class BufferOverflow(AsmError):
    pass


class AmplitudeOutOfRange(AsmError):
    pass


class FrequencyOutOfRange(AsmError):
    pass


class UnknownEnvelopeFunction(AsmError):
    pass


class NonPositiveWidth(AsmError):
    pass


class ListingSyntaxError(AsmError):
    pass


# --- ir --------------------------------------------------------------------

class CompileError(DistprocError):
    pass


class UnknownGate(CompileError):
    def __init__(self, name, qubits):
        self.name, self.qubits = name, tuple(qubits)
        super().__init__(f"no calibration for gate {name} on {list(qubits)}")


class UndeclaredVariable(CompileError):
    pass


class ScopeViolation(CompileError):
    pass


class InconsistentPhaseAtMerge(CompileError):
    def __init__(self, freq, block):
        self.freq, self.block = freq, block
        super().__init__(
            f"software phase of frequency {freq!r} differs between the paths entering block {block}; "
            f"bind it to a phase variable with bind_phase to resolve it in hardware")


class UnknownFprocChannel(CompileError):
    pass


class UnschedulableProgram(CompileError):
    pass


class InvalidPassOrder(CompileError):
    pass


class PassErrors(CompileError):
    """Several independent pass errors collected into one."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(str(e) for e in self.errors))


# --- sim / backend ---------------------------------------------------------

class SimulationError(DistprocError):
    pass


class DecodeError(SimulationError):
    def __init__(self, core, address, cause):
        self.core, self.address, self.cause = core, address, cause
        super().__init__(f"core {core}, address {address}: {cause}")


class TriggerMissed(SimulationError):
    pass


class MaxCyclesExceeded(SimulationError):
    pass


class FprocUnknownId(SimulationError):
    pass


class EmptySlot(SimulationError):
    pass


class BackendError(SimulationError):
    pass


class ScriptExhausted(BackendError):
    pass


class UnmappedPulse(BackendError):
    pass
