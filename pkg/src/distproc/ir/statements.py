"""IR statements and their JSON form.

Statements are immutable; passes build new statement tuples. ``cores`` is the
set of core indices a statement runs on, filled in by scope resolution.
"""

from dataclasses import dataclass, fields, replace
import math

from ..errors import SchemaError

ALU_OPS = ("id0", "add", "sub", "id1", "eq", "lt", "gt")
DTYPES = ("int", "phase", "amp")


@dataclass(frozen=True, kw_only=True)
class Statement:
    cores: frozenset = None

    name = "statement"

    def with_cores(self, cores):
        return replace(self, cores=frozenset(cores))


@dataclass(frozen=True)
class GateTag:
    """Provenance of a pulse expanded from a gate."""

    gate: str
    qubits: tuple
    instance: int
    primary: bool = False
    t0: int = 0
    channels: tuple = ()
    base_phase: float = 0.0


@dataclass(frozen=True, kw_only=True)
class Gate(Statement):
    name = "gate"
    gate: str
    qubits: tuple


@dataclass(frozen=True, kw_only=True)
class Pulse(Statement):
    name = "pulse"
    freq: object
    phase: float
    amp: float
    env: object
    dest: str
    start_time: int = None
    tag: GateTag = None
    phase_var: str = None


@dataclass(frozen=True, kw_only=True)
class VirtualZ(Statement):
    name = "virtual_z"
    freq: object
    phase: float


@dataclass(frozen=True, kw_only=True)
class Declare(Statement):
    name = "declare"
    var: str
    dtype: str = "int"
    scope: tuple = None


@dataclass(frozen=True, kw_only=True)
class BindPhase(Statement):
    name = "bind_phase"
    var: str
    freq: object


@dataclass(frozen=True, kw_only=True)
class SetVar(Statement):
    name = "set_var"
    var: str
    value: object


@dataclass(frozen=True, kw_only=True)
class AluVar(Statement):
    name = "alu"
    op: str
    lhs: object
    rhs: str
    out: str


@dataclass(frozen=True, kw_only=True)
class BranchVar(Statement):
    name = "branch_var"
    cond_lhs: object
    alu_cond: str
    cond_rhs: str
    true: tuple = ()
    false: tuple = ()
    scope: tuple = None


@dataclass(frozen=True, kw_only=True)
class BranchFproc(Statement):
    name = "branch_fproc"
    cond_lhs: object
    alu_cond: str
    func_id: object
    true: tuple = ()
    false: tuple = ()
    scope: tuple = None


@dataclass(frozen=True, kw_only=True)
class Loop(Statement):
    name = "loop"
    cond_lhs: object
    alu_cond: str
    cond_rhs: str
    body: tuple = ()
    scope: tuple = None


@dataclass(frozen=True, kw_only=True)
class Read(Statement):
    name = "read"
    qubits: tuple


@dataclass(frozen=True, kw_only=True)
class Delay(Statement):
    name = "delay"
    t: float
    scope: tuple = None


@dataclass(frozen=True, kw_only=True)
class Barrier(Statement):
    name = "barrier"
    scope: tuple = None


@dataclass(frozen=True, kw_only=True)
class IncQclk(Statement):
    name = "inc_qclk"
    amount: object = None
    loop: str = None
    scope: tuple = None


@dataclass(frozen=True, kw_only=True)
class Idle(Statement):
    name = "idle"
    end_time: int = None
    wait: tuple = None
    scope: tuple = None


@dataclass(frozen=True, kw_only=True)
class Done(Statement):
    name = "done"


@dataclass(frozen=True, kw_only=True)
class Label(Statement):
    name = "jump_label"
    label: str
    loop: str = None


@dataclass(frozen=True, kw_only=True)
class Jump(Statement):
    name = "jump_i"
    label: str
    scope: tuple = None


@dataclass(frozen=True, kw_only=True)
class JumpCond(Statement):
    name = "jump_cond"
    cond_lhs: object
    alu_cond: str
    cond_rhs: str
    label: str
    scope: tuple = None


@dataclass(frozen=True, kw_only=True)
class JumpFproc(Statement):
    name = "jump_fproc"
    cond_lhs: object
    alu_cond: str
    func_id: object
    label: str
    scope: tuple = None


@dataclass(frozen=True, kw_only=True)
class AluFproc(Statement):
    name = "alu_fproc"
    lhs: object
    op: str
    func_id: object
    out: str
    scope: tuple = None


STATEMENT_TYPES = {cls.name: cls for cls in (
    Pulse, VirtualZ, Declare, BindPhase, SetVar, AluVar, BranchVar, BranchFproc, Loop, Read,
    Delay, Barrier, IncQclk, Idle, Done, Label, Jump, JumpCond, JumpFproc, AluFproc)}
CONTROL = (BranchVar, BranchFproc, Loop)
JUMPS = (Jump, JumpCond, JumpFproc)
FPROC_CONSUMERS = (BranchFproc, JumpFproc, AluFproc)


def child_blocks(stmt):
    if isinstance(stmt, (BranchVar, BranchFproc)):
        return {"true": stmt.true, "false": stmt.false}
    if isinstance(stmt, Loop):
        return {"body": stmt.body}
    return {}


def walk(statements):
    """Depth-first iteration over statements including nested blocks."""
    for s in statements:
        yield s
        for block in child_blocks(s).values():
            yield from walk(block)


def map_blocks(stmt, fn):
    """Copy of a control statement with ``fn`` applied to each nested block."""
    blocks = child_blocks(stmt)
    return replace(stmt, **{k: tuple(fn(v)) for k, v in blocks.items()}) if blocks else stmt


# --- JSON -----------------------------------------------------------------------

def _as_tuple(value):
    if value is None:
        return None
    if isinstance(value, str):
        return (value,)
    return tuple(value)


def _freq_of(doc):
    if "freq" in doc:
        return doc["freq"]
    if "qubit" in doc:
        q = doc["qubit"]
        q = q[0] if isinstance(q, (list, tuple)) else q
        return f"{q}.freq"
    raise SchemaError(f"{doc.get('name')}: needs 'freq' or 'qubit'")


def _finite(x, what):
    if isinstance(x, (int, float)) and not math.isfinite(x):
        raise SchemaError(f"{what} must be finite")
    return x


def statement_from_dict(doc):
    if not isinstance(doc, dict) or "name" not in doc:
        raise SchemaError(f"IR statement must be an object with a 'name': {doc!r}")
    name = doc["name"]
    scope = _as_tuple(doc.get("scope"))
    if name == "pulse":
        return Pulse(freq=doc["freq"], phase=_finite(doc.get("phase", 0.0), "phase"),
                     amp=doc.get("amp", 1.0), env=doc["env"], dest=doc["dest"],
                     start_time=doc.get("start_time"))
    if name == "virtual_z":
        return VirtualZ(freq=_freq_of(doc), phase=_finite(doc["phase"], "phase"))
    if name == "declare":
        return Declare(var=doc["var"], dtype=doc.get("dtype", "int"), scope=scope)
    if name == "bind_phase":
        return BindPhase(var=doc["var"], freq=_freq_of(doc))
    if name == "set_var":
        return SetVar(var=doc["var"], value=doc["value"])
    if name == "alu":
        return AluVar(op=doc["op"], lhs=doc["lhs"], rhs=doc["rhs"], out=doc["out"])
    if name == "branch_var":
        return BranchVar(cond_lhs=doc["cond_lhs"], alu_cond=doc["alu_cond"], cond_rhs=doc["cond_rhs"],
                         true=program_from_list(doc.get("true", [])),
                         false=program_from_list(doc.get("false", [])), scope=scope)
    if name == "branch_fproc":
        return BranchFproc(cond_lhs=doc["cond_lhs"], alu_cond=doc["alu_cond"], func_id=doc["func_id"],
                           true=program_from_list(doc.get("true", [])),
                           false=program_from_list(doc.get("false", [])), scope=scope)
    if name == "loop":
        return Loop(cond_lhs=doc["cond_lhs"], alu_cond=doc["alu_cond"], cond_rhs=doc["cond_rhs"],
                    body=program_from_list(doc.get("body", [])), scope=scope)
    if name == "read":
        return Read(qubits=_as_tuple(doc["qubit"]))
    if name == "delay":
        return Delay(t=_finite(doc["t"], "t"), scope=_as_tuple(doc.get("qubit", doc.get("scope"))))
    if name == "barrier":
        return Barrier(scope=_as_tuple(doc.get("qubit", doc.get("scope"))))
    if name == "inc_qclk":
        return IncQclk(amount=doc["in0"], scope=scope)
    if name == "idle":
        return Idle(end_time=doc["end_time"], scope=scope)
    if name == "done":
        return Done()
    if name == "jump_label":
        return Label(label=doc["label"])
    if name == "jump_i":
        return Jump(label=doc["label"], scope=scope)
    if name == "jump_cond":
        return JumpCond(cond_lhs=doc["cond_lhs"], alu_cond=doc["alu_cond"], cond_rhs=doc["cond_rhs"],
                        label=doc["label"], scope=scope)
    if name == "jump_fproc":
        return JumpFproc(cond_lhs=doc["cond_lhs"], alu_cond=doc["alu_cond"], func_id=doc["func_id"],
                         label=doc["label"], scope=scope)
    if name == "alu_fproc":
        return AluFproc(lhs=doc["lhs"], op=doc["op"], func_id=doc["func_id"], out=doc["out"], scope=scope)
    qubits = doc.get("qubit", doc.get("qubits"))
    if qubits is None:
        raise SchemaError(f"gate {name!r} has no 'qubit' list")
    return Gate(gate=name, qubits=_as_tuple(qubits))


def program_from_list(docs):
    return tuple(statement_from_dict(d) for d in docs)


_SKIP = {"cores", "tag", "phase_var", "loop", "wait"}
_RENAME = {"qubits": "qubit", "amount": "in0"}


def statement_to_dict(stmt):
    """Inverse of :func:`statement_from_dict` for unannotated statements."""
    if isinstance(stmt, Gate):
        return {"name": stmt.gate, "qubit": list(stmt.qubits)}
    out = {"name": stmt.name}
    for f in fields(stmt):
        if f.name in _SKIP:
            continue
        value = getattr(stmt, f.name)
        if value is None:
            continue
        if f.name in ("true", "false", "body"):
            value = [statement_to_dict(s) for s in value]
        elif isinstance(value, tuple):
            value = list(value)
        if isinstance(stmt, (Delay, Barrier)) and f.name == "scope":
            out["qubit"] = value
            continue
        out[_RENAME.get(f.name, f.name)] = value
    return out


def program_to_list(statements):
    return [statement_to_dict(s) for s in statements]
