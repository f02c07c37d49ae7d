"""Measurement backends that close the feedback loop, plus multi-shot execution.

The statevector backend applies gates through the compiler's debug symbol
table: only the primary pulse of each gate expansion acts on the state. A
drive pulse with carrier phase ``phi`` implements ``Rz(-phi) X90 Rz(phi)``,
which is exactly what frame tracking of virtual-Z rotations produces, so the
simulated state equals the ideal circuit state up to a Z rotation per qubit
(invisible to Z-basis measurement).
"""

from dataclasses import dataclass, field
from concurrent.futures import ProcessPoolExecutor
import json
import math

import numpy as np

from . import sim
from .elementconfig import phase_from_word
from .errors import BackendError, ScriptExhausted, SimulationError, UnknownGate, UnmappedPulse

MAX_QUBITS = 5
SNAP = 1e-12

X90 = np.array([[1, -1j], [-1j, 1]], dtype=complex) / math.sqrt(2)
CZ = np.diag([1, 1, 1, -1]).astype(complex)


def virtual_z(theta):
    return np.diag([1.0, np.exp(1j * theta)])


def x90_at_phase(phi):
    """X90 pulse with carrier phase ``phi``: Rz(-phi) X90 Rz(phi)."""
    return virtual_z(-phi) @ X90 @ virtual_z(phi)


def u3(theta, phi, lam):
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -np.exp(1j * lam) * s],
                     [np.exp(1j * phi) * s, np.exp(1j * (phi + lam)) * c]], dtype=complex)


class StateVector:
    """Pure state of up to five qubits; qubit ``k`` is tensor axis ``k``."""

    def __init__(self, qubits, amplitudes=None):
        self.qubits = list(qubits)
        n = len(self.qubits)
        if n > MAX_QUBITS:
            raise BackendError(f"statevector model supports at most {MAX_QUBITS} qubits, got {n}")
        if len(set(self.qubits)) != n:
            raise BackendError("duplicate qubit names")
        self.index = {q: k for k, q in enumerate(self.qubits)}
        if amplitudes is None:
            amplitudes = np.zeros(2 ** n, dtype=complex)
            amplitudes[0] = 1.0
        self.amps = np.asarray(amplitudes, dtype=complex).reshape((2,) * n) if n else np.ones((), complex)

    @property
    def vector(self):
        return self.amps.reshape(-1)

    def copy(self):
        return StateVector(self.qubits, self.amps.copy())

    def norm(self):
        return float(np.sqrt(np.sum(np.abs(self.amps) ** 2)))

    def axis(self, qubit):
        try:
            return self.index[qubit] if isinstance(qubit, str) else int(qubit)
        except KeyError:
            raise BackendError(f"qubit {qubit!r} is not in the statevector") from None

    def apply(self, matrix, qubits):
        axes = [self.axis(q) for q in qubits]
        k = len(axes)
        m = np.asarray(matrix, dtype=complex).reshape((2,) * (2 * k))
        moved = np.tensordot(m, self.amps, axes=(list(range(k, 2 * k)), axes))
        self.amps = np.moveaxis(moved, list(range(k)), axes)
        return self

    def prob1(self, qubit):
        ax = self.axis(qubit)
        p = float(np.sum(np.abs(np.take(self.amps, 1, axis=ax)) ** 2))
        return min(1.0, max(0.0, p))

    def project(self, qubit, bit):
        ax = self.axis(qubit)
        sl = [slice(None)] * self.amps.ndim
        sl[ax] = 1 - bit
        self.amps[tuple(sl)] = 0
        self.amps /= self.norm()
        return self


def apply_gate(sv, gate, qubits, *params):
    """Apply a named gate: X90, CZ, virtual_z(theta), U(theta, phi, lambda)."""
    qubits = list(qubits) if not isinstance(qubits, str) else [qubits]
    if gate == "X90" and len(qubits) == 1:
        phi = params[0] if params else 0.0
        return sv.apply(x90_at_phase(phi) if phi else X90, qubits)
    if gate == "CZ" and len(qubits) == 2:
        return sv.apply(CZ, qubits)
    if gate in ("virtual_z", "VZ") and len(qubits) == 1:
        return sv.apply(virtual_z(params[0]), qubits)
    if gate == "U" and len(qubits) == 1:
        return sv.apply(u3(*params), qubits)
    raise UnknownGate(gate, qubits)


def measure_z(sv, qubit, rng, snap=SNAP):
    """Born-rule Z measurement; collapses ``sv`` in place. Returns (bit, sv, p1)."""
    p1 = sv.prob1(qubit)
    if p1 < snap:
        p1 = 0.0
    elif p1 > 1 - snap:
        p1 = 1.0
    bit = int(rng.random() < p1) if 0.0 < p1 < 1.0 else int(p1 == 1.0)
    sv.project(qubit, bit)
    return bit, sv, p1


# --- backends ------------------------------------------------------------------------

class ScriptedBackend(sim.NullBackend):
    """Replays per-qubit bit queues. ``exhaustion`` is ``repeat_last`` or ``error``."""

    def __init__(self, outcomes, exhaustion="repeat_last"):
        if exhaustion not in ("repeat_last", "error"):
            raise ValueError("exhaustion must be 'repeat_last' or 'error'")
        self.script = {q: [int(b) for b in bits] for q, bits in dict(outcomes).items()}
        for q, bits in self.script.items():
            if any(b not in (0, 1) for b in bits):
                raise ValueError(f"script for {q} must contain only 0/1")
        self.exhaustion = exhaustion
        self.reset()

    @classmethod
    def load(cls, path, exhaustion="repeat_last"):
        with open(path) as f:
            return cls(json.load(f), exhaustion)

    def reset(self):
        self.pos = {q: 0 for q in self.script}
        self.last_p1 = None

    def measure(self, qubit, rng=None):
        bits = self.script.get(qubit)
        if not bits:
            raise ScriptExhausted(f"no scripted outcomes for {qubit}")
        k = self.pos[qubit]
        if k >= len(bits):
            if self.exhaustion == "error":
                raise ScriptExhausted(f"scripted outcomes for {qubit} exhausted after {len(bits)} reads")
            return bits[-1]
        self.pos[qubit] = k + 1
        return bits[k]


class StatevectorBackend(sim.NullBackend):
    """Ideal pure-state model driven by pulse events and the debug symbol table."""

    # the run is a pure function of the measurement outcomes, so shots can be
    # replayed from an outcome tree (see run_shots)
    outcome_deterministic = True

    def __init__(self, qubits, drive_kinds=("qdrv",), snap=SNAP, initial=None):
        self.qubits = list(qubits)
        self.drive_kinds = tuple(drive_kinds)
        self.snap = snap
        self.initial = initial
        self.applied = []
        self.reset()

    def reset(self):
        self.sv = StateVector(self.qubits, None if self.initial is None else np.array(self.initial))
        self.applied = []
        self.last_p1 = None
        self.phase_resets = 0

    def on_phase_reset(self, core, cycle):
        self.phase_resets += 1

    def on_pulse(self, event, symbol):
        kind = event.channel.rpartition(".")[2]
        if kind not in self.drive_kinds:
            return
        if symbol is None or symbol.get("gate") is None:
            raise UnmappedPulse(f"drive pulse on {event.channel} at cycle {event.trigger_cycle} "
                                f"has no gate in the symbol table")
        if not symbol.get("primary"):
            return
        gate, qubits = symbol["gate"], symbol["qubits"]
        if gate == "X90":
            apply_gate(self.sv, "X90", qubits, phase_from_word(event.phase_word))
        elif gate == "CZ":
            apply_gate(self.sv, "CZ", qubits)
        else:
            raise BackendError(f"statevector model has no unitary for gate {gate} on {qubits}")
        self.applied.append((event.trigger_cycle, gate, tuple(qubits), event.phase_word))

    def measure(self, qubit, rng=None):
        if rng is None:
            raise BackendError("statevector measurement needs a random generator")
        bit, _, p1 = measure_z(self.sv, qubit, rng, self.snap)
        self.last_p1 = p1
        return bit


def backend_from_spec(spec, qubits=None):
    """Factory for ``scripted:<file>`` or ``statevector`` backend specs."""
    if spec.startswith("scripted:"):
        path = spec.split(":", 1)[1]
        with open(path) as f:
            script = json.load(f)
        return lambda: ScriptedBackend(script)
    if spec == "statevector":
        if not qubits:
            raise BackendError("statevector backend needs the list of measured qubits")
        return lambda: StatevectorBackend(qubits)
    raise BackendError(f"unknown backend spec {spec!r}")


# --- shots -------------------------------------------------------------------------------

def shot_rng(master_seed, shot):
    """Counter-based stream for one shot: independent of execution order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(master_seed, spawn_key=(shot,))))


@dataclass
class ShotRecord:
    shot: int
    mid: dict = field(default_factory=dict)
    final: dict = field(default_factory=dict)
    measurements: list = field(default_factory=list)

    def to_json(self):
        return json.dumps({"shot": self.shot, "mid": self.mid, "final": self.final}, sort_keys=True)


def record_from_trace(shot, trace):
    mid, final = {}, {}
    for m in trace.measurements:
        if m.consumed:
            mid.setdefault(m.qubit, []).append(m.bit)
    for m in trace.measurements:
        if not m.consumed:
            final[m.qubit] = m.bit
    meas = [(m.qubit, m.bit, m.trigger_cycle, m.consumed) for m in trace.measurements]
    return ShotRecord(shot, mid, final, meas)


def _run_one(machine, factory, master_seed, shot):
    backend = factory()
    backend.reset()
    try:
        trace = sim.run(machine.fresh(), backend, shot_rng(master_seed, shot))
    except SimulationError as exc:
        exc.shot = shot
        exc.args = (f"shot {shot}: {exc.args[0] if exc.args else exc}",) + tuple(exc.args[1:])
        raise
    return record_from_trace(shot, trace), trace


def _draw(rng, p1):
    # same consumption of the stream as measure_z
    return int(rng.random() < p1) if 0.0 < p1 < 1.0 else int(p1 == 1.0)


class OutcomeTree:
    """Memo of complete shots keyed by their measurement-outcome path.

    Valid for backends whose evolution depends only on the outcomes drawn
    (``outcome_deterministic``): replaying a shot's random stream against the
    stored outcome probabilities reproduces exactly the bits a full
    simulation would draw, so a hit returns the identical record.
    """

    def __init__(self):
        self.root = {}
        self.simulated = 0

    def lookup(self, rng):
        node = self.root
        while node is not None:
            if "leaf" in node:
                return node["leaf"]
            if "p1" not in node:
                return None
            node = node.get(_draw(rng, node["p1"]))
        return None

    def insert(self, record, trace):
        node = self.root
        for m in trace.measurements:
            if m.p1 is None:
                return
            node.setdefault("p1", m.p1)
            node = node.setdefault(m.bit, {})
        node["leaf"] = (record, trace)
        self.simulated += 1


def _copy_record(rec, shot):
    return ShotRecord(shot, {q: list(b) for q, b in rec.mid.items()}, dict(rec.final), list(rec.measurements))


def _shots(machine, factory, master_seed, shots, memo):
    tree = OutcomeTree() if memo else None
    for shot in shots:
        if tree is not None:
            hit = tree.lookup(shot_rng(master_seed, shot))
            if hit is not None:
                yield _copy_record(hit[0], shot), hit[1]
                continue
        rec, trace = _run_one(machine, factory, master_seed, shot)
        if tree is not None:
            tree.insert(rec, trace)
        yield rec, trace


def _run_chunk(args):
    images, cfg, symbols, factory, master_seed, shots, memo = args
    machine = sim.load(images, cfg, symbols)
    return [rec for rec, _ in _shots(machine, factory, master_seed, shots, memo)]


def run_shots(images, cfg, backend_factory, n_shots, master_seed=0, symbols=None, workers=1,
              keep_traces=False, memo=None):
    """Simulate ``n_shots`` independent shots. Deterministic for a given ``master_seed``.

    Returns ``(records, traces)``; ``traces`` is empty unless ``keep_traces``.
    ``memo`` (default: whether the backend is ``outcome_deterministic``)
    reuses completed shots that follow an already simulated outcome path;
    results are identical either way. With ``workers > 1`` shots are split
    across processes (the backend factory must then be picklable); results
    do not depend on the split.
    """
    if n_shots < 0:
        raise ValueError("n_shots must be >= 0")
    if memo is None:
        memo = bool(getattr(backend_factory(), "outcome_deterministic", False))
    if workers > 1 and n_shots > 1 and not keep_traces:
        chunks = [list(range(k, n_shots, workers)) for k in range(workers)]
        with ProcessPoolExecutor(workers) as pool:
            parts = pool.map(_run_chunk, [(images, cfg, symbols, backend_factory, master_seed, c, memo)
                                          for c in chunks])
            records = sorted((r for part in parts for r in part), key=lambda r: r.shot)
        return records, []
    machine = sim.load(images, cfg, symbols)
    records, traces = [], []
    for rec, trace in _shots(machine, backend_factory, master_seed, range(n_shots), memo):
        records.append(rec)
        if keep_traces:
            traces.append(trace)
    return records, traces


def expectation(records, qubit, basis="Z"):
    """Mean of (1 - 2*bit) over the final measurements of ``qubit`` with binomial standard error."""
    bits = [r.final[qubit] for r in records if qubit in r.final]
    n = len(bits)
    if n == 0:
        return {"basis": basis, "qubit": qubit, "expectation": None, "stderr": None, "n": 0}
    p = sum(bits) / n
    return {"basis": basis, "qubit": qubit, "expectation": 1 - 2 * p,
            "stderr": 2 * math.sqrt(p * (1 - p) / n), "n": n}


def partition(records, qubits):
    """Group shot records by the tuple of first mid-circuit bits on ``qubits``."""
    groups = {}
    for r in records:
        key = tuple(r.mid.get(q, [None])[0] for q in qubits)
        groups.setdefault(key, []).append(r)
    return groups
