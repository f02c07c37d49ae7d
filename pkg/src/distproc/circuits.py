"""IR program builders for feedback circuits, written in the native gate set
(X90, CZ, virtual-Z). Programs are plain lists of statement dicts."""

import math

PI = math.pi

# single-qubit preparations from |0>, as native gate lists
PREPARATIONS = ("0", "1", "+", "-", "+i", "-i")
BASES = ("X", "Y", "Z")


def vz(qubit, phase):
    return {"name": "virtual_z", "qubit": qubit, "phase": phase}


def x90(qubit):
    return {"name": "X90", "qubit": [qubit]}


def hadamard(qubit):
    """H = Rz(pi/2) X90 Rz(pi/2) with Rz(t) = diag(1, e^{it})."""
    return [vz(qubit, PI / 2), x90(qubit), vz(qubit, PI / 2)]


def x_gate(qubit):
    return [x90(qubit), x90(qubit)]


def cz(a, b):
    return [{"name": "CZ", "qubit": sorted([a, b])}]


def cnot(control, target):
    return hadamard(target) + cz(control, target) + hadamard(target)


def prepare(qubit, state):
    """Native sequence taking |0> to one of the six cardinal states."""
    seqs = {
        "0": [],
        "1": x_gate(qubit),
        "+": hadamard(qubit),
        "-": x_gate(qubit) + hadamard(qubit),
        "+i": hadamard(qubit) + [vz(qubit, PI / 2)],
        "-i": hadamard(qubit) + [vz(qubit, -PI / 2)],
    }
    if state not in seqs:
        raise ValueError(f"unknown preparation {state!r}; choose from {PREPARATIONS}")
    return seqs[state]


def basis_change(qubit, basis):
    """Rotation mapping the +1 eigenstate of ``basis`` onto |0> before a Z readout."""
    if basis == "Z":
        return []
    if basis == "X":
        return hadamard(qubit)
    if basis == "Y":
        return [vz(qubit, -PI / 2)] + hadamard(qubit)
    raise ValueError(f"unknown basis {basis!r}")


def ideal_expectation(state, basis):
    """<basis> for a cardinal state: +1, -1 or 0."""
    axis = {"0": ("Z", 1), "1": ("Z", -1), "+": ("X", 1), "-": ("X", -1), "+i": ("Y", 1), "-i": ("Y", -1)}
    b, sign = axis[state]
    return float(sign) if b == basis else 0.0


def teleport(state="+", basis="X", source="Q0", ancilla="Q1", target="Q2", phase_var="target_phase"):
    """Teleport ``state`` from ``source`` to ``target`` via a Bell pair on (ancilla, target).

    The Bell-basis outcomes are read mid-circuit; the corrections on the
    target are conditional on FPROC reads (X for the ancilla bit, Z for the
    source bit). The conditional Z is a virtual rotation, so the target's
    drive phase is bound to a run-time phase register.
    """
    prog = [
        {"name": "declare", "var": phase_var, "dtype": "phase", "scope": [target]},
        {"name": "bind_phase", "var": phase_var, "qubit": target},
    ]
    prog += prepare(source, state)
    prog += hadamard(ancilla) + cnot(ancilla, target)
    prog += cnot(source, ancilla) + hadamard(source)
    prog += [{"name": "barrier", "qubit": [source, ancilla]},
             {"name": "read", "qubit": [source]},
             {"name": "read", "qubit": [ancilla]}]
    prog += [{"name": "branch_fproc", "cond_lhs": 1, "alu_cond": "eq", "func_id": f"{ancilla}.meas",
              "true": x_gate(target), "false": [], "scope": [target]},
             {"name": "branch_fproc", "cond_lhs": 1, "alu_cond": "eq", "func_id": f"{source}.meas",
              "true": [vz(target, PI)], "false": [], "scope": [target]}]
    prog += basis_change(target, basis)
    prog += [{"name": "read", "qubit": [target]}]
    return prog


def active_reset(qubit="Q1", prep=None):
    """Measure ``qubit`` and flip it back to |0> when the outcome is 1."""
    prog = list(prep or [])
    prog += [{"name": "read", "qubit": [qubit]},
             {"name": "branch_fproc", "cond_lhs": 1, "alu_cond": "eq", "func_id": f"{qubit}.meas",
              "true": x_gate(qubit), "false": [], "scope": [qubit]},
             {"name": "read", "qubit": [qubit]}]
    return prog
