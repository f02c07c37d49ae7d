"""Independent reference models used to cross-check the package.

Nothing here imports the package's encoders, schedulers or simulators; the
bit packer works from the field table alone and the circuit model uses dense
Kronecker products.
"""

import math

import numpy as np

# ---------------------------------------------------------------- bit packing

ALU_FORMAT = {  # name: (msb, lsb)
    "opcode": (127, 124), "in0_is_reg": (123, 123), "alu_op": (122, 120), "in0": (119, 88),
    "in1": (87, 84), "dest": (83, 68), "fproc": (67, 52),
}
PULSE_FORMAT = {
    "opcode": (127, 120), "reg_addr": (119, 116), "env_ctrl": (115, 114), "env": (113, 90),
    "phase_ctrl": (89, 88), "phase": (87, 71), "freq_ctrl": (70, 69), "freq": (68, 60),
    "amp_ctrl": (59, 58), "amp": (57, 42), "cfg_en": (41, 41), "cfg": (40, 37), "start": (36, 5),
}


def pack(layout, **values):
    word = 0
    for name, value in values.items():
        msb, lsb = layout[name]
        width = msb - lsb + 1
        assert 0 <= value < (1 << width), (name, value)
        word |= value << lsb
    return word


def field_of(layout, word, name):
    msb, lsb = layout[name]
    return (word >> lsb) & ((1 << (msb - lsb + 1)) - 1)


# ------------------------------------------------------------------- ALU

def alu_reference(op, a, b):
    """32-bit two's-complement ALU semantics written with explicit wrapping."""
    def wrap(x):
        x %= 1 << 32
        return x - (1 << 32) if x >= 1 << 31 else x
    return {"id0": wrap(a), "id1": wrap(b), "add": wrap(a + b), "sub": wrap(a - b),
            "eq": int(a == b), "lt": int(a < b), "gt": int(a > b)}[op]


# ---------------------------------------------------------------- circuits

I2 = np.eye(2, dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.diag([1, -1]).astype(complex)
SX = np.array([[1, -1j], [-1j, 1]], dtype=complex) / math.sqrt(2)


def rz(t):
    return np.diag([1, np.exp(1j * t)])


def embed(op, targets, n):
    """Dense 2^n operator for a 1- or 2-qubit ``op`` (qubit 0 is the most significant bit)."""
    if len(targets) == 1:
        mats = [op if k == targets[0] else I2 for k in range(n)]
        out = mats[0]
        for m in mats[1:]:
            out = np.kron(out, m)
        return out
    dim = 2 ** n
    out = np.zeros((dim, dim), dtype=complex)
    a, b = targets
    for col in range(dim):
        bits = [(col >> (n - 1 - k)) & 1 for k in range(n)]
        sub_in = 2 * bits[a] + bits[b]
        for sub_out in range(4):
            amp = op[sub_out, sub_in]
            if amp == 0:
                continue
            nb = list(bits)
            nb[a], nb[b] = sub_out >> 1, sub_out & 1
            row = sum(bit << (n - 1 - k) for k, bit in enumerate(nb))
            out[row, col] += amp
    return out


def expectation(state, ops, n):
    """<state| (tensor of single-qubit ops on given qubits) |state>; ``ops`` maps qubit -> 2x2."""
    full = np.eye(1, dtype=complex)
    for k in range(n):
        full = np.kron(full, ops.get(k, I2))
    return float(np.real(np.vdot(state, full @ state)))


CARDINAL = {
    "0": np.array([1, 0], dtype=complex),
    "1": np.array([0, 1], dtype=complex),
    "+": np.array([1, 1], dtype=complex) / math.sqrt(2),
    "-": np.array([1, -1], dtype=complex) / math.sqrt(2),
    "+i": np.array([1, 1j], dtype=complex) / math.sqrt(2),
    "-i": np.array([1, -1j], dtype=complex) / math.sqrt(2),
}
PAULI = {"X": X, "Y": Y, "Z": Z}


def teleport_branches(psi):
    """Destination-qubit states for each Bell outcome (m_source, m_ancilla), with the
    standard textbook circuit and X^{m_a} then Z^{m_s} corrections."""
    cnot = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
    state = np.kron(psi, np.kron(CARDINAL["0"], CARDINAL["0"]))
    state = embed(H, [1], 3) @ state
    state = embed(cnot, [1, 2], 3) @ state
    state = embed(cnot, [0, 1], 3) @ state
    state = embed(H, [0], 3) @ state
    out = {}
    for m0 in (0, 1):
        for m1 in (0, 1):
            amp = np.array([state[(m0 << 2) | (m1 << 1) | t] for t in (0, 1)])
            p = float(np.vdot(amp, amp).real)
            amp = amp / math.sqrt(p)
            if m1:
                amp = X @ amp
            if m0:
                amp = Z @ amp
            out[(m0, m1)] = (p, amp)
    return out
