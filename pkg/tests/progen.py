"""Seeded random IR programs for property and acceptance tests.

Programs use the bundled three-qubit slice Q0..Q2. Loops always span every
qubit in the program (a loop on a subset would leave those cores in a rewound
time frame and make later cross-core barriers unschedulable, which is a
documented compile error rather than something to fuzz). Every barrier is
followed by a layer of operations on disjoint qubits so that alignment is
achievable.
"""

import math
import random

QUBITS = ("Q0", "Q1", "Q2")
PAIRS = (("Q0", "Q1"), ("Q1", "Q2"))
MAX_VARS = 8  # leaves room for phase registers and the temporary
ENV = {"env_func": "cos_edge_square", "paradict": {"ramp_fraction": 0.25, "twidth": 4.0e-8}}


def raw_pulse(rng, qubit):
    return {"name": "pulse", "dest": f"{qubit}.qdrv", "freq": f"{qubit}.freq",
            "phase": round(rng.uniform(-math.pi, math.pi), 6), "amp": round(rng.uniform(0.05, 0.95), 4),
            "env": ENV}


class ProgramGenerator:
    """Builds one random program. ``fproc`` enables reads and FPROC branches;
    ``vz`` enables virtual-Z gates, which inside control flow are restricted
    to qubits whose drive frequency is bound to a phase register."""

    def __init__(self, seed, qubits=QUBITS, max_depth=3, fproc=True, vz=True, max_len=5, loops=True):
        self.rng = random.Random(seed)
        self.qubits = tuple(qubits)
        self.max_depth = max_depth
        self.fproc = fproc
        self.vz = vz
        self.max_len = max_len
        self.loops = loops
        self.n_vars = 0
        self.decls = []
        self.bound = set()

    def var(self, init):
        name = f"v{self.n_vars}"
        self.n_vars += 1
        self.decls.append({"name": "declare", "var": name, "dtype": "int", "scope": list(self.qubits)})
        return name, {"name": "set_var", "var": name, "value": init}

    def program(self):
        rng = self.rng
        if self.vz:
            for q in self.qubits:
                if rng.random() < 0.5:
                    self.bound.add(q)
        body = self.block(0)
        head = list(self.decls)
        for q in sorted(self.bound):
            head.append({"name": "declare", "var": f"{q}_ph", "dtype": "phase", "scope": [q]})
            head.append({"name": "bind_phase", "var": f"{q}_ph", "qubit": q})
        return head + body

    def simple(self, depth):
        rng = self.rng
        q = rng.choice(self.qubits)
        kinds = ["x90", "x90", "cz", "pulse", "delay"]
        if self.fproc:
            kinds.append("read")
        if self.vz and (depth == 0 or self.bound):
            kinds.append("vz")
        kind = rng.choice(kinds)
        if kind == "x90":
            return [{"name": "X90", "qubit": [q]}]
        if kind == "cz":
            pairs = [p for p in PAIRS if set(p) <= set(self.qubits)]
            if not pairs:
                return [{"name": "X90", "qubit": [q]}]
            return [{"name": "CZ", "qubit": list(rng.choice(pairs))}]
        if kind == "pulse":
            return [raw_pulse(rng, q)]
        if kind == "read":
            return [{"name": "read", "qubit": [q]}]
        if kind == "delay":
            qs = rng.sample(self.qubits, rng.randint(1, len(self.qubits)))
            return [{"name": "delay", "t": rng.randint(1, 40) * 4e-9, "qubit": sorted(qs)}]
        if depth > 0:
            q = rng.choice(sorted(self.bound))
        return [{"name": "virtual_z", "qubit": q, "phase": round(rng.uniform(-math.pi, math.pi), 6)}]

    def layer(self, qubits):
        """One op per qubit in ``qubits``; adjacent pairs may become a CZ."""
        rng = self.rng
        out = []
        rest = sorted(qubits)
        while rest:
            q = rest.pop(0)
            if rest and (q, rest[0]) in PAIRS and rng.random() < 0.3:
                out.append({"name": "CZ", "qubit": [q, rest.pop(0)]})
                continue
            choice = rng.choice(["x90", "pulse", "read"] if self.fproc else ["x90", "pulse"])
            out.append({"name": "X90", "qubit": [q]} if choice == "x90"
                       else raw_pulse(rng, q) if choice == "pulse" else {"name": "read", "qubit": [q]})
        return out

    def barrier(self):
        qs = sorted(self.rng.sample(self.qubits, self.rng.randint(2, len(self.qubits))))
        return [{"name": "barrier", "qubit": qs}] + self.layer(qs)

    def branch_var(self, depth):
        rng = self.rng
        v, init = self.var(rng.randint(0, 3))
        return [init, {"name": "branch_var", "cond_lhs": rng.randint(0, 3), "alu_cond": rng.choice(["eq", "lt", "gt"]),
                       "cond_rhs": v, "true": self.block(depth + 1), "false": self.block(depth + 1)}]

    def branch_fproc(self, depth):
        rng = self.rng
        q = rng.choice(self.qubits)
        return [{"name": "read", "qubit": [q]},
                {"name": "branch_fproc", "cond_lhs": 1, "alu_cond": "eq", "func_id": f"{q}.meas",
                 "true": self.block(depth + 1), "false": self.block(depth + 1)}]

    def loop(self, depth):
        rng = self.rng
        v, init = self.var(0)
        body = self.block(depth + 1, nonempty=True)
        body.append({"name": "alu", "op": "add", "lhs": 1, "rhs": v, "out": v})
        return [init, {"name": "loop", "cond_lhs": rng.randint(1, 3), "alu_cond": "gt", "cond_rhs": v,
                       "body": body, "scope": list(self.qubits)}]

    def block(self, depth, nonempty=False):
        rng = self.rng
        n = rng.randint(1 if nonempty else 0, self.max_len)
        out = []
        for _ in range(n):
            r = rng.random()
            if self.n_vars >= MAX_VARS and r < 0.24:
                r = 0.5
            if depth < self.max_depth and self.loops and r < 0.12:
                out += self.loop(depth)
            elif depth < self.max_depth and r < 0.24:
                out += self.branch_var(depth)
            elif depth < self.max_depth and self.fproc and r < 0.36:
                out += self.branch_fproc(depth)
            elif r < 0.5:
                out += self.barrier()
            else:
                out += self.simple(depth)
        if nonempty and not any(s["name"] in ("X90", "CZ", "pulse", "read") for s in out):
            out.append({"name": "X90", "qubit": [rng.choice(self.qubits)]})
        return out


def random_program(seed, **kw):
    return ProgramGenerator(seed, **kw).program()


def random_vz_program(seed, qubits=QUBITS, length=12):
    """Straight-line, FPROC-free mix of virtual-Z gates, gates, raw pulses, delays and barriers."""
    gen = ProgramGenerator(seed, qubits=qubits, max_depth=0, fproc=False, vz=True, max_len=length)
    rng = gen.rng
    out = []
    for _ in range(length):
        r = rng.random()
        if r < 0.35:
            q = rng.choice(qubits)
            out.append({"name": "virtual_z", "qubit": q, "phase": round(rng.uniform(-2 * math.pi, 2 * math.pi), 6)})
        elif r < 0.45:
            out += gen.barrier()
        else:
            out += gen.simple(0)
    return out


def bind_all(program, qubits=QUBITS):
    """The same program with every drive frequency bound to a phase register."""
    head = []
    for q in qubits:
        head.append({"name": "declare", "var": f"{q}_ph", "dtype": "phase", "scope": [q]})
        head.append({"name": "bind_phase", "var": f"{q}_ph", "qubit": q})
    return head + list(program)


def depth_of(program):
    best = 0
    for s in program:
        for key in ("true", "false", "body"):
            if key in s:
                best = max(best, 1 + depth_of(s[key]))
    return best
