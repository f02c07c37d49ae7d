"""Timing linter for per-core assembly.

Walks each core's instruction list along its control flow, tracking the
worst-case issue time with the shared cost table, and reports pulses that
cannot be triggered on time, overlapping pulses on a channel, loops whose
back edge arrives later than the loop entry, and FPROC reads issued before
their measurement is available.
"""

from dataclasses import dataclass

from ..timing import CostTable

NEG = float("-inf")
_PSEUDO = ("jump_label", "declare_reg")


@dataclass(frozen=True)
class Diagnostic:
    kind: str
    core: str
    index: int
    message: str

    def __str__(self):
        return f"{self.kind} [{self.core} #{self.index}]: {self.message}"


def _flow(ops):
    """Real instruction indices, successor lists and the entry index."""
    real = [i for i, op in enumerate(ops) if op["op"] not in _PSEUDO]
    pos = {i: k for k, i in enumerate(real)}
    label_at = {}
    pending = []
    for i, op in enumerate(ops):
        if op["op"] == "jump_label":
            pending.append(op["dest_label"])
        elif op["op"] != "declare_reg":
            for lab in pending:
                label_at[lab] = pos[i]
            pending = []
    for lab in pending:
        label_at[lab] = len(real)
    succ = []
    for k, i in enumerate(real):
        op = ops[i]
        nxt = [k + 1] if k + 1 <= len(real) else []
        kind = op["op"]
        if kind == "jump_i":
            succ.append([label_at[op["jump_label"]]])
        elif kind in ("jump_cond", "jump_fproc"):
            succ.append(sorted({label_at[op["jump_label"]], k + 1}))
        elif kind == "done_stb":
            succ.append([])
        else:
            succ.append(nxt)
    return real, succ


def _order(n, succ):
    """Reverse postorder over the instruction graph and its back edges."""
    state, order, back = {}, [], set()
    if n == 0:
        return order, back
    stack = [(0, iter(succ[0] if 0 < len(succ) else []))]
    state[0] = "open"
    while stack:
        node, it = stack[-1]
        nxt = next(it, None)
        if nxt is None:
            state[node] = "closed"
            order.append(node)
            stack.pop()
        elif state.get(nxt) == "open":
            back.add((node, nxt))
        elif nxt not in state:
            state[nxt] = "open"
            stack.append((nxt, iter(succ[nxt] if nxt < len(succ) else [])))
    return order[::-1], back


def lint_core(core, ops, duration, costs=None, fproc_waits=None):
    """Diagnostics for one core's assembly (list of op dicts).

    ``duration(op)`` gives a pulse's length in cycles. ``fproc_waits`` maps an
    FPROC id to ``(demod channel, delay cycles)`` for the availability check.
    """
    costs = costs or CostTable()
    real, succ = _flow(ops)
    order, back = _order(len(real), succ)
    preds = {}
    for k, ss in enumerate(succ):
        for d in ss:
            preds.setdefault(d, []).append(k)
    diags = []
    out_state, in_state = {}, {}

    def merge(states):
        t = max(s[0] for s in states)
        free, meas = {}, {}
        for _, f, m in states:
            for ch, v in f.items():
                free[ch] = max(free.get(ch, NEG), v)
            for ch, v in m.items():
                meas[ch] = max(meas.get(ch, NEG), v)
        return t, free, meas

    for k in order:
        if k >= len(real):
            continue
        incoming = [out_state[p] for p in preds.get(k, []) if (p, k) not in back and p in out_state]
        t, free, meas = merge(incoming) if incoming else (0, {}, {})
        free, meas = dict(free), dict(meas)
        in_state[k] = (t, free, meas)
        op = ops[real[k]]
        kind = op["op"]
        if kind == "pulse":
            if "start_time" in op:
                start = int(op["start_time"])
                ready = t + costs["pulse_write_trig"]
                dest = op["dest"]
                if start < ready:
                    diags.append(Diagnostic("TriggerTooEarly", core, real[k],
                                            f"pulse on {dest} starts at {start} but the core can only "
                                            f"trigger it at {ready}"))
                if start < free.get(dest, NEG):
                    diags.append(Diagnostic("ChannelOverlap", core, real[k],
                                            f"pulse on {dest} at {start} overlaps the previous pulse "
                                            f"ending at {free[dest]}"))
                end = start + duration(op)
                free[dest] = max(free.get(dest, NEG), end)
                meas[dest] = end
                t = max(start, ready) + 1
            else:
                t += costs["pulse_write"]
        elif kind == "idle":
            t = max(t + costs["idle"], int(op["end_time"]))
        elif kind in ("jump_fproc", "alu_fproc"):
            fid = op["func_id"]
            if fproc_waits and isinstance(fid, int) and fid in fproc_waits:
                ch, delay = fproc_waits[fid]
                if ch in meas and t < meas[ch] + delay:
                    diags.append(Diagnostic("FprocTooEarly", core, real[k],
                                            f"FPROC read of id {fid} at {t} precedes measurement "
                                            f"availability at {meas[ch] + delay}"))
            t += costs.fproc_latency + costs[kind]
        elif kind == "inc_qclk":
            t += costs["inc_qclk"]
            amount = op["in0"]
            if isinstance(amount, int):
                t += amount
                free = {ch: v + amount for ch, v in free.items()}
                meas = {ch: v + amount for ch, v in meas.items()}
            else:
                diags.append(Diagnostic("UnknownTimeShift", core, real[k],
                                        "inc_qclk by a register cannot be checked statically"))
        elif kind == "done_stb":
            t += costs["done_stb"]
        else:
            t += costs[kind]
        out_state[k] = (t, free, meas)

    for src, dst in sorted(back):
        if src not in out_state or dst not in in_state:
            continue
        t_arr, free_arr, _ = out_state[src]
        t_hdr, free_hdr, _ = in_state[dst]
        late = t_arr > t_hdr or any(v > free_hdr.get(ch, NEG) for ch, v in free_arr.items()
                                    if v > NEG and ch in free_hdr)
        if late:
            diags.append(Diagnostic("LoopOverrun", core, real[src],
                                    f"back edge reaches the loop head at {t_arr} (head scheduled at {t_hdr}) "
                                    f"or with busy channels"))
    return diags


def lint_program(asm_program, chan_cfg, costs=None, fproc_waits=None):
    """Lint every core of an assembly program (core key -> op list)."""

    def duration(op):
        if isinstance(op["env"], str):
            return 0  # register envelope: length unknown until run time
        return chan_cfg[op["dest"]].element.env_length_cycles(op["env"])

    diags = []
    for key, ops in asm_program.items():
        name = key if isinstance(key, str) else ",".join(key)
        diags.extend(lint_core(name, ops, duration, costs, fproc_waits))
    return diags
