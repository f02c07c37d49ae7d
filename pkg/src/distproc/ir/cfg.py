"""Basic blocks and the control-flow graph over a lowered (flat) statement list."""

from dataclasses import dataclass

from ..errors import UndefinedLabel
from .statements import Done, Jump, JumpCond, JumpFproc, Label

_BRANCHES = (JumpCond, JumpFproc)


@dataclass(frozen=True)
class BasicBlock:
    index: int
    start: int
    end: int
    label: str = None

    def __len__(self):
        return self.end - self.start


class ControlFlowGraph:
    """Blocks are half-open index ranges into the statement list.

    Edge kinds: ``taken`` and ``fallthrough`` leave a conditional jump,
    ``jump`` leaves an unconditional one, ``next`` joins straight-line blocks.
    """

    def __init__(self, statements, blocks, edges):
        self.statements = tuple(statements)
        self.blocks = list(blocks)
        self.edges = list(edges)
        self._succ = {b.index: [] for b in self.blocks}
        self._pred = {b.index: [] for b in self.blocks}
        for src, dst, kind in self.edges:
            self._succ[src].append((dst, kind))
            self._pred[dst].append((src, kind))
        self.back_edges = self._find_back_edges()

    entry = 0

    def successors(self, block):
        return [d for d, _ in self._succ[block]]

    def predecessors(self, block):
        return [s for s, _ in self._pred[block]]

    def forward_predecessors(self, block):
        return [s for s in self.predecessors(block) if (s, block) not in self.back_edges]

    @property
    def exits(self):
        return [b.index for b in self.blocks if not self._succ[b.index]]

    def block_of(self, stmt_index):
        for b in self.blocks:
            if b.start <= stmt_index < b.end:
                return b.index
        raise IndexError(stmt_index)

    def block_statements(self, block):
        b = self.blocks[block]
        return self.statements[b.start:b.end]

    def _find_back_edges(self):
        back, state = set(), {}
        if not self.blocks:
            return back
        stack = [(self.entry, iter(self.successors(self.entry)))]
        state[self.entry] = "open"
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                state[node] = "closed"
                stack.pop()
            elif state.get(nxt) == "open":
                back.add((node, nxt))
            elif nxt not in state:
                state[nxt] = "open"
                stack.append((nxt, iter(self.successors(nxt))))
        return back

    def reachable(self):
        seen, todo = set(), [self.entry] if self.blocks else []
        while todo:
            b = todo.pop()
            if b not in seen:
                seen.add(b)
                todo.extend(self.successors(b))
        return seen

    def reverse_postorder(self):
        """Reachable blocks, each after all of its forward predecessors."""
        order, seen = [], set()
        if not self.blocks:
            return order
        stack = [(self.entry, iter(sorted(self.successors(self.entry), reverse=True)))]
        seen.add(self.entry)
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                order.append(node)
                stack.pop()
            elif nxt not in seen and (node, nxt) not in self.back_edges:
                seen.add(nxt)
                stack.append((nxt, iter(sorted(self.successors(nxt), reverse=True))))
        return order[::-1]

    def project(self, core):
        """Per-core view: block index -> statements that run on ``core``."""
        return {b.index: [s for s in self.block_statements(b.index) if s.cores is None or core in s.cores]
                for b in self.blocks}

    def edge_set(self):
        return {(s, d, k) for s, d, k in self.edges}


def build_cfg(statements):
    statements = tuple(statements)
    n = len(statements)
    leaders = {0} if n else set()
    for i, s in enumerate(statements):
        if isinstance(s, Label):
            leaders.add(i)
        if isinstance(s, (Jump, JumpCond, JumpFproc, Done)) and i + 1 < n:
            leaders.add(i + 1)
    starts = sorted(leaders)
    blocks = []
    for k, start in enumerate(starts):
        end = starts[k + 1] if k + 1 < len(starts) else n
        label = statements[start].label if isinstance(statements[start], Label) else None
        blocks.append(BasicBlock(k, start, end, label))
    by_label = {b.label: b.index for b in blocks if b.label is not None}
    edges = []
    for b in blocks:
        last = statements[b.end - 1]
        has_next = b.index + 1 < len(blocks)
        if isinstance(last, Jump):
            edges.append((b.index, _target(by_label, last.label), "jump"))
        elif isinstance(last, _BRANCHES):
            edges.append((b.index, _target(by_label, last.label), "taken"))
            if has_next:
                edges.append((b.index, b.index + 1, "fallthrough"))
        elif isinstance(last, Done):
            pass
        elif has_next:
            edges.append((b.index, b.index + 1, "next"))
    return ControlFlowGraph(statements, blocks, edges)


def _target(by_label, label):
    try:
        return by_label[label]
    except KeyError:
        raise UndefinedLabel(f"jump target {label!r} is not defined") from None
