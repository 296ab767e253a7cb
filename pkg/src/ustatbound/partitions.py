"""Diagonal-free set partitions of grouped variable labels and their wirings.

Labels are ``VarLabel(group, index)`` with 1-based groups and indices. A
partition is admissible when no block holds two labels of the same group and
every block has at least two labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, NamedTuple, Sequence


class VarLabel(NamedTuple):
    group: int
    index: int


@dataclass(frozen=True)
class Partition:
    blocks: tuple  # tuple of tuples of VarLabel, canonical order

    @property
    def size(self) -> int:
        return len(self.blocks)

    def __len__(self) -> int:
        return len(self.blocks)

    def labels(self) -> list:
        return sorted(lab for b in self.blocks for lab in b)

    @classmethod
    def from_blocks(cls, blocks: Iterable[Iterable]) -> "Partition":
        norm = [tuple(sorted(VarLabel(*lab) for lab in b)) for b in blocks]
        norm = [b for b in norm if b]
        return cls(tuple(sorted(norm, key=lambda b: b[0])))


def labels_for(group_sizes: Sequence[int]) -> list:
    if any(g < 0 for g in group_sizes):
        raise ValueError(f"group sizes must be non-negative: {list(group_sizes)}")
    return [VarLabel(g + 1, i + 1) for g, size in enumerate(group_sizes) for i in range(size)]


def enumerate_pi(group_sizes: Sequence[int]) -> list:
    """All admissible partitions, via restricted growth strings with pruning.

    Labels are visited in group-major order; label ``l`` joins an existing
    block (if that block has no label of its group) or opens a new one.
    Blocks come out ordered by their smallest label.
    """
    labels = labels_for(group_sizes)
    total = len(labels)
    out = []
    blocks: list = []

    def rec(pos: int) -> None:
        singletons = sum(1 for b in blocks if len(b) == 1)
        if singletons > total - pos:
            return
        if pos == total:
            out.append(Partition(tuple(tuple(b) for b in blocks)))
            return
        lab = labels[pos]
        for b in blocks:
            if all(x.group != lab.group for x in b):
                b.append(lab)
                rec(pos + 1)
                b.pop()
        blocks.append([lab])
        rec(pos + 1)
        blocks.pop()

    rec(0)
    return out


def group_graph_connected(partition: Partition, fixed_edges: Iterable, n_groups: int) -> bool:
    """Whether groups 1..n_groups are connected by co-membership plus fixed edges."""
    parent = list(range(n_groups + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        parent[find(a)] = find(b)

    for a, b in fixed_edges:
        union(a, b)
    for block in partition.blocks:
        groups = [lab.group for lab in block]
        for g in groups[1:]:
            union(groups[0], g)
    roots = {find(g) for g in range(1, n_groups + 1)}
    return len(roots) <= 1


def filter_connected(parts: Sequence[Partition], fixed_edges: Iterable = (), n_groups: int = 4) -> list:
    """Keep partitions whose group graph (blocks plus ``fixed_edges``) is connected."""
    fixed = [tuple(e) for e in fixed_edges]
    return [p for p in parts if group_graph_connected(p, fixed, n_groups)]


def crosses_every_bipartition(partition: Partition, fixed_edges: Iterable = (), n_groups: int = 4) -> bool:
    """Literal form of the connectivity condition: every split {M1, M2} of the
    groups is crossed by a block (or a fixed edge)."""
    groups = list(range(1, n_groups + 1))
    links = [set(lab.group for lab in b) for b in partition.blocks]
    links += [set(e) for e in fixed_edges]
    for size in range(1, n_groups):
        for m1 in combinations(groups, size):
            if 1 not in m1:
                continue  # each split counted once
            s1 = set(m1)
            if not any(link & s1 and link - s1 for link in links):
                return False
    return True


# ---------------------------------------------------------------------------
# wiring


@dataclass(frozen=True)
class WiringSpec:
    """Argument layout of a product of ``len(group_sizes)`` kernel copies.

    Copy ``c`` (1-based) has, in slot order: one slot per fixed identification
    that lists ``c``, then ``group_sizes[c-1]`` partitioned slots, then
    ``free_counts[c-1]`` free slots.
    """

    group_sizes: tuple
    fixed: tuple = ()  # tuple of tuples of copy indices sharing one variable
    free_counts: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "group_sizes", tuple(int(g) for g in self.group_sizes))
        object.__setattr__(self, "fixed", tuple(tuple(f) for f in self.fixed))
        free = tuple(self.free_counts) or (0,) * len(self.group_sizes)
        if len(free) != len(self.group_sizes):
            raise ValueError("free_counts must have one entry per copy")
        object.__setattr__(self, "free_counts", free)
        for ident in self.fixed:
            if len(set(ident)) != len(ident) or any(not 1 <= c <= len(self.group_sizes) for c in ident):
                raise ValueError(f"bad fixed identification: {ident}")

    @property
    def n_copies(self) -> int:
        return len(self.group_sizes)

    def fixed_edges(self) -> list:
        edges = []
        for ident in self.fixed:
            edges += [(ident[0], c) for c in ident[1:]]
        return edges


@dataclass(frozen=True)
class Wiring:
    slots: dict      # (copy, slot) -> outer variable index
    n_vars: int
    n_fixed: int
    n_blocks: int

    def args(self, copy: int) -> list:
        return [v for (c, s), v in sorted(self.slots.items()) if c == copy]


def build_wiring(spec: WiringSpec, partition: Partition) -> Wiring:
    """Map every kernel-argument slot to an outer integration variable.

    Variables are numbered: fixed identifications first, then one per block
    of ``partition``, then one per free slot.
    """
    expected = labels_for(spec.group_sizes)
    if partition.labels() != expected:
        raise ValueError("partition does not cover the wiring labels")
    block_of = {lab: b for b, block in enumerate(partition.blocks) for lab in block}
    n_fixed = len(spec.fixed)
    slots = {}
    free_var = n_fixed + partition.size
    for c in range(1, spec.n_copies + 1):
        slot = 0
        for f, ident in enumerate(spec.fixed):
            if c in ident:
                slots[(c, slot)] = f
                slot += 1
        for i in range(spec.group_sizes[c - 1]):
            slots[(c, slot)] = n_fixed + block_of[VarLabel(c, i + 1)]
            slot += 1
        for _ in range(spec.free_counts[c - 1]):
            slots[(c, slot)] = free_var
            free_var += 1
            slot += 1
    n_vars = free_var
    used = set(slots.values())
    if used != set(range(n_vars)):
        raise RuntimeError("wiring left an outer variable unused")
    return Wiring(slots, n_vars, n_fixed, partition.size)
