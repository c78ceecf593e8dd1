"""Discrete architectures and their bit-exact text serialization.

A genotype is the derived architecture: per cell type, the retained
(source, target, operator) edges. The text format is fixed so identical
searches produce byte-identical files::

    genotype v1
    normal:
    0->2:skip_connect
    1->2:sep_conv_3x3
    reduce:
    ...

Entries are sorted by (target, source). Operator names come from the
canonical candidate set and never include ``none``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import GenotypeError
from .ops import CANONICAL_OPERATORS

Edge = tuple[int, int, str]  # (source node, target node, operator name)

GENOTYPE_OPERATORS = tuple(n for n in CANONICAL_OPERATORS if n != "none")

_ENTRY_RE = re.compile(r"^(\d+)->(\d+):([a-z0-9_]+)$")


@dataclass(frozen=True)
class Genotype:
    """Derived cell architectures for normal and reduction cells."""

    normal: tuple[Edge, ...]
    reduce: tuple[Edge, ...]

    def edges(self, cell_type: str) -> tuple[Edge, ...]:
        if cell_type == "normal":
            return self.normal
        if cell_type == "reduce":
            return self.reduce
        raise GenotypeError(f"unknown cell type {cell_type!r}")

    def with_operator(self, op_name: str) -> "Genotype":
        """Same topology with every edge relabeled to ``op_name``."""
        if op_name not in GENOTYPE_OPERATORS:
            raise GenotypeError(f"operator {op_name!r} is not an assignable genotype operator")
        return Genotype(
            normal=tuple((s, d, op_name) for s, d, _ in self.normal),
            reduce=tuple((s, d, op_name) for s, d, _ in self.reduce),
        )


def _check_edges(edges: tuple[Edge, ...], section: str) -> tuple[Edge, ...]:
    seen: set[tuple[int, int]] = set()
    indegree: dict[int, int] = {}
    for src, dst, op in edges:
        if op not in GENOTYPE_OPERATORS:
            raise GenotypeError(f"{section}: unknown operator name {op!r}")
        if src >= dst:
            raise GenotypeError(f"{section}: edge {src}->{dst} does not point forward")
        if dst < 2:
            raise GenotypeError(f"{section}: node {dst} is an input node and cannot have in-edges")
        if (src, dst) in seen:
            raise GenotypeError(f"{section}: duplicate edge {src}->{dst}")
        seen.add((src, dst))
        indegree[dst] = indegree.get(dst, 0) + 1
        if indegree[dst] > 2:
            raise GenotypeError(f"{section}: node {dst} has more than 2 in-edges")
    for dst, count in sorted(indegree.items()):
        if count != 2:
            raise GenotypeError(f"{section}: node {dst} has {count} in-edges, expected 2")
    return tuple(sorted(edges, key=lambda e: (e[1], e[0])))


def validate_genotype(g: Genotype, nodes: int | None = None) -> Genotype:
    """Check structural invariants; returns the genotype with sorted edges.

    With ``nodes`` given, additionally requires every intermediate node of
    an ``nodes``-node cell (targets 2 .. nodes-2) to be present with its two
    in-edges and all sources in range.
    """
    normal = _check_edges(g.normal, "normal")
    reduce_ = _check_edges(g.reduce, "reduce")
    if nodes is not None:
        expected = set(range(2, nodes - 1))
        for section, edges in (("normal", normal), ("reduce", reduce_)):
            targets = {dst for _, dst, _ in edges}
            if targets != expected:
                missing = sorted(expected - targets)
                extra = sorted(targets - expected)
                raise GenotypeError(
                    f"{section}: intermediate nodes mismatch for a {nodes}-node cell"
                    + (f"; missing {missing}" if missing else "")
                    + (f"; out of range {extra}" if extra else ""))
            for src, dst, _ in edges:
                if src >= nodes - 1:
                    raise GenotypeError(f"{section}: source {src} is not below the output node")
    return Genotype(normal=normal, reduce=reduce_)


def serialize_genotype(g: Genotype) -> str:
    g = validate_genotype(g)
    lines = ["genotype v1"]
    for section, edges in (("normal", g.normal), ("reduce", g.reduce)):
        lines.append(f"{section}:")
        lines.extend(f"{src}->{dst}:{op}" for src, dst, op in edges)
    return "\n".join(lines) + "\n"


def parse_genotype(text: str) -> Genotype:
    sections: dict[str, list[Edge]] = {}
    current: list[Edge] | None = None
    header_seen = False
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if not header_seen:
            if line != "genotype v1":
                raise GenotypeError(f"line {number}: missing 'genotype v1' header")
            header_seen = True
            continue
        if line in ("normal:", "reduce:"):
            name = line[:-1]
            if name in sections:
                raise GenotypeError(f"line {number}: duplicate section {name!r}")
            current = sections.setdefault(name, [])
            continue
        m = _ENTRY_RE.match(line)
        if m is None:
            raise GenotypeError(f"line {number}: malformed edge entry {line!r}")
        if current is None:
            raise GenotypeError(f"line {number}: edge entry before any section header")
        current.append((int(m.group(1)), int(m.group(2)), m.group(3)))
    if not header_seen:
        raise GenotypeError("missing 'genotype v1' header")
    for name in ("normal", "reduce"):
        if name not in sections:
            raise GenotypeError(f"missing section {name!r}")
    return validate_genotype(Genotype(normal=tuple(sections["normal"]),
                                      reduce=tuple(sections["reduce"])))
