"""Precedent/dependent graph, circularity detection and review-effort metrics."""

from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Iterable, Literal, Mapping

import numpy as np

from cellsentry import kernels
from cellsentry.formula import (
    Dangling,
    FormulaSyntaxError,
    NameRef,
    Node,
    NormalizedFormula,
    collect_refs,
    normalize_r1c1,
    parse_formula,
    walk,
)
from cellsentry.model import CellKind, CellRef, RangeRef, Workbook

RANGE_EXPANSION_CAP = 1_000_000
DEFAULT_THROUGHPUT = 40.0  # unique formulas reviewed per hour

Direction = Literal["precedents", "dependents"]


def _csr(n: int, src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    order = np.argsort(src, kind="stable")
    indices = np.ascontiguousarray(dst[order], dtype=np.int64)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    return np.cumsum(indptr), indices


@dataclass(frozen=True, eq=False)
class DepGraph:
    """Directed graph over cells with edges running precedent -> dependent.

    Edges are kept per reference occurrence, so ``=A1+A1`` contributes two
    A1 edges. Range references are expanded to their member cells.
    """

    nodes: tuple[CellRef, ...]
    index: Mapping[CellRef, int]
    src: np.ndarray
    dst: np.ndarray
    sheet_order: Mapping[str, int]
    asts: Mapping[CellRef, Node] = field(default_factory=dict)
    defective: Mapping[CellRef, str] = field(default_factory=dict)
    dangling: Mapping[CellRef, tuple[Dangling, ...]] = field(default_factory=dict)
    oversized: tuple[tuple[RangeRef, CellRef], ...] = ()
    name_users: Mapping[str, frozenset[CellRef]] = field(default_factory=dict)

    @classmethod
    def from_edges(cls, nodes: Iterable[CellRef], edges: Iterable[tuple[CellRef, CellRef]]) -> "DepGraph":
        """Build a bare graph from explicit edges; mostly for tests and tools."""
        node_list: list[CellRef] = []
        index: dict[CellRef, int] = {}

        def idx(ref: CellRef) -> int:
            i = index.get(ref)
            if i is None:
                i = index[ref] = len(node_list)
                node_list.append(ref)
            return i

        for ref in nodes:
            idx(ref)
        pairs = [(idx(a), idx(b)) for a, b in edges]
        src = np.asarray([p[0] for p in pairs], dtype=np.int64)
        dst = np.asarray([p[1] for p in pairs], dtype=np.int64)
        order: dict[str, int] = {}
        for ref in node_list:
            order.setdefault(ref.sheet.casefold(), len(order))  # type: ignore[union-attr]
        return cls(tuple(node_list), index, src, dst, order)

    @property
    def edge_count(self) -> int:
        return int(self.src.shape[0])

    @cached_property
    def forward(self) -> tuple[np.ndarray, np.ndarray]:
        return _csr(len(self.nodes), self.src, self.dst)

    @cached_property
    def backward(self) -> tuple[np.ndarray, np.ndarray]:
        return _csr(len(self.nodes), self.dst, self.src)

    @cached_property
    def cross_sheet(self) -> np.ndarray:
        sheets = np.asarray([self.sheet_order.get(n.sheet.casefold(), -1) for n in self.nodes], dtype=np.int64)  # type: ignore[union-attr]
        if not len(self.nodes):
            return np.zeros(0, dtype=bool)
        return sheets[self.src] != sheets[self.dst]

    @cached_property
    def normalized(self) -> dict[CellRef, NormalizedFormula]:
        """Copy-invariant R1C1 text for every parsed formula cell."""
        return {ref: normalize_r1c1(ast, ref) for ref, ast in self.asts.items()}

    def sort_key(self, ref: CellRef) -> tuple[int, int, int]:
        return (self.sheet_order.get(ref.sheet.casefold(), len(self.sheet_order)), ref.row, ref.col)  # type: ignore[union-attr]

    def key(self, ref: CellRef) -> CellRef | None:
        """The node identity for ``ref`` (sheet spelling and fixity normalized)."""
        plain = ref.plain()
        if plain in self.index:
            return plain
        if ref.sheet is None:
            return None
        spelling = self._sheet_spelling.get(ref.sheet.casefold())
        if spelling is None:
            return None
        candidate = ref.plain(spelling)
        return candidate if candidate in self.index else None

    @cached_property
    def _sheet_spelling(self) -> dict[str, str]:
        return {n.sheet.casefold(): n.sheet for n in self.nodes if n.sheet is not None}

    def edge_lines(self) -> list[str]:
        """Edges in the ``Sheet!A1 -> Sheet!B2`` line format."""
        return [f"{self.nodes[s].a1()} -> {self.nodes[d].a1()}" for s, d in zip(self.src.tolist(), self.dst.tolist())]


def build_graph(workbook: Workbook) -> DepGraph:
    nodes: list[CellRef] = []
    index: dict[CellRef, int] = {}
    for ref, _ in workbook.iter_cells():
        index[ref] = len(nodes)
        nodes.append(ref)

    src: list[int] = []
    dst: list[int] = []
    asts: dict[CellRef, Node] = {}
    defective: dict[CellRef, str] = {}
    dangling: dict[CellRef, tuple[Dangling, ...]] = {}
    oversized: list[tuple[RangeRef, CellRef]] = []
    name_users: dict[str, set[CellRef]] = {}

    def node_id(ref: CellRef) -> int:
        i = index.get(ref)
        if i is None:
            # referenced blank cell: present as a value source
            i = index[ref] = len(nodes)
            nodes.append(ref)
        return i

    for ref, cell in workbook.iter_cells():
        if cell.kind is not CellKind.FORMULA:
            continue
        try:
            ast = parse_formula(cell.value)
        except FormulaSyntaxError as exc:
            defective[ref] = str(exc)
            continue
        asts[ref] = ast
        target = index[ref]
        missing: list[Dangling] = []
        for item in collect_refs(ast, ref, workbook):
            if isinstance(item, CellRef):
                src.append(node_id(item))
                dst.append(target)
            elif isinstance(item, RangeRef):
                if item.area > RANGE_EXPANSION_CAP:
                    oversized.append((item, ref))
                    continue
                for member in item.cells():
                    src.append(node_id(member))
                    dst.append(target)
            else:
                missing.append(item)
        if missing:
            dangling[ref] = tuple(missing)
        for node in walk(ast):
            if isinstance(node, NameRef):
                name_users.setdefault(node.name.upper(), set()).add(ref)

    return DepGraph(
        nodes=tuple(nodes),
        index=index,
        src=np.asarray(src, dtype=np.int64),
        dst=np.asarray(dst, dtype=np.int64),
        sheet_order={s.name.casefold(): i for i, s in enumerate(workbook.sheets)},
        asts=asts,
        defective=defective,
        dangling=dangling,
        oversized=tuple(oversized),
        name_users={k: frozenset(v) for k, v in name_users.items()},
    )


def _neighbours(csr: tuple[np.ndarray, np.ndarray], i: int) -> np.ndarray:
    indptr, indices = csr
    return indices[indptr[i]:indptr[i + 1]]


def reachable_from(graph: DepGraph, seeds: Iterable[CellRef], direction: Direction = "dependents") -> set[CellRef]:
    """Cells reachable by one or more steps from any seed.

    Seeds themselves are included only when reachable from a seed (a cycle).
    """
    csr = graph.forward if direction == "dependents" else graph.backward
    first: list[int] = []
    for ref in seeds:
        key = graph.key(ref)
        if key is not None:
            first.extend(_neighbours(csr, graph.index[key]).tolist())
    if not first:
        return set()
    mask = kernels.reachable(csr[0], csr[1], np.asarray(first, dtype=np.int64))
    return {graph.nodes[i] for i in np.flatnonzero(mask).tolist()}


def query_links(graph: DepGraph, ref: CellRef, direction: Direction, transitive: bool = False) -> set[CellRef]:
    if direction not in ("precedents", "dependents"):
        raise ValueError(f"unknown direction {direction!r}")
    if transitive:
        return reachable_from(graph, [ref], direction)
    key = graph.key(ref)
    if key is None:
        return set()
    csr = graph.forward if direction == "dependents" else graph.backward
    return {graph.nodes[i] for i in _neighbours(csr, graph.index[key]).tolist()}


def strongly_connected(graph: DepGraph) -> np.ndarray:
    """Component id per node; ids decrease along every inter-component edge."""
    indptr, indices = graph.forward
    return kernels.tarjan_scc(indptr, indices)


def cycle_mask(graph: DepGraph, comp: np.ndarray | None = None) -> np.ndarray:
    """Boolean mask of nodes lying on at least one cycle."""
    if comp is None:
        comp = strongly_connected(graph)
    n = len(graph.nodes)
    if n == 0:
        return np.zeros(0, dtype=bool)
    sizes = np.bincount(comp, minlength=int(comp.max()) + 1)
    mask = sizes[comp] > 1
    loops = graph.src[graph.src == graph.dst]
    mask[loops] = True
    return mask


def find_circularity(graph: DepGraph) -> list[frozenset[CellRef]]:
    """Every strongly connected component with more than one cell, plus self-references.

    Ordered by each cycle's first cell in sheet/row/column order.
    """
    if not graph.nodes:
        return []
    comp = strongly_connected(graph)
    mask = cycle_mask(graph, comp)
    groups: dict[int, list[CellRef]] = {}
    for i in np.flatnonzero(mask).tolist():
        groups.setdefault(int(comp[i]), []).append(graph.nodes[i])
    cycles = [frozenset(members) for members in groups.values()]
    cycles.sort(key=lambda c: min(graph.sort_key(r) for r in c))
    return cycles


# -- metrics -----------------------------------------------------------------


@dataclass(frozen=True)
class Metrics:
    total_cells: int
    formula_cells: int
    unique_formula_count: int
    repeated_cells: int
    original_to_repeated_ratio: str
    formula_length_histogram: dict[str, int]
    max_precedents: int
    mean_precedents: float
    max_dependents: int
    mean_dependents: float
    cross_sheet_edge_count: int
    locality_histogram: dict[str, int]
    review_throughput: float
    estimated_review_hours: float
    edge_count: int = 0
    defective_formulas: int = 0
    oversized_ranges: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "Metrics":
        return cls(**doc)


def _length_bucket(length: int) -> tuple[int, str]:
    lo = (length // 10) * 10
    return lo, f"{lo}-{lo + 9}"


def _distance_bucket(d: int) -> tuple[int, str]:
    if d <= 2:
        return d, str(d)
    hi = 1 << (d - 1).bit_length()
    return hi, f"{hi // 2 + 1}-{hi}"


def compute_metrics(workbook: Workbook, graph: DepGraph, throughput: float = DEFAULT_THROUGHPUT) -> Metrics:
    if throughput <= 0:
        raise ValueError("throughput must be positive")
    total = 0
    formulas: list[tuple[CellRef, str]] = []
    for ref, cell in workbook.iter_cells():
        total += 1
        if cell.kind is CellKind.FORMULA:
            formulas.append((ref, cell.value))

    normalized = graph.normalized
    classes = set()
    lengths: Counter[tuple[int, str]] = Counter()
    for ref, source in formulas:
        key = graph.key(ref)
        classes.add(normalized.get(key, "!" + "".join(source.split())) if key else source)
        lengths[_length_bucket(len(source))] += 1
    unique = len(classes)
    repeated = len(formulas) - unique

    n = len(graph.nodes)
    fwd_ptr, fwd_idx = graph.forward
    bwd_ptr, bwd_idx = graph.backward
    dep_counts = [len(set(fwd_idx[fwd_ptr[i]:fwd_ptr[i + 1]].tolist())) for i in range(n)]
    prec_counts = []
    for ref, _ in formulas:
        key = graph.key(ref)
        if key is None:
            prec_counts.append(0)
            continue
        i = graph.index[key]
        prec_counts.append(len(set(bwd_idx[bwd_ptr[i]:bwd_ptr[i + 1]].tolist())))

    cross = graph.cross_sheet
    locality: Counter[tuple[int, str]] = Counter()
    same = np.flatnonzero(~cross) if n else np.zeros(0, dtype=np.int64)
    rows = np.asarray([r.row for r in graph.nodes], dtype=np.int64)
    cols = np.asarray([r.col for r in graph.nodes], dtype=np.int64)
    if len(same):
        s, d = graph.src[same], graph.dst[same]
        dist = np.maximum(np.abs(rows[s] - rows[d]), np.abs(cols[s] - cols[d]))
        for value, count in zip(*np.unique(dist, return_counts=True)):
            locality[_distance_bucket(int(value))] += int(count)

    return Metrics(
        total_cells=total,
        formula_cells=len(formulas),
        unique_formula_count=unique,
        repeated_cells=repeated,
        original_to_repeated_ratio=f"{unique}:{repeated}",
        formula_length_histogram={label: c for (_, label), c in sorted(lengths.items())},
        max_precedents=max(prec_counts, default=0),
        mean_precedents=round(sum(prec_counts) / len(prec_counts), 6) if prec_counts else 0.0,
        max_dependents=max(dep_counts, default=0),
        mean_dependents=round(sum(dep_counts) / n, 6) if n else 0.0,
        cross_sheet_edge_count=int(cross.sum()) if n else 0,
        locality_histogram={label: c for (_, label), c in sorted(locality.items())},
        review_throughput=float(throughput),
        estimated_review_hours=unique / throughput,
        edge_count=graph.edge_count,
        defective_formulas=len(graph.defective),
        oversized_ranges=len(graph.oversized),
    )
