"""Pure-Python graph and grid kernels.

Same signatures and results as the compiled ``_kernels`` module. Graphs are
in CSR form: the successors of node ``v`` are ``indices[indptr[v]:indptr[v+1]]``.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def tarjan_scc(indptr: np.ndarray, indices: np.ndarray) -> np.ndarray:
    """Component id per node.

    Components are numbered in the order Tarjan's algorithm completes them,
    which is a reverse topological order of the condensation: if an edge runs
    from component a to component b (a != b) then a > b.
    """
    ptr = indptr.tolist()
    adj = indices.tolist()
    n = len(ptr) - 1
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    comp = [-1] * n
    stack: list[int] = []
    counter = 0
    ncomp = 0
    for root in range(n):
        if index[root] != -1:
            continue
        # explicit call stack of (node, next edge position)
        call = [(root, ptr[root])]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        while call:
            v, pos = call[-1]
            end = ptr[v + 1]
            descended = False
            while pos < end:
                w = adj[pos]
                pos += 1
                if index[w] == -1:
                    call[-1] = (v, pos)
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack[w] = True
                    call.append((w, ptr[w]))
                    descended = True
                    break
                if on_stack[w] and index[w] < low[v]:
                    low[v] = index[w]
            if descended:
                continue
            call.pop()
            if low[v] == index[v]:
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp[w] = ncomp
                    if w == v:
                        break
                ncomp += 1
            if call:
                u = call[-1][0]
                if low[v] < low[u]:
                    low[u] = low[v]
    return np.asarray(comp, dtype=np.int64)


def reachable(indptr: np.ndarray, indices: np.ndarray, seeds: np.ndarray) -> np.ndarray:
    """Mask of nodes reachable from ``seeds`` (seeds included)."""
    ptr = indptr.tolist()
    adj = indices.tolist()
    n = len(ptr) - 1
    seen = bytearray(n)
    frontier = []
    for s in seeds.tolist():
        if not seen[s]:
            seen[s] = 1
            frontier.append(s)
    while frontier:
        v = frontier.pop()
        for pos in range(ptr[v], ptr[v + 1]):
            w = adj[pos]
            if not seen[w]:
                seen[w] = 1
                frontier.append(w)
    return np.frombuffer(bytes(seen), dtype=np.uint8).copy()


def line_outliers(codes: np.ndarray, min_run: int, threshold: float) -> np.ndarray:
    """Positions of minority members in majority-dominated runs.

    ``codes`` holds one class id per position, negative where there is no
    formula. A run is a maximal stretch of non-negative codes. In runs of at
    least ``min_run`` where one class covers a fraction >= ``threshold`` (and
    more than half), every position holding another class is returned.
    """
    vals = codes.tolist()
    n = len(vals)
    out: list[int] = []
    i = 0
    while i < n:
        if vals[i] < 0:
            i += 1
            continue
        j = i
        while j < n and vals[j] >= 0:
            j += 1
        length = j - i
        if length >= min_run:
            # Boyer-Moore vote finds the only possible strict-majority class
            cand, count = -1, 0
            for k in range(i, j):
                if count == 0:
                    cand, count = vals[k], 1
                elif vals[k] == cand:
                    count += 1
                else:
                    count -= 1
            hits = sum(1 for k in range(i, j) if vals[k] == cand)
            if 2 * hits > length and hits / length >= threshold:
                out.extend(k for k in range(i, j) if vals[k] != cand)
        i = j
    return np.asarray(out, dtype=np.int64)
