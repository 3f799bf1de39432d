"""The in-process evaluation strategies behind one Evaluator interface.

Six strategy kinds exist; five are built here and the sixth (``generated``,
compiled from emitted C) lives in :mod:`treescore.codegen` but satisfies the
same interface.  All strategies are built from the same
:class:`~treescore.model.Ensemble`, share the tie rule (value equal to
threshold goes right), narrow node data to float32, and accumulate scores
in float64 in tree order, so their outputs are bit-identical.

heap_linked
    The deliberately naive object graph: one plain Python object per node,
    virtual-style dispatch through an ``eval`` method on two polymorphic
    node classes.  The slow baseline; no pooling, no packing.
compact_linked
    One compact ``__slots__`` record per node, still individually
    allocated and pointer-chased, but traversed with a tight iterative
    loop instead of per-node dispatch.
contiguous
    All nodes of a tree packed into parallel flat lists in breadth-first
    order, tightly (unbalanced trees occupy exactly ``node_count`` slots;
    children sit at stored indices rather than computed offsets).
predicated
    Complete-table traversal with the branch-free index update
    ``i = (i << 1) + 1 + (x[fid[i]] >= theta[i])`` applied ``d`` times,
    one instance at a time.  Requires dummy-node expansion, so depth is
    capped at :data:`~treescore.model.MAX_DEPTH`.
vpredicated
    The same index update applied to ``v`` instances in lockstep, one tree
    level per step, with the per-level work vectorized across the batch.
    ``v=1`` reduces to the predicated path.  Batch remainders (the last
    ``n mod v`` rows) go through the scalar path rather than padding.

Per-depth dispatch: the predicated kinds select a fully unrolled kernel
for the tree's depth at build time (one generated function per depth up to
``MAX_DEPTH``); a generic loop kernel exists alongside and the test suite
asserts the two agree.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .model import (
    CompleteTree,
    Ensemble,
    Node,
    expand_to_complete,
    reference_predict,
)


class StrategyKind(enum.Enum):
    HEAP_LINKED = "heap_linked"
    COMPACT_LINKED = "compact_linked"
    CONTIGUOUS = "contiguous"
    PREDICATED = "predicated"
    VPREDICATED = "vpredicated"
    GENERATED = "generated"

    def __str__(self):
        return self.value


ALL_STRATEGIES = tuple(StrategyKind)


# ---------------------------------------------------------------------------
# Predication kernels
# ---------------------------------------------------------------------------
#
# The scalar kernel works on plain Python lists and ints; the batch kernel
# works on numpy arrays, advancing every instance of the batch one level
# per statement.  Both are generated unrolled per depth and dispatched from
# a table at build time; leaf_index_predicated and the index-path helpers
# are the generic loop forms the tests hold them to.

def _make_scalar_kernel(depth: int):
    lines = ["def _kernel(fids, thetas, x):", "    i = 0"]
    lines += ["    i = (i << 1) + 1 + (float(x[fids[i]]) >= thetas[i])"] * depth
    lines.append(f"    return i - {(1 << depth) - 1}")
    namespace: dict = {}
    exec(compile("\n".join(lines), f"<predicated depth={depth}>", "exec"), namespace)
    return namespace["_kernel"]


def _make_batch_kernel(depth: int):
    lines = [
        "def _kernel(fids, thetas, V, rows):",
        "    i = np.zeros(rows.shape[0], dtype=np.intp)",
    ]
    lines += ["    i = (i << 1) + 1 + (V[rows, fids[i]] >= thetas[i])"] * depth
    lines.append(f"    return i - {(1 << depth) - 1}")
    namespace: dict = {"np": np}
    exec(compile("\n".join(lines), f"<vpredicated depth={depth}>", "exec"), namespace)
    return namespace["_kernel"]


_SCALAR_KERNELS: dict = {}
_BATCH_KERNELS: dict = {}


def scalar_kernel(depth: int):
    """Unrolled single-instance kernel for ``depth``, from the dispatch table."""
    kernel = _SCALAR_KERNELS.get(depth)
    if kernel is None:
        kernel = _SCALAR_KERNELS[depth] = _make_scalar_kernel(depth)
    return kernel


def batch_kernel(depth: int):
    """Unrolled lockstep-batch kernel for ``depth``, from the dispatch table."""
    kernel = _BATCH_KERNELS.get(depth)
    if kernel is None:
        kernel = _BATCH_KERNELS[depth] = _make_batch_kernel(depth)
    return kernel


def leaf_index_predicated(ct: CompleteTree, x) -> int:
    """Branch-free leaf lookup: apply the index update exactly ``d`` times.

    Returns the leaf ordinal ``i - (2^d - 1)`` in ``[0, 2^d)``.  Generic
    loop form; the evaluators use the unrolled per-depth kernels, which the
    tests hold to this function's output.
    """
    fids = ct.fids
    thetas = ct.thetas
    i = 0
    for _ in range(ct.depth):
        i = (i << 1) + 1 + (float(x[fids[i]]) >= float(thetas[i]))
    return i - ((1 << ct.depth) - 1)


def predicated_index_path(ct: CompleteTree, x) -> list:
    """Traversal-index sequence visited by the scalar kernel (root included)."""
    fids = ct.fids
    thetas = ct.thetas
    i = 0
    path = [0]
    for _ in range(ct.depth):
        i = (i << 1) + 1 + (float(x[fids[i]]) >= float(thetas[i]))
        path.append(i)
    return path


def vpredicated_index_paths(ct: CompleteTree, matrix) -> np.ndarray:
    """Per-level traversal indices for a whole batch, shape (d+1, v).

    Row ``k`` holds every instance's traversal index after ``k`` update
    steps of the lockstep batch kernel.
    """
    V = np.ascontiguousarray(matrix, dtype=np.float32)
    v = V.shape[0]
    rows = np.arange(v)
    i = np.zeros(v, dtype=np.intp)
    out = [i.copy()]
    for _ in range(ct.depth):
        i = (i << 1) + 1 + (V[rows, ct.fids[i]] >= ct.thetas[i])
        out.append(i.copy())
    return np.stack(out)


# ---------------------------------------------------------------------------
# Evaluator interface
# ---------------------------------------------------------------------------

class Evaluator:
    """A built, immutable prediction strategy derived from an ensemble.

    Subclasses implement ``_predict_row`` (and may override
    ``_predict_into`` for batch-shaped inner loops).  ``predict`` and
    ``predict_batch`` are pure and safe to call from multiple threads.
    """

    kind: StrategyKind
    batch_size = None

    def __init__(self, ensemble: Ensemble):
        self.num_features = ensemble.num_features
        self.num_trees = len(ensemble.trees)

    # -- public API ---------------------------------------------------------

    def predict(self, x) -> float:
        x = self._coerce_vector(x)
        return self._predict_row(x)

    def predict_batch(self, data) -> np.ndarray:
        matrix = self._coerce_matrix(data)
        out = np.empty(matrix.shape[0], dtype=np.float64)
        self._predict_into(matrix, out)
        return out

    @property
    def stored_node_count(self) -> int:
        """Total node-table slots/objects held by this evaluator."""
        raise NotImplementedError

    # -- shared plumbing ------------------------------------------------------

    def _coerce_vector(self, x) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=np.float32)
        if x.ndim != 1 or x.shape[0] != self.num_features:
            raise ValueError(
                f"feature vector has shape {x.shape}, expected ({self.num_features},)"
            )
        return x

    def _coerce_matrix(self, data) -> np.ndarray:
        matrix = data.matrix if isinstance(data, Dataset) else (
            np.ascontiguousarray(data, dtype=np.float32))
        if matrix.ndim != 2 or matrix.shape[1] != self.num_features:
            raise ValueError(
                f"dataset has shape {matrix.shape}, expected "
                f"(n, {self.num_features})"
            )
        return matrix

    def _predict_row(self, x) -> float:
        raise NotImplementedError

    def _predict_into(self, matrix, out) -> None:
        # Subclasses override with a loop that binds per-tree structures
        # once per pass instead of once per row; the arithmetic (and hence
        # the bits) is identical either way.
        predict_row = self._predict_row
        for i in range(matrix.shape[0]):
            out[i] = predict_row(matrix[i])

    def __repr__(self):
        return f"{type(self).__name__}(kind={self.kind}, trees={self.num_trees})"


# -- heap_linked --------------------------------------------------------------

class _BoxedInternal:
    # Plain class, per-node dict, recursive virtual-style dispatch: the
    # obvious object-graph implementation, kept naive on purpose.
    def __init__(self, fid, threshold, left, right):
        self.fid = fid
        self.threshold = threshold
        self.left = left
        self.right = right

    def eval(self, x):
        if x[self.fid] < self.threshold:
            return self.left.eval(x)
        return self.right.eval(x)

    def count(self):
        return 1 + self.left.count() + self.right.count()


class _BoxedLeaf:
    def __init__(self, value):
        self.value = value

    def eval(self, x):
        return self.value

    def count(self):
        return 1


class HeapLinkedEvaluator(Evaluator):
    kind = StrategyKind.HEAP_LINKED

    def __init__(self, ensemble: Ensemble):
        super().__init__(ensemble)

        def copy(node: Node):
            if node.is_leaf:
                return _BoxedLeaf(node.value)
            return _BoxedInternal(node.fid, node.threshold,
                                  copy(node.left), copy(node.right))

        self._trees = tuple((copy(t.root), w) for t, w in ensemble.trees)

    def _predict_row(self, x) -> float:
        acc = 0.0
        for root, weight in self._trees:
            acc += weight * root.eval(x)
        return acc

    def _predict_into(self, matrix, out) -> None:
        if len(self._trees) != 1:
            super()._predict_into(matrix, out)
            return
        root, weight = self._trees[0]
        evaluate = root.eval
        for i in range(matrix.shape[0]):
            out[i] = weight * evaluate(matrix[i])

    @property
    def stored_node_count(self) -> int:
        return sum(root.count() for root, _ in self._trees)


# -- compact_linked ------------------------------------------------------------

class _CompactNode:
    # fid < 0 marks a leaf, with the regression value in ``value``.
    __slots__ = ("fid", "threshold", "left", "right", "value")

    def __init__(self, fid, threshold, left, right, value):
        self.fid = fid
        self.threshold = threshold
        self.left = left
        self.right = right
        self.value = value


class CompactLinkedEvaluator(Evaluator):
    kind = StrategyKind.COMPACT_LINKED

    def __init__(self, ensemble: Ensemble):
        super().__init__(ensemble)
        self._node_count = 0

        def copy(node: Node):
            self._node_count += 1
            if node.is_leaf:
                return _CompactNode(-1, 0.0, None, None, node.value)
            return _CompactNode(node.fid, node.threshold,
                                copy(node.left), copy(node.right), 0.0)

        self._trees = tuple((copy(t.root), w) for t, w in ensemble.trees)

    def _predict_row(self, x) -> float:
        acc = 0.0
        for root, weight in self._trees:
            node = root
            while node.fid >= 0:
                if x[node.fid] < node.threshold:
                    node = node.left
                else:
                    node = node.right
            acc += weight * node.value
        return acc

    def _predict_into(self, matrix, out) -> None:
        if len(self._trees) != 1:
            super()._predict_into(matrix, out)
            return
        root, weight = self._trees[0]
        for i in range(matrix.shape[0]):
            x = matrix[i]
            node = root
            while node.fid >= 0:
                if x[node.fid] < node.threshold:
                    node = node.left
                else:
                    node = node.right
            out[i] = weight * node.value

    @property
    def stored_node_count(self) -> int:
        return self._node_count


# -- contiguous ----------------------------------------------------------------

class ContiguousEvaluator(Evaluator):
    """Breadth-first packed node tables with explicit child indices.

    Unbalanced trees stay tightly packed: the tables hold exactly one slot
    per actual node, no dummy entries.  Each slot stores the feature id
    (-1 for a leaf), the threshold or leaf value, and the child indices.
    """

    kind = StrategyKind.CONTIGUOUS

    def __init__(self, ensemble: Ensemble):
        super().__init__(ensemble)
        packed = []
        for tree, weight in ensemble.trees:
            order = []
            queue = [tree.root]
            index = {}
            head = 0
            while head < len(queue):
                node = queue[head]
                head += 1
                index[id(node)] = len(order)
                order.append(node)
                if not node.is_leaf:
                    queue.append(node.left)
                    queue.append(node.right)
            fids = [(-1 if n.is_leaf else n.fid) for n in order]
            slots = [(n.value if n.is_leaf else n.threshold) for n in order]
            left = [(0 if n.is_leaf else index[id(n.left)]) for n in order]
            right = [(0 if n.is_leaf else index[id(n.right)]) for n in order]
            packed.append((fids, slots, left, right, weight))
        self._trees = tuple(packed)

    def _predict_row(self, x) -> float:
        acc = 0.0
        for fids, slots, left, right, weight in self._trees:
            j = 0
            fid = fids[0]
            while fid >= 0:
                if x[fid] < slots[j]:
                    j = left[j]
                else:
                    j = right[j]
                fid = fids[j]
            acc += weight * slots[j]
        return acc

    def _predict_into(self, matrix, out) -> None:
        if len(self._trees) != 1:
            super()._predict_into(matrix, out)
            return
        fids, slots, left, right, weight = self._trees[0]
        for i in range(matrix.shape[0]):
            x = matrix[i]
            j = 0
            fid = fids[0]
            while fid >= 0:
                if x[fid] < slots[j]:
                    j = left[j]
                else:
                    j = right[j]
                fid = fids[j]
            out[i] = weight * slots[j]

    @property
    def stored_node_count(self) -> int:
        return sum(len(fids) for fids, _, _, _, _ in self._trees)


# -- predicated ------------------------------------------------------------------

class PredicatedEvaluator(Evaluator):
    """Branch-free complete-table traversal, one instance at a time."""

    kind = StrategyKind.PREDICATED

    def __init__(self, ensemble: Ensemble):
        super().__init__(ensemble)
        prepared = []
        tables = []
        for tree, weight in ensemble.trees:
            ct = expand_to_complete(tree)
            # Python-list mirrors keep the scalar inner loop free of numpy
            # scalar boxing; values are identical to the packed tables.
            fids = [int(v) for v in ct.fids]
            thetas = [float(v) for v in ct.thetas]
            leaves = [float(v) for v in ct.leaf_values]
            prepared.append((scalar_kernel(ct.depth), fids, thetas, leaves, weight))
            tables.append(ct)
        self._trees = tuple(prepared)
        self.tables = tuple(tables)

    def _predict_row(self, x) -> float:
        acc = 0.0
        for kernel, fids, thetas, leaves, weight in self._trees:
            acc += weight * leaves[kernel(fids, thetas, x)]
        return acc

    def _predict_into(self, matrix, out) -> None:
        if len(self._trees) != 1:
            super()._predict_into(matrix, out)
            return
        kernel, fids, thetas, leaves, weight = self._trees[0]
        for i in range(matrix.shape[0]):
            out[i] = weight * leaves[kernel(fids, thetas, matrix[i])]

    @property
    def stored_node_count(self) -> int:
        return sum(ct.table_entries for ct in self.tables)


# -- vpredicated -------------------------------------------------------------------

class VPredicatedEvaluator(Evaluator):
    """Lockstep predication over batches of ``batch_size`` instances.

    Full batches advance all ``v`` cursors one tree level per step; the
    remainder rows (and ``v=1``) use the scalar predicated path, which
    produces identical results.  Interleaving is per tree, so ensembles of
    mixed depths are handled tree-locally.
    """

    kind = StrategyKind.VPREDICATED

    def __init__(self, ensemble: Ensemble, batch_size: int):
        super().__init__(ensemble)
        batch_size = int(batch_size)
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {batch_size}")
        self.batch_size = batch_size
        vector = []
        scalar = []
        tables = []
        for tree, weight in ensemble.trees:
            ct = expand_to_complete(tree)
            leaf64 = ct.leaf_values.astype(np.float64)
            vector.append((batch_kernel(ct.depth) if ct.depth else None,
                           ct.fids, ct.thetas, leaf64, weight))
            scalar.append((scalar_kernel(ct.depth),
                           [int(v) for v in ct.fids],
                           [float(v) for v in ct.thetas],
                           [float(v) for v in ct.leaf_values],
                           weight))
            tables.append(ct)
        self._vector_trees = tuple(vector)
        self._scalar_trees = tuple(scalar)
        self.tables = tuple(tables)

    def _predict_row(self, x) -> float:
        acc = 0.0
        for kernel, fids, thetas, leaves, weight in self._scalar_trees:
            acc += weight * leaves[kernel(fids, thetas, x)]
        return acc

    def _predict_into(self, matrix, out) -> None:
        n = matrix.shape[0]
        v = self.batch_size
        start = 0
        if v > 1:
            rows = np.arange(v)
            full = (n // v) * v
            while start < full:
                V = matrix[start:start + v]
                acc = np.zeros(v, dtype=np.float64)
                for kernel, fids, thetas, leaf64, weight in self._vector_trees:
                    if kernel is None:
                        acc += weight * leaf64[0]
                    else:
                        acc += weight * leaf64[kernel(fids, thetas, V, rows)]
                out[start:start + v] = acc
                start += v
        if start == n:
            return
        if len(self._scalar_trees) == 1:
            kernel, fids, thetas, leaves, weight = self._scalar_trees[0]
            for i in range(start, n):
                out[i] = weight * leaves[kernel(fids, thetas, matrix[i])]
        else:
            predict_row = self._predict_row
            for i in range(start, n):
                out[i] = predict_row(matrix[i])

    @property
    def stored_node_count(self) -> int:
        return sum(ct.table_entries for ct in self.tables)


# ---------------------------------------------------------------------------
# Builder
# ---------------------------------------------------------------------------

_BUILDERS = {
    StrategyKind.HEAP_LINKED: HeapLinkedEvaluator,
    StrategyKind.COMPACT_LINKED: CompactLinkedEvaluator,
    StrategyKind.CONTIGUOUS: ContiguousEvaluator,
    StrategyKind.PREDICATED: PredicatedEvaluator,
}


def build(ensemble: Ensemble, kind, batch_size: int | None = None) -> Evaluator:
    """Build an evaluator of the given kind from an ensemble.

    ``batch_size`` applies to (and is required by) ``vpredicated`` only.
    ``generated`` evaluators are built by
    :func:`treescore.codegen.build_generated`, which needs a host compiler.
    Predicated kinds raise :class:`~treescore.model.DepthLimitError` for
    trees deeper than :data:`~treescore.model.MAX_DEPTH`.
    """
    kind = StrategyKind(kind)
    if kind is StrategyKind.GENERATED:
        raise ValueError(
            "generated evaluators are compiled; use treescore.codegen.build_generated"
        )
    if kind is StrategyKind.VPREDICATED:
        if batch_size is None:
            raise ValueError("vpredicated requires a batch_size (v >= 1)")
        return VPredicatedEvaluator(ensemble, batch_size)
    if batch_size is not None:
        raise ValueError(f"batch_size does not apply to {kind.value}")
    return _BUILDERS[kind](ensemble)


# ---------------------------------------------------------------------------
# Traced prediction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TracedPrediction:
    score: float
    visited_features: frozenset
    visited_leaves: tuple


def predict_ensemble_traced(ensemble: Ensemble, x) -> TracedPrediction:
    """Score ``x`` while recording which features the traversals examined.

    ``visited_features`` is the union of feature ids on the root-to-leaf
    path taken in every tree (logical trees carry no dummy nodes, so none
    are counted).  ``visited_leaves`` holds one left-to-right leaf ordinal
    per tree.  The score equals the untraced prediction exactly.
    """
    visited: set = set()
    leaves = []
    acc = 0.0
    for tree, weight in ensemble.trees:
        node = tree.root
        while node.left is not None:
            visited.add(node.fid)
            if float(x[node.fid]) < node.threshold:
                node = node.left
            else:
                node = node.right
        leaves.append(tree.leaf_ordinal(node))
        acc += weight * node.value
    return TracedPrediction(acc, frozenset(visited), tuple(leaves))


def reference_batch(ensemble: Ensemble, matrix) -> np.ndarray:
    """Reference traversal applied row by row; the correctness-gate oracle."""
    matrix = np.asarray(matrix, dtype=np.float32)
    out = np.empty(matrix.shape[0], dtype=np.float64)
    for i in range(matrix.shape[0]):
        out[i] = reference_predict(ensemble, matrix[i])
    return out
