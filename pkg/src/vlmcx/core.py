"""Domain types for categorical time series and variable-length context trees.

Conventions used throughout the package:

* States are integers ``0 .. p-1``.  In the binary case ``p = 2`` the modeled
  transition is into state 1; state 0 is always the baseline category.
* A context is a tuple of states in reverse time: element 0 is the most
  recent state, element 1 the one before that, and so on.  Tree paths,
  printed labels, and the JSON model format all use this order, so the
  label ``"0110"`` means "last state 0, then 1, then 1, then 0 going back".
* A context tree is a prefix-closed map from contexts to optional parameter
  blocks.  Nodes without children are leaves and only leaves carry
  parameters.  Branches may stop at different depths.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import (
    ChildrenNotLeaves,
    DataError,
    HistoryTooShort,
    MalformedModel,
    RootHasNoSiblings,
)

Context = tuple[int, ...]

ROOT: Context = ()


def context_label(u: Context) -> str:
    """Human-readable label, most recent state first; the root is ``<root>``."""
    return ",".join(str(s) for s in u) if u else "<root>"


def _as_context(u: Iterable[int]) -> Context:
    return tuple(int(s) for s in u)


@dataclass(eq=False)
class ParamBlock:
    """Regression coefficients attached to one context.

    ``alpha[j]`` and ``beta[j]`` belong to the transition into target state
    ``j + 1`` (state 0 is the baseline and carries no parameters).  ``beta``
    has shape ``(p - 1, h, d)``: row ``t`` of each target's matrix multiplies
    the covariate vector observed ``t + 1`` steps before the transition.

    ``h`` is the number of stored lag rows.  Trailing rows that are zero for
    every target are trimmed on construction, so ``h`` always equals the
    depth of the last active lag (0 when no covariate enters).
    """

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self) -> None:
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        beta = np.asarray(self.beta, dtype=float)
        if alpha.ndim != 1 or alpha.size < 1:
            raise MalformedModel("alpha must be a non-empty vector")
        if beta.ndim != 3:
            raise MalformedModel("beta must have shape (p - 1, h, d)")
        if beta.shape[0] != alpha.shape[0]:
            raise MalformedModel(
                f"beta has {beta.shape[0]} target rows, alpha has {alpha.shape[0]}"
            )
        if not np.all(np.isfinite(alpha)) or not np.all(np.isfinite(beta)):
            raise MalformedModel("coefficients must be finite")
        while beta.shape[1] > 0 and not np.any(beta[:, -1, :]):
            beta = beta[:, :-1, :]
        alpha = alpha.copy()
        beta = beta.copy()
        alpha.setflags(write=False)
        beta.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @classmethod
    def binary(cls, alpha: float, beta_rows: Sequence[Sequence[float]] | Sequence[float], d: int = 1) -> "ParamBlock":
        """Convenience constructor for ``p = 2``.

        ``beta_rows`` is one coefficient per lag when ``d = 1``, or one
        length-``d`` row per lag otherwise.
        """
        rows = np.asarray(beta_rows, dtype=float)
        if rows.ndim == 1:
            rows = rows.reshape(-1, 1) if d == 1 else rows.reshape(-1, d)
        return cls(alpha=np.array([alpha], dtype=float), beta=rows[np.newaxis, :, :])

    @property
    def n_targets(self) -> int:
        return int(self.alpha.shape[0])

    @property
    def p(self) -> int:
        return self.n_targets + 1

    @property
    def h(self) -> int:
        """Number of active covariate lags."""
        return int(self.beta.shape[1])

    @property
    def d(self) -> int:
        return int(self.beta.shape[2])

    def truncated(self, h: int) -> "ParamBlock":
        """Copy keeping only the first ``h`` lag rows."""
        if not 0 <= h <= self.h:
            raise ValueError(f"h={h} outside [0, {self.h}]")
        return ParamBlock(alpha=self.alpha, beta=self.beta[:, :h, :])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ParamBlock):
            return NotImplemented
        return (
            self.beta.shape == other.beta.shape
            and np.array_equal(self.alpha, other.alpha)
            and np.array_equal(self.beta, other.beta)
        )


@dataclass(eq=False)
class ContextTree:
    """Prefix-closed context map over states ``0 .. p-1``.

    ``nodes`` maps each context to its ParamBlock (leaves) or ``None``
    (internal nodes; also allowed for a leaf that has not been fitted yet).
    """

    p: int
    d: int
    nodes: dict[Context, ParamBlock | None] = field(repr=False)

    def __post_init__(self) -> None:
        if self.p < 2:
            raise MalformedModel(f"need at least two states, got p={self.p}")
        if self.d < 0:
            raise MalformedModel(f"covariate dimension must be >= 0, got {self.d}")
        nodes = {_as_context(u): b for u, b in self.nodes.items()}
        if ROOT not in nodes:
            raise MalformedModel("tree must contain the root context")
        internal = {u[:-1] for u in nodes if u}
        for u in nodes:
            if u and u[:-1] not in nodes:
                raise MalformedModel(f"missing parent of {context_label(u)}")
            if any(not 0 <= s < self.p for s in u):
                raise MalformedModel(f"state outside 0..{self.p - 1} in {context_label(u)}")
        for u, block in nodes.items():
            if block is None:
                continue
            if u in internal:
                raise MalformedModel(f"internal node {context_label(u)} carries parameters")
            if block.n_targets != self.p - 1:
                raise MalformedModel(
                    f"leaf {context_label(u)}: block for {block.p} states in a {self.p}-state tree"
                )
            if block.d != self.d and block.h > 0:
                raise MalformedModel(
                    f"leaf {context_label(u)}: covariate dimension {block.d} != {self.d}"
                )
            if block.h > len(u):
                raise MalformedModel(
                    f"leaf {context_label(u)}: {block.h} lags exceed context length {len(u)}"
                )
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "_internal", internal)

    # -- structure queries ------------------------------------------------

    def is_leaf(self, u: Context) -> bool:
        return u in self.nodes and u not in self._internal

    def children(self, u: Context) -> list[Context]:
        return [u + (w,) for w in range(self.p) if u + (w,) in self.nodes]

    def leaves(self) -> list[Context]:
        """All leaf contexts in lexicographic order."""
        return sorted(u for u in self.nodes if u not in self._internal)

    @property
    def order(self) -> int:
        """Depth of the deepest leaf (0 for a root-only tree)."""
        return max(len(u) for u in self.nodes)

    @property
    def covariate_order(self) -> int:
        """Largest number of active lags over the fitted leaves."""
        return max((b.h for b in self.nodes.values() if b is not None), default=0)

    def block(self, u: Context) -> ParamBlock:
        b = self.nodes.get(_as_context(u))
        if b is None:
            raise MalformedModel(f"no parameters at {context_label(u)}")
        return b

    def lookup(self, history: Sequence[int]) -> Context:
        """Leaf reached by walking ``history`` (most recent state first).

        Raises HistoryTooShort when the walk needs more states than given,
        and MalformedModel when a required branch is absent.
        """
        node: Context = ROOT
        while node in self._internal:
            depth = len(node)
            if depth >= len(history):
                raise HistoryTooShort(
                    f"history of length {len(history)} cannot resolve below {context_label(node)}"
                )
            child = node + (int(history[depth]),)
            if child not in self.nodes:
                raise MalformedModel(
                    f"history does not resolve: no branch {context_label(child)}"
                )
            node = child
        return node

    def siblings(self, u: Context) -> list[Context]:
        """Other present children of ``u``'s parent, sorted."""
        u = _as_context(u)
        if u == ROOT:
            raise RootHasNoSiblings("the root context has no siblings")
        if u not in self.nodes:
            raise MalformedModel(f"unknown context {context_label(u)}")
        parent = u[:-1]
        return [c for c in self.children(parent) if c != u]

    # -- structural edits (return new trees) ------------------------------

    def merge_leaves(self, parent: Context) -> "ContextTree":
        """Collapse all children of ``parent`` into it; the merged leaf has
        no parameters until the caller fits one."""
        parent = _as_context(parent)
        if parent not in self.nodes:
            raise MalformedModel(f"unknown context {context_label(parent)}")
        kids = self.children(parent)
        if not kids:
            raise ChildrenNotLeaves(f"{context_label(parent)} has no children to merge")
        bad = [c for c in kids if not self.is_leaf(c)]
        if bad:
            raise ChildrenNotLeaves(
                f"cannot merge below {context_label(parent)}: "
                f"{context_label(bad[0])} is not a leaf"
            )
        nodes = {u: b for u, b in self.nodes.items() if u not in set(kids)}
        nodes[parent] = None
        return ContextTree(p=self.p, d=self.d, nodes=nodes)

    def with_block(self, u: Context, block: ParamBlock | None) -> "ContextTree":
        """Copy of the tree with ``block`` installed at leaf ``u``."""
        u = _as_context(u)
        if u not in self.nodes:
            raise MalformedModel(f"unknown context {context_label(u)}")
        if not self.is_leaf(u):
            raise MalformedModel(f"{context_label(u)} is internal; only leaves carry parameters")
        nodes = dict(self.nodes)
        nodes[u] = block
        return ContextTree(p=self.p, d=self.d, nodes=nodes)

    # -- serialization -----------------------------------------------------

    def serialize(self) -> str:
        """Canonical JSON: leaves sorted lexicographically, compact separators.

        Serializing equal trees yields byte-identical text.
        """
        leaves = []
        for u in self.leaves():
            block = self.nodes[u]
            if block is None:
                raise MalformedModel(f"leaf {context_label(u)} has no parameters to serialize")
            leaves.append(
                {
                    "context": list(u),
                    "alpha": [float(a) for a in block.alpha],
                    "beta": [[[float(v) for v in row] for row in mat] for mat in block.beta],
                }
            )
        payload = {"p": self.p, "d": self.d, "leaves": leaves}
        return json.dumps(payload, separators=(",", ":"))

    @classmethod
    def parse(cls, text: str) -> "ContextTree":
        """Inverse of :meth:`serialize`; raises MalformedModel on any defect."""
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise MalformedModel(f"invalid JSON: {exc}") from exc
        if not isinstance(payload, dict):
            raise MalformedModel("model file must be a JSON object")
        try:
            p = int(payload["p"])
            d = int(payload["d"])
            raw_leaves = payload["leaves"]
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedModel(f"model file missing or invalid field: {exc}") from exc
        if not isinstance(raw_leaves, list) or not raw_leaves:
            raise MalformedModel("model file must list at least one leaf")
        nodes: dict[Context, ParamBlock | None] = {}
        for entry in raw_leaves:
            try:
                u = _as_context(entry["context"])
                alpha = np.asarray(entry["alpha"], dtype=float)
                beta = np.asarray(entry["beta"], dtype=float)
            except (KeyError, TypeError, ValueError) as exc:
                raise MalformedModel(f"invalid leaf entry: {exc}") from exc
            if beta.ndim == 2 and beta.shape[1] == 0:
                beta = beta.reshape(beta.shape[0], 0, d)
            if beta.ndim != 3:
                raise MalformedModel(f"leaf {context_label(u)}: beta must be a 3-level array")
            if beta.shape[2] != d and beta.shape[1] > 0:
                raise MalformedModel(
                    f"leaf {context_label(u)}: beta rows have width {beta.shape[2]}, expected {d}"
                )
            if u in nodes:
                if nodes[u] is None:
                    raise MalformedModel(
                        f"leaf {context_label(u)} is an ancestor of another leaf"
                    )
                raise MalformedModel(f"duplicate leaf {context_label(u)}")
            nodes[u] = ParamBlock(alpha=alpha, beta=beta)
            for k in range(len(u) - 1, -1, -1):
                prefix = u[:k]
                existing = nodes.get(prefix, "absent")
                if isinstance(existing, ParamBlock):
                    raise MalformedModel(
                        f"leaf {context_label(prefix)} is an ancestor of {context_label(u)}"
                    )
                nodes[prefix] = None
        return cls(p=p, d=d, nodes=nodes)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ContextTree):
            return NotImplemented
        if self.p != other.p or self.d != other.d:
            return False
        if set(self.nodes) != set(other.nodes):
            return False
        return all(self.nodes[u] == other.nodes[u] for u in self.nodes)

    def same_structure(self, other: "ContextTree") -> bool:
        """Equality of node sets, ignoring parameter values."""
        return self.p == other.p and set(self.nodes) == set(other.nodes)


@dataclass(eq=False)
class Dataset:
    """An observed state sequence with time-aligned covariate rows.

    ``states[i]`` and ``covariates[i]`` share a time index; the model always
    applies covariates with a lag, so the transition into ``states[i]`` is
    driven by ``covariates[i - 1], covariates[i - 2], ...``.
    """

    states: np.ndarray
    covariates: np.ndarray

    def __post_init__(self) -> None:
        states = np.asarray(self.states)
        if states.ndim != 1 or states.size == 0:
            raise DataError("states must be a non-empty vector")
        if not np.issubdtype(states.dtype, np.integer):
            cast = states.astype(np.int64)
            if not np.array_equal(cast, np.asarray(states, dtype=float)):
                raise DataError("states must be integers")
            states = cast
        else:
            states = states.astype(np.int64)
        if np.any(states < 0):
            raise DataError("states must be non-negative")
        cov = np.asarray(self.covariates, dtype=float)
        if cov.ndim == 1:
            cov = cov.reshape(-1, 1)
        if cov.ndim != 2:
            raise DataError("covariates must be a 2-d array")
        if cov.shape[0] != states.shape[0]:
            raise DataError(
                f"length mismatch: {states.shape[0]} states, {cov.shape[0]} covariate rows"
            )
        if cov.size and not np.all(np.isfinite(cov)):
            raise DataError("covariates must be finite")
        states = np.ascontiguousarray(states)
        cov = np.ascontiguousarray(cov)
        states.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "covariates", cov)

    @property
    def n(self) -> int:
        return int(self.states.shape[0])

    @property
    def d(self) -> int:
        return int(self.covariates.shape[1])


def count_occurrences(data: Dataset, v: Context | Sequence[int]) -> int:
    """Number of windows of the state sequence equal to ``v``.

    ``v`` is read in reverse time (most recent first), matching contexts; the
    empty context matches every position, giving ``n``.
    """
    v = _as_context(v)
    ell = len(v)
    if ell == 0:
        return data.n
    if ell > data.n:
        return 0
    states = data.states
    idx = np.arange(ell - 1, data.n)
    mask = np.ones(idx.size, dtype=bool)
    for j, sym in enumerate(v):
        mask &= states[idx - j] == sym
    return int(np.count_nonzero(mask))
