"""Context-tree estimation by backward likelihood-ratio pruning.

The estimator starts from the largest tree supported by per-context counts
and walks it from the deepest level up to the root.  At each level:

1. Every leaf at that depth is tested for dropping its deepest lag row
   (one chi-square test per leaf; non-rejection drops the row).
2. Sibling groups whose members are all leaves and all had their lag
   hypothesis not rejected are tested for merging into the parent.  A merge
   installs the parent as a leaf fitted with as many lags as its own depth.
3. Leaves that stayed put after a non-rejection keep dropping lag rows one
   at a time until a test rejects or no lag remains.  Leaves whose step-1
   test rejected keep their lags untouched.

Every candidate tree inside one fit is scored conditional on the same
number of initial observations (the maximal tree's order), which keeps
log-likelihoods, tests, and information criteria comparable across trees.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import glm
from .core import Context, ContextTree, Dataset, ParamBlock, context_label, count_occurrences
from .errors import (
    AllFitsFailed,
    AlphabetMismatch,
    ChildrenNotLeaves,
    DataError,
    DataTooShort,
    NestingViolation,
    NotConverged,
    VlmcxError,
)
from .glm import LeafDesign, design_loglik, fit_leaf
from .stats import LrtResult, lrt

DEFAULT_S_GRID = (2, 5, 10)
DEFAULT_GAMMA_GRID = (1e-5, 1e-4, 1e-3, 1e-2)


@dataclass(frozen=True)
class FitConfig:
    """Knobs for one estimation run.

    ``s`` scales the per-parameter count rule deciding how deep the initial
    tree grows; ``gamma`` is the test level for pruning (larger values prune
    more).  ``bonferroni`` divides gamma by the number of planned tests in
    each pass.  ``ic_include_intercepts`` switches the information-criterion
    parameter count from covariate coefficients only to all coefficients.
    """

    s: int = 2
    gamma: float = 1e-3
    max_order_cap: int = 12
    bonferroni: bool = False
    ic_include_intercepts: bool = False
    grad_tol: float = glm.GRAD_TOL
    max_iter: int = glm.MAX_ITER

    def __post_init__(self) -> None:
        if self.s < 1:
            raise DataError(f"s must be >= 1, got {self.s}")
        if not 0.0 < self.gamma < 1.0:
            raise DataError(f"gamma must be in (0, 1), got {self.gamma}")
        if self.max_order_cap < 1:
            raise DataError(f"max_order_cap must be >= 1, got {self.max_order_cap}")

    def replace(self, **kw) -> "FitConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        return {
            "s": self.s,
            "gamma": self.gamma,
            "max_order_cap": self.max_order_cap,
            "bonferroni": self.bonferroni,
            "ic_include_intercepts": self.ic_include_intercepts,
        }


def _nan_to_none(x: float) -> float | None:
    return None if x != x else float(x)


@dataclass(frozen=True)
class AuditRecord:
    """One pruning decision: which test ran, on what, and what happened.

    ``test`` is ``deepest_lag`` (the per-leaf test run once per pass),
    ``lag_sweep`` (the follow-up sequential drops), or ``sibling_merge``.
    ``lag`` is the 1-based lag index under test, None for merges.  ``action``
    is ``drop``, ``keep``, ``merge``, or ``no_merge``.
    """

    test: str
    contexts: tuple[Context, ...]
    lag: int | None
    statistic: float
    df: int
    p_value: float
    action: str

    def to_dict(self) -> dict:
        return {
            "test": self.test,
            "contexts": [list(u) for u in self.contexts],
            "lag": self.lag,
            "statistic": _nan_to_none(self.statistic),
            "df": self.df,
            "p_value": _nan_to_none(self.p_value),
            "action": self.action,
        }


@dataclass(frozen=True)
class LeafDiagnostics:
    context: Context
    n_obs: int
    h: int
    loglik: float
    converged: bool
    separated: bool

    def to_dict(self) -> dict:
        return {
            "context": list(self.context),
            "n_obs": self.n_obs,
            "h": self.h,
            "loglik": self.loglik,
            "converged": self.converged,
            "separated": self.separated,
        }


@dataclass
class FitReport:
    """Fitted tree plus the evidence: scores, per-leaf diagnostics, audit."""

    tree: ContextTree
    loglik: float
    aic: float
    bic: float
    n_alpha: int
    n_beta: int
    n_eff: int
    horizon: int
    config: FitConfig
    leaf_stats: list[LeafDiagnostics]
    audit: list[AuditRecord]
    notes: list[str]

    def to_dict(self) -> dict:
        return {
            "model": json.loads(self.tree.serialize()),
            "criteria": {
                "loglik": self.loglik,
                "aic": self.aic,
                "bic": self.bic,
                "n_alpha": self.n_alpha,
                "n_beta": self.n_beta,
                "n_eff": self.n_eff,
                "horizon": self.horizon,
            },
            "config": self.config.to_dict(),
            "leaves": [ls.to_dict() for ls in self.leaf_stats],
            "audit": [rec.to_dict() for rec in self.audit],
            "notes": list(self.notes),
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


# -- maximal tree growth -------------------------------------------------------


def _infer_p(data: Dataset, p: int | None) -> int:
    observed = int(data.states.max()) + 1
    if p is None:
        return max(observed, 2)
    if p < observed:
        raise AlphabetMismatch(f"state {observed - 1} outside 0..{p - 1}")
    if p < 2:
        raise AlphabetMismatch(f"need at least two states, got p={p}")
    return p


def _grow_structure(data: Dataset, p: int, s: int, cap: int) -> set[Context]:
    """Deepest prefix-closed node set satisfying the sibling count rule.

    A sibling group at depth k enters only when every member occurs at least
    ``s * (1 + d*k)`` times, so each candidate regression keeps ``s``
    observations per parameter.
    """
    n, d = data.n, data.d
    if n <= s * (1 + d):
        raise DataTooShort(
            f"n={n} cannot support depth 1 with s={s}, d={d} "
            f"(need more than {s * (1 + d)} observations)"
        )
    cap_eff = min(cap, int(math.floor(math.log2(n))))
    nodes: set[Context] = {()}
    level: list[Context] = [()]
    for depth in range(1, cap_eff + 1):
        threshold = s * (1 + d * depth)
        next_level: list[Context] = []
        for u in level:
            kids = [u + (w,) for w in range(p)]
            if all(count_occurrences(data, kid) >= threshold for kid in kids):
                nodes.update(kids)
                next_level.extend(kids)
        if not next_level:
            break
        level = next_level
    if len(nodes) == 1:
        raise DataTooShort(
            f"no depth-1 sibling group reaches {s * (1 + d)} occurrences each"
        )
    return nodes


# -- the pruning engine ----------------------------------------------------------


@dataclass
class _LeafState:
    design: LeafDesign
    block: ParamBlock
    loglik: float
    converged: bool
    separated: bool


class _Engine:
    """Mutable fitting state: node set, per-leaf designs, current blocks."""

    def __init__(
        self,
        data: Dataset,
        config: FitConfig,
        p: int | None = None,
        horizon: int | None = None,
        structure: set[Context] | None = None,
    ):
        self.data = data
        self.config = config
        self.p = _infer_p(data, p)
        self.d = data.d
        self.nodes = set(structure) if structure is not None else _grow_structure(
            data, self.p, config.s, config.max_order_cap
        )
        self.order = max(len(u) for u in self.nodes)
        self.horizon = self.order if horizon is None else int(horizon)
        if self.horizon < self.order:
            raise DataError(f"horizon {self.horizon} below tree order {self.order}")
        if self.horizon >= data.n:
            raise DataTooShort(f"horizon {self.horizon} leaves no transitions in n={data.n}")
        self.audit: list[AuditRecord] = []
        self.notes: list[str] = []
        self.leaves: dict[Context, _LeafState] = {}
        self._build_designs()
        self._fit_initial()

    # -- setup -------------------------------------------------------------

    def _leaf_contexts(self) -> list[Context]:
        internal = {u[:-1] for u in self.nodes if u}
        return sorted(self.nodes - internal)

    def _build_designs(self) -> None:
        data, d = self.data, self.d
        idx = np.arange(self.horizon, data.n)
        lag_cols = np.empty((idx.size, 1 + self.order * d))
        lag_cols[:, 0] = 1.0
        for lag in range(1, self.order + 1):
            lag_cols[:, 1 + (lag - 1) * d : 1 + lag * d] = data.covariates[idx - lag]
        y_all = data.states[idx].astype(np.int64)
        assigned = 0
        self._designs: dict[Context, LeafDesign] = {}
        for u in self._leaf_contexts():
            mask = np.ones(idx.size, dtype=bool)
            for j, sym in enumerate(u):
                mask &= data.states[idx - 1 - j] == sym
            X = lag_cols[mask][:, : 1 + len(u) * d]
            self._designs[u] = LeafDesign(
                context=u, X=X, y=y_all[mask], h=len(u), d=d, p=self.p
            )
            assigned += int(mask.sum())
        if assigned != idx.size:
            raise VlmcxError(
                f"internal error: {assigned} of {idx.size} transitions assigned to leaves"
            )

    def _fit_initial(self) -> None:
        for u in sorted(self._designs):
            design = self._designs[u]
            self.leaves[u] = self._fit_state(design, h=design.h, start=None)
        del self._designs

    def _fit_state(self, design: LeafDesign, h: int, start: ParamBlock | None) -> _LeafState:
        k = self.p - 1
        if design.m == 0:
            self.notes.append(
                f"no transitions for {context_label(design.context)}; using a null fit"
            )
            block = ParamBlock(alpha=np.zeros(k), beta=np.zeros((k, 0, max(self.d, 1))))
            return _LeafState(design, block, 0.0, converged=False, separated=False)
        try:
            res = fit_leaf(
                design, h, start=start,
                grad_tol=self.config.grad_tol, max_iter=self.config.max_iter,
            )
        except NotConverged:
            try:
                res = fit_leaf(
                    design, 0,
                    grad_tol=self.config.grad_tol, max_iter=self.config.max_iter,
                )
                self.notes.append(
                    f"fit at {context_label(design.context)} with {h} lags did not "
                    f"converge; fell back to intercept only"
                )
            except NotConverged:
                block = ParamBlock(alpha=np.zeros(k), beta=np.zeros((k, 0, max(self.d, 1))))
                ll = design_loglik(design, block)
                self.notes.append(
                    f"fit at {context_label(design.context)} failed entirely; using zeros"
                )
                return _LeafState(design, block, ll, converged=False, separated=False)
        if res.separated:
            self.notes.append(
                f"separation at {context_label(design.context)}: "
                f"a coefficient passed {glm.SEPARATION_BOUND} in magnitude"
            )
        return _LeafState(design, res.params, res.loglik, res.converged, res.separated)

    def clone(self, config: FitConfig) -> "_Engine":
        eng = object.__new__(_Engine)
        eng.data = self.data
        eng.config = config
        eng.p = self.p
        eng.d = self.d
        eng.nodes = set(self.nodes)
        eng.order = self.order
        eng.horizon = self.horizon
        eng.leaves = {u: dataclasses.replace(st) for u, st in self.leaves.items()}
        eng.audit = []
        eng.notes = list(self.notes)
        return eng

    # -- pruning -----------------------------------------------------------

    def run(self) -> None:
        for depth in range(self.order, 0, -1):
            self._run_pass(depth)

    def children_of(self, u: Context) -> list[Context]:
        return [u + (w,) for w in range(self.p) if u + (w,) in self.nodes]

    def _run_pass(self, depth: int) -> None:
        leaves_at = sorted(u for u in self.leaves if len(u) == depth)
        if not leaves_at:
            return
        groups: dict[Context, list[Context]] = {}
        for u in leaves_at:
            groups.setdefault(u[:-1], []).append(u)
        candidate_parents = [
            parent
            for parent in sorted(groups)
            if len(self.children_of(parent)) == self.p
            and all(c in self.leaves for c in self.children_of(parent))
        ]
        gamma_eff = self.config.gamma
        if self.config.bonferroni:
            n_tests = sum(1 for u in leaves_at if self.leaves[u].block.h > 0)
            n_tests += len(candidate_parents)
            if n_tests > 0:
                gamma_eff = self.config.gamma / n_tests

        not_rejected: dict[Context, bool] = {}
        for u in leaves_at:
            st = self.leaves[u]
            if st.block.h == 0:
                not_rejected[u] = True
                continue
            not_rejected[u] = self._lag_drop_test(st, gamma_eff, "deepest_lag")

        for parent in sorted(groups):
            children = self.children_of(parent)
            mergeable = (
                parent in set(candidate_parents)
                and all(not_rejected.get(c, False) for c in children)
            )
            if mergeable and self._merge_test(parent, children, gamma_eff):
                continue
            for c in children:
                if c in self.leaves and not_rejected.get(c, False):
                    self._lag_sweep(self.leaves[c], gamma_eff)

    def _lag_drop_test(self, st: _LeafState, gamma_eff: float, kind: str) -> bool:
        """Test the deepest stored lag of one leaf; install the reduced block
        when the test does not reject.  Returns True on a drop."""
        u = st.design.context
        h = st.block.h
        df = (self.p - 1) * self.d
        res = None
        try:
            res = fit_leaf(
                st.design, h - 1, start=st.block,
                grad_tol=self.config.grad_tol, max_iter=self.config.max_iter,
            )
        except (NotConverged, DataError) as exc:
            self.notes.append(
                f"constrained fit at {context_label(u)} (lag {h}) failed: {exc}; "
                f"treating the lag as droppable"
            )
        if res is None:
            block = st.block.truncated(h - 1)
            ll = design_loglik(st.design.truncated(h - 1), block)
            self._install(st, block, ll, converged=False, separated=st.separated)
            self.audit.append(
                AuditRecord(kind, (u,), h, float("nan"), df, float("nan"), "drop")
            )
            return True
        try:
            test = lrt(res.loglik, st.loglik, df)
        except NestingViolation:
            self.notes.append(
                f"reduced fit at {context_label(u)} (lag {h}) beat the larger model; "
                f"optimizer trouble, dropping the lag"
            )
            test = LrtResult(0.0, df, 1.0)
        dropped = test.p_value > gamma_eff
        if dropped:
            self._install(st, res.params, res.loglik, res.converged, res.separated)
        self.audit.append(
            AuditRecord(
                kind, (u,), h, test.statistic, test.df, test.p_value,
                "drop" if dropped else "keep",
            )
        )
        return dropped

    def _lag_sweep(self, st: _LeafState, gamma_eff: float) -> None:
        while st.block.h >= 1:
            if not self._lag_drop_test(st, gamma_eff, "lag_sweep"):
                break

    def _install(self, st: _LeafState, block: ParamBlock, loglik: float,
                 converged: bool, separated: bool) -> None:
        st.block = block
        st.loglik = loglik
        st.converged = converged
        st.separated = separated

    def _merge_test(self, parent: Context, children: list[Context], gamma_eff: float) -> bool:
        p, d = self.p, self.d
        ell = len(parent)
        states = [self.leaves[c] for c in children]
        cols = 1 + ell * d
        X = np.vstack([s.design.X[:, :cols] for s in states])
        y = np.concatenate([s.design.y for s in states])
        design = LeafDesign(context=parent, X=X, y=y, h=ell, d=d, p=p)
        ll_alt = sum(s.loglik for s in states)
        params_alt = sum((p - 1) * (1 + d * s.block.h) for s in states)
        null_state = self._fit_state(design, h=ell, start=None)
        params_null = (p - 1) * (1 + d * null_state.block.h)
        df = params_alt - params_null
        if df < 1:
            self.notes.append(
                f"merge at {context_label(parent)} had no free parameters to test; skipping"
            )
            return False
        try:
            test = lrt(null_state.loglik, ll_alt, df)
        except NestingViolation:
            self.notes.append(
                f"children of {context_label(parent)} scored below their merge; "
                f"optimizer trouble, merging"
            )
            test = LrtResult(0.0, df, 1.0)
        merged = test.p_value >= gamma_eff
        self.audit.append(
            AuditRecord(
                "sibling_merge", tuple(children), None,
                test.statistic, test.df, test.p_value,
                "merge" if merged else "no_merge",
            )
        )
        if merged:
            for c in children:
                del self.leaves[c]
                self.nodes.discard(c)
            self.leaves[parent] = null_state
        return merged

    # -- outputs -------------------------------------------------------------

    def final_tree(self) -> ContextTree:
        nodes: dict[Context, ParamBlock | None] = {u: None for u in self.nodes}
        for u, st in self.leaves.items():
            nodes[u] = st.block
        return ContextTree(p=self.p, d=self.d, nodes=nodes)

    def report(self) -> FitReport:
        tree = self.final_tree()
        items = sorted(self.leaves.items())
        loglik = float(sum(st.loglik for _, st in items))
        n_alpha = len(items)
        n_beta = sum((self.p - 1) * self.d * st.block.h for _, st in items)
        k = n_beta + (n_alpha * (self.p - 1) if self.config.ic_include_intercepts else 0)
        n_eff = self.data.n - self.horizon
        aic = -2.0 * loglik + 2.0 * k
        bic = -2.0 * loglik + k * math.log(n_eff)
        leaf_stats = [
            LeafDiagnostics(
                context=u,
                n_obs=st.design.m,
                h=st.block.h,
                loglik=st.loglik,
                converged=st.converged,
                separated=st.separated,
            )
            for u, st in items
        ]
        return FitReport(
            tree=tree,
            loglik=loglik,
            aic=aic,
            bic=bic,
            n_alpha=n_alpha,
            n_beta=n_beta,
            n_eff=n_eff,
            horizon=self.horizon,
            config=self.config,
            leaf_stats=leaf_stats,
            audit=list(self.audit),
            notes=list(self.notes),
        )


# -- public entry points ----------------------------------------------------------


def build_maximal_tree(
    data: Dataset,
    config: FitConfig | None = None,
    p: int | None = None,
    horizon: int | None = None,
) -> ContextTree:
    """Deepest count-supported tree with freshly fitted leaves (no pruning)."""
    config = config or FitConfig()
    return _Engine(data, config, p=p, horizon=horizon).final_tree()


def fit(
    data: Dataset,
    config: FitConfig | None = None,
    p: int | None = None,
    horizon: int | None = None,
) -> FitReport:
    """Grow the maximal tree, prune it level by level, and score the result.

    ``horizon`` overrides the number of initial observations conditioned on
    (defaults to the maximal tree's order); tuning searches use a shared
    value so scores stay comparable across configurations.
    """
    config = config or FitConfig()
    engine = _Engine(data, config, p=p, horizon=horizon)
    engine.run()
    return engine.report()


def test_pastmost_beta(
    tree: ContextTree,
    u: Context,
    data: Dataset,
    config: FitConfig | None = None,
    horizon: int | None = None,
) -> tuple[LrtResult, ContextTree]:
    """Test whether leaf ``u``'s deepest lag row is needed.

    Returns the test and the updated tree: on non-rejection the leaf's block
    is replaced by the reduced refit, otherwise the tree is returned as is.
    """
    config = config or FitConfig()
    u = tuple(int(s) for s in u)
    if not tree.is_leaf(u):
        raise ChildrenNotLeaves(f"{context_label(u)} is not a leaf")
    block = tree.block(u)
    if block.h < 1:
        raise ValueError(f"leaf {context_label(u)} has no lag rows to test")
    design = glm.build_design(data, tree, u, h=block.h, horizon=horizon)
    free = fit_leaf(design, start=block, grad_tol=config.grad_tol, max_iter=config.max_iter)
    reduced = fit_leaf(
        design, block.h - 1, start=block,
        grad_tol=config.grad_tol, max_iter=config.max_iter,
    )
    test = lrt(reduced.loglik, free.loglik, (tree.p - 1) * tree.d)
    if test.p_value > config.gamma:
        return test, tree.with_block(u, reduced.params)
    return test, tree.with_block(u, free.params)


def merge_siblings_test(
    tree: ContextTree,
    parent: Context,
    data: Dataset,
    config: FitConfig | None = None,
    horizon: int | None = None,
) -> tuple[LrtResult, ContextTree]:
    """Test whether the children of ``parent`` share one law.

    On non-rejection (p-value at or above gamma) the children are merged and
    the parent gets a fresh fit with as many lags as its depth.
    """
    config = config or FitConfig()
    parent = tuple(int(s) for s in parent)
    children = tree.children(parent)
    if not children:
        raise ChildrenNotLeaves(f"{context_label(parent)} has no children")
    bad = [c for c in children if not tree.is_leaf(c)]
    if bad:
        raise ChildrenNotLeaves(f"{context_label(bad[0])} is not a leaf")
    if horizon is None:
        horizon = tree.order
    p, d = tree.p, tree.d
    ll_alt = 0.0
    params_alt = 0
    child_designs = []
    for c in children:
        block = tree.block(c)
        dsg = glm.build_design(data, tree, c, h=block.h, horizon=horizon)
        refit = fit_leaf(dsg, start=block, grad_tol=config.grad_tol, max_iter=config.max_iter)
        ll_alt += refit.loglik
        params_alt += (p - 1) * (1 + d * refit.params.h)
        child_designs.append(glm.build_design(data, tree, c, h=len(parent), horizon=horizon))
    X = np.vstack([dsg.X for dsg in child_designs])
    y = np.concatenate([dsg.y for dsg in child_designs])
    merged_design = LeafDesign(context=parent, X=X, y=y, h=len(parent), d=d, p=p)
    null = fit_leaf(merged_design, grad_tol=config.grad_tol, max_iter=config.max_iter)
    df = params_alt - (p - 1) * (1 + d * null.params.h)
    test = lrt(null.loglik, ll_alt, max(df, 1))
    if test.p_value >= config.gamma:
        merged = tree.merge_leaves(parent).with_block(parent, null.params)
        return test, merged
    return test, tree


def sequential_beta_prune(
    tree: ContextTree,
    u: Context,
    data: Dataset,
    config: FitConfig | None = None,
    horizon: int | None = None,
) -> ContextTree:
    """Drop leaf ``u``'s lag rows deepest-first until a test rejects."""
    config = config or FitConfig()
    u = tuple(int(s) for s in u)
    current = tree
    while current.block(u).h >= 1:
        test, updated = test_pastmost_beta(current, u, data, config, horizon=horizon)
        if updated is current or current.block(u).h == updated.block(u).h:
            break
        current = updated
    return current


def replay_audit(tau_max: ContextTree, audit: Sequence[AuditRecord]) -> dict[Context, int | None]:
    """Re-apply recorded actions to the maximal tree's structure.

    Returns the node map implied by the audit alone: internal nodes map to
    None, leaves to their remaining lag count.  Matching this against a
    report's tree checks that the audit trail fully determines the outcome.
    """
    state: dict[Context, int | None] = {}
    internal = {u[:-1] for u in tau_max.nodes if u}
    for u in tau_max.nodes:
        state[u] = None if u in internal else tau_max.block(u).h
    for rec in audit:
        if rec.action == "drop":
            u = rec.contexts[0]
            state[u] = rec.lag - 1
        elif rec.action == "merge":
            parent = rec.contexts[0][:-1]
            for c in rec.contexts:
                state.pop(c, None)
            state[parent] = len(parent) if tau_max.d > 0 else 0
    return state


@dataclass(frozen=True)
class TuningCandidate:
    s: int
    gamma: float
    bic: float
    aic: float
    loglik: float
    n_alpha: int
    n_beta: int

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class TuningResult:
    """Winner of a grid search plus the full score table."""

    config: FitConfig
    report: FitReport
    candidates: list[TuningCandidate]
    failures: list[str]

    def __iter__(self) -> Iterator:
        return iter((self.config, self.report))


def select_tuning(
    data: Dataset,
    s_grid: Sequence[int] = DEFAULT_S_GRID,
    gamma_grid: Sequence[float] = DEFAULT_GAMMA_GRID,
    config: FitConfig | None = None,
    p: int | None = None,
) -> TuningResult:
    """Pick (s, gamma) by smallest information criterion over the grid.

    All grid points are scored with one shared conditioning horizon (the
    largest maximal-tree order over the s grid) so their criteria compare
    like for like.  Ties break toward the smaller tree, then smaller gamma,
    then smaller s.
    """
    base = config or FitConfig()
    s_values = sorted(set(int(s) for s in s_grid))
    gamma_values = sorted(set(float(g) for g in gamma_grid))
    if not s_values or not gamma_values:
        raise DataError("tuning grids must be non-empty")
    p_eff = _infer_p(data, p)
    failures: list[str] = []
    structures: dict[int, set[Context]] = {}
    for s in s_values:
        try:
            structures[s] = _grow_structure(data, p_eff, s, base.max_order_cap)
        except DataTooShort as exc:
            failures.append(f"s={s}: {exc}")
    if not structures:
        raise AllFitsFailed("; ".join(failures))
    horizon = max(max(len(u) for u in st) for st in structures.values())
    best_key = None
    best: tuple[FitConfig, FitReport] | None = None
    candidates: list[TuningCandidate] = []
    for s, structure in structures.items():
        try:
            base_engine = _Engine(
                data, base.replace(s=s), p=p_eff, horizon=horizon, structure=structure
            )
        except VlmcxError as exc:
            failures.append(f"s={s}: {exc}")
            continue
        for gamma in gamma_values:
            cfg = base.replace(s=s, gamma=gamma)
            try:
                engine = base_engine.clone(cfg)
                engine.run()
                rep = engine.report()
            except VlmcxError as exc:
                failures.append(f"s={s}, gamma={gamma}: {exc}")
                continue
            candidates.append(
                TuningCandidate(
                    s=s, gamma=gamma, bic=rep.bic, aic=rep.aic, loglik=rep.loglik,
                    n_alpha=rep.n_alpha, n_beta=rep.n_beta,
                )
            )
            key = (rep.bic, rep.n_alpha, gamma, s)
            if best_key is None or key < best_key:
                best_key = key
                best = (cfg, rep)
    if best is None:
        raise AllFitsFailed("; ".join(failures))
    return TuningResult(config=best[0], report=best[1], candidates=candidates, failures=failures)
