"""Multilevel splitting estimator over a labeled dyadic tree.

Each internal vertex v of the tree gets one batch of N conditional draws
from the restriction of the base law to its cube. The empirical fraction
q_N(v, i) of that batch landing in child i estimates the one-step
conditional probability, and the product of the q_N along the ancestor
chain of a leaf u estimates p(u). Summing over a leaf set S gives the
splitting estimate of P(X in union of S).

Batches at different vertices are independent (each is keyed by its own
address in the seed derivation), but the 2^d child estimates at one vertex
share a batch and are multinomially dependent. The asymptotic variance
formula below accounts for both effects exactly.
"""

from dataclasses import dataclass
from math import sqrt
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import ndtri

from .errors import IncompleteStatsError
from .rng import TAG_SAMPLE, derive_rng
from .tree import LabeledTree, Path, ancestors, decode_cube, format_path, locate_child, meet


@dataclass(frozen=True)
class VertexSampleStats:
    """Child-occupancy counts of one conditional batch at an internal vertex.

    counts[i - 1] is the number of the n draws that landed in child i, in
    child-index order 1..2^d. The counts always sum to n because the child
    cubes partition the parent half-openly (upper faces are resolved toward
    the sibling with the larger coordinate).
    """

    parent: Path
    n: int
    counts: tuple[int, ...]

    def __post_init__(self):
        if self.n <= 0:
            raise ValueError("batch size must be positive")
        if sum(self.counts) != self.n:
            raise ValueError(
                f"child counts {self.counts} do not sum to the batch size {self.n}"
            )

    @property
    def q(self) -> tuple[float, ...]:
        """Empirical conditional child probabilities q_N(v, i)."""
        return tuple(c / self.n for c in self.counts)

    def q_child(self, index: int) -> float:
        return self.counts[index - 1] / self.n


class ExactConditionalSampler:
    """Conditional sampler backed by a measure with exact conditional draws.

    The batch at address v uses its own derived stream, so adding or removing
    vertices never perturbs the draws at other vertices.
    """

    name = "exact"

    def __init__(self, measure):
        self.measure = measure

    def sample(self, path: Path, count: int, master_seed: int) -> np.ndarray:
        rng = derive_rng(master_seed, path, TAG_SAMPLE)
        return self.measure.exact_conditional_sample(path, count, rng)


def collect_vertex_stats(
    tree: LabeledTree,
    sampler,
    n_samples: int,
    master_seed: int,
) -> dict[Path, VertexSampleStats]:
    """Run one conditional batch at every internal vertex of the tree."""
    if n_samples <= 0:
        raise ValueError("n_samples must be positive")
    n_children = 1 << tree.dim
    stats: dict[Path, VertexSampleStats] = {}
    for parent in tree.internal_vertices():
        try:
            points = sampler.sample(parent, n_samples, master_seed)
        except Exception as exc:
            exc.args = (f"sampling failed at vertex {format_path(parent)}: {exc}",)
            raise
        cube = decode_cube(parent, tree.dim)
        idx = locate_child(cube, points)
        counts = np.bincount(idx, minlength=n_children + 1)[1:]
        stats[parent] = VertexSampleStats(
            parent=parent, n=n_samples, counts=tuple(int(c) for c in counts)
        )
    return stats


def _chain_product(stats: Mapping[Path, VertexSampleStats], leaf: Path) -> float:
    prod = 1.0
    for vertex in ancestors(leaf):
        parent = vertex[:-1]
        if parent not in stats:
            raise IncompleteStatsError(
                f"no sample statistics for vertex {format_path(parent)} "
                f"on the path to {format_path(leaf)}"
            )
        prod *= stats[parent].q_child(vertex[-1])
        if prod == 0.0:
            return 0.0
    return prod


@dataclass(frozen=True)
class SplittingEstimate:
    """Splitting estimate of the probability of a leaf-set union."""

    leaf_set: tuple[Path, ...]
    estimate: float
    per_leaf: dict[Path, float]
    n: int
    zero_leaves: tuple[Path, ...]
    variance: float | None = None

    @property
    def sigma(self) -> float:
        if self.variance is None:
            return 0.0
        return sqrt(self.variance)


def leaf_set_estimate(
    stats: Mapping[Path, VertexSampleStats],
    leaf_set: Iterable[Path],
) -> SplittingEstimate:
    """Estimate P(union of leaf cubes) by summing ancestor-chain products.

    Leaves whose chain hits an empirical zero contribute exactly 0 to the
    estimate and are reported in ``zero_leaves``; they are the ones the
    plug-in variance must prune before dividing by q_N.
    """
    leaves = tuple(sorted(leaf_set, key=lambda p: (len(p), p)))
    per_leaf: dict[Path, float] = {}
    zero: list[Path] = []
    for leaf in leaves:
        value = _chain_product(stats, leaf)
        per_leaf[leaf] = value
        if value == 0.0:
            zero.append(leaf)
    sizes = {s.n for s in stats.values()}
    if len(sizes) > 1:
        raise ValueError(f"mixed batch sizes in statistics: {sorted(sizes)}")
    n = sizes.pop() if sizes else 0
    return SplittingEstimate(
        leaf_set=leaves,
        estimate=float(sum(per_leaf.values())),
        per_leaf=per_leaf,
        n=n,
        zero_leaves=tuple(zero),
    )


def asymptotic_variance(
    q: Mapping[Path, float],
    p_leaf: Mapping[Path, float],
    leaf_set: Sequence[Path] | None = None,
) -> float:
    """Variance of the N-normalized splitting error over a leaf set.

    q maps each non-root vertex on an ancestor chain to its conditional
    child probability, p_leaf maps each leaf to its chain product. The
    diagonal term sums p(u)^2 * w(u) with w(u) = sum over the chain of
    (1 - q)/q; the cross term couples leaves through their deepest common
    ancestor: shared links contribute their w, and sharing a batch at the
    fork contributes the multinomial -1. Two leaves whose meet is the root
    share nothing, so their bracket is exactly -1 times nothing plus the
    shared-batch term of independent batches, which vanishes; the formula
    below reproduces that because w(root) = 0.
    """
    leaves = list(leaf_set) if leaf_set is not None else sorted(
        p_leaf, key=lambda p: (len(p), p)
    )
    w_cache: dict[Path, float] = {(): 0.0}

    def w(path: Path) -> float:
        if path in w_cache:
            return w_cache[path]
        q_v = q.get(path)
        if q_v is None:
            raise IncompleteStatsError(
                f"no conditional probability for vertex {format_path(path)}"
            )
        if q_v <= 0.0:
            raise ValueError(
                f"zero conditional probability at {format_path(path)}; "
                "prune zero-probability leaves before computing the variance"
            )
        value = w(path[:-1]) + (1.0 - q_v) / q_v
        w_cache[path] = value
        return value

    total = 0.0
    for u in leaves:
        total += p_leaf[u] ** 2 * w(u)
    for i, u in enumerate(leaves):
        for v in leaves[i + 1 :]:
            shared = meet(u, v)
            total += 2.0 * p_leaf[u] * p_leaf[v] * (w(shared) - 1.0)
    return max(total, 0.0)


def plug_in_variance(
    stats: Mapping[Path, VertexSampleStats],
    leaf_set: Iterable[Path],
) -> float:
    """asymptotic_variance evaluated at the empirical q_N and chain products.

    Leaves with an empirical-zero link are dropped: they contribute 0 to the
    estimate, and keeping them would divide by q_N = 0.
    """
    q: dict[Path, float] = {}
    p_leaf: dict[Path, float] = {}
    surviving: list[Path] = []
    for leaf in sorted(leaf_set, key=lambda p: (len(p), p)):
        value = _chain_product(stats, leaf)
        if value == 0.0:
            continue
        p_leaf[leaf] = value
        surviving.append(leaf)
        for vertex in ancestors(leaf):
            q[vertex] = stats[vertex[:-1]].q_child(vertex[-1])
    if not surviving:
        return 0.0
    return asymptotic_variance(q, p_leaf, surviving)


def multinomial_covariance(q_vector: Sequence[float]) -> np.ndarray:
    """Covariance of one multinomial trial: diag(q) - q q^T.

    The child counts at a vertex are n such trials, so the count covariance
    is n times this matrix; it is the within-batch coupling the cross terms
    of the variance formula encode.
    """
    q_arr = np.asarray(q_vector, dtype=float)
    return np.diag(q_arr) - np.outer(q_arr, q_arr)


def confidence_interval(
    lower_estimate: float,
    upper_estimate: float,
    sigma_lower: float,
    sigma_upper: float,
    n: int,
    alpha: float = 0.05,
) -> tuple[float, float]:
    """Asymptotic (1 - alpha) interval bracketing [p_n^-, p_n^+].

    Expands the lower estimate downward and the upper estimate upward by
    z_{1-alpha/2} sigma / sqrt(n), then clamps to [0, 1]. A degenerate
    sigma of 0 (empty leaf set) collapses that side onto its estimate.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie strictly between 0 and 1")
    if sigma_lower < 0.0 or sigma_upper < 0.0:
        raise ValueError("sigma estimates must be nonnegative")
    if n <= 0:
        raise ValueError("sample size must be positive")
    z = float(ndtri(1.0 - alpha / 2.0))
    m = lower_estimate - z * sigma_lower / sqrt(n)
    big_m = upper_estimate + z * sigma_upper / sqrt(n)
    return (min(max(m, 0.0), 1.0), min(max(big_m, 0.0), 1.0))


@dataclass(eq=False)
class EstimateReport:
    """Paired lower/upper splitting estimates with their joint interval."""

    lower: SplittingEstimate
    upper: SplittingEstimate
    n: int
    alpha: float
    ci: tuple[float, float]
    per_vertex: list[dict]
    diagnostics: dict | None = None

    def to_json_dict(self) -> dict:
        return {
            "p_lower_hat": self.lower.estimate,
            "p_upper_hat": self.upper.estimate,
            "sigma_lower": self.lower.sigma,
            "sigma_upper": self.upper.sigma,
            "N": self.n,
            "alpha": self.alpha,
            "ci": [self.ci[0], self.ci[1]],
            "per_vertex": self.per_vertex,
        }


def _per_vertex_rows(stats: Mapping[Path, VertexSampleStats]) -> list[dict]:
    rows = []
    for parent in sorted(stats, key=lambda p: (len(p), p)):
        entry = stats[parent]
        for i, count in enumerate(entry.counts, start=1):
            child = parent + (i,)
            rows.append(
                {
                    "path": format_path(child),
                    "qN": count / entry.n,
                    "count": count,
                }
            )
    return rows


def estimate_tree(
    tree: LabeledTree,
    sampler,
    n_samples: int,
    master_seed: int,
    alpha: float = 0.05,
) -> EstimateReport:
    """Estimate the certified bounds of a labeled tree by splitting.

    The lower estimate targets the inside leaves, the upper one adds the
    uncertain leaves; both reuse the same per-vertex batches, so the upper
    estimate dominates the lower one replication by replication.
    """
    s_lower = tree.inside_leaves()
    s_upper = s_lower + tree.uncertain_leaves()
    if not tree.internal_vertices():
        # Nothing was ever split. Each side is either empty (estimate 0) or
        # just the root, whose chain product is the empty product 1; there is
        # no sampling, so both sigmas are 0 and the interval is degenerate.
        def trivial(leaf_set):
            leaves = tuple(leaf_set)
            return SplittingEstimate(
                leaves,
                1.0 if leaves else 0.0,
                {leaf: 1.0 for leaf in leaves},
                n_samples,
                (),
                variance=0.0,
            )

        lower = trivial(s_lower)
        upper = trivial(s_upper)
        ci = confidence_interval(lower.estimate, upper.estimate, 0.0, 0.0, n_samples, alpha)
        return EstimateReport(lower, upper, n_samples, alpha, ci, [])
    stats = collect_vertex_stats(tree, sampler, n_samples, master_seed)
    lower = leaf_set_estimate(stats, s_lower)
    upper = leaf_set_estimate(stats, s_upper)
    var_lower = plug_in_variance(stats, s_lower)
    var_upper = plug_in_variance(stats, s_upper)
    lower = SplittingEstimate(
        lower.leaf_set, lower.estimate, lower.per_leaf, lower.n,
        lower.zero_leaves, variance=var_lower,
    )
    upper = SplittingEstimate(
        upper.leaf_set, upper.estimate, upper.per_leaf, upper.n,
        upper.zero_leaves, variance=var_upper,
    )
    ci = confidence_interval(
        lower.estimate, upper.estimate, lower.sigma, upper.sigma, n_samples, alpha
    )
    return EstimateReport(
        lower=lower,
        upper=upper,
        n=n_samples,
        alpha=alpha,
        ci=ci,
        per_vertex=_per_vertex_rows(stats),
    )


def estimate_tree_exact(
    tree: LabeledTree,
    measure,
    n_samples: int,
    master_seed: int,
    alpha: float = 0.05,
) -> EstimateReport:
    """estimate_tree with the measure's exact conditional sampler."""
    return estimate_tree(
        tree, ExactConditionalSampler(measure), n_samples, master_seed, alpha
    )
