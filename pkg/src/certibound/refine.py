"""Certified bracketing of a failure probability by tree refinement.

Starting from the root labeled uncertain, every refinement step splits each
uncertain leaf, evaluates g at the 2^d child centers, and labels the children
by the Lipschitz margin rule. Inside leaves are certified failure region,
outside leaves certified safe, so the measure of the inside leaves and of the
inside-plus-uncertain leaves bracket the true failure probability at every
stage. Evaluations follow a fixed canonical order (level by level, parents in
lexicographic address order, children in index order), which makes a run a
pure function of the problem and the evaluation budget.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import EvaluationError
from .tree import Label, LabeledTree, Path, decode_cube, classify
from .distributions import MeasureModel


@dataclass(frozen=True)
class BoundPair:
    """Certified bracket [lower, upper] for the failure probability."""

    lower: float
    upper: float

    def __post_init__(self):
        if not 0.0 <= self.lower <= self.upper <= 1.0 + 1e-12:
            raise ValueError(f"invalid bound pair ({self.lower}, {self.upper})")

    @property
    def gap(self) -> float:
        return self.upper - self.lower


@dataclass(frozen=True)
class TraceRow:
    """Bounds after a given number of g evaluations."""

    n: int
    lower: float
    upper: float

    @property
    def gap(self) -> float:
        return self.upper - self.lower


@dataclass
class RefinementResult:
    """A labeled tree together with the evaluation record that produced it.

    eval_log lists (address, g value) pairs in evaluation order; replaying
    it through the margin rule reconstructs the tree exactly. u_counts[j]
    is the number of uncertain leaves after level j was completed.
    """

    tree: LabeledTree
    eval_count: int
    eval_log: tuple[tuple[Path, float], ...]
    u_counts: tuple[int, ...]
    bounds: BoundPair | None = None
    trace: tuple[TraceRow, ...] = field(default=(), repr=False)


class _Engine:
    """Stepper performing one child-center evaluation per call.

    Between calls the label map always describes a valid tree: a parent is
    split the moment its first child is evaluated (remaining children start
    uncertain), parents not yet reached stay unsplit leaves. Level rollover
    happens eagerly with the last evaluation of a level, so a snapshot taken
    there equals the fully refined tree of that level.
    """

    def __init__(self, problem, evaluate_root: bool = False):
        self.problem = problem
        self.labels: dict[Path, Label] = {}
        self.eval_log: list[tuple[Path, float]] = []
        self.u_counts: list[int] = []
        root_label = Label.UNCERTAIN
        if evaluate_root:
            value = self._evaluate(())
            root_label = classify(value, problem.threshold, problem.lipschitz, 0)
        self.labels[()] = root_label
        self.u_counts.append(1 if root_label is Label.UNCERTAIN else 0)
        self.completed_depth = 0
        self._queue: list[Path] = []
        self._queue_pos = 0
        self._done = False
        self._rebuild_queue()

    def _u_frontier(self) -> list[Path]:
        k = self.completed_depth
        return sorted(
            p
            for p, l in self.labels.items()
            if len(p) == k and l is Label.UNCERTAIN
        )

    def _rebuild_queue(self) -> None:
        frontier = self._u_frontier()
        if not frontier:
            self._done = True
            self._queue = []
            self._queue_pos = 0
            return
        full = 1 << self.problem.dim
        self._queue = [
            parent + (i,) for parent in frontier for i in range(1, full + 1)
        ]
        self._queue_pos = 0

    def _evaluate(self, path: Path) -> float:
        cube = decode_cube(path, self.problem.dim)
        try:
            value = float(self.problem.g(cube.center))
        except Exception as exc:
            raise EvaluationError(
                f"g failed at {cube.center.tolist()}: {exc}", self.eval_log
            ) from exc
        self.eval_log.append((path, value))
        return value

    def step(self) -> tuple[Path, Label] | None:
        """Run the next canonical evaluation; None once nothing is uncertain."""
        if self._done:
            return None
        child = self._queue[self._queue_pos]
        parent = child[:-1]
        if child[-1] == 1:
            # splitting this parent now; unevaluated siblings stay uncertain
            full = 1 << self.problem.dim
            for i in range(1, full + 1):
                self.labels[parent + (i,)] = Label.UNCERTAIN
        try:
            value = self._evaluate(child)
            label = classify(
                value, self.problem.threshold, self.problem.lipschitz, len(child)
            )
        except EvaluationError as exc:
            exc.eval_log = tuple(self.eval_log)
            raise
        self.labels[child] = label
        self._queue_pos += 1
        if self._queue_pos == len(self._queue):
            self.completed_depth += 1
            self.u_counts.append(
                sum(
                    1
                    for p, l in self.labels.items()
                    if len(p) == self.completed_depth and l is Label.UNCERTAIN
                )
            )
            self._rebuild_queue()
        return child, label

    def snapshot(self) -> RefinementResult:
        return RefinementResult(
            tree=LabeledTree(self.problem.dim, dict(self.labels)),
            eval_count=len(self.eval_log),
            eval_log=tuple(self.eval_log),
            u_counts=tuple(self.u_counts),
        )


def refine_full(problem, k_max: int, evaluate_root: bool = False) -> list[RefinementResult]:
    """Refinement states after levels 0..k_max.

    Once no uncertain leaves remain the tree stops changing and later
    entries repeat it with no further evaluations.
    """
    if k_max < 0:
        raise ValueError(f"k_max must be >= 0, got {k_max}")
    engine = _Engine(problem, evaluate_root=evaluate_root)
    results = [engine.snapshot()]
    for target in range(1, k_max + 1):
        while engine.completed_depth < target:
            if engine.step() is None:
                break
        results.append(engine.snapshot())
    return results


def refine_budgeted(problem, n: int, evaluate_root: bool = False) -> RefinementResult:
    """Best tree reachable with at most n evaluations of g.

    Spends the budget along the canonical evaluation order, so exactly
    min(n, total evaluations to certify everything) calls are made and a
    full-level budget reproduces the corresponding full refinement.
    """
    if n < 0:
        raise ValueError(f"budget must be >= 0, got {n}")
    engine = _Engine(problem, evaluate_root=evaluate_root)
    for _ in range(n):
        if engine.step() is None:
            break
    return engine.snapshot()


def refine_with_trace(problem, n: int) -> RefinementResult:
    """Budgeted refinement recording bounds after every evaluation.

    Requires a measure with exact cube probabilities. The trace keeps one
    row per evaluation count at which the bounds changed, starting from the
    trivial bracket [0, 1] at zero evaluations.
    """
    if n < 0:
        raise ValueError(f"budget must be >= 0, got {n}")
    measure: MeasureModel = problem.measure
    engine = _Engine(problem)
    lower = 0.0
    uncertain = 1.0
    rows = [TraceRow(0, 0.0, 1.0)]
    for spent in range(1, n + 1):
        event = engine.step()
        if event is None:
            break
        path, label = event
        if label is not Label.UNCERTAIN:
            mass = measure.path_probability(path)
            uncertain = max(uncertain - mass, 0.0)
            if label is Label.INSIDE:
                lower += mass
            row = TraceRow(spent, lower, min(lower + uncertain, 1.0))
            if (row.lower, row.upper) != (rows[-1].lower, rows[-1].upper):
                rows.append(row)
    result = engine.snapshot()
    result.bounds = deterministic_bounds(result.tree, measure)
    result.trace = tuple(rows)
    return result


def deterministic_bounds(tree: LabeledTree, measure: MeasureModel) -> BoundPair:
    """Certified bracket carried by a labeled tree under a measure."""
    inside = sum(measure.path_probability(p) for p in tree.inside_leaves())
    uncertain = sum(measure.path_probability(p) for p in tree.uncertain_leaves())
    lower = min(inside, 1.0)
    return BoundPair(lower=lower, upper=min(lower + uncertain, 1.0))


def theoretical_eval_bound(dim: int, c: float, k: int) -> float:
    """Worst-case evaluation count through level k for constant C = ML.

    2Ck in one dimension, 4C 2^((d-1)k) above; both require C >= 1.
    """
    if dim < 1:
        raise ValueError(f"dimension must be >= 1, got {dim}")
    if c < 1.0:
        raise ValueError(f"C must be >= 1, got {c}")
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    if dim == 1:
        return 2.0 * c * k
    return 4.0 * c * 2.0 ** ((dim - 1) * k)


def replay_eval_log(
    eval_log, dim: int, threshold: float, lipschitz: float
) -> LabeledTree:
    """Rebuild the labeled tree implied by an evaluation log.

    Labels are recomputed from the recorded values alone, so agreement with
    the original tree certifies that a run is a pure function of its log.
    """
    labels: dict[Path, Label] = {(): Label.UNCERTAIN}
    split: set[Path] = set()
    full = 1 << dim
    for path, value in eval_log:
        if not path:
            labels[()] = classify(value, threshold, lipschitz, 0)
            continue
        parent = path[:-1]
        if parent not in split:
            for i in range(1, full + 1):
                labels[parent + (i,)] = Label.UNCERTAIN
            split.add(parent)
        labels[path] = classify(value, threshold, lipschitz, len(path))
    return LabeledTree(dim, labels)
