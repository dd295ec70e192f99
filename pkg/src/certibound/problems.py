"""Built-in benchmark problems, adversarial instances, and ground-truth tools.

The registry exposes a 1-D toy problem with a truncated-Gaussian input law,
uniform half-space problems in one and two dimensions, and adversarial
instances built to be indistinguishable from their base problem through a
fixed evaluation budget while hiding a guaranteed amount of failure mass.
A brute-force grid oracle and a naive Monte Carlo baseline round out the
test harness.
"""

from __future__ import annotations

import itertools
import math
import re
import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .distributions import MeasureModel, UniformMeasure, truncated_normal_product
from .errors import OracleConvergenceError
from .refine import refine_budgeted
from .rng import TAG_SAMPLE, derive_rng
from .tree import DyadicCube, Path, decode_cube

# Cost guard for the grid oracle: never more than 2^24 cells total.
ORACLE_CELL_CAP = 1 << 24


class GFunction:
    """Vectorized evaluator for g with an exact, thread-safe call counter.

    The counter advances by exactly one per scalar call and by the batch
    size per batch call; `raw` exposes the uncounted evaluator for
    ground-truth integration, which is diagnostic and not part of any
    budget accounting.
    """

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], dim: int):
        self._fn = fn
        self.dim = dim
        self._calls = 0
        self._lock = threading.Lock()

    @property
    def calls(self) -> int:
        return self._calls

    def reset(self) -> None:
        with self._lock:
            self._calls = 0

    def __call__(self, point) -> float:
        pts = np.asarray(point, dtype=float).reshape(1, self.dim)
        with self._lock:
            self._calls += 1
        return float(np.asarray(self._fn(pts), dtype=float)[0])

    def batch(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.dim:
            raise ValueError(
                f"expected points of dimension {self.dim}, got {pts.shape[1]}"
            )
        with self._lock:
            self._calls += pts.shape[0]
        return np.asarray(self._fn(pts), dtype=float)

    @property
    def raw(self) -> Callable[[np.ndarray], np.ndarray]:
        return self._fn


@dataclass(eq=False)
class ProblemSpec:
    """A failure-probability problem: P(g(X) > threshold) under the measure.

    c_growth bounds the per-level uncertain-cube count via C 2^{j(d-1)},
    m_level the level-set measure (C = M L when both are known), and
    k_density the sup of the normalized input density; all three are
    optional metadata used only by rate checks. p_oracle, when set, is a
    reference probability (exact for the half-space problems, the customary
    two-digit approximation for the toy problem).
    """

    name: str
    dim: int
    g: GFunction
    lipschitz: float
    threshold: float
    measure: MeasureModel
    m_level: float | None = None
    c_growth: float | None = None
    k_density: float | None = None
    p_oracle: float | None = None

    def __post_init__(self):
        if self.lipschitz <= 0:
            raise ValueError(f"Lipschitz constant must be positive, got {self.lipschitz}")
        if self.dim != self.measure.dim:
            raise ValueError(
                f"problem dim {self.dim} != measure dim {self.measure.dim}"
            )


def _toy_g(pts: np.ndarray) -> np.ndarray:
    x = pts[:, 0]
    return (
        0.8 * x
        - 0.3
        + np.exp(-11.534 * np.power(x, 1.95))
        + np.exp(-2.0 * (x - 0.9) ** 2)
    )


def toy_1d() -> ProblemSpec:
    """The 1-D benchmark: smooth g, threshold 1.3, truncated-Gaussian input.

    X ~ N(0.2, 0.2^2) conditioned to [0,1]. The failure region is a single
    interval near the right edge with probability about 2.08e-3.
    """
    return ProblemSpec(
        name="toy1d",
        dim=1,
        g=GFunction(_toy_g, 1),
        lipschitz=1.61,
        threshold=1.3,
        measure=truncated_normal_product([0.2], [0.2]),
        c_growth=2.0,
        k_density=2.370950198792555,
        p_oracle=2.08e-3,
    )


def _neg_first_coord(pts: np.ndarray) -> np.ndarray:
    return -pts[:, 0]


def halfspace_2d() -> ProblemSpec:
    """g(x) = -x1 against threshold -1/2 under the uniform law on [0,1]^2.

    Failure set {x1 < 1/2}, probability exactly 1/2. Every level keeps two
    columns of uncertain cubes astride the plane x1 = 1/2, so the
    uncertain-count constant is 2, not 1 (the level set {|g-T| <= delta}
    has measure 2*delta).
    """
    return ProblemSpec(
        name="halfspace-d2",
        dim=2,
        g=GFunction(_neg_first_coord, 2),
        lipschitz=1.0,
        threshold=-0.5,
        measure=UniformMeasure(2),
        m_level=2.0,
        c_growth=2.0,
        k_density=1.0,
        p_oracle=0.5,
    )


def boundary_halfspace(dim: int) -> ProblemSpec:
    """g(x) = -x1 against threshold 0 under the uniform law on [0,1]^d.

    The failure set is empty but its boundary is the face x1 = 0, so one
    column of cubes per level stays uncertain: L = M = K = 1, C = 1, and
    both the gap bound K C 2^{-k} and the evaluation bound are tight.
    """
    if dim < 1:
        raise ValueError(f"dimension must be >= 1, got {dim}")
    name = "boundary-1d" if dim == 1 else f"boundary-d{dim}"
    return ProblemSpec(
        name=name,
        dim=dim,
        g=GFunction(_neg_first_coord, dim),
        lipschitz=1.0,
        threshold=0.0,
        measure=UniformMeasure(dim),
        m_level=1.0,
        c_growth=1.0,
        k_density=1.0,
        p_oracle=0.0,
    )


def _face_problem(dim: int, lipschitz: float, name: str) -> ProblemSpec:
    # the adversarial base: same face problem, but declared with the
    # perturbed instance's Lipschitz constant so both run with identical
    # margins (an over-estimate never invalidates labels)
    return ProblemSpec(
        name=name,
        dim=dim,
        g=GFunction(_neg_first_coord, dim),
        lipschitz=lipschitz,
        threshold=0.0,
        measure=UniformMeasure(dim),
        m_level=1.0,
        k_density=1.0,
        p_oracle=0.0,
    )


@dataclass(eq=False)
class AdversarialInstance:
    """A perturbed problem hiding failure mass from a fixed evaluation set.

    The instance's g agrees with the base g at every supplied point, so any
    run that only sees those points cannot tell the two apart; yet the
    instance carries at least mass_lower_bound of failure probability.
    bump_cubes holds the perturbation supports for d >= 2, interval the
    single support for d = 1.
    """

    base: ProblemSpec
    instance: ProblemSpec
    points: np.ndarray
    bump_cubes: tuple[DyadicCube, ...] | None
    interval: tuple[float, float] | None
    mass_lower_bound: float
    true_lipschitz: float
    build_budget: int


def _bump_sum(pts: np.ndarray, cubes: Sequence[DyadicCube]) -> np.ndarray:
    total = np.zeros(pts.shape[0])
    for cube in cubes:
        inside = np.min(np.minimum(pts - cube.lower, cube.upper - pts), axis=1)
        total += np.maximum(inside, 0.0)
    return total


def adversarial_high_d(points, j: int) -> AdversarialInstance:
    """Perturb g(x) = -x1 (threshold 0, uniform law) against given points, d >= 2.

    Among the 2^{j(d-1)} depth-j cubes touching the face x1 = 0, those
    containing no supplied point receive a tent bump of slope 2, raising g
    above the threshold near their centers. With exactly n = 2^{j(d-1)-1}
    points at least half the cubes survive, giving failure mass at least
    n 3^{-d} 2^{-dj} while the perturbed g stays 3-Lipschitz and matches
    the base g at every supplied point.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n, d = pts.shape
    if d < 2:
        raise ValueError(f"adversarial_high_d needs d >= 2, got {d}")
    if j < 1:
        raise ValueError(f"depth j must be >= 1, got {j}")
    expected = 1 << (j * (d - 1) - 1)
    if n != expected:
        raise ValueError(
            f"need exactly 2^(j(d-1)-1) = {expected} points for j={j}, d={d}, got {n}"
        )
    cells = 1 << j
    side = 2.0**-j
    killed: set[tuple[int, ...]] = set()
    for x in pts:
        if x[0] < side:
            # half-open cells, top face closed at the domain boundary
            killed.add(
                tuple(min(int(x[i] * cells), cells - 1) for i in range(1, d))
            )
    free = [
        idx
        for idx in itertools.product(range(cells), repeat=d - 1)
        if idx not in killed
    ]
    assert len(free) >= n, "pigeonhole bound violated"
    cubes = tuple(
        DyadicCube(dim=d, depth=j, grid=(0,) + idx) for idx in free
    )

    def gtilde(p: np.ndarray) -> np.ndarray:
        return -p[:, 0] + 2.0 * _bump_sum(p, cubes)

    base = _face_problem(d, 3.0, f"adversarial-d{d}-j{j}-base")
    instance = ProblemSpec(
        name=f"adversarial-d{d}-j{j}",
        dim=d,
        g=GFunction(gtilde, d),
        lipschitz=3.0,
        threshold=0.0,
        measure=UniformMeasure(d),
    )
    matches = gtilde(pts) == base.g.raw(pts)
    assert bool(np.all(matches)), "perturbation leaks onto a supplied point"
    return AdversarialInstance(
        base=base,
        instance=instance,
        points=pts,
        bump_cubes=cubes,
        interval=None,
        mass_lower_bound=n * 3.0**-d * 2.0 ** (-d * j),
        true_lipschitz=3.0,
        build_budget=n,
    )


def adversarial_1d(points, n: int) -> AdversarialInstance:
    """Perturb g(x) = -x (threshold 0, uniform law) against given points, d = 1.

    Partition [0,1) into I_{n+1} = [0, 2^-n) and I_j = [2^-j, 2^-(j-1)) and
    pick the first point-free interval scanning from the left; a tent bump
    of slope 4 on it yields failure mass at least (1/5) 2^-n while the
    perturbed g stays 5-Lipschitz and matches -x at every supplied point.
    """
    pts = np.asarray(points, dtype=float).reshape(-1)
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    if len(pts) > n:
        raise ValueError(
            f"pigeonhole needs at most n={n} points, got {len(pts)}"
        )
    intervals = [(0.0, 2.0**-n)] + [
        (2.0**-j, 2.0 ** -(j - 1)) for j in range(n, 0, -1)
    ]
    for lo, hi in intervals:
        if not np.any((pts >= lo) & (pts < hi)):
            interval = (lo, hi)
            break
    else:
        raise AssertionError("no point-free interval; pigeonhole violated")
    lo, hi = interval

    def gtilde(p: np.ndarray) -> np.ndarray:
        x = p[:, 0]
        bump = np.maximum(np.minimum(x - lo, hi - x), 0.0)
        return -x + 4.0 * bump

    base = _face_problem(1, 5.0, f"adversarial-1d-n{n}-base")
    instance = ProblemSpec(
        name=f"adversarial-1d-n{n}",
        dim=1,
        g=GFunction(gtilde, 1),
        lipschitz=5.0,
        threshold=0.0,
        measure=UniformMeasure(1),
    )
    cols = pts.reshape(-1, 1)
    matches = gtilde(cols) == base.g.raw(cols)
    assert bool(np.all(matches)), "perturbation leaks onto a supplied point"
    return AdversarialInstance(
        base=base,
        instance=instance,
        points=pts,
        bump_cubes=None,
        interval=interval,
        mass_lower_bound=0.2 * 2.0**-n,
        true_lipschitz=5.0,
        build_budget=n,
    )


@dataclass(frozen=True)
class NaiveMCResult:
    """Plain Monte Carlo estimate with its binomial standard error."""

    estimate: float
    hits: int
    n: int
    std_error: float


def naive_mc(problem: ProblemSpec, n: int, seed: int) -> NaiveMCResult:
    """Estimate P(g(X) > T) from n i.i.d. draws; costs exactly n g-calls."""
    if n < 1:
        raise ValueError(f"sample size must be >= 1, got {n}")
    rng = derive_rng(seed, (), TAG_SAMPLE)
    pts = problem.measure.exact_conditional_sample((), n, rng)
    values = problem.g.batch(pts)
    hits = int(np.count_nonzero(values > problem.threshold))
    p = hits / n
    return NaiveMCResult(
        estimate=p,
        hits=hits,
        n=n,
        std_error=math.sqrt(p * (1.0 - p) / n),
    )


def _grid_value(problem: ProblemSpec, resolution: int) -> float:
    """Composite-midpoint value of P(g > T) at a fixed per-axis resolution."""
    d = problem.dim
    g = problem.g.raw
    density = problem.measure.unnorm_density
    mids = (np.arange(resolution) + 0.5) / resolution
    num = 0.0
    den = 0.0
    if d == 1:
        pts = mids.reshape(-1, 1)
        f = density(pts)
        num = float(f[g(pts) > problem.threshold].sum())
        den = float(f.sum())
    else:
        # chunk along the first axis to bound memory
        tail = resolution ** (d - 1)
        block = max(1, (1 << 20) // tail)
        grids = np.meshgrid(*([mids] * (d - 1)), indexing="ij")
        tail_pts = np.stack([a.reshape(-1) for a in grids], axis=1)
        for start in range(0, resolution, block):
            first = mids[start : start + block]
            pts = np.empty((len(first) * tail, d))
            pts[:, 0] = np.repeat(first, tail)
            pts[:, 1:] = np.tile(tail_pts, (len(first), 1))
            f = density(pts)
            num += float(f[g(pts) > problem.threshold].sum())
            den += float(f.sum())
    if den <= 0.0:
        raise ValueError("density sums to zero on the grid")
    return num / den


def oracle_integrate(
    problem: ProblemSpec,
    resolution: int = 1024,
    rel_tol: float = 1e-6,
    adaptive: bool = True,
) -> float:
    """Brute-force probability by midpoint integration of 1{g > T} f_X.

    With adaptive=True the per-axis resolution doubles until two successive
    values agree to rel_tol relative error, never exceeding 2^24 total
    cells; non-convergence raises with the last two iterates attached. The
    fixed-resolution mode is for integrands whose boundary makes the
    relative test unreachable, such as the adversarial instances. Uses the
    uncounted evaluator, so budgets are unaffected.
    """
    if problem.dim > 3:
        raise ValueError("grid oracle supports d <= 3 only")
    if resolution < 1:
        raise ValueError(f"resolution must be >= 1, got {resolution}")
    max_res = int(ORACLE_CELL_CAP ** (1.0 / problem.dim) + 1e-9)
    if not adaptive:
        if resolution**problem.dim > ORACLE_CELL_CAP:
            raise ValueError(f"resolution {resolution} exceeds the cell cap")
        return _grid_value(problem, resolution)
    res = min(resolution, max_res)
    current = _grid_value(problem, res)
    while True:
        if 2 * res > max_res:
            raise OracleConvergenceError(
                f"no convergence to {rel_tol} within {ORACLE_CELL_CAP} cells",
                last_two=(current, _grid_value(problem, res)),
            )
        res *= 2
        refined = _grid_value(problem, res)
        if abs(refined - current) <= rel_tol * max(abs(refined), abs(current)):
            return refined
        current = refined


_REGISTRY: dict[str, Callable[[], ProblemSpec]] = {
    "toy1d": toy_1d,
    "halfspace-d2": halfspace_2d,
    "boundary-d2": lambda: boundary_halfspace(2),
    "boundary-1d": lambda: boundary_halfspace(1),
}

_ADV_D2 = re.compile(r"^adversarial-d2-j(\d+)$")
_ADV_1D = re.compile(r"^adversarial-1d-n(\d+)$")


def list_problems() -> list[str]:
    """Registered problem ids; the adversarial entries are parameterized."""
    return sorted(_REGISTRY) + ["adversarial-d2-j<j>", "adversarial-1d-n<n>"]


def parse_problem_id(problem_id: str):
    """Classify an id without constructing anything.

    Returns ("fixed", None) for registry entries, ("adversarial", budget)
    for in-range parameterized ids (budget is the canonical build budget),
    or None for anything else. Safe for config validation: never touches g.
    """
    if problem_id in _REGISTRY:
        return ("fixed", None)
    m = _ADV_D2.match(problem_id)
    if m:
        j = int(m.group(1))
        return ("adversarial", 1 << (j - 1)) if 1 <= j <= 12 else None
    m = _ADV_1D.match(problem_id)
    if m:
        n = int(m.group(1))
        return ("adversarial", n) if 0 <= n <= 40 else None
    return None


def adversarial_from_id(problem_id: str) -> AdversarialInstance:
    """Build the adversarial instance a parameterized id describes.

    The evaluation points are the centers visited by a budgeted refinement
    of the base problem, so the instance is indistinguishable from its base
    through exactly that budget.
    """
    m = _ADV_D2.match(problem_id)
    if m:
        j = int(m.group(1))
        if not 1 <= j <= 12:
            raise ValueError(f"adversarial depth j must be in 1..12, got {j}")
        budget = 1 << (j - 1)
        base = _face_problem(2, 3.0, "adversarial-build-base")
        run = refine_budgeted(base, budget)
        points = np.array(
            [decode_cube(p, 2).center for p, _ in run.eval_log]
        )
        return adversarial_high_d(points, j)
    m = _ADV_1D.match(problem_id)
    if m:
        n = int(m.group(1))
        if not 0 <= n <= 40:
            raise ValueError(f"adversarial budget n must be in 0..40, got {n}")
        base = _face_problem(1, 5.0, "adversarial-build-base")
        run = refine_budgeted(base, n)
        points = np.array(
            [decode_cube(p, 1).center[0] for p, _ in run.eval_log]
        )
        return adversarial_1d(points, n)
    raise ValueError(f"not an adversarial problem id: {problem_id!r}")


def get_problem(problem_id: str) -> ProblemSpec:
    """Fresh problem for a registry id (each call gets its own g counter)."""
    factory = _REGISTRY.get(problem_id)
    if factory is not None:
        return factory()
    if _ADV_D2.match(problem_id) or _ADV_1D.match(problem_id):
        return adversarial_from_id(problem_id).instance
    raise ValueError(
        f"unknown problem id {problem_id!r}; known ids: {', '.join(list_problems())}"
    )
