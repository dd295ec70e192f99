"""Independent Metropolis-Hastings sampling of cube-conditioned laws.

When exact conditional sampling is unavailable the per-vertex batches are
produced by N parallel chains targeting the unnormalized density restricted
to the vertex cube, with uniform-on-the-cube proposals. Acceptance of a
proposal x' from state x is u * f(x) <= f(x') with u uniform on [0, 1), so
a flat density accepts every proposal.

Stream layout per vertex: the chain initializations consume the init
stream, the step-s proposals consume a per-step proposal stream, and the
step-s acceptance uniforms consume a per-step acceptance stream. The one
deliberate twist is that the FINAL step's proposals are drawn from the
exact-sampling stream (step 0), and a zero-step run initializes from it
directly. Under a flat density every proposal is accepted, so the terminal
states are bitwise the draws the exact uniform sampler would have produced
from the same master seed.
"""

from dataclasses import dataclass

import numpy as np

from .distributions import uniform_on_cube
from .errors import DegenerateDensityError, InvalidChainStateError
from .rng import TAG_ACCEPT, TAG_INIT, TAG_PROPOSAL, TAG_SAMPLE, derive_rng
from .splitting import estimate_tree
from .tree import DyadicCube, LabeledTree, Path, decode_cube, format_path

INIT_DRAW_BUDGET = 1_000_000


@dataclass(frozen=True)
class MCMCConfig:
    """Chain-count, step-count, and seed for the sampling backend."""

    steps: int
    chains: int
    seed: int
    diagnostics: bool = False

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be nonnegative")
        if self.chains < 1:
            raise ValueError("chains must be positive")


@dataclass(eq=False)
class ChainBatch:
    """Terminal states of one batch of chains plus mixing diagnostics.

    beta_hat is the ratio of the mean to the max of the unnormalized
    density over every uniform draw the batch evaluated; it estimates the
    uniformization constant 1/K(v) of the cube and lower-bounds the
    stationary acceptance probability.
    """

    parent: Path
    states: np.ndarray
    acceptance_rate: float
    beta_hat: float


def mh_step(current, cube: DyadicCube, density, rng) -> tuple[np.ndarray, bool]:
    """One independent-proposal transition from a single state.

    Generic kernel for a caller-managed chain; the batch runner below uses
    separate derived streams per step instead of one shared generator.
    """
    rng = np.random.default_rng(rng)
    cur = np.asarray(current, dtype=float).reshape(1, cube.dim)
    f_cur = float(np.asarray(density(cur), dtype=float)[0])
    if not f_cur > 0.0:
        raise InvalidChainStateError("current state has zero target density")
    proposal = uniform_on_cube(cube, 1, rng)
    f_prop = float(np.asarray(density(proposal), dtype=float)[0])
    u = float(rng.random())
    if f_prop > 0.0 and u * f_cur <= f_prop:
        return proposal[0], True
    return cur[0].copy(), False


def run_chain_batch(parent: Path, model, config: MCMCConfig) -> ChainBatch:
    """Run config.chains independent chains for config.steps transitions.

    Initialization rejection-resamples zero-density starts from the same
    init stream; if the batch burns through INIT_DRAW_BUDGET uniform draws
    without landing every chain on positive density, the density is treated
    as degenerate on the cube.
    """
    cube = decode_cube(parent, model.dim)
    density = model.unnorm_density
    n = config.chains
    t = config.steps

    init_tag = TAG_SAMPLE if t == 0 else TAG_INIT
    rng_init = derive_rng(config.seed, parent, init_tag)
    states = uniform_on_cube(cube, n, rng_init)
    f_cur = np.asarray(density(states), dtype=float)

    f_sum = float(f_cur.sum())
    f_max = float(f_cur.max())
    f_count = n

    drawn = n
    while True:
        bad = ~(f_cur > 0.0)
        if not bad.any():
            break
        if drawn >= INIT_DRAW_BUDGET:
            raise DegenerateDensityError(
                f"no positive density found on cube at {format_path(parent)} "
                f"after {drawn} uniform draws"
            )
        k = int(bad.sum())
        fresh = uniform_on_cube(cube, k, rng_init)
        f_fresh = np.asarray(density(fresh), dtype=float)
        states[bad] = fresh
        f_cur[bad] = f_fresh
        drawn += k
        f_sum += float(f_fresh.sum())
        f_max = max(f_max, float(f_fresh.max()))
        f_count += k

    accepted = 0
    for s in range(1, t + 1):
        if s == t:
            rng_prop = derive_rng(config.seed, parent, TAG_SAMPLE)
        else:
            rng_prop = derive_rng(config.seed, parent, TAG_PROPOSAL, step=s)
        proposals = uniform_on_cube(cube, n, rng_prop)
        f_prop = np.asarray(density(proposals), dtype=float)
        u = derive_rng(config.seed, parent, TAG_ACCEPT, step=s).random(n)
        take = (f_prop > 0.0) & (u * f_cur <= f_prop)
        states[take] = proposals[take]
        f_cur[take] = f_prop[take]
        accepted += int(take.sum())
        f_sum += float(f_prop.sum())
        f_max = max(f_max, float(f_prop.max()))
        f_count += n

    rate = accepted / (n * t) if t > 0 else 1.0
    beta = (f_sum / f_count) / f_max if f_max > 0.0 else 0.0
    return ChainBatch(parent=parent, states=states, acceptance_rate=rate, beta_hat=beta)


class MetropolisConditionalSampler:
    """Drop-in conditional sampler producing batches by parallel chains.

    Quacks like the exact sampler (same sample signature), so the splitting
    pipeline is agnostic to the backend. Per-vertex mixing diagnostics are
    stashed on the instance as it runs.
    """

    name = "mcmc"

    def __init__(self, model, steps: int):
        if steps < 0:
            raise ValueError("steps must be nonnegative")
        self.model = model
        self.steps = steps
        self.diagnostics: dict[Path, dict] = {}

    def sample(self, path: Path, count: int, master_seed: int) -> np.ndarray:
        batch = run_chain_batch(
            path,
            self.model,
            MCMCConfig(steps=self.steps, chains=count, seed=master_seed),
        )
        self.diagnostics[tuple(path)] = {
            "acceptance_rate": batch.acceptance_rate,
            "beta_hat_estimate": batch.beta_hat,
        }
        return batch.states


def mcmc_tree_estimate(tree: LabeledTree, model, config: MCMCConfig, alpha: float = 0.05):
    """Splitting estimate of a labeled tree with chain-sampled batches.

    Touches only the measure's density, never the underlying g, and returns
    the same report shape as the exact backend with per-vertex diagnostics
    attached.
    """
    sampler = MetropolisConditionalSampler(model, config.steps)
    report = estimate_tree(tree, sampler, config.chains, config.seed, alpha)
    report.diagnostics = dict(sampler.diagnostics)
    return report
