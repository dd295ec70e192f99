"""Probability models on the unit cube.

A measure model answers three kinds of questions, each gated by a capability
flag: exact cube probabilities, exact sampling conditioned on a cube, and
pointwise unnormalized density evaluation. Product laws get the first two
from per-dimension marginals; a bare density supports only the third and is
meant for the Metropolis path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize
from scipy.special import ndtr, ndtri

from .errors import CapabilityError, DegenerateConditioningError
from .tree import DyadicCube, Path, decode_cube

# Tolerance for probability additivity and normalization checks.
ADDITIVITY_TOL = 1e-12


def uniform_on_cube(cube: DyadicCube, count: int, rng) -> np.ndarray:
    """Draw `count` points uniformly on `cube`, shape (count, dim).

    Single definition shared by the uniform measure and the chain proposal
    kernel: with matched generator state the two produce bitwise-equal draws,
    which is what makes the uniform-density coupling argument checkable.
    """
    rng = np.random.default_rng(rng)
    u = rng.random((count, cube.dim))
    return cube.lower + cube.side * u


class Marginal:
    """One-dimensional law on [0,1]: unnormalized density, CDF, inverse CDF."""

    def unnorm_pdf(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def cdf(self, x: float) -> float:
        raise NotImplementedError

    def cdf_increment(self, lo: float, hi: float) -> float:
        return max(self.cdf(hi) - self.cdf(lo), 0.0)

    def ppf(self, q: float | np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def conditional_ppf(self, lo: float, hi: float, u: np.ndarray) -> np.ndarray:
        """Quantiles of the law restricted to [lo, hi] at levels u."""
        c_lo = self.cdf(lo)
        inc = self.cdf_increment(lo, hi)
        if inc <= 0.0:
            raise DegenerateConditioningError(
                f"marginal has zero mass on [{lo}, {hi}]"
            )
        x = self.ppf(c_lo + np.asarray(u, dtype=float) * inc)
        return np.clip(x, lo, hi)


@dataclass(frozen=True)
class UniformMarginal(Marginal):
    def unnorm_pdf(self, x):
        return np.ones_like(np.asarray(x, dtype=float))

    def cdf(self, x):
        return float(np.clip(x, 0.0, 1.0))

    def ppf(self, q):
        return np.asarray(q, dtype=float)

    def conditional_ppf(self, lo, hi, u):
        return lo + (hi - lo) * np.asarray(u, dtype=float)


@dataclass(frozen=True)
class TruncatedNormalMarginal(Marginal):
    """Normal(mean, std^2) restricted to [0,1] and renormalized."""

    mean: float
    std: float

    def __post_init__(self):
        if self.std <= 0:
            raise ValueError(f"std must be positive, got {self.std}")

    def _z(self, x):
        return (np.asarray(x, dtype=float) - self.mean) / self.std

    @property
    def _mass(self) -> float:
        return self._raw_increment(0.0, 1.0)

    def _raw_increment(self, lo: float, hi: float) -> float:
        # difference of normal CDFs, computed in whichever tail keeps full
        # relative precision (plain ndtr cancels catastrophically when both
        # endpoints sit in the upper tail)
        z_lo = float(self._z(lo))
        z_hi = float(self._z(hi))
        if z_lo >= 0.0:
            inc = ndtr(-z_lo) - ndtr(-z_hi)
        else:
            inc = ndtr(z_hi) - ndtr(z_lo)
        return float(max(inc, 0.0))

    def unnorm_pdf(self, x):
        z = self._z(x)
        return np.exp(-0.5 * z * z)

    def cdf(self, x):
        return self._raw_increment(0.0, float(x)) / self._mass

    def cdf_increment(self, lo, hi):
        return self._raw_increment(lo, hi) / self._mass

    def ppf(self, q):
        lo = ndtr(self._z(0.0))
        target = lo + np.asarray(q, dtype=float) * self._mass
        x = self.mean + self.std * ndtri(target)
        return np.clip(x, 0.0, 1.0)

    def conditional_ppf(self, lo, hi, u):
        u = np.asarray(u, dtype=float)
        z_lo = float(self._z(lo))
        z_hi = float(self._z(hi))
        if z_lo >= 0.0:
            # work on survival values, which stay small in the upper tail
            s_lo = ndtr(-z_lo)
            s_hi = ndtr(-z_hi)
            if s_lo - s_hi <= 0.0:
                raise DegenerateConditioningError(
                    f"marginal has zero mass on [{lo}, {hi}]"
                )
            target = s_lo - u * (s_lo - s_hi)
            x = self.mean - self.std * ndtri(target)
        else:
            c_lo = ndtr(z_lo)
            c_hi = ndtr(z_hi)
            if c_hi - c_lo <= 0.0:
                raise DegenerateConditioningError(
                    f"marginal has zero mass on [{lo}, {hi}]"
                )
            target = c_lo + u * (c_hi - c_lo)
            x = self.mean + self.std * ndtri(target)
        return np.clip(x, lo, hi)


class NumericMarginal(Marginal):
    """Marginal built from an arbitrary unnormalized density by quadrature.

    CDF values come from adaptive quadrature at relative tolerance 1e-12 and
    are cached per evaluation point, so repeated cube queries at the dyadic
    endpoints cost one integration each.
    """

    def __init__(self, pdf: Callable[[np.ndarray], np.ndarray]):
        self._pdf = pdf
        self._cache: dict[float, float] = {}
        self._total = self._raw_cdf(1.0)
        if self._total <= 0:
            raise ValueError("density integrates to zero on [0,1]")

    def _raw_cdf(self, x: float) -> float:
        x = float(np.clip(x, 0.0, 1.0))
        if x not in self._cache:
            val, _ = integrate.quad(
                lambda t: float(self._pdf(np.asarray([t]))[0]),
                0.0,
                x,
                epsabs=1e-15,
                epsrel=1e-12,
                limit=200,
            )
            self._cache[x] = val
        return self._cache[x]

    def unnorm_pdf(self, x):
        return np.asarray(self._pdf(np.asarray(x, dtype=float)), dtype=float)

    def cdf(self, x):
        return self._raw_cdf(x) / self._total

    def ppf(self, q):
        q = np.atleast_1d(np.asarray(q, dtype=float))
        out = np.empty_like(q)
        for i, qi in enumerate(q):
            if qi <= 0.0:
                out[i] = 0.0
            elif qi >= 1.0:
                out[i] = 1.0
            else:
                out[i] = optimize.brentq(
                    lambda x: self.cdf(x) - qi, 0.0, 1.0, xtol=1e-14
                )
        return out


class MeasureModel:
    """Law of X on [0,1]^d.

    Capability flags tell callers what is supported; asking for an
    unsupported operation raises CapabilityError rather than guessing.
    density_bound, when set, is a sup bound on the normalized density.
    """

    dim: int
    exact_probability: bool = False
    exact_conditional_sampling: bool = False
    unnormalized_density: bool = False
    density_bound: float | None = None

    # -- exact probabilities -------------------------------------------------

    def cube_probability(self, cube: DyadicCube) -> float:
        raise CapabilityError(
            f"{type(self).__name__} cannot compute exact cube probabilities"
        )

    def path_probability(self, path: Path) -> float:
        return self.cube_probability(decode_cube(path, self.dim))

    def conditional_child_probabilities(self, parent: Path) -> np.ndarray:
        """P(X in child | X in parent) for all 2^d children, in index order."""
        cube = decode_cube(parent, self.dim)
        mass = self.cube_probability(cube)
        if mass <= 0.0:
            raise DegenerateConditioningError(
                f"cube at {parent!r} has zero probability"
            )
        full = 1 << self.dim
        probs = np.empty(full)
        for index in range(1, full + 1):
            child = decode_cube(parent + (index,), self.dim)
            probs[index - 1] = self.cube_probability(child) / mass
        total = probs.sum()
        if abs(total - 1.0) > ADDITIVITY_TOL:
            raise DegenerateConditioningError(
                f"child probabilities at {parent!r} sum to {total!r}, not 1"
            )
        return probs

    def conditional(self, parent: Path) -> "ConditionalLaw":
        return ConditionalLaw(model=self, parent=tuple(parent))

    # -- sampling --------------------------------------------------------------

    def exact_conditional_sample(self, parent: Path, count: int, rng) -> np.ndarray:
        raise CapabilityError(
            f"{type(self).__name__} cannot sample exactly from conditionals"
        )

    # -- density ----------------------------------------------------------------

    def unnorm_density(self, points: np.ndarray) -> np.ndarray:
        raise CapabilityError(
            f"{type(self).__name__} exposes no pointwise density"
        )


@dataclass(frozen=True)
class ConditionalLaw:
    """The law of X restricted to one dyadic cube and renormalized."""

    model: MeasureModel
    parent: Path

    @property
    def cube(self) -> DyadicCube:
        return decode_cube(self.parent, self.model.dim)

    @property
    def probability(self) -> float:
        return self.model.path_probability(self.parent)

    def child_probabilities(self) -> np.ndarray:
        return self.model.conditional_child_probabilities(self.parent)

    def sample(self, count: int, rng) -> np.ndarray:
        return self.model.exact_conditional_sample(self.parent, count, rng)


class UniformMeasure(MeasureModel):
    """Uniform law on [0,1]^d."""

    exact_probability = True
    exact_conditional_sampling = True
    unnormalized_density = True
    density_bound = 1.0

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError(f"dimension must be >= 1, got {dim}")
        self.dim = dim

    def cube_probability(self, cube):
        return cube.volume

    def conditional_child_probabilities(self, parent):
        decode_cube(parent, self.dim)
        return np.full(1 << self.dim, 2.0 ** (-self.dim))

    def exact_conditional_sample(self, parent, count, rng):
        cube = decode_cube(parent, self.dim)
        return uniform_on_cube(cube, count, rng)

    def unnorm_density(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.ones(pts.shape[0])


class ProductMeasure(MeasureModel):
    """Independent per-dimension marginals."""

    exact_probability = True
    exact_conditional_sampling = True
    unnormalized_density = True

    def __init__(self, marginals: Sequence[Marginal]):
        if not marginals:
            raise ValueError("at least one marginal required")
        self.marginals = tuple(marginals)
        self.dim = len(self.marginals)

    def cube_probability(self, cube):
        prob = 1.0
        for i, marginal in enumerate(self.marginals):
            lo = float(cube.lower[i])
            hi = float(cube.upper[i])
            prob *= marginal.cdf_increment(lo, hi)
        return min(prob, 1.0)

    def exact_conditional_sample(self, parent, count, rng):
        rng = np.random.default_rng(rng)
        cube = decode_cube(parent, self.dim)
        u = rng.random((count, self.dim))
        out = np.empty((count, self.dim))
        for i, marginal in enumerate(self.marginals):
            out[:, i] = marginal.conditional_ppf(
                float(cube.lower[i]), float(cube.upper[i]), u[:, i]
            )
        return out

    def unnorm_density(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        dens = np.ones(pts.shape[0])
        for i, marginal in enumerate(self.marginals):
            dens *= marginal.unnorm_pdf(pts[:, i])
        return dens


class DensityMeasure(MeasureModel):
    """Law known only through an unnormalized density evaluator."""

    unnormalized_density = True

    def __init__(
        self,
        dim: int,
        density: Callable[[np.ndarray], np.ndarray],
        density_bound: float | None = None,
    ):
        if dim < 1:
            raise ValueError(f"dimension must be >= 1, got {dim}")
        self.dim = dim
        self._density = density
        self.density_bound = density_bound

    def unnorm_density(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.asarray(self._density(pts), dtype=float)


def density_view(model: MeasureModel) -> DensityMeasure:
    """Strip a model down to its density, hiding exact capabilities.

    Useful for exercising the Metropolis path on laws whose exact answers
    are known, so the two can be compared.
    """
    return DensityMeasure(
        model.dim, model.unnorm_density, density_bound=model.density_bound
    )


def truncated_normal_product(
    mean: Sequence[float], std: Sequence[float]
) -> ProductMeasure:
    mean = list(mean)
    std = list(std)
    if len(mean) != len(std):
        raise ValueError("mean and std must have equal length")
    return ProductMeasure(
        [TruncatedNormalMarginal(m, s) for m, s in zip(mean, std)]
    )


def measure_from_config(config: dict) -> MeasureModel:
    """Build a measure from its JSON configuration.

    Recognized kinds:
      {"kind": "uniform", "dim": d}
      {"kind": "truncated_normal_product", "mean": [...], "std": [...]}
      {"kind": "custom_logdensity", "problem": "<registered problem id>"}
    """
    kind = config.get("kind")
    if kind == "uniform":
        return UniformMeasure(int(config["dim"]))
    if kind == "truncated_normal_product":
        return truncated_normal_product(config["mean"], config["std"])
    if kind == "custom_logdensity":
        from .problems import get_problem

        base = get_problem(str(config["problem"])).measure
        return density_view(base)
    raise ValueError(f"unknown distribution kind {kind!r}")
