"""Dyadic cube geometry, vertex addressing, and labeled refinement trees.

The unit cube [0,1]^d is split recursively into 2^d congruent children. A
vertex is addressed by the tuple of child indices on the path from the root,
each index in 1..2^d. Index u encodes one binary offset bit per dimension via
u = 1 + sum_i b_i 2^(i-1), so in one dimension child 1 is the lower half and
child 2 the upper half.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping

import numpy as np

from .errors import InvalidAddressError, TreeStructureError, EvaluationError

# Depth cap keeps every cube coordinate exactly representable in binary.
MAX_DEPTH = 62

Path = tuple[int, ...]

ROOT: Path = ()


class Label(str, Enum):
    INSIDE = "I"
    OUTSIDE = "O"
    UNCERTAIN = "U"


def validate_path(path: Iterable[int], dim: int) -> Path:
    """Check child indices and depth; returns the path as a tuple."""
    if dim < 1:
        raise InvalidAddressError(f"dimension must be >= 1, got {dim}")
    path = tuple(int(i) for i in path)
    if len(path) > MAX_DEPTH:
        raise InvalidAddressError(
            f"depth {len(path)} exceeds the limit of {MAX_DEPTH}"
        )
    hi = 1 << dim
    for i in path:
        if not 1 <= i <= hi:
            raise InvalidAddressError(
                f"child index {i} out of range 1..{hi} for dimension {dim}"
            )
    return path


@dataclass(frozen=True)
class DyadicCube:
    """Axis-aligned cube of side 2^-depth with dyadic lower corner.

    The corner is stored on the integer grid at scale 2^depth, which keeps
    the geometry exact at any depth up to MAX_DEPTH.
    """

    dim: int
    depth: int
    grid: tuple[int, ...]

    @property
    def side(self) -> float:
        return 2.0 ** (-self.depth)

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.grid, dtype=float) * self.side

    @property
    def upper(self) -> np.ndarray:
        return (np.asarray(self.grid, dtype=float) + 1.0) * self.side

    @property
    def center(self) -> np.ndarray:
        return (2.0 * np.asarray(self.grid, dtype=float) + 1.0) * (
            2.0 ** (-self.depth - 1)
        )

    @property
    def volume(self) -> float:
        return 2.0 ** (-self.depth * self.dim)

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Closed-cube membership test for an (n, dim) array of points."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.all((pts >= self.lower) & (pts <= self.upper), axis=1)


def child_offset_bits(index: int, dim: int) -> tuple[int, ...]:
    """Per-dimension offset bits encoded by a child index."""
    if not 1 <= index <= (1 << dim):
        raise InvalidAddressError(
            f"child index {index} out of range 1..{1 << dim}"
        )
    return tuple((index - 1) >> (i - 1) & 1 for i in range(1, dim + 1))


def decode_cube(path: Iterable[int], dim: int) -> DyadicCube:
    """Map a vertex address to its cube; the empty address is [0,1]^d."""
    path = validate_path(path, dim)
    grid = [0] * dim
    for index in path:
        bits = child_offset_bits(index, dim)
        for i in range(dim):
            grid[i] = 2 * grid[i] + bits[i]
    return DyadicCube(dim=dim, depth=len(path), grid=tuple(grid))


def ancestors(path: Path) -> list[Path]:
    """Non-empty prefixes of a path, shallowest first. The root never appears."""
    return [path[:k] for k in range(1, len(path) + 1)]


def meet(u: Path, v: Path) -> Path:
    """Longest common prefix of two addresses (the deepest common ancestor)."""
    k = 0
    limit = min(len(u), len(v))
    while k < limit and u[k] == v[k]:
        k += 1
    return u[:k]


def ancestors_and_meet(u: Path, v: Path) -> tuple[list[Path], Path]:
    """Ancestor chain of u (including u, excluding the root) and u's meet with v."""
    return ancestors(u), meet(u, v)


def format_path(path: Path) -> str:
    """Dotted rendering of an address; the empty address prints as 'root'."""
    return ".".join(str(i) for i in path) if path else "root"


def locate_child(cube: DyadicCube, points: np.ndarray) -> np.ndarray:
    """Child indices (1..2^d) for points of a cube, half-open convention.

    A coordinate equal to the cube center goes to the upper child, so each
    point of the cube lands in exactly one child; the top face at the domain
    boundary stays closed.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    bits = (pts >= cube.center).astype(np.int64)
    weights = 1 << np.arange(cube.dim, dtype=np.int64)
    return 1 + bits @ weights


def classify(value: float, threshold: float, lipschitz: float, depth: int) -> Label:
    """Label a depth-j cube from the g value at its center.

    The center is within L 2^-(j+1) in sup norm of every cube point, so a
    margin of that size certifies the whole cube. Exact ties stay uncertain.
    """
    if not math.isfinite(value):
        raise EvaluationError(f"non-finite g value {value!r}")
    margin = lipschitz * 2.0 ** (-depth - 1)
    if value > threshold + margin:
        return Label.INSIDE
    if value < threshold - margin:
        return Label.OUTSIDE
    return Label.UNCERTAIN


class LabeledTree:
    """Finite 2^d-regular labeled tree over dyadic cube addresses.

    Every vertex is labeled I, O, or U. Structural invariants enforced at
    construction: the root is present, the vertex set is ancestor-closed,
    a split vertex has all 2^d children, and only U vertices are split.
    """

    def __init__(self, dim: int, labels: Mapping[Path, Label]):
        if dim < 1:
            raise InvalidAddressError(f"dimension must be >= 1, got {dim}")
        self.dim = dim
        self._labels: dict[Path, Label] = {
            validate_path(p, dim): Label(l) for p, l in labels.items()
        }
        self._validate()

    def _validate(self) -> None:
        labels = self._labels
        if ROOT not in labels:
            raise TreeStructureError("tree has no root vertex")
        split: dict[Path, int] = {}
        for path in labels:
            if path:
                parent = path[:-1]
                if parent not in labels:
                    raise TreeStructureError(
                        f"vertex {path} present without its parent"
                    )
                split[parent] = split.get(parent, 0) + 1
        full = 1 << self.dim
        for parent, count in split.items():
            if count != full:
                raise TreeStructureError(
                    f"vertex {parent} has {count} of {full} children"
                )
            if labels[parent] is not Label.UNCERTAIN:
                raise TreeStructureError(
                    f"split vertex {parent} carries label {labels[parent].value}"
                )
        self._split = split

    # -- queries ------------------------------------------------------------

    def __contains__(self, path: Path) -> bool:
        return tuple(path) in self._labels

    def __len__(self) -> int:
        return len(self._labels)

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabeledTree):
            return NotImplemented
        return self.dim == other.dim and self._labels == other._labels

    def label(self, path: Path) -> Label:
        return self._labels[tuple(path)]

    @property
    def depth(self) -> int:
        return max(len(p) for p in self._labels)

    def vertices(self) -> list[Path]:
        return sorted(self._labels, key=lambda p: (len(p), p))

    def is_leaf(self, path: Path) -> bool:
        return tuple(path) not in self._split

    def leaves(self) -> list[Path]:
        return [p for p in self.vertices() if p not in self._split]

    def internal_vertices(self) -> list[Path]:
        return sorted(self._split, key=lambda p: (len(p), p))

    def children(self, path: Path) -> list[Path]:
        path = tuple(path)
        if path not in self._split:
            return []
        return [path + (i,) for i in range(1, (1 << self.dim) + 1)]

    def leaves_with(self, label: Label) -> list[Path]:
        label = Label(label)
        return [p for p in self.leaves() if self._labels[p] is label]

    def inside_leaves(self) -> list[Path]:
        return self.leaves_with(Label.INSIDE)

    def outside_leaves(self) -> list[Path]:
        return self.leaves_with(Label.OUTSIDE)

    def uncertain_leaves(self) -> list[Path]:
        return self.leaves_with(Label.UNCERTAIN)

    def count_at_depth(self, label: Label, depth: int) -> int:
        label = Label(label)
        return sum(
            1
            for p in self.leaves()
            if len(p) == depth and self._labels[p] is label
        )

    # -- serialization --------------------------------------------------------

    def to_json_array(self) -> list[dict]:
        return [
            {"path": list(p), "label": self._labels[p].value, "depth": len(p)}
            for p in self.vertices()
        ]

    def to_json(self) -> str:
        return json.dumps(self.to_json_array())

    @classmethod
    def from_json_array(cls, records: list[dict], dim: int) -> "LabeledTree":
        labels = {}
        for rec in records:
            path = tuple(rec["path"])
            if rec.get("depth", len(path)) != len(path):
                raise TreeStructureError(
                    f"depth field {rec['depth']} disagrees with path {path}"
                )
            labels[path] = Label(rec["label"])
        return cls(dim, labels)

    @classmethod
    def from_json(cls, text: str, dim: int) -> "LabeledTree":
        return cls.from_json_array(json.loads(text), dim)
