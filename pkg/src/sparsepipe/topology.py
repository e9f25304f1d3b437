"""Sparse connection patterns: network configuration, generators, density feasibility."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

PATTERN_MAGIC = "sparsepipe-pattern v1"


class ConfigError(ValueError):
    """Raised for infeasible or inconsistent network/pattern configurations."""


@dataclass(frozen=True)
class NetworkConfig:
    """Neuronal configuration N_0..N_L with per-junction out-degrees and optional parallelism.

    Junction i (1-based) connects layer i-1 (left, N_{i-1} neurons) to layer i
    (right, N_i neurons); every left neuron has out_degrees[i-1] edges into the
    right layer.  parallelism[i-1], when given, is the number of edges of
    junction i processed per clock cycle.
    """

    layer_sizes: tuple[int, ...]
    out_degrees: tuple[int, ...]
    parallelism: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(n) for n in self.layer_sizes))
        object.__setattr__(self, "out_degrees", tuple(int(d) for d in self.out_degrees))
        if self.parallelism is not None:
            object.__setattr__(self, "parallelism", tuple(int(z) for z in self.parallelism))
        if len(self.layer_sizes) < 2:
            raise ConfigError("need at least two layers")
        if any(n < 1 for n in self.layer_sizes):
            raise ConfigError("layer sizes must be positive")
        if len(self.out_degrees) != self.n_junctions:
            raise ConfigError(
                f"expected {self.n_junctions} out-degrees, got {len(self.out_degrees)}"
            )
        for i in range(1, self.n_junctions + 1):
            n_left, n_right = self.layer_sizes[i - 1], self.layer_sizes[i]
            d_out = self.out_degrees[i - 1]
            if not 1 <= d_out <= n_right:
                raise ConfigError(f"junction {i}: d_out={d_out} outside [1, {n_right}]")
            if (n_left * d_out) % n_right != 0:
                raise ConfigError(
                    f"junction {i}: N_left*d_out = {n_left}*{d_out} not divisible by"
                    f" N_right = {n_right}; in-degree would be fractional"
                )
            d_in = n_left * d_out // n_right
            if d_in > n_left:
                raise ConfigError(f"junction {i}: derived d_in={d_in} exceeds N_left={n_left}")
        if self.parallelism is not None:
            if len(self.parallelism) != self.n_junctions:
                raise ConfigError(
                    f"expected {self.n_junctions} parallelism values, got {len(self.parallelism)}"
                )
            if any(z < 1 for z in self.parallelism):
                raise ConfigError("parallelism values must be positive")

    @property
    def n_junctions(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def in_degrees(self) -> tuple[int, ...]:
        return tuple(
            self.layer_sizes[i - 1] * self.out_degrees[i - 1] // self.layer_sizes[i]
            for i in range(1, self.n_junctions + 1)
        )

    @property
    def edge_counts(self) -> tuple[int, ...]:
        return tuple(
            self.layer_sizes[i - 1] * self.out_degrees[i - 1]
            for i in range(1, self.n_junctions + 1)
        )

    @property
    def densities(self) -> tuple[Fraction, ...]:
        return tuple(
            Fraction(w, self.layer_sizes[i] * self.layer_sizes[i + 1])
            for i, w in enumerate(self.edge_counts)
        )

    @property
    def density_net(self) -> Fraction:
        total_fc = sum(
            self.layer_sizes[i] * self.layer_sizes[i + 1] for i in range(self.n_junctions)
        )
        return Fraction(sum(self.edge_counts), total_fc)


@dataclass(frozen=True)
class JunctionRow:
    junction: int
    d_out: int
    d_in: int
    n_edges: int
    density: Fraction

    @property
    def density_float(self) -> float:
        return float(self.density)


@dataclass(frozen=True)
class JunctionSummary:
    rows: tuple[JunctionRow, ...]
    density_net: Fraction

    @property
    def density_net_float(self) -> float:
        return float(self.density_net)


def junction_summary(cfg: NetworkConfig) -> JunctionSummary:
    """Per-junction in-degree, edge count and density, plus the overall density.

    The overall density is the total edge count divided by the total
    fully-connected edge count, returned exactly as a Fraction.
    """
    rows = tuple(
        JunctionRow(
            junction=i + 1,
            d_out=cfg.out_degrees[i],
            d_in=cfg.in_degrees[i],
            n_edges=cfg.edge_counts[i],
            density=cfg.densities[i],
        )
        for i in range(cfg.n_junctions)
    )
    return JunctionSummary(rows=rows, density_net=cfg.density_net)


@dataclass(frozen=True)
class DensityOption:
    density: Fraction
    d_out: int
    d_in: int


def enumerate_densities(n_left: int, n_right: int) -> list[DensityOption]:
    """All feasible junction densities k/gcd(n_left, n_right), k = 1..gcd.

    Each density has exactly one consistent integer degree pair, returned with it.
    """
    if n_left < 1 or n_right < 1:
        raise ConfigError("layer sizes must be >= 1")
    g = math.gcd(n_left, n_right)
    return [
        DensityOption(density=Fraction(k, g), d_out=k * n_right // g, d_in=k * n_left // g)
        for k in range(1, g + 1)
    ]


@dataclass(frozen=True)
class JunctionPattern:
    """Explicit bipartite connection pattern for one junction.

    ``edges[j]`` lists the left neurons of right neuron j in weight order;
    weights are numbered sequentially from top to bottom on the right, so the
    flattened edge order is right neuron 0's edges first, then right neuron 1's,
    and so on.
    """

    n_left: int
    n_right: int
    edges: tuple[tuple[int, ...], ...]
    degree_kind: str  # "regular" | "variable"

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(tuple(int(k) for k in row) for row in self.edges))
        if self.degree_kind not in ("regular", "variable"):
            raise ConfigError(f"unknown degree_kind {self.degree_kind!r}")
        if len(self.edges) != self.n_right:
            raise ConfigError(f"expected {self.n_right} right-neuron rows, got {len(self.edges)}")
        for j, row in enumerate(self.edges):
            if any(not 0 <= k < self.n_left for k in row):
                raise ConfigError(f"right neuron {j}: left index out of range")
            if len(set(row)) != len(row):
                raise ConfigError(f"right neuron {j}: duplicate left neighbor")
        if self.degree_kind == "regular":
            d_in = len(self.edges[0]) if self.edges else 0
            if any(len(row) != d_in for row in self.edges):
                raise ConfigError("regular pattern with unequal in-degrees")
            out = np.bincount(self.left_index_array(), minlength=self.n_left)
            if out.size and (out != out[0]).any():
                raise ConfigError("regular pattern with unequal out-degrees")

    # -- derived views -----------------------------------------------------

    @property
    def n_edges(self) -> int:
        return sum(len(row) for row in self.edges)

    @property
    def d_in(self) -> int:
        if self.degree_kind != "regular":
            raise ConfigError("d_in undefined for variable-degree pattern")
        return len(self.edges[0])

    @property
    def d_out(self) -> int:
        if self.degree_kind != "regular":
            raise ConfigError("d_out undefined for variable-degree pattern")
        return self.n_edges // self.n_left

    def left_index_array(self) -> np.ndarray:
        """Left neuron of every edge, flattened in weight order."""
        return np.fromiter(
            (k for row in self.edges for k in row), dtype=np.int64, count=self.n_edges
        )

    def right_index_array(self) -> np.ndarray:
        """Right neuron of every edge, flattened in weight order."""
        return np.repeat(np.arange(self.n_right, dtype=np.int64), self.in_degree_array())

    def in_degree_array(self) -> np.ndarray:
        return np.array([len(row) for row in self.edges], dtype=np.int64)

    def out_degree_array(self) -> np.ndarray:
        return np.bincount(self.left_index_array(), minlength=self.n_left).astype(np.int64)

    @property
    def density(self) -> Fraction:
        return Fraction(self.n_edges, self.n_left * self.n_right)


def fully_connected(n_left: int, n_right: int) -> JunctionPattern:
    """The FC pattern in natural order: every right neuron sees left 0..n_left-1."""
    row = tuple(range(n_left))
    return JunctionPattern(n_left, n_right, tuple(row for _ in range(n_right)), "regular")


def generate_structured_random(
    n_left: int, n_right: int, d_out: int, seed: int
) -> JunctionPattern:
    """Uniform-ish random regular pattern with exact out-degree d_out.

    Pairs the left-stub multiset with a shuffled right-stub multiset, repairs
    duplicate edges by local swaps, and restarts from a fresh shuffle after 100
    failed repair passes.
    """
    if (n_left * d_out) % n_right != 0:
        raise ConfigError(f"{n_left}*{d_out} not divisible by {n_right}")
    d_in = n_left * d_out // n_right
    if d_in > n_left:
        raise ConfigError(f"d_in={d_in} exceeds n_left={n_left}")
    if not 1 <= d_out <= n_right:
        raise ConfigError(f"d_out={d_out} outside [1, {n_right}]")
    if d_out == n_right:  # every left neuron hits every right neuron
        return fully_connected(n_left, n_right)
    rng = np.random.default_rng(seed)
    n_edges = n_left * d_out
    for _restart in range(100):
        right_stubs = np.repeat(np.arange(n_right), d_in)
        rng.shuffle(right_stubs)
        blocks = right_stubs.reshape(n_left, d_out)  # row l = left neuron l's targets
        for _repair in range(100):
            dups = []
            for l in range(n_left):
                seen: set[int] = set()
                for j, v in enumerate(blocks[l]):
                    if v in seen:
                        dups.append((l, j))
                    seen.add(int(v))
            if not dups:
                rows: list[list[int]] = [[] for _ in range(n_right)]
                for left in range(n_left):
                    for right in blocks[left]:
                        rows[right].append(left)
                return JunctionPattern(n_left, n_right, tuple(tuple(r) for r in rows), "regular")
            # swap each duplicate with a stub whose exchange removes the clash
            # without creating a new one; each success strictly reduces duplicates
            for l, j in dups:
                v = blocks[l, j]
                if np.count_nonzero(blocks[l] == v) < 2:
                    continue  # fixed by an earlier swap this pass
                for _try in range(200):
                    b = int(rng.integers(n_edges))
                    l2, j2 = divmod(b, d_out)
                    w = blocks[l2, j2]
                    if l2 == l or w == v or (blocks[l] == w).any() or (blocks[l2] == v).any():
                        continue
                    blocks[l, j], blocks[l2, j2] = w, v
                    break
        # repair stalled: fresh shuffle
    raise ConfigError(f"failed to build a regular ({n_left},{n_right},d_out={d_out}) pattern")


def generate_random_unstructured(
    n_left: int, n_right: int, rho: float, seed: int
) -> JunctionPattern:
    """Random pattern with round(rho * n_left * n_right) distinct edges, no degree constraints."""
    if not 0 < rho <= 1:
        raise ConfigError(f"density {rho} outside (0, 1]")
    exact = rho * n_left * n_right
    n_edges = int(round(exact))
    if abs(exact - n_edges) > 1e-9:
        warnings.warn(
            f"density {rho} snapped to {n_edges} edges ({n_edges / (n_left * n_right):.6g})",
            stacklevel=2,
        )
    if n_edges < 1:
        raise ConfigError(f"density {rho} yields no edges on ({n_left},{n_right})")
    rng = np.random.default_rng(seed)
    cells = rng.choice(n_left * n_right, size=n_edges, replace=False)
    cells.sort()
    rows: list[list[int]] = [[] for _ in range(n_right)]
    for cell in cells:
        rows[cell % n_right].append(int(cell // n_right))
    return JunctionPattern(n_left, n_right, tuple(tuple(r) for r in rows), "variable")


def generate_from_out_degrees(
    out_degrees: np.ndarray, n_right: int, seed: int
) -> JunctionPattern:
    """Variable-degree pattern realizing the given per-left-neuron out-degrees.

    Each left neuron's targets are sampled uniformly without replacement, the
    same per-neuron machinery as generate_random_unstructured.
    """
    out_degrees = np.asarray(out_degrees, dtype=np.int64)
    if (out_degrees < 0).any() or (out_degrees > n_right).any():
        raise ConfigError("out-degrees must lie in [0, n_right]")
    rng = np.random.default_rng(seed)
    rows: list[list[int]] = [[] for _ in range(n_right)]
    for left, deg in enumerate(out_degrees):
        for right in np.sort(rng.choice(n_right, size=int(deg), replace=False)):
            rows[right].append(left)
    return JunctionPattern(len(out_degrees), n_right, tuple(tuple(r) for r in rows), "variable")


def find_disconnected(p: JunctionPattern) -> tuple[list[int], list[int]]:
    """Left and right neuron indices with degree zero."""
    left_deg = p.out_degree_array()
    right_deg = p.in_degree_array()
    return (
        [int(i) for i in np.flatnonzero(left_deg == 0)],
        [int(j) for j in np.flatnonzero(right_deg == 0)],
    )


def attention_degrees(
    feature_variances: np.ndarray,
    n_right: int,
    target_edges: int,
    levels: int = 3,
) -> np.ndarray:
    """Per-left-neuron out-degrees proportional to quantized feature variance.

    Neurons are sorted by variance and split into `levels` near-equal groups
    whose degree weights are the level ranks 1..levels; identical variances
    always share a level.  Degrees are scaled and rounded to sum exactly to
    target_edges, with the remainder going to the highest-variance neurons,
    and capped at n_right.
    """
    v = np.asarray(feature_variances, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ConfigError("feature_variances must be a nonempty vector")
    if (v < 0).any() or not np.isfinite(v).all():
        raise ConfigError("variances must be finite and nonnegative")
    n_left = v.size
    if levels < 1:
        raise ConfigError("levels must be >= 1")
    if not 0 <= target_edges <= n_left * n_right:
        raise ConfigError(f"target_edges={target_edges} outside [0, {n_left * n_right}]")

    if v.max() == v.min():
        level = np.ones(n_left, dtype=np.int64)
    else:
        order = np.argsort(v, kind="stable")
        level = np.empty(n_left, dtype=np.int64)
        for rank, group in enumerate(np.array_split(order, levels), start=1):
            level[group] = rank
        # ties spanning a group boundary collapse to the lower level
        for value in np.unique(v):
            mask = v == value
            level[mask] = level[mask].min()

    raw = target_edges * level / level.sum()
    degrees = np.minimum(np.floor(raw).astype(np.int64), n_right)
    remainder = target_edges - int(degrees.sum())
    # highest variance first, index ascending as tie-break
    priority = np.lexsort((np.arange(n_left), -v))
    capped_out = False
    while remainder > 0:
        progressed = False
        for j in priority:
            if remainder == 0:
                break
            if degrees[j] < n_right:
                degrees[j] += 1
                remainder -= 1
                progressed = True
            else:
                capped_out = True
        if not progressed:
            raise ConfigError("target_edges unreachable under n_right cap")
    if capped_out:
        warnings.warn(
            "n_right cap forced degrees away from level proportions", stacklevel=2
        )
    return degrees


# -- pattern file format -------------------------------------------------


def save_pattern(p: JunctionPattern, path) -> None:
    """Versioned text format: header, sizes line, one line of left indices per right neuron."""
    with open(path, "w", encoding="ascii") as f:
        f.write(f"{PATTERN_MAGIC}\n")
        f.write(f"{p.n_left} {p.n_right} {p.degree_kind}\n")
        for row in p.edges:
            f.write(" ".join(str(k) for k in row) + "\n")


def load_pattern(path) -> JunctionPattern:
    with open(path, "r", encoding="ascii") as f:
        magic = f.readline().rstrip("\n")
        if magic != PATTERN_MAGIC:
            raise ConfigError(f"{path}: bad header {magic!r}, expected {PATTERN_MAGIC!r}")
        header = f.readline().split()
        if len(header) != 3:
            raise ConfigError(f"{path}: malformed size line")
        n_left, n_right, degree_kind = int(header[0]), int(header[1]), header[2]
        rows = []
        for _ in range(n_right):
            line = f.readline()
            if line == "":
                raise ConfigError(f"{path}: truncated, expected {n_right} rows")
            rows.append(tuple(int(tok) for tok in line.split()))
    return JunctionPattern(n_left, n_right, tuple(rows), degree_kind)
