"""Clash-free left-memory access schedules: generation, verification, counting.

Left layer memory layout: neuron j lives in memory j mod z at depth j // z.
A junction cycle is `sweeps` sweeps of D consecutive cycles; within a sweep
every left-bank cell is read exactly once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .topology import ConfigError, JunctionPattern, NetworkConfig

CFSPEC_MAGIC = "sparsepipe-cfspec v1"


class InvalidSpecError(ValueError):
    """Raised when a schedule or spec violates clash-free structure."""


@dataclass(frozen=True)
class ClashFreeSpec:
    """Seed data fully determining a left-memory access schedule.

    cf_type 1: one seed vector phi, addresses advance cyclically each cycle.
    cf_type 2: a fresh phi per sweep.
    cf_type 3: a full D x z address matrix per sweep, each column a permutation
    of 0..D-1.  Dithering permutes which memory each lane reads: one permutation
    for type 1 (the access pattern repeats across sweeps), one per sweep for
    types 2 and 3.
    """

    cf_type: int
    z: int
    depth: int
    sweeps: int
    seeds: tuple
    dither: tuple | None = None

    def __post_init__(self):
        if self.cf_type not in (1, 2, 3):
            raise InvalidSpecError(f"cf_type must be 1, 2 or 3, got {self.cf_type}")
        if self.z < 1 or self.depth < 1 or self.sweeps < 1:
            raise InvalidSpecError("z, depth and sweeps must be positive")
        D, z = self.depth, self.z
        if self.cf_type == 1:
            phi = tuple(int(a) for a in self.seeds)
            object.__setattr__(self, "seeds", phi)
            self._check_phi(phi)
        elif self.cf_type == 2:
            rows = tuple(tuple(int(a) for a in row) for row in self.seeds)
            object.__setattr__(self, "seeds", rows)
            if len(rows) != self.sweeps:
                raise InvalidSpecError(f"type 2 needs {self.sweeps} seed vectors")
            for row in rows:
                self._check_phi(row)
        else:
            mats = tuple(
                tuple(tuple(int(a) for a in row) for row in mat) for mat in self.seeds
            )
            object.__setattr__(self, "seeds", mats)
            if len(mats) != self.sweeps:
                raise InvalidSpecError(f"type 3 needs {self.sweeps} address matrices")
            for mat in mats:
                if len(mat) != D or any(len(row) != z for row in mat):
                    raise InvalidSpecError(f"type 3 matrix must be {D}x{z}")
                cols = np.array(mat, dtype=np.int64)
                for m in range(z):
                    if sorted(cols[:, m]) != list(range(D)):
                        raise InvalidSpecError(
                            f"type 3 matrix column {m} is not a permutation of 0..{D - 1}"
                        )
        if self.dither is not None:
            if self.cf_type == 1:
                perms = (tuple(int(m) for m in self.dither),)
                object.__setattr__(self, "dither", perms[0])
                check = [perms[0]]
            else:
                perms = tuple(tuple(int(m) for m in row) for row in self.dither)
                object.__setattr__(self, "dither", perms)
                if len(perms) != self.sweeps:
                    raise InvalidSpecError(f"dither needs {self.sweeps} permutations")
                check = list(perms)
            for perm in check:
                if sorted(perm) != list(range(z)):
                    raise InvalidSpecError(f"dither {perm} is not a permutation of 0..{z - 1}")

    def _check_phi(self, phi: tuple[int, ...]) -> None:
        if len(phi) != self.z:
            raise InvalidSpecError(f"seed vector must have length z={self.z}")
        if any(not 0 <= a < self.depth for a in phi):
            raise InvalidSpecError(f"seed addresses must lie in [0, {self.depth})")

    @property
    def n_left(self) -> int:
        return self.depth * self.z

    @property
    def cycles(self) -> int:
        return self.depth * self.sweeps

    def lane_memories(self, sweep: int) -> tuple[int, ...]:
        """Memory read by each lane during the given sweep."""
        if self.dither is None:
            return tuple(range(self.z))
        if self.cf_type == 1:
            return self.dither
        return self.dither[sweep]


@dataclass(frozen=True)
class AccessSchedule:
    """Per-cycle (memory, address) pairs in lane order; neuron = address*z + memory."""

    z: int
    depth: int
    sweeps: int
    accesses: tuple[tuple[tuple[int, int], ...], ...]

    def __post_init__(self):
        if len(self.accesses) != self.depth * self.sweeps:
            raise InvalidSpecError(
                f"expected {self.depth * self.sweeps} cycles, got {len(self.accesses)}"
            )
        for c, lanes in enumerate(self.accesses):
            if len(lanes) != self.z:
                raise InvalidSpecError(f"cycle {c}: expected {self.z} lane accesses")

    @property
    def cycles(self) -> int:
        return len(self.accesses)

    def left_neurons(self) -> np.ndarray:
        """(cycles, z) array of left-neuron ids in lane order."""
        arr = np.empty((self.cycles, self.z), dtype=np.int64)
        for c, lanes in enumerate(self.accesses):
            for f, (memory, address) in enumerate(lanes):
                arr[c, f] = address * self.z + memory
        return arr


def generate_spec(
    n_left: int,
    d_out: int,
    z: int,
    cf_type: int,
    dither: bool,
    seed: int,
) -> ClashFreeSpec:
    """Random clash-free spec for a junction with n_left left neurons, d_out sweeps."""
    if n_left % z != 0:
        raise InvalidSpecError(f"z={z} does not divide n_left={n_left}; pad the layer first")
    depth = n_left // z
    rng = np.random.default_rng(seed)
    if cf_type == 1:
        seeds = tuple(int(a) for a in rng.integers(0, depth, size=z))
    elif cf_type == 2:
        seeds = tuple(
            tuple(int(a) for a in rng.integers(0, depth, size=z)) for _ in range(d_out)
        )
    elif cf_type == 3:
        seeds = tuple(
            tuple(
                tuple(int(col[c]) for col in cols) for c in range(depth)
            )
            for cols in (
                [rng.permutation(depth) for _ in range(z)] for _ in range(d_out)
            )
        )
    else:
        raise InvalidSpecError(f"cf_type must be 1, 2 or 3, got {cf_type}")
    dperm = None
    if dither:
        if cf_type == 1:
            dperm = tuple(int(m) for m in rng.permutation(z))
        else:
            dperm = tuple(
                tuple(int(m) for m in rng.permutation(z)) for _ in range(d_out)
            )
    return ClashFreeSpec(cf_type, z, depth, d_out, seeds, dperm)


def address_schedule(spec: ClashFreeSpec) -> AccessSchedule:
    """Expand a spec into its full junction-cycle access schedule."""
    D, z = spec.depth, spec.z
    cycles = []
    for c in range(spec.cycles):
        sweep, c_in = divmod(c, D)
        memories = spec.lane_memories(sweep)
        if spec.cf_type == 1:
            addr = {m: (spec.seeds[m] + c) % D for m in range(z)}
        elif spec.cf_type == 2:
            phi = spec.seeds[sweep]
            addr = {m: (phi[m] + c) % D for m in range(z)}
        else:
            row = spec.seeds[sweep][c_in]
            addr = {m: row[m] for m in range(z)}
        cycles.append(tuple((m, addr[m]) for m in memories))
    return AccessSchedule(z=z, depth=D, sweeps=spec.sweeps, accesses=tuple(cycles))


@dataclass(frozen=True)
class ClashReport:
    ok: bool
    clashes: tuple[tuple[int, int, int], ...]  # (cycle, memory, count)
    coverage: tuple[tuple[int, int, int], ...]  # (sweep, neuron, count)


def verify_clash_free(s: AccessSchedule) -> ClashReport:
    """Check at-most-one access per memory per cycle plus exact per-sweep coverage."""
    clashes = []
    for c, lanes in enumerate(s.accesses):
        mems = [m for m, _ in lanes]
        counts = np.bincount(mems, minlength=s.z)
        for m in np.flatnonzero(counts > 1):
            clashes.append((c, int(m), int(counts[m])))
    coverage = []
    neurons = s.left_neurons()
    n_left = s.depth * s.z
    for sweep in range(s.sweeps):
        block = neurons[sweep * s.depth : (sweep + 1) * s.depth].ravel()
        block = block[(block >= 0) & (block < n_left)]
        counts = np.bincount(block, minlength=n_left)
        for j in np.flatnonzero(counts != 1):
            coverage.append((sweep, int(j), int(counts[j])))
    return ClashReport(
        ok=not clashes and not coverage,
        clashes=tuple(clashes),
        coverage=tuple(coverage),
    )


def to_connection_pattern(spec: ClashFreeSpec, d_in: int, n_right: int) -> JunctionPattern:
    """Flatten the schedule in (cycle, lane) order and group d_in edges per right neuron."""
    sched = address_schedule(spec)
    flat = sched.left_neurons().ravel()
    if flat.size != n_right * d_in:
        raise InvalidSpecError(
            f"schedule covers {flat.size} edges but {n_right}*{d_in} were requested"
        )
    rows = []
    for j in range(n_right):
        group = flat[j * d_in : (j + 1) * d_in]
        if len(set(group.tolist())) != d_in:
            raise InvalidSpecError(
                f"right neuron {j} would connect twice to a left neuron; spec is invalid"
            )
        rows.append(tuple(int(k) for k in group))
    return JunctionPattern(spec.n_left, n_right, tuple(rows), "regular")


@dataclass(frozen=True)
class PatternCount:
    value: int
    exact: bool


def count_patterns(
    depth: int, z: int, d_out: int, d_in: int, cf_type: int, dither: bool
) -> PatternCount:
    """Exact count of left-memory access patterns for one junction.

    Base counts: D^z (type 1), D^(z*d_out) (type 2), (D!)^(z*d_out) (type 3).
    Dithering multiplies by K = (z! / d_in!^(z/d_in))^e with e = 1 for type 1
    and e = d_out otherwise, when z/d_in is integral; K = 1 when d_in/z is
    integral; otherwise only the upper bound (z!)^d_out is known and the result
    is flagged inexact.
    """
    if min(depth, z, d_out, d_in) < 1:
        raise InvalidSpecError("all parameters must be positive")
    if cf_type == 1:
        base = depth**z
    elif cf_type == 2:
        base = depth ** (z * d_out)
    elif cf_type == 3:
        base = math.factorial(depth) ** (z * d_out)
    else:
        raise InvalidSpecError(f"cf_type must be 1, 2 or 3, got {cf_type}")
    if not dither:
        return PatternCount(base, exact=True)
    if z % d_in == 0:
        k_one = math.factorial(z) // math.factorial(d_in) ** (z // d_in)
        exponent = 1 if cf_type == 1 else d_out
        return PatternCount(base * k_one**exponent, exact=True)
    if d_in % z == 0:
        return PatternCount(base, exact=True)  # K = 1, dither has no effect
    return PatternCount(base * math.factorial(z) ** d_out, exact=False)


def network_pattern_count(cfg: NetworkConfig, cf_type: int, dither: bool) -> PatternCount:
    """Product of per-junction access-pattern counts; exact only if every factor is."""
    if cfg.parallelism is None:
        raise ConfigError("NetworkConfig has no parallelism configuration")
    total = 1
    exact = True
    for i in range(cfg.n_junctions):
        n_left, z = cfg.layer_sizes[i], cfg.parallelism[i]
        if n_left % z:
            raise InvalidSpecError(f"junction {i + 1}: z={z} does not divide N={n_left}")
        part = count_patterns(
            n_left // z, z, cfg.out_degrees[i], cfg.in_degrees[i], cf_type, dither
        )
        total *= part.value
        exact &= part.exact
    return PatternCount(total, exact)


# -- parallelism validation ------------------------------------------------


@dataclass(frozen=True)
class JunctionTiming:
    junction: int
    cycles: int  # C_i = ceil(|W_i| / z_i)
    depth: int | None  # D_i when integral, else None
    pad_needed: int  # dummy left neurons required when z does not divide N


@dataclass(frozen=True)
class ZNetReport:
    junctions: tuple[JunctionTiming, ...]
    warnings: tuple[str, ...]
    failures: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.failures

    @property
    def throughput_cycles(self) -> int:
        return max(t.cycles for t in self.junctions)


def validate_z_net(cfg: NetworkConfig) -> ZNetReport:
    """Check a parallelism configuration for stall-free pipelined operation.

    Hard failure: right-bank clash (z_{i+1} < ceil(z_i / d_in_i)) or z_i
    exceeding the left layer size.  Warnings: non-integral memory depth
    (padding required), unequal junction cycles (throughput = max C_i), and
    the equivalent out-degree form of the right-bank condition disagreeing.
    """
    if cfg.parallelism is None:
        raise ConfigError("NetworkConfig has no parallelism configuration")
    L = cfg.n_junctions
    warns: list[str] = []
    fails: list[str] = []
    timings = []
    for i in range(1, L + 1):
        n_left = cfg.layer_sizes[i - 1]
        z = cfg.parallelism[i - 1]
        w = cfg.edge_counts[i - 1]
        if z > n_left:
            fails.append(f"junction {i}: z={z} exceeds left layer size {n_left}")
        pad = (-n_left) % z
        depth = n_left // z if pad == 0 else None
        if pad:
            warns.append(
                f"junction {i}: z={z} does not divide N={n_left}; pad with {pad} dummy neurons"
            )
        if w % z != 0:
            warns.append(f"junction {i}: z={z} does not divide |W|={w}; cycle count rounded up")
        timings.append(
            JunctionTiming(junction=i, cycles=-(-w // z), depth=depth, pad_needed=pad)
        )
    for i in range(1, L):
        z_i = cfg.parallelism[i - 1]
        z_next = cfg.parallelism[i]
        d_in = cfg.in_degrees[i - 1]
        need = -(-z_i // d_in)
        if z_next < need:
            fails.append(
                f"junction {i}: right bank needs z_{i + 1} >= ceil({z_i}/{d_in}) = {need},"
                f" got {z_next} (clash)"
            )
        # equivalent out-degree form; can disagree only when junction cycles differ
        d_out_next = cfg.out_degrees[i]
        bound = Fraction(d_in, z_i) * need
        if Fraction(d_out_next) < bound and z_next >= need:
            warns.append(
                f"junction {i}: d_out_{i + 1}={d_out_next} below {bound} (out-degree form"
                " of the right-bank condition); junction cycles are unequal"
            )
    cycles = [t.cycles for t in timings]
    if len(set(cycles)) > 1:
        warns.append(
            f"unequal junction cycles {tuple(cycles)}; throughput limited to {max(cycles)}"
        )
    return ZNetReport(tuple(timings), tuple(warns), tuple(fails))


# -- spec file format -------------------------------------------------------


def save_spec(spec: ClashFreeSpec, path) -> None:
    """Versioned text format: header, parameter line, seed rows, dither rows."""
    with open(path, "w", encoding="ascii") as f:
        f.write(f"{CFSPEC_MAGIC}\n")
        has_dither = 1 if spec.dither is not None else 0
        f.write(f"{spec.cf_type} {spec.z} {spec.depth} {spec.sweeps} {has_dither}\n")
        if spec.cf_type == 1:
            f.write(" ".join(str(a) for a in spec.seeds) + "\n")
        elif spec.cf_type == 2:
            for row in spec.seeds:
                f.write(" ".join(str(a) for a in row) + "\n")
        else:
            for mat in spec.seeds:
                for row in mat:
                    f.write(" ".join(str(a) for a in row) + "\n")
        if spec.dither is not None:
            if spec.cf_type == 1:
                f.write(" ".join(str(m) for m in spec.dither) + "\n")
            else:
                for row in spec.dither:
                    f.write(" ".join(str(m) for m in row) + "\n")


def load_spec(path) -> ClashFreeSpec:
    with open(path, "r", encoding="ascii") as f:
        magic = f.readline().rstrip("\n")
        if magic != CFSPEC_MAGIC:
            raise InvalidSpecError(f"{path}: bad header {magic!r}, expected {CFSPEC_MAGIC!r}")
        params = f.readline().split()
        if len(params) != 5:
            raise InvalidSpecError(f"{path}: malformed parameter line")
        cf_type, z, depth, sweeps, has_dither = (int(tok) for tok in params)

        def read_row() -> tuple[int, ...]:
            line = f.readline()
            if line == "":
                raise InvalidSpecError(f"{path}: truncated spec file")
            return tuple(int(tok) for tok in line.split())

        if cf_type == 1:
            seeds: tuple = read_row()
        elif cf_type == 2:
            seeds = tuple(read_row() for _ in range(sweeps))
        else:
            seeds = tuple(
                tuple(read_row() for _ in range(depth)) for _ in range(sweeps)
            )
        dither = None
        if has_dither:
            if cf_type == 1:
                dither = read_row()
            else:
                dither = tuple(read_row() for _ in range(sweeps))
    return ClashFreeSpec(cf_type, z, depth, sweeps, seeds, dither)
