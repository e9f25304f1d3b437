"""Cycle-level simulator of the junction-pipelined, edge-parallel architecture.

Slot schedule (pipelined mode, 1-based junction i, 0-based input n):
feedforward at junction i for input n occupies slot n+i; backprop (i >= 2) and
update at junction i occupy slot n + 2L - i + 1.  The cost derivative for the
output layer is produced during the feedforward slot of junction L.

Within a slot, every active operation of a junction sweeps the junction's
weight rows in lockstep, so the single dual-ported weight bank serves FF and BP
with one shared read per row while UP writes the row back.  Executing FF, then
BP, then UP per junction reproduces the cycle-interleaved read-before-write
semantics exactly.  Weight staleness in pipelined mode is emergent: operations
read whatever the weight memory holds at their slot.

Functional arithmetic reuses the engine's edge-order primitives, so a
single-input (drained) simulation is bit-identical to batch-one training.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .clashfree import ClashFreeSpec, address_schedule, to_connection_pattern, validate_z_net
from .engine import SparseModel, junction_backprop, junction_forward, relu, relu_deriv, softmax
from .topology import ConfigError, NetworkConfig


class SimulationError(RuntimeError):
    """Clash, bank-depth overflow or inconsistent configuration at run time."""


# -- storage accounting -------------------------------------------------------


@dataclass(frozen=True)
class StorageReport:
    """Word counts per parameter kind for the banked architecture."""

    activations: int
    activation_derivs: int
    deltas: int
    biases: int
    weights: int

    @property
    def total(self) -> int:
        return (
            self.activations
            + self.activation_derivs
            + self.deltas
            + self.biases
            + self.weights
        )


def storage_report(cfg: NetworkConfig) -> StorageReport:
    """Exact integer storage counts: activation queues of depth 2(L-i)+1 for
    layers 0..L-1, derivative queues for layers 1..L-1, double-banked deltas,
    biases, and one weight word per edge."""
    N = cfg.layer_sizes
    L = cfg.n_junctions
    d_in = cfg.in_degrees
    return StorageReport(
        activations=sum((2 * (L - i) + 1) * N[i] for i in range(0, L)),
        activation_derivs=sum((2 * (L - i) + 1) * N[i] for i in range(1, L)),
        deltas=2 * sum(N[1:]),
        biases=sum(N[1:]),
        weights=sum(N[i + 1] * d_in[i] for i in range(L)),
    )


# -- slot schedule -------------------------------------------------------------


def build_schedule(n_junctions: int, n_inputs: int) -> dict[int, frozenset]:
    """Pipelined slot -> set of (op, junction, input) triples."""
    if n_junctions < 1:
        raise ConfigError("need at least one junction")
    sched: dict[int, set] = {t: set() for t in range(n_inputs + 2 * n_junctions)}
    for n in range(n_inputs):
        for i in range(1, n_junctions + 1):
            sched[n + i].add(("FF", i, n))
            up_slot = n + 2 * n_junctions - i + 1
            sched[up_slot].add(("UP", i, n))
            if i >= 2:
                sched[up_slot].add(("BP", i, n))
    return {t: frozenset(ops) for t, ops in sched.items()}


def _ops_at(mode: str, t: int, L: int, n_inputs: int):
    """(load_input | None, [(op, junction, input), ...]) for one slot."""
    ops = []
    load = None
    if mode == "pipelined":
        if t < n_inputs:
            load = t
        for i in range(1, L + 1):
            n = t - i
            if 0 <= n < n_inputs:
                ops.append(("FF", i, n))
            n = t - (2 * L - i + 1)
            if 0 <= n < n_inputs:
                if i >= 2:
                    ops.append(("BP", i, n))
                ops.append(("UP", i, n))
    else:  # single-input: drain the pipeline between inputs
        n, phase = divmod(t, 2 * L + 1)
        if n < n_inputs:
            if phase == 0:
                load = n
            elif phase <= L:
                ops.append(("FF", phase, n))
            else:
                i = 2 * L - phase + 1
                if i >= 2:
                    ops.append(("BP", i, n))
                ops.append(("UP", i, n))
    return load, ops


# -- configuration --------------------------------------------------------------


@dataclass
class PipelineConfig:
    network: NetworkConfig
    specs: tuple[ClashFreeSpec, ...]
    flush_cycles: int = 0
    mode: str = "pipelined"  # | "single-input"
    record_accesses: bool = True
    validate: bool = True

    def __post_init__(self):
        if self.mode not in ("pipelined", "single-input"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.flush_cycles < 0:
            raise ConfigError("flush_cycles must be >= 0")
        if self.network.parallelism is None:
            raise ConfigError("network needs a parallelism configuration")
        if len(self.specs) != self.network.n_junctions:
            raise ConfigError("need one clash-free spec per junction")
        for i, spec in enumerate(self.specs):
            if spec.z != self.network.parallelism[i]:
                raise ConfigError(f"junction {i + 1}: spec z={spec.z} != config z")
            if spec.n_left != self.network.layer_sizes[i]:
                raise ConfigError(f"junction {i + 1}: spec covers {spec.n_left} left neurons")
            if spec.sweeps != self.network.out_degrees[i]:
                raise ConfigError(f"junction {i + 1}: spec sweeps != d_out")
        if self.validate:
            report = validate_z_net(self.network)
            if not report.ok:
                raise ConfigError("; ".join(report.failures))

    @property
    def junction_cycles(self) -> tuple[int, ...]:
        z = self.network.parallelism
        return tuple(
            -(-w // z[i]) + self.flush_cycles for i, w in enumerate(self.network.edge_counts)
        )


# -- trace ------------------------------------------------------------------------


@dataclass(frozen=True)
class Access:
    slot: int
    cycle: int
    junction: int
    op: str
    bank: str  # e.g. "W1", "a0", "adot1", "delta2"
    memory: int
    address: int
    rw: str  # "R" | "W"


@dataclass
class PipelineTrace:
    mode: str
    slots: list[tuple[int, tuple]] = field(default_factory=list)
    accesses: list[Access] = field(default_factory=list)
    slot_cycles: int = 0
    n_slots: int = 0
    n_inputs: int = 0
    fill_latency_slots: int = 0
    bank_occupancy: dict = field(default_factory=dict)  # bank name -> max live versions

    @property
    def total_cycles(self) -> int:
        return self.n_slots * self.slot_cycles

    @property
    def cycles_per_input(self) -> int:
        if self.mode == "pipelined":
            return self.slot_cycles
        return self.slot_cycles * (self.fill_latency_slots + 1)  # drained: 2L+1 slots each


@dataclass(frozen=True)
class ThroughputReport:
    cycles_per_input: int
    slot_cycles: int
    fill_latency_slots: int


def throughput_report(trace: PipelineTrace) -> ThroughputReport:
    """Steady-state cycles per input (the longest junction cycle, plus flush)."""
    return ThroughputReport(
        cycles_per_input=trace.cycles_per_input,
        slot_cycles=trace.slot_cycles,
        fill_latency_slots=trace.fill_latency_slots,
    )


def export_trace_csv(trace: PipelineTrace, path) -> None:
    """Line-per-access CSV.  Shared reads (the weight row serving FF/BP/UP, the
    right-bank delta read serving BP and UP) appear once, attributed to the
    first active op."""
    with open(path, "w", encoding="ascii") as f:
        f.write("slot,cycle,junction,op,bank,memory,address,rw\n")
        for a in trace.accesses:
            f.write(
                f"{a.slot},{a.cycle},{a.junction},{a.op},{a.bank},{a.memory},{a.address},{a.rw}\n"
            )


# -- banks --------------------------------------------------------------------------


class _Bank:
    """Versioned memory bank: a queue of per-input value vectors.

    A version retires at the end of the slot in which its last scheduled
    reader consumed it, so max_live measures the true simultaneous-liveness
    requirement rather than echoing the configured depth.
    """

    def __init__(self, name: str, max_versions: int, reads_per_version: int):
        self.name = name
        self.max_versions = max_versions
        self.reads_per_version = reads_per_version
        self.versions: OrderedDict[int, np.ndarray] = OrderedDict()
        self.read_counts: dict[int, int] = {}
        self.max_live = 0

    def write(self, input_id: int, values: np.ndarray) -> None:
        self.versions[input_id] = values
        self.read_counts[input_id] = 0
        self.max_live = max(self.max_live, len(self.versions))

    def read(self, input_id: int) -> np.ndarray:
        try:
            values = self.versions[input_id]
        except KeyError:
            raise SimulationError(
                f"bank {self.name}: version {input_id} not live (depth overflow"
                f" or schedule bug)"
            ) from None
        self.read_counts[input_id] += 1
        return values

    def end_slot(self) -> None:
        done = [v for v, c in self.read_counts.items() if c >= self.reads_per_version]
        for v in done:
            del self.versions[v]
            del self.read_counts[v]
        if len(self.versions) > self.max_versions:
            raise SimulationError(
                f"bank {self.name}: {len(self.versions)} live versions exceed"
                f" depth {self.max_versions}"
            )


# -- simulator ------------------------------------------------------------------------


class _JunctionData:
    """Static per-junction arrays derived from the clash-free spec."""

    def __init__(self, index: int, spec: ClashFreeSpec, d_in: int, n_right: int):
        self.index = index  # 1-based
        self.z = spec.z
        self.d_in = d_in
        self.n_right = n_right
        self.n_left = spec.n_left
        sched = address_schedule(spec)
        self.lanes = sched.accesses  # per cycle: ((memory, address), ...) in lane order
        self.neurons = sched.left_neurons()  # (C, z)
        self.cycles = sched.cycles
        self.left_idx = self.neurons.ravel()
        n_edges = self.left_idx.size
        self.right_idx = np.arange(n_edges, dtype=np.int64) // d_in
        self.rights_per_cycle = self.right_idx.reshape(self.cycles, self.z)
        self.uniq_rights = [np.unique(row) for row in self.rights_per_cycle]
        completion_cycle = ((np.arange(n_right) + 1) * d_in - 1) // self.z
        self.completions = [
            np.flatnonzero(completion_cycle == c) for c in range(self.cycles)
        ]


class _Recorder:
    """Per-slot access collector with port-rule clash detection.

    Port model: weight and delta banks are dual-ported (one read plus one write
    per cycle); activation and derivative banks are single-ported.
    """

    DUAL = ("W", "delta")

    def __init__(self, trace: PipelineTrace):
        self.trace = trace
        self.slot_map: dict = {}

    def start_slot(self):
        self.slot_map = {}

    def emit(self, slot, cycle, junction, op, kind, idx, version, memory, address, rw):
        self.trace.accesses.append(
            Access(slot, cycle, junction, op, f"{kind}{idx}", memory, address, rw)
        )
        key = (cycle, kind, idx, version, memory)
        counts = self.slot_map.setdefault(key, [0, 0])
        counts[0 if rw == "R" else 1] += 1

    def check_slot(self, slot: int):
        for (cycle, kind, idx, version, memory), (r, w) in self.slot_map.items():
            dual = kind in self.DUAL
            clash = (r > 1 or w > 1) if dual else (r + w > 1)
            if clash:
                raise SimulationError(
                    f"clash: bank {kind}{idx} (input {version}) memory {memory} hit"
                    f" {r}R/{w}W in slot {slot} cycle {cycle}"
                )


@dataclass
class SimResult:
    trace: PipelineTrace
    outputs: np.ndarray  # (n_inputs, N_L) softmax outputs as produced in-flight
    model: SparseModel


def simulate(
    model: SparseModel,
    cfg: PipelineConfig,
    inputs: np.ndarray,
    labels: np.ndarray,
    learning_rate: float,
) -> SimResult:
    """Run the slot schedule, training the model in place (plain per-input SGD).

    Raises SimulationError on any memory clash or bank-depth overflow.
    """
    net = cfg.network
    L = net.n_junctions
    if tuple(model.layer_sizes) != tuple(net.layer_sizes):
        raise ConfigError("model layer sizes do not match the network config")
    inputs = np.asarray(inputs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_inputs = inputs.shape[0]
    if inputs.ndim != 2 or inputs.shape[1] != net.layer_sizes[0]:
        raise ConfigError(f"inputs must be (n, {net.layer_sizes[0]})")
    if labels.shape != (n_inputs,):
        raise ConfigError("labels must align with inputs")

    junctions = [
        _JunctionData(i + 1, cfg.specs[i], net.in_degrees[i], net.layer_sizes[i + 1])
        for i in range(L)
    ]
    for i in range(L):
        derived = to_connection_pattern(cfg.specs[i], net.in_degrees[i], net.layer_sizes[i + 1])
        if derived != model.patterns[i]:
            raise ConfigError(
                f"junction {i + 1}: model pattern does not match the clash-free spec"
            )

    # memory geometry: layer i's parameter banks have z_{i+1} memories (they
    # are junction i+1's left bank); the output layer gets the minimum
    # clash-free width, the widest set of right neurons junction L touches in
    # one cycle (equals ceil(z_L/d_in_L) whenever z and d_in align)
    out_width = max(len(u) for u in junctions[L - 1].uniq_rights)
    mem_count = [net.parallelism[0]] + [
        net.parallelism[i] for i in range(1, L)
    ] + [max(1, out_width)]

    # readers per version: a_i feeds FF and UP of junction i+1; adot_i feeds
    # BP of junction i+1; delta_i feeds BP and UP of junction i (UP only at
    # junction 1, which has no BP)
    a_banks = {i: _Bank(f"a{i}", 2 * (L - i) + 1, reads_per_version=2) for i in range(0, L)}
    adot_banks = {i: _Bank(f"adot{i}", 2 * (L - i) + 1, reads_per_version=1) for i in range(1, L)}
    delta_banks = {
        i: _Bank(f"delta{i}", 2, reads_per_version=2 if i >= 2 else 1) for i in range(1, L + 1)
    }

    eye = np.eye(net.layer_sizes[-1])
    outputs = np.zeros((n_inputs, net.layer_sizes[-1]))

    cycles = cfg.junction_cycles
    slot_cycles = max(cycles)
    n_slots = (
        n_inputs + 2 * L if cfg.mode == "pipelined" else n_inputs * (2 * L + 1)
    )
    trace = PipelineTrace(
        mode=cfg.mode,
        slot_cycles=slot_cycles,
        n_slots=n_slots,
        n_inputs=n_inputs,
        fill_latency_slots=2 * L,
    )
    recorder = _Recorder(trace) if cfg.record_accesses else None

    def emit_left(slot, jd, op, kind, version, rw):
        layer = jd.index - 1
        for c in range(jd.cycles):
            for memory, address in jd.lanes[c]:
                recorder.emit(slot, c, jd.index, op, kind, layer, version, memory, address, rw)

    def emit_right(slot, jd, op, kind, version, rights_by_cycle, rw):
        layer = jd.index
        mc = mem_count[layer]
        for c in range(jd.cycles):
            for j in rights_by_cycle[c]:
                recorder.emit(
                    slot, c, jd.index, op, kind, layer, version, int(j) % mc, int(j) // mc, rw
                )

    for t in range(n_slots):
        load, ops = _ops_at(cfg.mode, t, L, n_inputs)
        trace.slots.append((t, tuple(ops)))
        if recorder is not None:
            recorder.start_slot()
        if load is not None:
            a_banks[0].write(load, inputs[load])

        by_junction: dict[int, dict[str, int]] = {}
        for op, i, n in ops:
            by_junction.setdefault(i, {})[op] = n

        for i in sorted(by_junction):
            jd = junctions[i - 1]
            active = by_junction[i]
            W = model.weights[i - 1]
            b = model.biases[i - 1]

            if recorder is not None:
                # one shared weight-row read serves FF and BP; UP writes it back
                first_op = next(iter(active))
                for c in range(jd.cycles):
                    for m in range(jd.z):
                        recorder.emit(t, c, i, first_op, "W", i, 0, m, c, "R")
                        if "UP" in active:
                            recorder.emit(t, c, i, "UP", "W", i, 0, m, c, "W")

            if "FF" in active:
                n = active["FF"]
                a_prev = a_banks[i - 1].read(n)
                h = junction_forward(W, b, jd.left_idx, jd.right_idx, jd.n_right, a_prev)
                if recorder is not None:
                    emit_left(t, jd, "FF", "a", n, "R")
                if i < L:
                    a_banks[i].write(n, relu(h))
                    adot_banks[i].write(n, relu_deriv(h))
                    if recorder is not None:
                        emit_right(t, jd, "FF", "a", n, jd.completions, "W")
                        emit_right(t, jd, "FF", "adot", n, jd.completions, "W")
                else:
                    a_out = softmax(h)
                    outputs[n] = a_out
                    delta_banks[L].write(n, a_out - eye[labels[n]])
                    if recorder is not None:
                        emit_right(t, jd, "FF", "delta", n, jd.completions, "W")

            if "BP" in active:
                n = active["BP"]
                delta_right = delta_banks[i].read(n)
                dpart = junction_backprop(W, jd.left_idx, jd.right_idx, jd.n_left, delta_right)
                delta_banks[i - 1].write(n, adot_banks[i - 1].read(n) * dpart)
                if recorder is not None:
                    emit_right(t, jd, "BP", "delta", n, jd.uniq_rights, "R")
                    emit_left(t, jd, "BP", "adot", n, "R")
                    emit_left(t, jd, "BP", "delta", n, "R")
                    emit_left(t, jd, "BP", "delta", n, "W")

            if "UP" in active:
                n = active["UP"]
                delta_right = delta_banks[i].read(n)
                a_prev = a_banks[i - 1].read(n)
                W -= learning_rate * (a_prev[jd.left_idx] * delta_right[jd.right_idx])
                b -= learning_rate * delta_right
                if recorder is not None:
                    emit_left(t, jd, "UP", "a", n, "R")
                    if "BP" not in active:  # otherwise the delta read is shared with BP
                        emit_right(t, jd, "UP", "delta", n, jd.uniq_rights, "R")

        if recorder is not None:
            recorder.check_slot(t)
        for group in (a_banks, adot_banks, delta_banks):
            for bank in group.values():
                bank.end_slot()

    trace.bank_occupancy = {
        bank.name: bank.max_live
        for group in (a_banks, adot_banks, delta_banks)
        for bank in group.values()
    }
    return SimResult(trace=trace, outputs=outputs, model=model)


def summary_report(trace: PipelineTrace, storage: StorageReport) -> str:
    """Human-readable run summary: throughput, occupancy, storage."""
    tp = throughput_report(trace)
    lines = [
        f"mode: {trace.mode}",
        f"slots: {trace.n_slots} x {trace.slot_cycles} cycles",
        f"cycles per input (steady state): {tp.cycles_per_input}",
        f"pipeline fill latency: {tp.fill_latency_slots} slots",
        f"bank occupancy (max live versions): {trace.bank_occupancy}",
        "storage words: "
        f"a={storage.activations} adot={storage.activation_derivs} "
        f"delta={storage.deltas} b={storage.biases} W={storage.weights} "
        f"total={storage.total}",
    ]
    return "\n".join(lines)
