"""Acceptance gate: one test per criterion, each printing a pass/fail line.

Criteria 1-10 run unconditionally.  Criteria 11-14 are full-scale MNIST
reproductions; they need the four canonical IDX files in $SPARSEPIPE_MNIST and
are skipped (loudly) when the corpus is absent.  Run `pytest -s` to see the
per-criterion lines; `scripts/mnist_criteria.py` runs 11-14 standalone.
"""

import itertools
import os

import numpy as np
import pytest

from conftest import DenseOracle, random_clashfree_network, random_tiny_model
from test_clashfree import brute_force_access_patterns, brute_force_connection_patterns

from sparsepipe import clashfree, datasets, engine, pipesim, topology
from sparsepipe.clashfree import ClashFreeSpec, count_patterns, generate_spec
from sparsepipe.engine import TrainConfig, init_model
from sparsepipe.pipesim import PipelineConfig, simulate, storage_report, throughput_report
from sparsepipe.topology import NetworkConfig

MNIST_DIR = os.environ.get("SPARSEPIPE_MNIST", "")
FULL = os.environ.get("SPARSEPIPE_FULL_ACCEPT", "") == "1"

needs_mnist = pytest.mark.skipif(
    not MNIST_DIR or not os.path.isdir(MNIST_DIR),
    reason="MNIST IDX files not available; set SPARSEPIPE_MNIST to run this criterion "
    "(corpus cannot be fetched in offline environments)",
)
full_budget = pytest.mark.skipif(
    not FULL,
    reason="full 50-epoch x 5-run protocol; set SPARSEPIPE_FULL_ACCEPT=1 to run",
)


def report(criterion: str, ok: bool, detail: str = ""):
    print(f"CRITERION {criterion}: {'PASS' if ok else 'FAIL'} {detail}".rstrip())
    assert ok, f"criterion {criterion}: {detail}"


# -- 1. storage table ---------------------------------------------------------


def test_criterion_01_storage_table():
    fc = storage_report(NetworkConfig((800, 100, 10), (100, 10)))
    got = (fc.activations, fc.activation_derivs, fc.deltas, fc.biases, fc.weights, fc.total)
    ok = got == (4300, 300, 220, 110, 81000, 85930)
    sparse = storage_report(NetworkConfig((800, 100, 10), (20, 10)))
    ok &= sparse.total == 21930
    report("1 (storage-table)", ok, f"fc={got} sparse_total={sparse.total}")


# -- 2. pattern-count table ----------------------------------------------------


def test_criterion_02_pattern_count_table():
    expected = {
        (1, False): 81,
        (1, True): 486,
        (2, False): 6561,
        (2, True): 236196,
        (3, False): 1679616,
        (3, True): 60466176,
    }
    got = {
        key: count_patterns(3, 4, 2, 2, key[0], key[1]).value for key in expected
    }
    exact = all(count_patterns(3, 4, 2, 2, t, d).exact for t, d in expected)
    report("2 (count-table)", got == expected and exact, f"{got}")


# -- 3. density feasibility ------------------------------------------------------


def test_criterion_03_density_feasibility():
    a = len(topology.enumerate_densities(117, 390))
    b = len(topology.enumerate_densities(390, 13))
    report("3 (feasible-densities)", (a, b) == (39, 13), f"counts=({a},{b})")


# -- 4. seed-vector worked example ------------------------------------------------


def test_criterion_04_seed_vector_example():
    spec = ClashFreeSpec(1, 4, 3, 2, (1, 0, 2, 2))
    neurons = clashfree.address_schedule(spec).left_neurons()
    ok = neurons[0].tolist() == [4, 1, 10, 11]
    ok &= neurons[1].tolist() == [8, 5, 2, 3]
    ok &= all(neurons[c + 3].tolist() == neurons[c].tolist() for c in range(3))
    pat = clashfree.to_connection_pattern(spec, 3, 8)
    ok &= set(pat.edges[0]) == {4, 1, 10}
    report("4 (seed-vector-example)", ok, f"cycle0={neurons[0].tolist()}")


# -- 5. throughput ------------------------------------------------------------------


def _run_throughput(net, flush=0, n_inputs=2):
    specs = [
        generate_spec(net.layer_sizes[i], net.out_degrees[i], net.parallelism[i], 1, False, i)
        for i in range(net.n_junctions)
    ]
    patterns = [
        clashfree.to_connection_pattern(specs[i], net.in_degrees[i], net.layer_sizes[i + 1])
        for i in range(net.n_junctions)
    ]
    model = init_model(patterns, net.layer_sizes, seed=0)
    cfg = PipelineConfig(network=net, specs=tuple(specs), flush_cycles=flush,
                         record_accesses=False)
    rng = np.random.default_rng(0)
    X = rng.standard_normal((n_inputs, net.layer_sizes[0]))
    y = rng.integers(0, net.layer_sizes[-1], n_inputs).astype(np.int64)
    result = simulate(model, cfg, X, y, learning_rate=0.01)
    return throughput_report(result.trace).cycles_per_input


def test_criterion_05_throughput():
    reuters = _run_throughput(NetworkConfig((2000, 50, 50), (25, 25), (1000, 25)))
    timit = _run_throughput(NetworkConfig((39, 390, 39), (270, 27), (13, 13)))
    flushed = _run_throughput(NetworkConfig((16, 16), (16,), (8,)), flush=2)
    ok = (reuters, timit, flushed) == (50, 810, 34)
    report("5 (throughput)", ok, f"reuters={reuters} timit={timit} flushed={flushed}")


# -- 6. clash-freedom property suite ---------------------------------------------------


def test_criterion_06_clash_freedom_1000_specs():
    rng = np.random.default_rng(2024)
    failures = 0
    for _ in range(1000):
        z = int(rng.integers(1, 9))
        depth = int(rng.integers(1, 9))
        if depth * z > 64:
            depth = max(1, 64 // z)
        sweeps = int(rng.integers(1, 5))
        cf_type = int(rng.integers(1, 4))
        dither = bool(rng.integers(0, 2))
        spec = generate_spec(depth * z, sweeps, z, cf_type, dither, int(rng.integers(1 << 30)))
        if not clashfree.verify_clash_free(clashfree.address_schedule(spec)).ok:
            failures += 1
    report("6 (clash-freedom-1000)", failures == 0, f"failures={failures}")


# -- 7. count oracle --------------------------------------------------------------------


def test_criterion_07_count_bruteforce_oracle():
    checked = 0
    # undithered: access-pattern enumeration, all types
    for cf_type, depth, z, d_out in itertools.product((1, 2, 3), (1, 2, 3), (1, 2, 3, 4), (1, 2)):
        expected = count_patterns(depth, z, d_out, z, cf_type, False)
        if expected.value > 10**5:
            continue
        got = brute_force_access_patterns(depth, z, d_out, cf_type, False)
        assert got == expected.value, (cf_type, depth, z, d_out, got, expected.value)
        checked += 1
    # dithered with z >= d_in: connection-pattern enumeration
    for depth, z, d_out, d_in, cf_type in [
        (2, 2, 1, 2, 1), (3, 4, 2, 2, 1), (2, 2, 2, 1, 1), (2, 2, 1, 1, 2),
    ]:
        expected = count_patterns(depth, z, d_out, d_in, cf_type, True)
        got = brute_force_connection_patterns(depth, z, d_out, d_in, cf_type, True)
        assert got == expected.value == count_patterns(depth, z, d_out, d_in, cf_type, True).value
        checked += 1
    # the explicit spec example: D=2, z=2, type 1 -> 4, via exhaustive phi
    four = brute_force_access_patterns(2, 2, 1, 1, False)
    report("7 (count-oracle)", four == 4 and checked >= 30, f"cases={checked + 1}")


# -- 8. gradient check --------------------------------------------------------------------


def test_criterion_08_gradient_check_50_nets():
    rng = np.random.default_rng(88)
    worst = 0.0
    for _ in range(50):
        m = random_tiny_model(rng)
        x = rng.standard_normal(m.layer_sizes[0])
        y = np.eye(m.layer_sizes[-1])[int(rng.integers(m.layer_sizes[-1]))]
        result = engine.grad_check(m, x, y, eps=1e-5)
        worst = max(worst, result.max_rel_err)
    report("8 (gradient-check)", worst < 1e-5, f"max_rel_err={worst:.3e}")


# -- 9. masked-dense equivalence ---------------------------------------------------------


def test_criterion_09_masked_dense_equivalence():
    rng = np.random.default_rng(77)
    worst = 0.0
    for _ in range(10):
        m = random_tiny_model(rng)
        oracle = DenseOracle(m)
        x = rng.standard_normal(m.layer_sizes[0])
        y = np.eye(m.layer_sizes[-1])[int(rng.integers(m.layer_sizes[-1]))]
        state = engine.forward(m, x)
        grads = engine.backward(m, state, y)
        gW, deltas, acts = oracle.backward(x, y)
        worst = max(worst, np.abs(state.activations[-1] - acts[-1]).max())
        for mine, ref in zip(grads.weight_grads, oracle.edge_grads(m, gW)):
            worst = max(worst, np.abs(mine - ref).max())
        cfg = TrainConfig(learning_rate=0.05, epochs=1, optimizer="sgd", decay=0.0)
        engine.update_step(m, grads, cfg, engine.OptimizerState(m, cfg))
        oracle.sgd_step(x, y, lr=0.05)
        for mine, ref in zip(m.weights, oracle.edge_weights(m)):
            worst = max(worst, np.abs(mine - ref).max())
    report("9 (masked-dense)", worst < 1e-10, f"max_abs_diff={worst:.3e}")


# -- 10. pipeline equivalence ---------------------------------------------------------------


def test_criterion_10_pipeline_equivalence():
    rng = np.random.default_rng(55)
    bitwise = True
    for _ in range(20):
        net, specs, patterns = random_clashfree_network(rng, n_junctions=int(rng.integers(1, 4)))
        model = init_model(patterns, net.layer_sizes, seed=int(rng.integers(1 << 30)))
        n = int(rng.integers(3, 10))
        X = rng.standard_normal((n, net.layer_sizes[0]))
        y = rng.integers(0, net.layer_sizes[-1], n).astype(np.int64)
        ds = datasets.Dataset(X, y, net.layer_sizes[-1])
        lr = float(rng.uniform(0.001, 0.1))
        m_engine = model.copy()
        engine.train(
            m_engine, ds, ds,
            TrainConfig(learning_rate=lr, epochs=1, optimizer="sgd", decay=0.0,
                        batch_size=1, seed=0, shuffle=False),
        )
        m_sim = model.copy()
        simulate(
            m_sim,
            PipelineConfig(network=net, specs=tuple(specs), mode="single-input",
                           record_accesses=False),
            X, y, learning_rate=lr,
        )
        bitwise &= all(np.array_equal(a, b) for a, b in zip(m_engine.weights, m_sim.weights))
        bitwise &= all(np.array_equal(a, b) for a, b in zip(m_engine.biases, m_sim.biases))

    # pipelined mode: weights differ (staleness) yet the separable task trains
    net = NetworkConfig((8, 6, 2), (3, 2), (4, 2))
    specs = [generate_spec(net.layer_sizes[i], net.out_degrees[i], net.parallelism[i],
                           1, False, i) for i in range(2)]
    patterns = [clashfree.to_connection_pattern(specs[i], net.in_degrees[i],
                                                net.layer_sizes[i + 1]) for i in range(2)]
    base = init_model(patterns, net.layer_sizes, seed=2)
    ds = datasets.synthetic_dataset(240, 8, 2, separation=10.0, seed=5)
    order = np.tile(np.arange(240), 6)
    m_pipe = base.copy()
    simulate(m_pipe, PipelineConfig(network=net, specs=tuple(specs), mode="pipelined",
                                    record_accesses=False),
             ds.features[order], ds.labels[order], learning_rate=0.02)
    m_drain = base.copy()
    simulate(m_drain, PipelineConfig(network=net, specs=tuple(specs), mode="single-input",
                                     record_accesses=False),
             ds.features[order], ds.labels[order], learning_rate=0.02)
    stale_differs = any(
        not np.array_equal(a, b) for a, b in zip(m_pipe.weights, m_drain.weights)
    )
    acc = engine.evaluate(m_pipe, ds)
    ok = bitwise and stale_differs and acc >= 0.99
    report("10 (pipeline-equivalence)", ok,
           f"bitwise={bitwise} stale_differs={stale_differs} pipelined_acc={acc:.3f}")


# -- 11-14. MNIST statistical reproductions ---------------------------------------------------


def _mnist():
    return datasets.load_mnist(MNIST_DIR, pad_to=800)


def _mnist_model(net, method, seed, train_features=None, z=None, cf_type=1):
    from sparsepipe.cli import build_patterns

    patterns, _ = build_patterns(net, method, seed, cf_type=cf_type,
                                 train_features=train_features)
    return init_model(patterns, net.layer_sizes, seed=seed)


def _train_mnist(net, method, seed, epochs, train, val, test, l2=None):
    model = _mnist_model(net, method, seed, train_features=train.features)
    rho = float(net.density_net)
    cfg = TrainConfig(
        learning_rate=0.001, epochs=epochs, optimizer="adam", decay=1e-5,
        l2=(1e-4 * rho if l2 is None else l2), batch_size=256, seed=seed,
    )
    engine.train(model, train, val, cfg)
    return engine.evaluate(model, test)


def _runs(net, method, seeds, epochs, data):
    train, val, test = data
    return np.array([
        _train_mnist(net, method, seed, epochs, train, val, test) for seed in seeds
    ])


def _ci90(acc: np.ndarray):
    from scipy import stats

    half = stats.t.ppf(0.95, acc.size - 1) * acc.std(ddof=1) / np.sqrt(acc.size)
    return acc.mean() - half, acc.mean() + half


@needs_mnist
class TestMnistCriteria:
    @pytest.fixture(scope="class")
    def data(self):
        return _mnist()

    def test_criterion_11_reduced_fc_10_epochs(self, data):
        net = NetworkConfig((800, 100, 10), (100, 10))
        acc = _runs(net, "dense", [0], epochs=10, data=data)[0]
        report("11-reduced (fc-10-epochs)", acc >= 0.970, f"acc={acc:.4f}")

    @full_budget
    def test_criterion_11_full_fc_50_epochs(self, data):
        net = NetworkConfig((800, 100, 10), (100, 10))
        accs = _runs(net, "dense", range(5), epochs=50, data=data)
        mean = accs.mean()
        report("11 (fc-98.0±0.5)", abs(mean - 0.980) <= 0.005,
               f"mean={mean:.4f} runs={np.round(accs, 4).tolist()}")

    @full_budget
    def test_criterion_12_structured_sparse(self, data):
        net = NetworkConfig((800, 100, 10), (20, 10))
        accs = _runs(net, "structured", range(5), epochs=50, data=data)
        mean = accs.mean()
        report("12 (sparse-97.2±0.6)", abs(mean - 0.972) <= 0.006,
               f"mean={mean:.4f} runs={np.round(accs, 4).tolist()}")

    @full_budget
    def test_criterion_13_methods_compared(self, data):
        # moderate density: clash-free and structured within 0.5 points
        net = NetworkConfig((800, 100, 100, 100, 10), (20, 20, 20, 10),
                            (200, 25, 25, 10))
        moderate = {
            m: _runs(net, m, range(5), epochs=50, data=data).mean()
            for m in ("clashfree", "structured")
        }
        gap = abs(moderate["clashfree"] - moderate["structured"])
        # very low density: random loses to clash-free by >= 0.5 points
        low = NetworkConfig((800, 100, 100, 100, 10), (1, 2, 2, 10), (80, 20, 20, 100))
        low_accs = {
            m: _runs(low, m, range(5), epochs=50, data=data).mean()
            for m in ("clashfree", "random")
        }
        deficit = low_accs["clashfree"] - low_accs["random"]
        ok = gap <= 0.005 and deficit >= 0.005
        report("13 (method-comparison)", ok,
               f"moderate_gap={gap:.4f} low_density_deficit={deficit:.4f}")

    @full_budget
    def test_criterion_14_junction_density_trend(self, data):
        # same rho_net (= 17000 edges), dense final junction vs starved one
        rich = NetworkConfig((800, 100, 10), (20, 10))  # rho2 = 100%
        starved = NetworkConfig((800, 100, 10), (21, 2))  # rho2 = 20% < rho1 = 21%
        assert sum(rich.edge_counts) == sum(starved.edge_counts)
        rich_accs = _runs(rich, "structured", range(5), epochs=50, data=data)
        starved_accs = _runs(starved, "structured", range(5), epochs=50, data=data)
        rich_lo, _ = _ci90(rich_accs)
        _, starved_hi = _ci90(starved_accs)
        ok = rich_lo > starved_hi
        report("14 (junction-density-trend)", ok,
               f"rich_CI90_low={rich_lo:.4f} starved_CI90_high={starved_hi:.4f}")
