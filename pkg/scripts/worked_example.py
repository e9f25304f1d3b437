#!/usr/bin/env python3
"""Walk through the small worked example end to end and print every artifact:
the 12-neuron junction with z=4 and seed vector (1,0,2,2), its schedule and
connection pattern, the pattern-count table for the 12x12 variant, the storage
table for (800,100,10), and a short pipelined training run with its trace."""

import numpy as np

from sparsepipe import clashfree, datasets, engine, pipesim
from sparsepipe.clashfree import ClashFreeSpec, count_patterns
from sparsepipe.engine import TrainConfig, init_model
from sparsepipe.pipesim import PipelineConfig, simulate, storage_report, throughput_report
from sparsepipe.topology import NetworkConfig, junction_summary


def main():
    print("== seed-vector junction: 12 left neurons, z=4, D=3, phi=(1,0,2,2) ==")
    spec = ClashFreeSpec(cf_type=1, z=4, depth=3, sweeps=2, seeds=(1, 0, 2, 2))
    sched = clashfree.address_schedule(spec)
    for c in range(3):
        lanes = " ".join(f"M{m}@{a}" for m, a in sched.accesses[c])
        print(f"cycle {c}: {lanes}  -> left neurons {sched.left_neurons()[c].tolist()}")
    pattern = clashfree.to_connection_pattern(spec, d_in=3, n_right=8)
    print("right-neuron adjacency:", [list(row) for row in pattern.edges])
    print("clash-free:", clashfree.verify_clash_free(sched).ok)

    print("\n== access-pattern counts for the 12x12, d_out=d_in=2, z=4 junction ==")
    for cf_type in (1, 2, 3):
        for dither in (False, True):
            c = count_patterns(3, 4, 2, 2, cf_type, dither)
            print(f"type {cf_type} dither={str(dither):5}: {c.value}")

    print("\n== densities and storage for (800,100,10), d_out=(20,10) ==")
    net = NetworkConfig((800, 100, 10), (20, 10))
    s = junction_summary(net)
    for row in s.rows:
        print(f"junction {row.junction}: d_in={row.d_in} |W|={row.n_edges}"
              f" rho={float(row.density):.0%}")
    print(f"rho_net = {s.density_net} ~ {s.density_net_float:.1%}")
    for cfg in (NetworkConfig((800, 100, 10), (100, 10)), net):
        r = storage_report(cfg)
        kind = "FC    " if r.weights == 81000 else "sparse"
        print(f"{kind}: a={r.activations} adot={r.activation_derivs} delta={r.deltas}"
              f" b={r.biases} W={r.weights} total={r.total}")

    print("\n== pipelined training on a toy separable task ==")
    net = NetworkConfig((8, 6, 2), (3, 2), (4, 2))
    specs = tuple(
        clashfree.generate_spec(net.layer_sizes[i], net.out_degrees[i],
                                net.parallelism[i], 1, False, seed=i)
        for i in range(2)
    )
    patterns = [clashfree.to_connection_pattern(specs[i], net.in_degrees[i],
                                                net.layer_sizes[i + 1]) for i in range(2)]
    model = init_model(patterns, net.layer_sizes, seed=2)
    ds = datasets.synthetic_dataset(240, 8, 2, separation=10.0, seed=5)
    order = np.tile(np.arange(240), 6)
    cfg = PipelineConfig(network=net, specs=specs, mode="pipelined", record_accesses=False)
    result = simulate(model, cfg, ds.features[order], ds.labels[order], learning_rate=0.02)
    print(pipesim.summary_report(result.trace, storage_report(net)))
    print(f"accuracy after pipelined training: {engine.evaluate(model, ds):.1%}")
    print(f"throughput: {throughput_report(result.trace)}")


if __name__ == "__main__":
    main()
