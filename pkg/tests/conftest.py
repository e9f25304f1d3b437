"""Shared fixtures and independent oracles for the test suite."""

import numpy as np
import pytest

from sparsepipe import clashfree, engine, topology


class DenseOracle:
    """Masked-dense reference: the model as explicit (n_left, n_right) matrices.

    Kept independent of the edge-list engine: plain matmuls on dense weight
    matrices with zeros at missing edges.
    """

    def __init__(self, model: engine.SparseModel):
        self.n_junctions = model.n_junctions
        self.W = []
        self.mask = []
        for i, p in enumerate(model.patterns):
            W = np.zeros((p.n_left, p.n_right))
            mask = np.zeros((p.n_left, p.n_right), dtype=bool)
            pos = 0
            for j, row in enumerate(p.edges):
                for k in row:
                    W[k, j] = model.weights[i][pos]
                    mask[k, j] = True
                    pos += 1
            self.W.append(W)
            self.mask.append(mask)
        self.b = [b.copy() for b in model.biases]

    def forward(self, x):
        acts = [np.asarray(x, dtype=np.float64)]
        hs = []
        adots = []
        for i in range(self.n_junctions):
            h = acts[-1] @ self.W[i] + self.b[i]
            hs.append(h)
            if i < self.n_junctions - 1:
                acts.append(np.maximum(h, 0.0))
                adots.append((h > 0).astype(float))
            else:
                e = np.exp(h - h.max())
                acts.append(e / e.sum())
                adots.append(None)
        return acts, hs, adots

    def backward(self, x, y_onehot):
        acts, hs, adots = self.forward(x)
        L = self.n_junctions
        deltas = [None] * L
        deltas[L - 1] = acts[L] - y_onehot
        for i in range(L - 1, 0, -1):
            deltas[i - 1] = adots[i - 1] * (self.W[i] @ deltas[i])
        grads_W = [np.outer(acts[i], deltas[i]) * self.mask[i] for i in range(L)]
        return grads_W, deltas, acts

    def sgd_step(self, x, y_onehot, lr):
        grads_W, deltas, _ = self.backward(x, y_onehot)
        for i in range(self.n_junctions):
            self.W[i] -= lr * grads_W[i]
            self.b[i] -= lr * deltas[i]

    def edge_grads(self, model, grads_W):
        """Flatten dense per-cell gradients back to the model's edge order."""
        out = []
        for i, p in enumerate(model.patterns):
            vals = [grads_W[i][k, j] for j, row in enumerate(p.edges) for k in row]
            out.append(np.array(vals))
        return out

    def edge_weights(self, model):
        out = []
        for i, p in enumerate(model.patterns):
            vals = [self.W[i][k, j] for j, row in enumerate(p.edges) for k in row]
            out.append(np.array(vals))
        return out


def random_tiny_model(rng, max_size=10, n_junctions=2):
    """Random sparse model with feasible structured junctions, sizes <= max_size."""
    sizes = []
    while len(sizes) < n_junctions + 1:
        sizes = [int(rng.integers(2, max_size + 1)) for _ in range(n_junctions + 1)]
    patterns = []
    for i in range(n_junctions):
        n_left, n_right = sizes[i], sizes[i + 1]
        feasible = [
            d for d in range(1, n_right + 1)
            if (n_left * d) % n_right == 0 and n_left * d // n_right <= n_left
        ]
        d_out = int(rng.choice(feasible))
        patterns.append(
            topology.generate_structured_random(n_left, n_right, d_out, int(rng.integers(1 << 30)))
        )
    model = engine.init_model(patterns, tuple(sizes), seed=int(rng.integers(1 << 30)))
    return model


def random_clashfree_network(rng, max_z=8, n_junctions=2):
    """(NetworkConfig, specs, patterns) with valid parallelism and aligned z/d_in."""
    while True:
        z = [int(rng.integers(1, max_z + 1)) for _ in range(n_junctions)]
        depth = [int(rng.integers(1, 5)) for _ in range(n_junctions)]
        sizes = [z[i] * depth[i] for i in range(n_junctions)]
        d_out = []
        ok = True
        for i in range(n_junctions):
            n_left = sizes[i]
            n_right = sizes[i + 1] if i + 1 < n_junctions else None
            if n_right is None:
                n_right = int(rng.integers(1, 7))
                sizes.append(n_right)
            # want integral d_in and z_i/d_in or d_in/z_i integral for tidy banks
            cands = []
            for d in range(1, n_right + 1):
                if (n_left * d) % n_right:
                    continue
                d_in = n_left * d // n_right
                if d_in > n_left:
                    continue
                if d_in % z[i] == 0 or z[i] % d_in == 0:
                    cands.append(d)
            if not cands:
                ok = False
                break
            d_out.append(int(rng.choice(cands)))
        if not ok:
            continue
        net = topology.NetworkConfig(tuple(sizes), tuple(d_out), tuple(z))
        report = clashfree.validate_z_net(net)
        if not report.ok:
            continue
        specs = []
        patterns = []
        feasible = True
        for i in range(n_junctions):
            spec = clashfree.generate_spec(
                sizes[i], d_out[i], z[i],
                cf_type=int(rng.integers(1, 4)),
                dither=bool(rng.integers(0, 2)),
                seed=int(rng.integers(1 << 30)),
            )
            try:
                pat = clashfree.to_connection_pattern(spec, net.in_degrees[i], sizes[i + 1])
            except clashfree.InvalidSpecError:
                feasible = False
                break
            specs.append(spec)
            patterns.append(pat)
        if feasible:
            return net, specs, patterns


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
