"""Command-line surface: validate configs, generate/count patterns, train,
simulate, sweep, and emit report/plot data (CSV only, no GUI)."""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from dataclasses import dataclass
from multiprocessing import Pool

import numpy as np

from . import clashfree, datasets, engine, pipesim, topology
from .topology import ConfigError, NetworkConfig


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.replace(",", " ").split())


def _default_out() -> str:
    return os.environ.get("SPARSEPIPE_OUT", ".")


# -- config file ----------------------------------------------------------------


DEFAULTS = {
    "sparsity": {"method": "dense", "cf_type": "1", "dither": "false"},
    "train": {
        "optimizer": "adam",
        "learning_rate": "0.001",
        "epochs": "10",
        "batch_size": "256",
        "l2": "0.0",
        "l1": "0.0",
        "decay": "1e-5",
        "seed": "0",
        "bias_init": "0.1",
        "shuffle": "true",
    },
    "dataset": {
        "kind": "synthetic",
        "dir": "",
        "pad_to": "0",
        "n_samples": "3000",
        "n_features": "16",
        "n_classes": "4",
        "separation": "6.0",
        "val_fraction": "0.2",
        "test_fraction": "0.2",
    },
    "simulate": {
        "mode": "pipelined",
        "flush": "0",
        "record": "true",
        "n_inputs": "16",
        "learning_rate": "0.01",
    },
    "sweep": {"methods": "structured", "d_out": "", "reps": "5", "base_seed": "0"},
}


@dataclass
class RunConfig:
    """Fully-resolved experiment description parsed from an INI file."""

    parser: configparser.ConfigParser

    @classmethod
    def load(cls, path: str | None, overrides: dict | None = None) -> "RunConfig":
        cp = configparser.ConfigParser()
        cp.read_dict(DEFAULTS)
        if path:
            with open(path) as f:
                cp.read_file(f)
        for (section, key), value in (overrides or {}).items():
            if value is not None:
                if not cp.has_section(section):
                    cp.add_section(section)
                cp.set(section, key, str(value))
        return cls(cp)

    def network(self, need_z: bool = False) -> NetworkConfig:
        if not self.parser.has_option("network", "layers"):
            raise ConfigError("config needs [network] layers")
        layers = _ints(self.parser.get("network", "layers"))
        d_out = _ints(self.parser.get("network", "d_out", fallback=""))
        if not d_out:  # fully connected by default
            d_out = tuple(layers[1:])
        z = None
        if self.parser.has_option("network", "z"):
            z = _ints(self.parser.get("network", "z"))
        if need_z and z is None:
            raise ConfigError("config needs [network] z for this command")
        return NetworkConfig(layers, d_out, z)

    def get(self, section: str, key: str, kind=str):
        raw = self.parser.get(section, key)
        if kind is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return kind(raw)

    def train_config(self, seed: int | None = None) -> engine.TrainConfig:
        g = self.get
        return engine.TrainConfig(
            learning_rate=g("train", "learning_rate", float),
            epochs=g("train", "epochs", int),
            optimizer=g("train", "optimizer"),
            decay=g("train", "decay", float),
            l2=g("train", "l2", float),
            l1=g("train", "l1", float),
            batch_size=g("train", "batch_size", int),
            seed=g("train", "seed", int) if seed is None else seed,
            shuffle=g("train", "shuffle", bool),
        )

    def write_resolved(self, path: str) -> None:
        with open(path, "w") as f:
            self.parser.write(f)


def load_dataset(cfg: RunConfig):
    """(train, val, test) datasets per the [dataset] section."""
    kind = cfg.get("dataset", "kind")
    if kind == "mnist":
        directory = cfg.get("dataset", "dir")
        if not directory:
            raise ConfigError("[dataset] dir required for kind=mnist")
        pad_to = cfg.get("dataset", "pad_to", int)
        return datasets.load_mnist(directory, pad_to=pad_to or None)
    if kind == "synthetic":
        n = cfg.get("dataset", "n_samples", int)
        full = datasets.synthetic_dataset(
            n_samples=n,
            n_features=cfg.get("dataset", "n_features", int),
            n_classes=cfg.get("dataset", "n_classes", int),
            separation=cfg.get("dataset", "separation", float),
            seed=cfg.get("train", "seed", int),
        )
        n_test = max(1, int(n * cfg.get("dataset", "test_fraction", float)))
        n_val = max(1, int(n * cfg.get("dataset", "val_fraction", float)))
        rest, test = datasets.split_train_val(full, n_test)
        train, val = datasets.split_train_val(rest, n_val)
        return train, val, test
    raise ConfigError(f"unknown dataset kind {kind!r}")


def build_patterns(
    net: NetworkConfig,
    method: str,
    seed: int,
    cf_type: int = 1,
    dither: bool = False,
    train_features: np.ndarray | None = None,
):
    """Connection patterns (and clash-free specs, when applicable) per junction."""
    patterns = []
    specs = None
    if method == "dense":
        for i in range(net.n_junctions):
            patterns.append(
                topology.fully_connected(net.layer_sizes[i], net.layer_sizes[i + 1])
            )
    elif method == "structured":
        for i in range(net.n_junctions):
            patterns.append(
                topology.generate_structured_random(
                    net.layer_sizes[i], net.layer_sizes[i + 1], net.out_degrees[i], seed + i
                )
            )
    elif method == "random":
        for i in range(net.n_junctions):
            rho = net.out_degrees[i] / net.layer_sizes[i + 1]
            patterns.append(
                topology.generate_random_unstructured(
                    net.layer_sizes[i], net.layer_sizes[i + 1], rho, seed + i
                )
            )
    elif method == "clashfree":
        if net.parallelism is None:
            raise ConfigError("clash-free patterns need [network] z")
        specs = []
        for i in range(net.n_junctions):
            spec = clashfree.generate_spec(
                net.layer_sizes[i],
                net.out_degrees[i],
                net.parallelism[i],
                cf_type,
                dither,
                seed + i,
            )
            specs.append(spec)
            patterns.append(
                clashfree.to_connection_pattern(spec, net.in_degrees[i], net.layer_sizes[i + 1])
            )
    elif method == "attention":
        if train_features is None:
            raise ConfigError("attention patterns need training data")
        degrees = topology.attention_degrees(
            train_features.var(axis=0),
            net.layer_sizes[1],
            target_edges=net.layer_sizes[0] * net.out_degrees[0],
        )
        patterns.append(topology.generate_from_out_degrees(degrees, net.layer_sizes[1], seed))
        for i in range(1, net.n_junctions):
            patterns.append(
                topology.generate_structured_random(
                    net.layer_sizes[i], net.layer_sizes[i + 1], net.out_degrees[i], seed + i
                )
            )
    else:
        raise ConfigError(f"unknown sparsity method {method!r}")
    return patterns, specs


# -- subcommands -------------------------------------------------------------------


def cmd_validate(args) -> int:
    cfg = RunConfig.load(args.config, _net_overrides(args))
    net = cfg.network()
    summary = topology.junction_summary(net)
    print("junction  d_out  d_in  |W|      density")
    for row in summary.rows:
        print(
            f"{row.junction:<9}{row.d_out:<7}{row.d_in:<6}{row.n_edges:<9}"
            f"{row.density} ({row.density_float:.4%})"
        )
    print(f"overall density: {summary.density_net} ({summary.density_net_float:.4%})")
    storage = pipesim.storage_report(net)
    print(
        f"storage words: a={storage.activations} adot={storage.activation_derivs}"
        f" delta={storage.deltas} b={storage.biases} W={storage.weights}"
        f" total={storage.total}"
    )
    status = 0
    if net.parallelism is not None:
        report = clashfree.validate_z_net(net)
        for t in report.junctions:
            print(f"junction {t.junction}: C={t.cycles} D={t.depth} pad={t.pad_needed}")
        for w in report.warnings:
            print(f"warning: {w}")
        for fmsg in report.failures:
            print(f"FAIL: {fmsg}", file=sys.stderr)
        print(f"throughput: {report.throughput_cycles} cycles/input"
              f" [{'pass' if report.ok else 'fail'}]")
        status = 0 if report.ok else 1
    return status


def cmd_patterns_gen(args) -> int:
    net = NetworkConfig((args.n_left, args.n_right), (args.d_out,),
                        (args.z,) if args.z else None)
    features = None
    if args.method == "attention":
        raise ConfigError("attention generation needs training data; use `train` instead")
    patterns, specs = build_patterns(net, args.method, args.seed, args.cf_type, args.dither,
                                     features)
    topology.save_pattern(patterns[0], args.out)
    print(f"wrote {args.out} ({patterns[0].n_edges} edges)")
    if specs:
        spec_path = args.out + ".cfspec"
        clashfree.save_spec(specs[0], spec_path)
        print(f"wrote {spec_path}")
    return 0


def cmd_patterns_count(args) -> int:
    depth = args.depth
    if depth is None:
        if args.n_left is None:
            raise ConfigError("give --depth or --n-left")
        if args.n_left % args.z:
            raise ConfigError(f"z={args.z} does not divide n_left={args.n_left}")
        depth = args.n_left // args.z
    result = clashfree.count_patterns(
        depth, args.z, args.d_out, args.d_in, args.cf_type, args.dither
    )
    suffix = "" if result.exact else " (upper bound)"
    print(f"{result.value}{suffix}")
    return 0


def cmd_patterns_verify(args) -> int:
    ok = True
    if args.cfspec:
        spec = clashfree.load_spec(args.cfspec)
        report = clashfree.verify_clash_free(clashfree.address_schedule(spec))
        print(f"{args.cfspec}: clash-free={report.ok}")
        for c in report.clashes:
            print(f"  clash: cycle={c[0]} memory={c[1]} count={c[2]}")
        for v in report.coverage:
            print(f"  coverage: sweep={v[0]} neuron={v[1]} count={v[2]}")
        ok &= report.ok
    if args.pattern:
        p = topology.load_pattern(args.pattern)
        left0, right0 = topology.find_disconnected(p)
        print(
            f"{args.pattern}: {p.n_left}x{p.n_right} {p.degree_kind}, {p.n_edges} edges,"
            f" disconnected left={left0} right={right0}"
        )
    if not args.cfspec and not args.pattern:
        raise ConfigError("give --pattern and/or --cfspec")
    return 0 if ok else 1


def _train_once(cfg: RunConfig, seed: int, out_dir: str | None):
    ds_train, ds_val, ds_test = load_dataset(cfg)
    net = cfg.network()
    method = cfg.get("sparsity", "method")
    # prune-after-train: learn a dense net under the L1 penalty, then keep the
    # largest-magnitude weights down to the configured junction densities
    build_method = "dense" if method == "prune-after-train" else method
    patterns, specs = build_patterns(
        net,
        build_method,
        seed,
        cfg.get("sparsity", "cf_type", int),
        cfg.get("sparsity", "dither", bool),
        ds_train.features,
    )
    model = engine.init_model(
        patterns, net.layer_sizes, seed, bias_init=cfg.get("train", "bias_init", float)
    )
    tcfg = cfg.train_config(seed)
    history = engine.train(model, ds_train, ds_val, tcfg, test_set=ds_test)
    if method == "prune-after-train":
        _, model = engine.prune_threshold(model, [float(r) for r in net.densities])
    metrics = {
        "seed": seed,
        "method": method,
        "rho_net": float(net.density_net),
        "epochs": len(history.records),
        "diverged": history.diverged,
        "train_loss": history.records[-1].train_loss if history.records else None,
        "val_acc": history.records[-1].val_acc if history.records else None,
        "test_acc": engine.evaluate(model, ds_test),
    }
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        cfg.write_resolved(os.path.join(out_dir, "resolved.ini"))
        history.to_csv(os.path.join(out_dir, "history.csv"))
        engine.save_checkpoint(model, os.path.join(out_dir, "model.ckpt"))
        with open(os.path.join(out_dir, "metrics.json"), "w") as f:
            json.dump(metrics, f, indent=1)
        if specs:
            for i, spec in enumerate(specs):
                clashfree.save_spec(spec, os.path.join(out_dir, f"junction{i + 1}.cfspec"))
    return model, history, metrics


def cmd_train(args) -> int:
    cfg = RunConfig.load(args.config, _net_overrides(args))
    seed = args.seed if args.seed is not None else cfg.get("train", "seed", int)
    out_dir = args.out or os.path.join(_default_out(), "train_run")
    _, history, metrics = _train_once(cfg, seed, out_dir)
    print(json.dumps(metrics))
    if history.diverged:
        print("training diverged", file=sys.stderr)
        return 1
    return 0


def cmd_simulate(args) -> int:
    cfg = RunConfig.load(args.config, _net_overrides(args))
    net = cfg.network(need_z=True)
    seed = args.seed if args.seed is not None else cfg.get("train", "seed", int)
    ds_train, _, _ = load_dataset(cfg)
    patterns, specs = build_patterns(
        net, "clashfree", seed,
        cfg.get("sparsity", "cf_type", int), cfg.get("sparsity", "dither", bool),
    )
    model = engine.init_model(
        patterns, net.layer_sizes, seed, bias_init=cfg.get("train", "bias_init", float)
    )
    pcfg = pipesim.PipelineConfig(
        network=net,
        specs=tuple(specs),
        flush_cycles=cfg.get("simulate", "flush", int),
        mode=cfg.get("simulate", "mode"),
        record_accesses=cfg.get("simulate", "record", bool),
    )
    n = min(cfg.get("simulate", "n_inputs", int), ds_train.n_samples)
    result = pipesim.simulate(
        model, pcfg, ds_train.features[:n], ds_train.labels[:n],
        learning_rate=cfg.get("simulate", "learning_rate", float),
    )
    out_dir = args.out or os.path.join(_default_out(), "sim_run")
    os.makedirs(out_dir, exist_ok=True)
    cfg.write_resolved(os.path.join(out_dir, "resolved.ini"))
    text = pipesim.summary_report(result.trace, pipesim.storage_report(net))
    with open(os.path.join(out_dir, "summary.txt"), "w") as f:
        f.write(text + "\n")
    if pcfg.record_accesses:
        pipesim.export_trace_csv(result.trace, os.path.join(out_dir, "trace.csv"))
    print(text)
    return 0


def cmd_report(args) -> int:
    return cmd_validate(args)


def cmd_histogram(args) -> int:
    model = engine.load_checkpoint(args.checkpoint)
    hists = engine.weight_histogram(model, args.bins, (args.lo, args.hi))
    lines = ["junction,bin_lo,bin_hi,count"]
    for i, h in enumerate(hists, start=1):
        width = (h.hi - h.lo) / args.bins
        lines.append(f"{i},-inf,{h.lo:g},{h.underflow}")
        for b, count in enumerate(h.counts):
            lines.append(f"{i},{h.lo + b * width:g},{h.lo + (b + 1) * width:g},{int(count)}")
        lines.append(f"{i},{h.hi:g},+inf,{h.overflow}")
    text = "\n".join(lines)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text + "\n")
    else:
        print(text)
    return 0


def _sweep_row(packed):
    """Worker: one (config, method, d_out, rep) training row."""
    ini_text, method, d_out, rep, base_seed = packed
    cp = configparser.ConfigParser()
    cp.read_string(ini_text)
    cfg = RunConfig(cp)
    cfg.parser.set("sparsity", "method", method)
    cfg.parser.set("network", "d_out", ",".join(str(d) for d in d_out))
    seed = base_seed + rep
    try:
        _, _, metrics = _train_once(cfg, seed, None)
        return {
            "method": method,
            "d_out": " ".join(str(d) for d in d_out),
            "rho_net": metrics["rho_net"],
            "rep": rep,
            "seed": seed,
            "val_acc": metrics["val_acc"],
            "test_acc": metrics["test_acc"],
            "error": "",
        }
    except Exception as exc:  # row failure must not kill the sweep
        return {
            "method": method,
            "d_out": " ".join(str(d) for d in d_out),
            "rho_net": float("nan"),
            "rep": rep,
            "seed": seed,
            "val_acc": float("nan"),
            "test_acc": float("nan"),
            "error": f"{type(exc).__name__}: {exc}",
        }


def cmd_sweep(args) -> int:
    from scipy import stats

    cfg = RunConfig.load(args.config, _net_overrides(args))
    methods = [m.strip() for m in cfg.get("sweep", "methods").split(",") if m.strip()]
    d_out_grid = [
        _ints(part) for part in cfg.get("sweep", "d_out").split("|") if part.strip()
    ]
    if not d_out_grid:
        d_out_grid = [cfg.network().out_degrees]
    reps = cfg.get("sweep", "reps", int)
    base_seed = args.seed if args.seed is not None else cfg.get("sweep", "base_seed", int)
    import io

    buf = io.StringIO()
    cfg.parser.write(buf)
    ini_text = buf.getvalue()
    rows_spec = [
        (ini_text, m, d, rep, base_seed)
        for m in methods
        for d in d_out_grid
        for rep in range(reps)
    ]
    if args.jobs > 1:
        with Pool(args.jobs) as pool:
            rows = pool.map(_sweep_row, rows_spec)
    else:
        rows = [_sweep_row(r) for r in rows_spec]

    out_dir = args.out or os.path.join(_default_out(), "sweep_run")
    os.makedirs(out_dir, exist_ok=True)
    cfg.write_resolved(os.path.join(out_dir, "resolved.ini"))
    header = ["method", "d_out", "rho_net", "rep", "seed", "val_acc", "test_acc", "error"]
    rows_path = os.path.join(out_dir, "sweep.csv")
    tmp = rows_path + ".tmp"
    with open(tmp, "w") as f:
        f.write(",".join(header) + "\n")
        for r in rows:
            f.write(",".join(str(r[k]) for k in header) + "\n")
    os.replace(tmp, rows_path)

    agg_path = os.path.join(out_dir, "aggregates.csv")
    tmp = agg_path + ".tmp"
    with open(tmp, "w") as f:
        f.write("method,d_out,rho_net,n,test_acc_mean,test_acc_ci90_lo,test_acc_ci90_hi\n")
        for m in methods:
            for d in d_out_grid:
                key = " ".join(str(x) for x in d)
                accs = [
                    r["test_acc"] for r in rows
                    if r["method"] == m and r["d_out"] == key and not r["error"]
                ]
                if not accs:
                    continue
                accs = np.array(accs)
                mean = accs.mean()
                if accs.size > 1:
                    half = stats.t.ppf(0.95, accs.size - 1) * accs.std(ddof=1) / np.sqrt(accs.size)
                else:
                    half = float("nan")
                rho = next(
                    r["rho_net"] for r in rows if r["method"] == m and r["d_out"] == key
                )
                f.write(
                    f"{m},{key},{rho},{accs.size},{mean:.6f},{mean - half:.6f},{mean + half:.6f}\n"
                )
    os.replace(tmp, agg_path)
    print(f"wrote {rows_path} and {agg_path} ({len(rows)} rows)")
    return 0


# -- argument parsing -----------------------------------------------------------------


def _net_overrides(args) -> dict:
    out = {}
    for key in ("layers", "d_out", "z"):
        val = getattr(args, key.replace("-", "_"), None)
        if val:
            out[("network", key)] = val
    return out


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="INI config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="output directory (default $SPARSEPIPE_OUT)")
    p.add_argument("--layers", help="override [network] layers, e.g. 800,100,10")
    p.add_argument("--d-out", dest="d_out", help="override [network] d_out")
    p.add_argument("--z", help="override [network] z")


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sparsepipe")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a network/parallelism config, print tables")
    _add_common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("report", help="alias of validate: density/storage/throughput report")
    _add_common(p)
    p.set_defaults(func=cmd_report)

    pat = sub.add_parser("patterns", help="generate / count / verify connection patterns")
    psub = pat.add_subparsers(dest="patterns_command", required=True)

    p = psub.add_parser("gen")
    p.add_argument("--method", required=True,
                   choices=["dense", "structured", "random", "clashfree"])
    p.add_argument("--n-left", type=int, required=True)
    p.add_argument("--n-right", type=int, required=True)
    p.add_argument("--d-out", dest="d_out", type=int, required=True)
    p.add_argument("--z", type=int, default=None)
    p.add_argument("--cf-type", type=int, default=1, choices=[1, 2, 3])
    p.add_argument("--dither", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="pattern file to write")
    p.set_defaults(func=cmd_patterns_gen)

    p = psub.add_parser("count")
    p.add_argument("--depth", type=int, default=None, help="memory depth D")
    p.add_argument("--n-left", type=int, default=None, help="alternative to --depth")
    p.add_argument("--z", type=int, required=True)
    p.add_argument("--d-out", dest="d_out", type=int, required=True)
    p.add_argument("--d-in", dest="d_in", type=int, required=True)
    p.add_argument("--cf-type", type=int, default=1, choices=[1, 2, 3])
    p.add_argument("--dither", action="store_true")
    p.set_defaults(func=cmd_patterns_count)

    p = psub.add_parser("verify")
    p.add_argument("--pattern", default=None)
    p.add_argument("--cfspec", default=None)
    p.set_defaults(func=cmd_patterns_verify)

    p = sub.add_parser("train", help="train a model per config, emit artifacts")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("simulate", help="cycle-level pipeline simulation")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="grid of (method, d_out) x reps, CSV out")
    _add_common(p)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("histogram", help="per-junction weight histogram from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--lo", type=float, default=-1.0)
    p.add_argument("--hi", type=float, default=1.0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_histogram)

    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, clashfree.InvalidSpecError, pipesim.SimulationError,
            datasets.IdxFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
