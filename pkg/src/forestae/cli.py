"""Command-line pipeline: fit, encode, decode, roundtrip, bench.

Exit codes: 0 success, 1 runtime error, 2 usage error. Every command is
deterministic under a fixed --seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import bundle as bundle_io
from . import decode as dec
from . import kernel as ker
from . import spectral
from .data import Table, bootstrap_split, load_csv, save_csv
from .forest import ForestParams, fit_completely_random, fit_supervised, fit_unsupervised
from .metrics import distortion

MODES = ("supervised", "completely_random", "unsupervised")
DECODERS = ("knn", "relabel", "lasso", "ilp")


class UsageError(ValueError):
    pass


def _forest_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--trees", type=int, default=100, help="number of trees")
    p.add_argument("--mtry", type=int, default=None, help="candidate features per split")
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--min-leaf", type=int, default=1)
    p.add_argument("--gamma", type=float, default=0.01, help="min child fraction per split")
    p.add_argument("--subsample", type=float, default=1.0, help="per-tree subsample fraction")
    p.add_argument("--tree-bootstrap", action="store_true", help="per-tree bootstrap resampling")
    p.add_argument("--honest", action="store_true", help="split structure/labels on halves")
    p.add_argument("--rounds", type=int, default=1, help="discriminator refit rounds")


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--verbose", action="store_true")


def _params(args, seed: int) -> ForestParams:
    return ForestParams(
        n_trees=args.trees,
        mtry=args.mtry,
        min_node_fraction=args.gamma,
        min_leaf=args.min_leaf,
        max_depth=args.max_depth,
        subsample_fraction=args.subsample,
        bootstrap=args.tree_bootstrap,
        honest=args.honest,
        seed=seed,
    )


def _fit_pipeline(table: Table, mode: str, label: str | None, params: ForestParams,
                  d_z: int, t: float, seed: int, jobs: int, rounds: int):
    if not 1 <= d_z <= table.n - 1:
        raise UsageError(f"--d-z must lie in [1, n-1]; got {d_z} with n={table.n}")
    if mode == "supervised":
        if label is None:
            raise UsageError("--label is required for supervised mode")
        labels = table.column(label)
        features = table.drop(label)
        forest = fit_supervised(features, labels, params, jobs=jobs)
    elif mode == "completely_random":
        features = table
        forest = fit_completely_random(table, params, jobs=jobs)
    else:
        features = table
        forest = fit_unsupervised(table, params, rounds=rounds, jobs=jobs)
    K = ker.rf_kernel_train(forest, features)
    model = spectral.with_time(spectral.eigendecompose(K, d_z), t)
    synth = dec.build_synthetic_training(forest, features, seed)
    return features, forest, K, model, synth


def cmd_fit(args) -> int:
    table = load_csv(args.data)
    if table.n_dropped_rows and args.verbose:
        print(f"dropped {table.n_dropped_rows} incomplete rows", file=sys.stderr)
    params = _params(args, args.seed)
    _, forest, K, model, synth = _fit_pipeline(
        table, args.mode, args.label, params, args.d_z, args.t, args.seed, args.jobs, args.rounds
    )
    bundle_io.save_bundle(bundle_io.bundle_from_parts(forest, model, synth), args.out)
    if args.export_kernel:
        if args.dense:
            ker.write_dense_csv(K, args.export_kernel)
        else:
            ker.write_coordinate(K, args.export_kernel)
    if args.verbose:
        print(f"fit: n={model.n} trees={forest.n_trees} leaves={forest.total_leaves} "
              f"d_z={model.d_z}", file=sys.stderr)
    return 0


def _read_embedding_csv(path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise UsageError(f"{path}: empty embedding file")
    d = len(rows[0])
    body = rows[1:]
    if not body:
        return np.empty((0, d), dtype=np.float64)
    return np.array([[float(x) for x in row] for row in body], dtype=np.float64)


def _write_embedding_csv(path, Z0: np.ndarray, d_z: int) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"KPC{j + 1}" for j in range(d_z)])
        for row in np.atleast_2d(Z0):
            writer.writerow([repr(float(v)) for v in row])


def _csv_has_rows(path) -> bool:
    with open(path, newline="", encoding="utf-8") as fh:
        return len(list(csv.reader(fh))) > 1


def cmd_encode(args) -> int:
    b = bundle_io.load_bundle(args.bundle)
    if not _csv_has_rows(args.data):
        _write_embedding_csv(args.out, np.empty((0, b.model.d_z)), b.model.d_z)
        return 0
    queries = load_csv(args.data, schema_hint=b.schema)
    K0 = ker.rf_kernel_cross(b.forest, queries, b.synth.table, strict=False)
    if K0.unseen_levels or K0.skipped_leaf_cells:
        print(
            f"warnings: {K0.unseen_levels} unseen-level cells, "
            f"{K0.skipped_leaf_cells} empty-leaf tree cells renormalized",
            file=sys.stderr,
        )
    Z0 = spectral.nystrom_embed(K0, b.model)
    _write_embedding_csv(args.out, Z0, b.model.d_z)
    return 0


def _decode_rows(b, Z0: np.ndarray, args) -> tuple[Table, list[dict]]:
    trace: list[dict] = []
    if args.decoder == "knn":
        out = dec.knn_decode(Z0, b.model, b.forest, b.synth, k=args.k, seed=args.seed)
        if args.trace:
            _, Z = b.model.require_time()
            for i in range(Z0.shape[0]):
                ns = dec.knn_neighbors(Z0[i], Z, args.k)
                trace.append(
                    {"row": i, "neighbors": ns.indices.tolist(), "weights": ns.weights.tolist()}
                )
        return out, trace
    if args.decoder == "relabel":
        relabeled = dec.relabel_forest(b.forest, b.model, b.synth, args.n_synth, args.seed)
        out = dec.relabel_decode(relabeled, b.forest, Z0, seed=args.seed)
        if args.trace:
            trace.append({"degenerate_nodes": relabeled.n_degenerate})
        return out, trace
    if args.decoder == "lasso":
        out = dec.lasso_decode(
            Z0, b.model, b.forest, b.synth,
            lam=args.penalty, sparsity_cap=args.sparsity_cap, seed=args.seed,
        )
        return out, trace
    # exact enumeration
    khat = spectral.reconstruct_kernel(Z0, b.model)
    rng = np.random.default_rng(args.seed)
    rows = []
    for i in range(Z0.shape[0]):
        res = dec.ilp_decode_exact(khat[i], b.forest, b.synth.leaf_ids)
        from .forest import leaf_region, region_intersect, region_sample

        region = region_intersect(
            [leaf_region(b.forest, t, int(l)) for t, l in enumerate(res.assignment)]
        )
        rows.append(region_sample(region, rng))
        if args.trace:
            trace.append({"row": i, "objective": res.objective, "n_optima": res.n_optima})
    return Table(b.schema, np.array(rows)), trace


def cmd_decode(args) -> int:
    b = bundle_io.load_bundle(args.bundle)
    Z0 = _read_embedding_csv(args.embeddings)
    if Z0.shape[1] != b.model.d_z:
        raise UsageError(f"embeddings have {Z0.shape[1]} columns, bundle expects {b.model.d_z}")
    if Z0.shape[0] == 0:
        save_csv(Table(b.schema, np.empty((0, b.schema.n_columns))), args.out)
        return 0
    out, trace = _decode_rows(b, Z0, args)
    save_csv(out, args.out)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            for rec in trace:
                fh.write(json.dumps(rec) + "\n")
    return 0


def cmd_roundtrip(args) -> int:
    from .data import conform_table

    b = bundle_io.load_bundle(args.bundle)
    queries = conform_table(load_csv(args.data, schema_hint=b.schema), b.schema)
    K0 = ker.rf_kernel_cross(b.forest, queries, b.synth.table, strict=False)
    Z0 = spectral.nystrom_embed(K0, b.model)
    out, _ = _decode_rows(b, Z0, args)
    save_csv(out, args.out)
    report = distortion(queries, out)
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def _dz_for_rate(rate: float, d_x: int) -> int:
    # round-half-up with a floor of one dimension
    return max(1, int(np.floor(rate * d_x + 0.5)))


def _bench_one(payload) -> list[dict]:
    (values, schema_dict, name, mode, label, params_dict, rates, t, k, decoder,
     penalty, sparsity_cap, boot_seed) = payload
    from .data import Schema

    table = Table(Schema.from_dict(schema_dict), np.asarray(values))
    split = bootstrap_split(table.n, boot_seed)
    train = table.take(np.unique(split.train))  # de-duplicated kernel reference
    test = table.take(split.holdout)
    params = ForestParams.from_dict(params_dict)
    t0 = time.perf_counter()
    if mode == "supervised":
        labels = train.column(label)
        feats_train, feats_test = train.drop(label), test.drop(label)
        forest = fit_supervised(feats_train, labels, params)
    elif mode == "completely_random":
        feats_train, feats_test = train, test
        forest = fit_completely_random(train, params)
    else:
        feats_train, feats_test = train, test
        forest = fit_unsupervised(train, params)
    d_x = feats_train.schema.n_columns
    dims = [min(_dz_for_rate(r, d_x), feats_train.n - 1) for r in rates]
    K = ker.rf_kernel_train(forest, feats_train)
    full = spectral.eigendecompose(K, max(dims))
    synth = dec.build_synthetic_training(forest, feats_train, boot_seed)
    K0 = ker.rf_kernel_cross(forest, feats_test, feats_train, strict=False)
    shared = time.perf_counter() - t0
    rows = []
    for rate, d_z in zip(rates, dims):
        t1 = time.perf_counter()
        model = spectral.with_time(
            spectral.SpectralModel(
                n=full.n,
                d_z=d_z,
                eigenvalues=full.eigenvalues[:d_z],
                V=full.V[:, :d_z],
                lambda0=full.lambda0,
                v0_max_dev=full.v0_max_dev,
            ),
            t,
        )
        Z0 = spectral.nystrom_embed(K0, model)
        if decoder == "knn":
            out = dec.knn_decode(Z0, model, forest, synth, k=min(k, synth.n), seed=boot_seed)
        elif decoder == "lasso":
            out = dec.lasso_decode(
                Z0, model, forest, synth, lam=penalty, sparsity_cap=sparsity_cap, seed=boot_seed
            )
        else:
            relabeled = dec.relabel_forest(forest, model, synth, seed=boot_seed)
            out = dec.relabel_decode(relabeled, forest, Z0, seed=boot_seed)
        score = distortion(feats_test, out)
        rows.append(
            {
                "dataset": name,
                "rate": rate,
                "d_z": d_z,
                "seed": boot_seed,
                "decoder": decoder,
                "distortion": score.combined,
                "runtime_s": round(shared / len(rates) + time.perf_counter() - t1, 4),
            }
        )
    return rows


def cmd_bench(args) -> int:
    table = load_csv(args.data)
    rates = [float(r) for r in args.rates.split(",")]
    if not rates or any(not 0 < r <= 1 for r in rates):
        raise UsageError("rates must lie in (0, 1]")
    if args.mode == "supervised" and not args.label:
        raise UsageError("--label is required for supervised mode")
    name = Path(args.data).stem
    payloads = [
        (
            table.values.tolist(), table.schema.to_dict(), name, args.mode, args.label,
            _params(args, args.seed + i).to_dict(), rates, args.t, args.k, args.decoder,
            args.penalty, args.sparsity_cap, args.seed + i,
        )
        for i in range(args.bootstraps)
    ]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            chunks = list(pool.map(_bench_one, payloads))
    else:
        chunks = [_bench_one(p) for p in payloads]
    rows = [r for chunk in chunks for r in chunk]
    rows.sort(key=lambda r: (r["rate"], r["seed"]))
    fields = ["dataset", "rate", "d_z", "seed", "decoder", "distortion", "runtime_s"]
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    if args.verbose:
        best = min(rows, key=lambda r: r["distortion"])
        print(f"best row: rate={best['rate']} distortion={best['distortion']:.4f}",
              file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="forestae",
        description="Random-forest autoencoder: kernel extraction, diffusion-map "
        "embeddings, and decoders back to feature space.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit forest + embedding and write a model bundle")
    p.add_argument("data")
    p.add_argument("--mode", choices=MODES, default="unsupervised")
    p.add_argument("--label", default=None)
    p.add_argument("--d-z", type=int, required=True)
    p.add_argument("--t", type=float, default=1.0, help="diffusion time (0 = raw eigenvectors)")
    p.add_argument("--out", required=True)
    p.add_argument("--export-kernel", default=None)
    p.add_argument("--dense", action="store_true")
    _forest_flags(p)
    _common_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("encode", help="embed a CSV through a fitted bundle")
    p.add_argument("bundle")
    p.add_argument("data")
    p.add_argument("--out", required=True)
    _common_flags(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="map an embedding CSV back to feature space")
    p.add_argument("bundle")
    p.add_argument("embeddings")
    p.add_argument("--decoder", choices=DECODERS, default="knn")
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--lambda", dest="penalty", type=float, default=1e-4,
                   help="exclusive-lasso penalty weight")
    p.add_argument("--sparsity-cap", type=int, default=100)
    p.add_argument("--n-synth", type=int, default=256, help="relabeling draws per node")
    p.add_argument("--out", required=True)
    p.add_argument("--trace", default=None, help="write per-row diagnostics JSONL here")
    _common_flags(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("roundtrip", help="encode then decode a CSV; print distortion")
    p.add_argument("bundle")
    p.add_argument("data")
    p.add_argument("--decoder", choices=DECODERS, default="knn")
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--lambda", dest="penalty", type=float, default=1e-4)
    p.add_argument("--sparsity-cap", type=int, default=100)
    p.add_argument("--n-synth", type=int, default=256)
    p.add_argument("--out", required=True)
    p.add_argument("--trace", default=None)
    _common_flags(p)
    p.set_defaults(func=cmd_roundtrip)

    p = sub.add_parser("bench", help="compression/distortion sweep over latent rates")
    p.add_argument("data")
    p.add_argument("--rates", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")
    p.add_argument("--bootstraps", type=int, default=10)
    p.add_argument("--mode", choices=MODES, default="unsupervised")
    p.add_argument("--label", default=None)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--decoder", choices=("knn", "lasso", "relabel"), default="knn")
    p.add_argument("--lambda", dest="penalty", type=float, default=1e-4)
    p.add_argument("--sparsity-cap", type=int, default=100)
    p.add_argument("--out", required=True)
    _forest_flags(p)
    _common_flags(p)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - module context reported, exit 1
        print(f"error [{type(exc).__module__}.{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
