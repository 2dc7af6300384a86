"""Command line entry points, one subcommand per pipeline stage."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

import numpy as np

from .autoencoder import AEHyper
from .convnet import (PipelineConfig, PipelineModel, ResponseStack, apply_block,
                      load_model, pretrain, save_model, transform)
from .dataset import (SynthConfig, generate_synthetic, load_dataset, sample_windows,
                      save_dataset, test_exclusion_columns)
from .decode import cnn_features, hrf_mvpa_features, raw_mvpa_features, t_mvpa_features
from .harness import (curve_csv, curve_svg, emit_report, learning_curve,
                      run_experiment, save_design_csv, stage_seed)
from .hyperselect import HyperGrid, grid_search


def _add_arch_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tau1", type=int, default=6, help="first-block window length")
    p.add_argument("--tau2", type=int, default=9, help="second-block window length")
    p.add_argument("--delta1", type=int, default=4, help="first-block pooling group size")
    p.add_argument("--delta2", type=int, default=2, help="second-block pooling group size")
    p.add_argument("--k1", type=int, default=16, help="first-block filter count")
    p.add_argument("--k2", type=int, default=4, help="second-block filter count")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rho", type=float, default=0.03, help="target mean activation")
    p.add_argument("--beta", type=float, default=1.0, help="sparsity penalty weight")
    p.add_argument("--lambda", dest="lam", type=float, default=1e-4, help="weight decay")
    p.add_argument("--windows", type=int, default=10000, help="training windows per bank")
    p.add_argument("--max-iters", type=int, default=400, help="gradient descent iterations")
    p.add_argument("--step-size", type=float, default=0.1, help="initial step size")


def _pipeline_config(args, seed: int) -> PipelineConfig:
    return PipelineConfig(
        delta1=args.delta1, delta2=args.delta2,
        layer1_hyper=AEHyper(k=args.k1, rho=args.rho, beta=args.beta, lam=args.lam,
                             max_iters=args.max_iters, step_size=args.step_size, seed=seed),
        layer2_hyper=AEHyper(k=args.k2, rho=args.rho, beta=args.beta, lam=args.lam,
                             max_iters=args.max_iters, step_size=args.step_size, seed=seed),
        tau1=args.tau1, tau2=args.tau2, num_windows=args.windows,
    )


def _cmd_generate(args) -> int:
    config = SynthConfig(
        m=args.m, n=args.n, num_classes=args.classes,
        samples_per_class_per_phase=args.samples, noise_sigma=args.noise_sigma,
        voxels_per_class=args.voxels_per_class, hrf_amplitude=args.hrf_amplitude,
        tr_seconds=args.tr, seed=args.seed,
    )
    d = generate_synthetic(config)
    save_dataset(d, args.out)
    print(f"wrote {d.m}x{d.n} dataset with {len(d.labels)} labels to {args.out}")
    return 0


def _cmd_pretrain(args) -> int:
    d = load_dataset(args.data)
    model = pretrain(d, _pipeline_config(args, stage_seed(args.seed, "pretrain")))
    save_model(model, args.out)
    k2 = model.layer2[0].k
    print(f"wrote model ({model.layer1.k} + {len(model.layer2)}x{k2} filters) to {args.out}")
    return 0


def _parse_values(text: str, cast):
    return tuple(cast(part) for part in text.split(",") if part)


def _cmd_hyperparam(args) -> int:
    d = load_dataset(args.data)
    if args.layer == 1:
        grid = HyperGrid.default_first_block()
        tau = args.tau1
        matrix = d.values
    else:
        if not args.model:
            print("layer 2 selection needs --model for the first-block responses", file=sys.stderr)
            return 2
        model = load_model(args.model)
        stack = apply_block(ResponseStack.single(d.values), model.layer1,
                            model.config.delta1, model.voxel_order)
        grid = HyperGrid.default_second_block()
        tau = args.tau2
        matrix = stack.matrices[0]
    if args.k_values:
        grid = dataclasses.replace(grid, k_values=_parse_values(args.k_values, int))
    if args.rho_values:
        grid = dataclasses.replace(grid, rho_values=_parse_values(args.rho_values, float))
    if args.beta_values:
        grid = dataclasses.replace(grid, beta_values=_parse_values(args.beta_values, float))
    grid = dataclasses.replace(grid, lambda_value=args.lam)

    excluded = test_exclusion_columns(d, args.tau1, args.tau2)
    windows = sample_windows(matrix, tau, args.windows, excluded,
                             stage_seed(args.seed, f"hyperparam.layer{args.layer}"))
    base = AEHyper(k=grid.k_values[0], max_iters=args.max_iters,
                   step_size=args.step_size, seed=stage_seed(args.seed, "grid"))
    result = grid_search(windows, grid, base, normalized=args.normalized)

    lines = ["k,rho,beta,distance,final_cost"]
    for entry in result.entries:
        cost = format(entry.bank.final_cost, ".17g") if entry.bank is not None else "nan"
        lines.append(f"{entry.hyper.k},{entry.hyper.rho!r},{entry.hyper.beta!r},"
                     f"{format(entry.distance, '.17g')},{cost}")
    with open(args.out, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")

    best = result.best_entry
    summary = {
        "k": best.hyper.k, "rho": best.hyper.rho, "beta": best.hyper.beta,
        "lambda": best.hyper.lam, "distance": best.distance, "normalized": args.normalized,
        "layer": args.layer,
    }
    summary_path = args.summary or str(args.out) + ".json"
    with open(summary_path, "w", encoding="ascii") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"best k={best.hyper.k} rho={best.hyper.rho} beta={best.hyper.beta} "
          f"distance={best.distance:.6g}")
    return 0


def _cmd_transform(args) -> int:
    d = load_dataset(args.data)
    model = load_model(args.model)
    rep = transform(d, model, args.depth)
    np.save(args.out, rep)
    print(f"wrote {rep.shape[0]}x{rep.shape[1]} representation to {args.out}")
    return 0


def _cmd_decode(args) -> int:
    d = load_dataset(args.data)
    model = load_model(args.model) if args.model else None
    report = run_experiment(
        d, args.method, delta1=args.delta1, delta2=args.delta2, tau1=args.tau1,
        tau2=args.tau2, k1=args.k1, k2=args.k2, rho=args.rho, beta=args.beta,
        lam=args.lam, num_windows=args.windows, max_iters=args.max_iters,
        step_size=args.step_size, knn_k=args.knn_k, metric=args.metric,
        tmvpa_window=args.tmvpa_window, seed=args.seed, model=model,
    )
    emit_report([report], fmt=args.format, out_path=args.out)
    if args.features_out:
        design = _design_for(d, args.method, model, args)
        save_design_csv(design, args.features_out)
    print(f"{args.method}: accuracy={report.accuracy:.4f} p={report.p_value:.3e} "
          f"dim={report.feature_dim}")
    return 0


def _design_for(d, method, model, args):
    if method == "raw":
        return raw_mvpa_features(d)
    if method == "hrf":
        return hrf_mvpa_features(d)
    if method == "tmvpa":
        return t_mvpa_features(d, args.tmvpa_window)
    depth = 1 if method == "cnn1" else 2
    if model is None:
        model = pretrain(d, _pipeline_config(args, stage_seed(args.seed, "pretrain")))
    return cnn_features(d, model, depth)


def _cmd_learning_curve(args) -> int:
    d = load_dataset(args.data)
    model = load_model(args.model) if args.model else None
    pool = _design_for(d, args.method, model, args)
    curve = learning_curve(pool, step=args.step, k=args.knn_k, metric=args.metric,
                           seed=stage_seed(args.seed, "learning-curve"))
    with open(args.out, "w", encoding="ascii") as fh:
        fh.write(curve_csv(curve))
    if args.plot:
        with open(args.plot, "w", encoding="ascii") as fh:
            fh.write(curve_svg(curve))
    print(f"wrote {len(curve.points)}-point learning curve to {args.out}")
    return 0


def _cmd_report(args) -> int:
    from .harness import EvalReport

    reports = []
    for path in args.inputs:
        with open(path, "r", encoding="ascii") as fh:
            for item in json.load(fh):
                reports.append(EvalReport(
                    method=item["method"], depth=item["depth"], delta1=item["delta1"],
                    delta2=item["delta2"], feature_dim=item["dim"],
                    accuracy=item["accuracy"], p_value=item["p_value"],
                    confusion=np.array(item["confusion"], dtype=np.int64),
                    classes=item["classes"], seed=item["seed"],
                ))
    rendered = emit_report(reports, fmt="csv", out_path=args.out)
    print(rendered, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vtdecode",
                                     description="temporal filter learning and decoding")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthesize a labeled dataset")
    p.add_argument("--m", type=int, required=True, help="voxel count")
    p.add_argument("--n", type=int, required=True, help="sample count")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--samples", type=int, required=True, help="samples per class per phase")
    p.add_argument("--noise-sigma", type=float, default=1.0)
    p.add_argument("--voxels-per-class", type=int, default=4)
    p.add_argument("--hrf-amplitude", type=float, default=2.0)
    p.add_argument("--tr", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("pretrain", help="learn both filter banks")
    p.add_argument("--data", required=True)
    _add_arch_flags(p)
    _add_train_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_pretrain)

    p = sub.add_parser("hyperparam", help="grid search scored by filter decorrelation")
    p.add_argument("--data", required=True)
    p.add_argument("--layer", type=int, choices=(1, 2), default=1)
    p.add_argument("--model", help="pretrained model, required for --layer 2")
    _add_arch_flags(p)
    _add_train_flags(p)
    p.add_argument("--k-values", help="comma-separated override of the k grid")
    p.add_argument("--rho-values", help="comma-separated override of the rho grid")
    p.add_argument("--beta-values", help="comma-separated override of the beta grid")
    p.add_argument("--normalized", action="store_true",
                   help="divide distances by the filter count")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="per-point CSV path")
    p.add_argument("--summary", help="JSON summary path (default: <out>.json)")
    p.set_defaults(func=_cmd_hyperparam)

    p = sub.add_parser("transform", help="emit the learned representation")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--depth", type=int, choices=(1, 2), default=2)
    p.add_argument("--out", required=True, help=".npy output path")
    p.set_defaults(func=_cmd_transform)

    p = sub.add_parser("decode", help="classify retrieve-phase labels")
    p.add_argument("--data", required=True)
    p.add_argument("--method", required=True, choices=("raw", "hrf", "tmvpa", "cnn1", "cnn2"))
    p.add_argument("--model", help="pretrained model for cnn methods")
    _add_arch_flags(p)
    _add_train_flags(p)
    p.add_argument("--knn-k", type=int, default=1)
    p.add_argument("--metric", choices=("euclidean", "cosine"), default="euclidean")
    p.add_argument("--tmvpa-window", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", required=True)
    p.add_argument("--features-out", help="also write the design matrix as CSV")
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("learning-curve", help="error versus training set size")
    p.add_argument("--data", required=True)
    p.add_argument("--method", required=True, choices=("raw", "hrf", "tmvpa", "cnn1", "cnn2"))
    p.add_argument("--model")
    _add_arch_flags(p)
    _add_train_flags(p)
    p.add_argument("--step", type=int, default=20)
    p.add_argument("--knn-k", type=int, default=1)
    p.add_argument("--metric", choices=("euclidean", "cosine"), default="euclidean")
    p.add_argument("--tmvpa-window", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--plot", help="optional SVG path")
    p.set_defaults(func=_cmd_learning_curve)

    p = sub.add_parser("report", help="merge decode JSON outputs into one CSV")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
