"""Command-line interface: ``radcine <command> [flags]``.

Exit codes: 0 ok, 2 usage, 3 missing artifact, 4 format error, 5 numerical failure.
``RADCINE_SEED`` overrides ``--seed`` when set.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_USAGE, EXIT_MISSING, EXIT_FORMAT, EXIT_NUMERIC = 0, 2, 3, 4, 5

log = logging.getLogger("radcine")


class UsageError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _seed(args) -> int:
    env = os.environ.get("RADCINE_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"RADCINE_SEED must be an integer, got {env!r}")
    return args.seed


def _set_threads(n: int | None) -> None:
    from threadpoolctl import threadpool_limits
    from . import nufft
    n = n or os.cpu_count() or 1
    nufft.set_num_threads(n)
    threadpool_limits(n)


# -- commands -----------------------------------------------------------------

def cmd_simulate(args) -> int:
    from .formats import save_dataset
    from .simulation import PhantomConfig, make_coil_maps, make_dataset
    from .trajectory import golden_angle_trajectory
    seed = _seed(args)
    if min(args.nx, args.ny, args.nt, args.coils, args.spokes_per_frame) < 1 or args.sigma < 0:
        raise UsageError("dimensions must be positive and --sigma non-negative")
    if args.nx != args.ny:
        raise UsageError("radial trajectories need a square grid (--nx == --ny)")
    try:
        cfg = PhantomConfig(n_x=args.nx, n_y=args.ny, n_t=args.nt, seed=seed)
    except ValueError as exc:
        raise UsageError(str(exc))
    traj = golden_angle_trajectory(args.nx, args.nt, args.spokes_per_frame)
    maps = make_coil_maps(args.nx, args.ny, args.coils, seed=seed)
    ds = make_dataset(args.n_train, args.n_val, args.n_test, cfg, traj, maps, args.sigma)
    save_dataset(args.out, ds)
    print(f"wrote {sum(len(v) for v in ds.splits.values())} samples to {args.out}")
    return EXIT_OK


def _load_data(path):
    from .formats import load_dataset
    if path is None:
        raise UsageError("--data is required")
    return load_dataset(path)


def _train_cfg(args, stage):
    from .training import TrainConfig
    try:
        return TrainConfig(stage=stage, epochs=args.epochs, lr=args.lr,
                           lr_lambda=args.lr_lambda, seed=_seed(args), M=args.M, n_cg=args.ncg)
    except ValueError as exc:
        raise UsageError(str(exc))


def cmd_pretrain(args) -> int:
    from .cnn_block import UNetConfig
    from .training import pretrain
    ds = _load_data(args.data)
    cfg = _train_cfg(args, "pretrain")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    params = pretrain(ds, cfg, unet=UNetConfig(n_f=args.nf),
                      loss_csv=out.with_suffix(".loss.csv"))
    params.save(out, {"stage": "pretrain", "epochs": cfg.epochs, "lr": cfg.lr, "seed": cfg.seed})
    print(f"checkpoint {out}")
    return EXIT_OK


def _load_ckpt(path):
    from .cnn_block import ParamSet
    if path is None:
        raise FileNotFoundError("a checkpoint is required (--ckpt)")
    if not Path(path).exists():
        raise FileNotFoundError(f"checkpoint {path} not found")
    return ParamSet.load(path)[0]


def cmd_finetune(args) -> int:
    from .training import finetune
    params0 = _load_ckpt(args.ckpt)
    ds = _load_data(args.data)
    cfg = _train_cfg(args, "finetune")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    params = finetune(ds, params0, cfg, loss_csv=out.with_suffix(".loss.csv"))
    params.save(out, {"stage": "finetune", "epochs": cfg.epochs, "lr": cfg.lr,
                      "lr_lambda": cfg.lr_lambda, "M": cfg.M,
                      "n_cg": cfg.n_cg, "seed": cfg.seed})
    print(f"checkpoint {out} (lambda {float(params.lam().item()):.4g})")
    return EXIT_OK


def write_png_frames(directory, x: np.ndarray) -> None:
    """Magnitude frames scaled by the clip maximum, one 8-bit PNG per frame."""
    from PIL import Image
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    mag = np.abs(x)
    peak = float(mag.max()) or 1.0
    img = np.clip(np.round(255 * mag / peak), 0, 255).astype(np.uint8)
    for t in range(img.shape[2]):
        Image.fromarray(img[:, :, t].T).save(directory / f"frame_{t:03d}.png")


def _recon_one(method, op, y, args, params):
    from .baselines import it_sense, tv_reconstruct
    from .dc_cg import CgConfig
    from .unrolled import reconstruct
    if method == "nufft":
        return op.A_sharp(y)
    if method == "itsense":
        return it_sense(op, y, args.iters, args.tol)
    if method == "tv":
        return tv_reconstruct(op, y, args.lambda_tv, args.iters)
    return reconstruct(op, y, params, args.M, CgConfig(n_cg=args.ncg, tol=args.tol))


def cmd_reconstruct(args) -> int:
    from .formats import FormatError, read_kspace, write_cine
    ds = _load_data(args.data)
    params = _load_ckpt(args.ckpt) if args.method == "proposed" else None
    if args.M < 1 or args.ncg < 1 or args.iters < 1:
        raise UsageError("--M, --ncg and --iters must be >= 1")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.ksp is not None:
        y, _ = read_kspace(args.ksp)
        jobs = [(Path(args.ksp).stem, y)]
    else:
        jobs = [(f"{args.split}_{i:04d}", s.y) for i, s in enumerate(ds[args.split])]
    for name, y in jobs:
        if y.shape != ds.op.kspace_shape:
            raise FormatError(f"k-space shape {y.shape} does not match {ds.op.kspace_shape}")
        t0 = time.perf_counter()
        x = _recon_one(args.method, ds.op, y, args, params)
        write_cine(out / f"{name}.bin", x, method=args.method)
        if not args.no_png:
            write_png_frames(out / f"{name}_png", x)
        log.info("%s: %s in %.2fs", args.method, name, time.perf_counter() - t0)
    print(f"wrote {len(jobs)} reconstruction(s) to {out}")
    return EXIT_OK


def _cine_pairs(pred, gt, split):
    from .formats import read_cine
    pred, gt = Path(pred), Path(gt)
    for p in (pred, gt):
        if not p.exists():
            raise FileNotFoundError(f"{p} not found")
    if (gt / "meta.json").exists():
        gts = sorted((gt / split).glob("*/gt.bin"))
        preds = [pred / f"{split}_{g.parent.name}.bin" for g in gts]
    elif gt.is_dir():
        gts = sorted(gt.glob("*.bin"))
        preds = [pred / g.name for g in gts]
    else:
        gts, preds = [gt], [pred]
    if not gts:
        raise FileNotFoundError(f"no reference cines under {gt}")
    for p in preds:
        if not p.exists():
            raise FileNotFoundError(f"missing prediction {p}")
    return [read_cine(p)[0] for p in preds], [read_cine(g)[0] for g in gts]


def cmd_evaluate(args) -> int:
    from .formats import FormatError
    from .metrics import evaluate_dataset, format_table, write_report_csv
    preds, gts = _cine_pairs(args.pred, args.gt, args.split)
    if any(p.shape != g.shape for p, g in zip(preds, gts)):
        raise FormatError("prediction and reference shapes differ")
    if not 0 < args.roi_frac <= 1:
        raise UsageError("--roi-frac must lie in (0, 1]")
    rows = {args.label: evaluate_dataset(preds, gts, args.roi_frac)}
    if args.out:
        write_report_csv(args.out, rows)
    print(format_table(rows))
    return EXIT_OK


def cmd_adjoint_test(args) -> int:
    from .diagnostics import adjoint_test
    from .encoding import make_encoding_op
    from .simulation import make_coil_maps
    from .trajectory import golden_angle_trajectory
    seed = _seed(args)
    op = make_encoding_op(golden_angle_trajectory(args.nx, args.nt, args.spokes_per_frame),
                          make_coil_maps(args.nx, args.nx, args.coils, seed=seed))
    err = adjoint_test(op, args.trials, seed)
    ok = err < args.tol
    print(json.dumps({"max_rel_err": err, "tol": args.tol, "pass": ok}))
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_gradcheck(args) -> int:
    from .diagnostics import gradcheck
    res = gradcheck(n=args.nx, n_t=args.nt, n_c=args.coils, M=args.M, n_cg=args.ncg,
                    n_params=args.n_params, seed=_seed(args))
    ok = res["rel_err"] < args.tol
    print(json.dumps({"rel_err": res["rel_err"], "tol": args.tol, "pass": ok,
                      "n_checked": len(res["names"])}))
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_bench(args) -> int:
    import csv
    from .bench import bench_kernels, bench_sweep, check_trends, write_csv
    if args.reps < 3:
        raise UsageError("--reps must be >= 3")
    rows = bench_sweep(args.sizes, args.n_theta, args.ncg, args.reps, args.nt, args.coils,
                       _seed(args))
    config = {k: v for k, v in vars(args).items() if k != "func"}
    write_csv(args.out, rows, config)
    for r in rows:
        print(f"size {r.size:4d} n_theta {r.n_theta:3d} n_cg {r.n_cg:3d}: "
              f"{r.time_ms_mean:9.1f} +- {r.time_ms_std:6.1f} ms  {r.alloc_mb:8.2f} MB"
              + (f"  [{r.error}]" if r.error else ""))
    print(json.dumps(check_trends(rows)))
    if args.kernels:
        krows = bench_kernels(args.sizes, args.n_theta[0], args.nt, args.reps)
        kpath = Path(args.out).with_suffix(".kernels.csv")
        with open(kpath, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(krows[0]))
            w.writeheader()
            w.writerows(krows)
        for r in krows:
            print(f"gridding {r['backend']:>8} size {r['size']:4d}: {r['time_ms_mean']:8.2f} ms")
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="radcine",
                                description="Unrolled CNN + CG reconstruction of radial cine MRI")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads for gridding and BLAS (default: all cores; 1 = deterministic)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("simulate", help="write a synthetic train/val/test dataset")
    common(s)
    s.add_argument("--nx", type=int, default=64)
    s.add_argument("--ny", type=int, default=64)
    s.add_argument("--nt", type=int, default=16)
    s.add_argument("--coils", type=int, default=4)
    s.add_argument("--spokes-per-frame", type=int, default=8)
    s.add_argument("--sigma", type=float, default=0.02)
    s.add_argument("--n-train", type=int, default=20)
    s.add_argument("--n-val", type=int, default=5)
    s.add_argument("--n-test", type=int, default=5)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    for name, func, lr in (("pretrain", cmd_pretrain, 1e-4), ("finetune", cmd_finetune, 1e-5)):
        s = sub.add_parser(name, help=f"{name} stage of training")
        common(s)
        s.add_argument("--data", required=True)
        s.add_argument("--epochs", type=int, default=10)
        s.add_argument("--lr", type=float, default=lr)
        s.add_argument("--lr-lambda", type=float, default=None,
                       help="step size for the regularisation weight (default: --lr)")
        s.add_argument("--M", type=int, default=1)
        s.add_argument("--ncg", type=int, default=8)
        s.add_argument("--ckpt", default=None, help="input checkpoint (finetune)")
        s.add_argument("--nf", type=int, default=16, help="U-Net base width (pretrain)")
        s.add_argument("--out", required=True, help="output checkpoint path")
        s.set_defaults(func=func)

    s = sub.add_parser("reconstruct", help="reconstruct k-space with a chosen method")
    common(s)
    s.add_argument("--data", required=True, help="dataset directory (operator and samples)")
    s.add_argument("--ksp", default=None, help="single k-space file instead of a split")
    s.add_argument("--split", default="test", choices=["train", "val", "test"])
    s.add_argument("--method", default="proposed", choices=["nufft", "itsense", "tv", "proposed"])
    s.add_argument("--ckpt", default=None)
    s.add_argument("--M", type=int, default=1)
    s.add_argument("--ncg", type=int, default=8)
    s.add_argument("--tol", type=float, default=None, help="relative CG residual stopping tolerance")
    s.add_argument("--iters", type=int, default=10, help="iterations for itsense / tv")
    s.add_argument("--lambda-tv", type=float, default=0.01)
    s.add_argument("--no-png", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("evaluate", help="image metrics of predictions against references")
    s.add_argument("--pred", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--split", default="test")
    s.add_argument("--roi-frac", type=float, default=0.5)
    s.add_argument("--label", default="pred")
    s.add_argument("--out", default=None, help="CSV report path")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("adjoint-test", help="check <Ax, y> = <x, A^H y>")
    common(s)
    s.add_argument("--nx", type=int, default=64)
    s.add_argument("--nt", type=int, default=12)
    s.add_argument("--coils", type=int, default=4)
    s.add_argument("--spokes-per-frame", type=int, default=8)
    s.add_argument("--trials", type=int, default=20)
    s.add_argument("--tol", type=float, default=1e-4)
    s.set_defaults(func=cmd_adjoint_test)

    s = sub.add_parser("gradcheck", help="finite differences vs reverse mode, end to end")
    common(s)
    s.add_argument("--nx", type=int, default=16)
    s.add_argument("--nt", type=int, default=8)
    s.add_argument("--coils", type=int, default=2)
    s.add_argument("--M", type=int, default=1)
    s.add_argument("--ncg", type=int, default=3)
    s.add_argument("--n-params", type=int, default=10)
    s.add_argument("--tol", type=float, default=1e-2)
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("bench", help="time/memory sweep of the DC block")
    common(s)
    s.add_argument("--sizes", type=_int_list, default=[32, 64, 96])
    s.add_argument("--n-theta", type=_int_list, default=[8, 16], help="spokes per frame")
    s.add_argument("--ncg", type=_int_list, default=[1, 2, 4, 8, 12])
    s.add_argument("--reps", type=int, default=3)
    s.add_argument("--nt", type=int, default=8)
    s.add_argument("--coils", type=int, default=4)
    s.add_argument("--kernels", action="store_true", help="also compare gridding backends")
    s.add_argument("--out", default="bench.csv")
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    from .autodiff import CheckpointError
    from .dc_cg import NumericalError
    from .formats import FormatError
    parser = build_parser()
    args = parser.parse_args(argv)      # exits 2 on malformed flags
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        _set_threads(args.threads)
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"radcine: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"radcine: missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (FormatError, CheckpointError) as exc:
        print(f"radcine: format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (NumericalError, FloatingPointError) as exc:
        print(f"radcine: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
