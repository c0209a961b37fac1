"""Command-line entry point.

Subcommands: terrain (generate profiles), solve (path loss over profiles),
infer (surrogate predictions), baseline (deygout / two-ray), eval (error
tables and plot data).  A JSON config file can predefine flag defaults;
explicit flags win.  Progress goes to stderr, machine output to files; a
deterministic JSON run-manifest is written beside every output file.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from typing import List, Optional

import numpy as np

from . import baselines, dataset, evalreport, inference, mom
from .emcore import RadioConfig, wavenumber
from .terrain import FractalParams, GaussianParams

PROGRESS_EVERY = 25


class UsageError(Exception):
    """Command-line level misuse detected after parsing."""


def _progress(label):
    def report(count):
        if count % PROGRESS_EVERY == 0:
            print(f"{label}: {count} records done", file=sys.stderr)
    return report


def _write_manifest(out_path, command: str, params: dict) -> None:
    manifest = {"command": command, "parameters": params,
                "format_version": dataset.VERSION}
    path = f"{out_path}.manifest.json"
    tmp = f"{path}.tmp-{os.getpid()}"
    with open(tmp, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    os.replace(tmp, path)


def _radio_from_args(args, base: Optional[RadioConfig] = None) -> RadioConfig:
    base = base or RadioConfig()
    return RadioConfig(
        frequency_hz=args.freq if args.freq is not None else base.frequency_hz,
        tx_height_m=args.tx_height if args.tx_height is not None else base.tx_height_m,
        rx_height_m=args.rx_height if args.rx_height is not None else base.rx_height_m,
        rx_spacing_m=args.spacing if getattr(args, "spacing", None) is not None
        else base.rx_spacing_m,
        n_points=args.n_points if getattr(args, "n_points", None) is not None
        else base.n_points,
    )


def cmd_terrain(args) -> int:
    kind = {"gp": "gaussian", "gaussian": "gaussian", "fractal": "fractal"}[args.kind]
    if kind == "gaussian":
        params = GaussianParams(rms_height_m=args.rms, corr_length_m=args.corr)
    else:
        params = FractalParams(variance=args.variance, hurst=args.hurst)
    radio = _radio_from_args(args)
    profiles = [dataset.make_profile(kind, params, radio.n_points,
                                     radio.rx_spacing_m, args.seed + i)
                for i in range(args.n)]
    dataset.write_profiles(profiles, radio,
                           {"kind": kind, "params": dataclasses.asdict(params)},
                           args.seed, args.out)
    _write_manifest(args.out, "terrain", {
        "kind": kind, "params": dataclasses.asdict(params), "n": args.n,
        "seed": args.seed, "radio": dataclasses.asdict(radio)})
    print(f"wrote {args.n} profiles to {args.out}", file=sys.stderr)
    return 0


def _solve_worker(task):
    record, cfg = task
    solved = mom.solve_profile(record.profile, cfg)
    return dataset.PathLossRecord(record.profile,
                                  solved.values_db.astype(np.float32), cfg.method)


def cmd_solve(args) -> int:
    header, records = dataset.read_dataset(args.input)
    radio = _radio_from_args(args, header.radio)
    cfg = mom.SolverConfig(radio=radio, method=args.method,
                           samples_per_wavelength=args.samples_per_lambda,
                           near_group_factor=args.near_factor)
    basis = mom.discretize(records[0].profile, cfg)
    if args.method == "exact" and basis.n_unknowns > 50_000:
        print(f"warning: exact back substitution over ~{basis.n_unknowns} unknowns "
              "is O(N^2) and will be slow", file=sys.stderr)
    tasks = [(rec, cfg) for rec in records]
    if args.jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            solved = []
            for i, rec in enumerate(pool.map(_solve_worker, tasks), start=1):
                solved.append(rec)
                _progress("solve")(i)
    else:
        solved = []
        for i, task in enumerate(tasks, start=1):
            solved.append(_solve_worker(task))
            _progress("solve")(i)
    values = np.concatenate([r.path_loss_db for r in solved]).astype(np.float64)
    finite = values[np.isfinite(values)]
    out_header = dataset.DatasetHeader(
        radio=radio, generator=header.generator, n_records=len(solved),
        base_seed=header.base_seed,
        extra={"mean_path_loss_db": float(np.mean(finite)),
               "std_path_loss_db": float(np.std(finite))})
    dataset.write_records(args.out, out_header, solved)
    _write_manifest(args.out, "solve", {
        "input": str(args.input), "method": args.method,
        "samples_per_lambda": args.samples_per_lambda,
        "near_factor": args.near_factor, "radio": dataclasses.asdict(radio)})
    print(f"solved {len(solved)} profiles -> {args.out} "
          f"(corpus mean {out_header.extra['mean_path_loss_db']:.1f} dB)",
          file=sys.stderr)
    return 0


def cmd_infer(args) -> int:
    weights = inference.load_weights(args.weights, strict=not args.no_strict)
    if args.with_uncertainty and weights.heads != 2:
        raise UsageError("--with-uncertainty requires a two-head network; "
                         f"these weights have heads={weights.heads}")
    header, records = dataset.read_dataset(args.input)
    heights = np.stack([r.profile.heights_m for r in records])
    preds: List[inference.SurrogatePrediction] = []
    t0 = time.perf_counter()
    for b0 in range(0, len(records), args.batch_size):
        preds.extend(inference.forward_batch(weights,
                                             heights[b0:b0 + args.batch_size]))
    elapsed = time.perf_counter() - t0
    print(f"inference: {len(records)} profiles in {elapsed:.3f} s "
          f"({1e3 * elapsed / len(records):.2f} ms/profile)", file=sys.stderr)
    out_records = [dataset.PathLossRecord(rec.profile, pred.mean_db, "surrogate")
                   for rec, pred in zip(records, preds)]
    out_header = dataset.DatasetHeader(
        radio=header.radio, generator=header.generator,
        n_records=len(out_records), base_seed=header.base_seed,
        extra={"weights_file": str(args.weights), "heads": weights.heads})
    dataset.write_records(args.out, out_header, out_records)
    _write_manifest(args.out, "infer", {
        "weights": str(args.weights), "input": str(args.input),
        "batch_size": args.batch_size, "with_uncertainty": args.with_uncertainty})
    if args.with_uncertainty:
        sigma_out = args.sigma_out or f"{args.out}.sigma.csv"
        tmp = f"{sigma_out}.tmp-{os.getpid()}"
        with open(tmp, "w") as f:
            for pred in preds:
                f.write(",".join(f"{s:.6g}" for s in pred.sigma_db) + "\n")
        os.replace(tmp, sigma_out)
        print(f"sigma columns -> {sigma_out}", file=sys.stderr)
    return 0


def cmd_baseline(args) -> int:
    header, records = dataset.read_dataset(args.input)
    radio = _radio_from_args(args, header.radio)
    k0 = wavenumber(radio.frequency_hz)
    out_records = []
    for rec in records:
        profile = rec.profile
        n = profile.n_points
        values = np.empty(n)
        if args.model == "deygout":
            tx = mom.transmitter_position(profile, radio)
            rx0 = np.array([0.0, profile.heights_m[0] + radio.rx_height_m])
            values[0] = mom.free_space_db(float(np.hypot(*(rx0 - tx))), k0)
            for idx in range(1, n):
                values[idx] = -baselines.deygout_loss(profile, radio, idx).loss_db
        else:  # tworay: flat-plane reference, terrain ignored
            for idx in range(n):
                d = max(idx * profile.spacing_m, 1e-6)
                values[idx] = baselines.two_ray_reference(
                    d, radio.tx_height_m, radio.rx_height_m, k0)
        out_records.append(dataset.PathLossRecord(
            profile, values.astype(np.float32), "baseline"))
    out_header = dataset.DatasetHeader(
        radio=radio, generator={"kind": args.model, "params": {}},
        n_records=len(out_records), base_seed=header.base_seed)
    dataset.write_records(args.out, out_header, out_records)
    _write_manifest(args.out, "baseline", {
        "input": str(args.input), "model": args.model,
        "radio": dataclasses.asdict(radio)})
    print(f"{args.model} baseline over {len(out_records)} profiles -> {args.out}",
          file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    _, ref_records = dataset.read_dataset(args.ref)
    refs = {"reference": [r.path_loss_db for r in ref_records]}
    models = []
    for pred_path in args.pred:
        _, pred_records = dataset.read_dataset(pred_path)
        if len(pred_records) != len(ref_records):
            raise UsageError(f"{pred_path} holds {len(pred_records)} records, "
                             f"reference holds {len(ref_records)}")
        name = os.path.splitext(os.path.basename(pred_path))[0]
        models.append((name, [r.path_loss_db for r in pred_records]))
    report = evalreport.compare_table(models, refs, mask_first=args.mask_first)
    os.makedirs(args.out_dir, exist_ok=True)
    with open(os.path.join(args.out_dir, "report.txt"), "w") as f:
        f.write(report.to_text() + "\n")
    with open(os.path.join(args.out_dir, "report.json"), "w") as f:
        f.write(report.to_json() + "\n")
    print(report.to_text())

    idx = args.plot_index
    if not 0 <= idx < len(ref_records):
        raise UsageError(f"--plot-index {idx} out of range")
    predictions = {"reference": ref_records[idx].path_loss_db}
    for name, vals in models:
        predictions[name] = vals[idx]
    sigma = None
    sigma_for = None
    if args.sigma_csv:
        rows = np.loadtxt(args.sigma_csv, delimiter=",", ndmin=2)
        sigma = rows[idx]
        sigma_for = models[0][0] if models else "reference"
    evalreport.emit_plot_data(
        ref_records[idx].profile, predictions,
        os.path.join(args.out_dir, f"profile_{idx}.csv"),
        os.path.join(args.out_dir, f"profile_{idx}.svg"),
        sigma_for=sigma_for, sigma=sigma)
    for out in ("report.txt", "report.json", f"profile_{idx}.csv", f"profile_{idx}.svg"):
        _write_manifest(os.path.join(args.out_dir, out), "eval", {
            "ref": str(args.ref), "pred": [str(p) for p in args.pred],
            "mask_first": args.mask_first, "plot_index": idx})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="terraprop",
        description="terrain radio propagation laboratory")
    parser.add_argument("--config", help="JSON file with flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("terrain", help="generate random terrain profiles")
    p.add_argument("--kind", required=True, choices=["gp", "gaussian", "fractal"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rms", type=float, default=20.0, help="gaussian rms height (m)")
    p.add_argument("--corr", type=float, default=800.0, help="gaussian correlation length (m)")
    p.add_argument("--variance", type=float, default=30.0, help="fractal top-level variance (m^2)")
    p.add_argument("--hurst", type=float, default=1.2)
    p.add_argument("--n-points", type=int, default=None)
    p.add_argument("--spacing", type=float, default=None)
    p.add_argument("--freq", type=float, default=None)
    p.add_argument("--tx-height", type=float, default=None)
    p.add_argument("--rx-height", type=float, default=None)
    p.set_defaults(func=cmd_terrain)

    p = sub.add_parser("solve", help="solve path loss over stored profiles")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--method", choices=["exact", "faffa"], default="faffa")
    p.add_argument("--freq", type=float, default=None)
    p.add_argument("--samples-per-lambda", type=float, default=10.0)
    p.add_argument("--near-factor", type=float, default=2.0)
    p.add_argument("--tx-height", type=float, default=None)
    p.add_argument("--rx-height", type=float, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("infer", help="run the surrogate over stored profiles")
    p.add_argument("--weights", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--with-uncertainty", action="store_true")
    p.add_argument("--sigma-out", default=None)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--no-strict", action="store_true",
                   help="skip reference-architecture conformance checks")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("baseline", help="reference propagation models")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--model", required=True, choices=["deygout", "tworay"])
    p.add_argument("--out", required=True)
    p.add_argument("--freq", type=float, default=None)
    p.add_argument("--tx-height", type=float, default=None)
    p.add_argument("--rx-height", type=float, default=None)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("eval", help="error statistics and plot data")
    p.add_argument("--ref", required=True)
    p.add_argument("--pred", nargs="+", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--mask-first", action="store_true",
                   help="drop the transmitter-adjacent receiver point")
    p.add_argument("--plot-index", type=int, default=0)
    p.add_argument("--sigma-csv", default=None,
                   help="sigma columns from `infer --with-uncertainty` "
                        "(band drawn around the first prediction)")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if "--config" in argv:
        cfg_path = argv[argv.index("--config") + 1]
        try:
            with open(cfg_path) as f:
                defaults = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: cannot read config {cfg_path}: {exc}", file=sys.stderr)
            return 2
        parser.set_defaults(**defaults)
        for action in parser._actions:
            if isinstance(action, argparse._SubParsersAction):
                for sub in action.choices.values():
                    sub.set_defaults(**defaults)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - runtime failures exit 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
