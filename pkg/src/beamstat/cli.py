"""Command line entry point: ``beamstat <subcommand> [options]``."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import harness
from .channel import simulate_rx
from .sysmodel import SystemConfig, load_config

EXIT_OK = 0
EXIT_PARTIAL = 2


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text: str) -> tuple:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _names(text: str) -> tuple:
    names = tuple(x.strip() for x in text.split(",") if x.strip())
    for n in names:
        if n not in harness.ESTIMATORS:
            raise argparse.ArgumentTypeError(f"unknown estimator {n!r}")
    return names


def _base_config(args) -> SystemConfig:
    cfg = load_config(args.config) if args.config else SystemConfig()
    return harness.scenario_config(args.scenario, cfg) if args.scenario else cfg


def _sibling(out: Path, suffix: str, ext: str) -> Path:
    return out.with_name(f"{out.stem}_{suffix}{ext}")


def _write_table(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _curves(summary: dict, x_axis: str) -> dict:
    """Regroup ``{(est, snr, T): val}`` into one ``(x, y)`` curve per label."""
    curves: dict = {}
    for (est, snr, T), val in summary.items():
        if x_axis == "snr":
            label, x = f"{est} T={T}", snr
        else:
            label, x = f"{est} {snr:g} dB", T
        curves.setdefault(label, ([], []))
        curves[label][0].append(x)
        curves[label][1].append(val)
    return curves


def _report_sweep(args, rows, key: str, ylabel: str) -> None:
    out = Path(args.out)
    summary = harness.summarize(rows, key)
    x_axis = "snr" if len(args.snr) > 1 or len(args.samples) == 1 else "T"
    curves = _curves(summary, x_axis)
    if args.emit_plotdata:
        for label, (x, y) in sorted(curves.items()):
            tag = label.replace(" ", "_").replace("=", "")
            _write_table(_sibling(out, tag, ".csv"), [x_axis, key], zip(x, [f"{v:.6f}" for v in y]))
    if not args.no_plots and curves:
        from .plotting import plot_curves
        xlabel = "SNR (dB)" if x_axis == "snr" else "samples T"
        plot_curves(curves, xlabel, ylabel, out.with_suffix(".png"), logx=x_axis == "T")


def _run_sweep(args, compute_mse: bool) -> int:
    estimators = args.estimator
    if compute_mse and not args.no_reference:
        estimators = estimators + harness.REFERENCE_PRIORS
    spec = harness.ExperimentSpec(
        scenario=args.scenario or "custom", config=_base_config(args), snr_db=args.snr,
        samples=args.samples, estimators=estimators, repetitions=args.reps, seed=args.seed,
        compute_mse=compute_mse, D=args.iters, record_timing=args.record_timing,
        log_base=2.0 if args.log2 else 10.0, out=args.out,
    )
    rows = harness.run_experiment(spec, jobs=args.jobs)
    harness.write_csv(rows, args.out)
    if args.json:
        harness.write_json(rows, Path(args.out).with_suffix(".json"))
    key = "mse_db" if compute_mse else "nmse_db"
    _report_sweep(args, rows, key, "MSE (dB)" if compute_mse else "NMSE (dB)")
    failed = sum(1 for r in rows if r.error)
    for (est, snr, T), val in harness.summarize(rows, key).items():
        print(f"{est:9s} snr={snr:6g} T={T:3d} median {key}={val:8.3f}")
    if failed:
        print(f"{failed} of {len(rows)} rows failed", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_sweep_nmse(args) -> int:
    return _run_sweep(args, compute_mse=False)


def cmd_sweep_mse(args) -> int:
    return _run_sweep(args, compute_mse=True)


def cmd_estimate(args) -> int:
    cfg = _base_config(args)
    cfg = cfg.replace(sigma_z2=harness.snr_to_sigma2(args.snr[0]), T=args.samples[0], seed=args.seed)
    setup = harness.make_setup(cfg)
    maps = harness.draw_maps(setup, args.seed)
    batch = simulate_rx(maps, setup.pilots, setup.grids, cfg, setup.dims, seed=args.seed)
    est = args.estimator[0]
    out = Path(args.out)
    if est.startswith("kl"):
        from .powerest import accumulate_phi, estimate
        st = estimate(accumulate_phi(batch, setup.grids, setup.pilots), setup.op(est), D=args.iters)
        omega, trace = st.omega_est, st.objective
    else:
        res = harness.mfocuss(harness.mmv_from_batch(batch, setup.grids, setup.pilots))
        omega, trace = res.omega_hat, res.objective
    users = harness.split_per_user(omega, setup.dims, cfg.P_per_root)
    nmse = harness.nmse_metric(users, maps)

    with open(out, "w", newline="") as fh:
        fh.write(f"# rows={omega.shape[0]} cols={omega.shape[1]} estimator={est} "
                 f"snr_db={args.snr[0]:g} T={cfg.T} seed={args.seed}\n")
        csv.writer(fh, lineterminator="\n").writerows([[f"{v:.9e}" for v in row] for row in omega])
    _write_table(_sibling(out, "trace", ".csv"), ["iter", "objective"],
                 [(i, f"{f:.9e}") for i, f in enumerate(trace)])
    if not args.no_plots:
        from .plotting import plot_power_map, plot_traces
        plot_power_map(omega, out.with_suffix(".png"), title=f"{est}, NMSE {nmse:.2f} dB")
        plot_traces({est: np.asarray(trace)}, _sibling(out, "trace", ".png"))
    print(f"{est}: {len(trace) - 1} accepted steps, NMSE {nmse:.3f} dB")
    return EXIT_OK


def cmd_convergence(args) -> int:
    cfg = _base_config(args).replace(T=args.samples[0])
    est = args.estimator[0]
    if not est.startswith("kl"):
        print("convergence traces are only defined for the KL estimators", file=sys.stderr)
        return 1
    traces = harness.convergence_traces(cfg, args.snr, seed=args.seed, D=args.iters, estimator=est)
    out = Path(args.out)
    rows = []
    for snr, tr in traces.items():
        rows += [(f"{snr:g}", i, f"{f:.9e}") for i, f in enumerate(tr)]
        print(f"snr={snr:6g}: {len(tr) - 1} steps, within 1% of final after "
              f"{harness.iterations_to_within(tr)} iterations")
    _write_table(out, ["snr_db", "iter", "objective"], rows)
    if not args.no_plots:
        from .plotting import plot_traces
        plot_traces({f"{s:g} dB": tr for s, tr in traces.items()}, out.with_suffix(".png"))
    return EXIT_OK


def cmd_bench(args) -> int:
    sizes = harness.DEFAULT_BENCH_SIZES
    if args.sizes:
        sizes = tuple(tuple(int(v) for v in s.split("x")) for s in args.sizes.split(","))
    rows = harness.bench_fast_vs_dense(sizes, repeats=args.repeats, seed=args.seed)
    header = list(rows[0])
    _write_table(args.out, header, [[r[h] if isinstance(r[h], int) else f"{r[h]:.6g}" for h in header]
                                    for r in rows])
    for r in rows:
        print(f"N_r={r['N_r']:5d} width={r['width']:4d} dense {r['dense_ms']:9.2f} ms "
              f"fast {r['fast_ms']:8.2f} ms ratio {r['ratio']:6.2f} diff {r['max_rel_diff']:.1e}")
    if not args.no_plots:
        from .plotting import plot_curves
        x = [r["N_r"] * r["width"] for r in rows]
        plot_curves({"dense/fast": (x, [r["ratio"] for r in rows])}, "entries of Omega",
                    "time ratio", Path(args.out).with_suffix(".png"), logx=True)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with system parameters")
    common.add_argument("--scenario", choices=sorted(harness.SCENARIOS),
                        help="preset pilot allocation (overrides Q and P_per_root)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--estimator", type=_names, default=("kl-fast",),
                        help="comma list of kl-dense, kl-fast, mfocuss")
    common.add_argument("--snr", type=_floats, default=(30.0,), help="comma list of SNRs in dB")
    common.add_argument("--samples", type=_ints, default=(10,), help="comma list of sample counts T")
    common.add_argument("--iters", type=int, default=200, help="iteration budget D of the KL estimator")
    common.add_argument("--emit-plotdata", action="store_true", help="write one CSV per curve")
    common.add_argument("--no-plots", action="store_true", help="skip PNG figures")

    p = argparse.ArgumentParser(prog="beamstat", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, default_out, help_text):
        sp = sub.add_parser(name, parents=[common], help=help_text)
        sp.add_argument("--out", default=default_out)
        sp.set_defaults(func=func)
        return sp

    add("estimate", cmd_estimate, "omega.csv", "estimate one power map and write it with its trace")
    for name, func, out in (("sweep-nmse", cmd_sweep_nmse, "nmse.csv"),
                            ("sweep-mse", cmd_sweep_mse, "mse.csv")):
        sp = add(name, func, out, f"{name.split('-')[1].upper()} sweep over SNR and T")
        sp.add_argument("--reps", type=int, default=1)
        sp.add_argument("--jobs", type=int, default=1)
        sp.add_argument("--json", action="store_true", help="also write a JSON mirror")
        sp.add_argument("--record-timing", action="store_true",
                        help="fill runtime_ms (makes the CSV run-dependent)")
        sp.add_argument("--log2", action="store_true", help="report 10*log2 values instead of dB")
        if name == "sweep-mse":
            sp.add_argument("--no-reference", action="store_true",
                            help="omit the true-prior and all-ones-prior rows")
        else:
            sp.set_defaults(no_reference=True)
    add("convergence", cmd_convergence, "convergence.csv", "objective traces per SNR")
    sp = add("bench", cmd_bench, "bench.csv", "dense vs FFT gradient timing")
    sp.add_argument("--sizes", help="comma list like 8x8x48,12x12x72 (M_rz x M_rx x M_p)")
    sp.add_argument("--repeats", type=int, default=5)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
