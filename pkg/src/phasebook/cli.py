"""Command-line front end: mse-table, ber-sweep, codebook-export, ops-count, plot."""
from __future__ import annotations

import argparse
import math
import sys

from . import codebook as cb_mod
from . import harness
from .errors import ConfigError, EstimationError, FramingError

ALL_CELLS = [(q, j) for j in (1, 2, 4, 5, 8) for q in (2, 3, 4, 5, 6)]


def _parse_cells(text: str) -> list[tuple[int, int]]:
    if text.strip().lower() == "all":
        return list(ALL_CELLS)
    cells = []
    for tok in text.split(","):
        q_str, _, j_str = tok.strip().partition("x")
        if not j_str:
            raise ConfigError(f"cell {tok!r} must look like QxJ, e.g. 3x4")
        cells.append((int(q_str), int(j_str)))
    return cells


def _add_mse_table(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("mse-table", help="simulated + closed-form trajectory MSE grid")
    p.add_argument("--cells", default="all", help="'all' or comma list of QxJ cells")
    p.add_argument("--n-fft", type=int, default=64)
    p.add_argument("--beta-t", type=float, default=0.01)
    p.add_argument("--n-realizations", type=int, default=5000)
    p.add_argument("--n-realizations-large", type=int, default=500)
    p.add_argument("--seed", type=int, default=20260810)
    p.add_argument("--out", default=None, help="CSV path (prints a table otherwise)")
    p.set_defaults(func=_cmd_mse_table)


def _cmd_mse_table(args) -> int:
    table = harness.run_mse(
        _parse_cells(args.cells),
        n_fft=args.n_fft,
        beta_t=args.beta_t,
        n_realizations=args.n_realizations,
        n_realizations_large=args.n_realizations_large,
        master_seed=args.seed,
    )
    if args.out:
        harness.emit_mse_csv(table, args.out)
        print(f"wrote {args.out}")
    else:
        print(f"{'Q':>3} {'J':>3} {'K':>7} {'MSE_sim':>9} {'+-':>7} {'MSE_form':>9}")
        for c in table.cells:
            print(
                f"{c.q:>3} {c.j:>3} {c.k:>7} {c.mse_sim:>9.4f} "
                f"{c.mse_sim_se:>7.4f} {c.mse_analytic:>9.4f}"
            )
    return 0


def _add_ber_sweep(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("ber-sweep", help="Monte-Carlo BER over an Eb/N0 grid")
    p.add_argument("--config", default=None, help="key = value config file")
    for name, typ in harness._FIELD_TYPES.items():
        flag = "--" + name.replace("_", "-")
        if typ is bool:
            p.add_argument(flag, default=None, type=_parse_bool, metavar="BOOL")
        elif typ is tuple:
            p.add_argument(flag, default=None, type=str, metavar="A,B,...")
        else:
            p.add_argument(flag, default=None, type=typ)
    p.add_argument("--out", default=None, help="CSV output path")
    p.add_argument("--plot", default=None, help="also write a BER plot image")
    p.set_defaults(func=_cmd_ber_sweep)


def _parse_bool(text: str) -> bool:
    return bool(harness._coerce(text, bool))


def _cmd_ber_sweep(args) -> int:
    kwargs = harness.parse_config_file(args.config) if args.config else {}
    for name, typ in harness._FIELD_TYPES.items():
        value = getattr(args, name, None)
        if value is None:
            continue
        kwargs[name] = harness._coerce(value, typ) if isinstance(value, str) else value
    config = harness.make_config(**kwargs)
    result = harness.run_ber(config)
    for p in result.points:
        print(
            f"Eb/N0 {p.ebn0_db:6.2f} dB  BER {p.ber:.4e} +- {p.stderr:.1e}  "
            f"({p.bit_errors} errors / {p.bits} bits, {p.frames} frames)"
        )
    if args.out:
        harness.emit_csv(result, args.out)
        print(f"wrote {args.out}")
    if args.plot:
        harness.emit_plot(result, args.plot)
        print(f"wrote {args.plot}")
    return 0


def _add_codebook_export(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("codebook-export", help="write a trajectory codebook table")
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--j", type=int, required=True)
    p.add_argument("--n-fft", type=int, default=64)
    p.add_argument("--beta-t", type=float, default=0.01)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_codebook_export)


def _cmd_codebook_export(args) -> int:
    sigma_eps_sq = 2.0 * math.pi * args.beta_t / args.n_fft
    design = cb_mod.design_codebook(args.n_fft, args.j, args.q, sigma_eps_sq)
    cb = cb_mod.build_codebook(design)
    cb_mod.save_codebook(cb, args.out)
    print(f"wrote {args.out} ({cb.k} trajectories x {cb.n_fft} samples)")
    return 0


def _add_ops_count(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("ops-count", help="closed-form and measured operation counts")
    p.add_argument("--q", type=int, default=3)
    p.add_argument("--j", type=int, default=4)
    p.add_argument("--n-fft", type=int, default=64)
    p.add_argument("--n-iters", type=int, default=1)
    p.add_argument("--d-past", type=int, default=3)
    p.add_argument("--ebn0-db", type=float, default=16.0)
    p.set_defaults(func=_cmd_ops_count)


def _cmd_ops_count(args) -> int:
    config = harness.make_config(
        q=args.q, j_segments=args.j, n_fft=args.n_fft,
        n_iters=args.n_iters, d_past=args.d_past,
        ebn0_db_grid=(args.ebn0_db,), frames_per_point=1,
    )
    counts = harness.count_ops(config)
    print(f"K = {counts['k']}, N = {counts['n_fft']}, iterations = {counts['n_iters']}")
    print(f"closed-form multiplications per symbol: {counts['formula_mults']}")
    print(f"closed-form additions per symbol:       {counts['formula_adds']}")
    print(f"measured multiplications per symbol:    {counts['measured_mults']}")
    print(f"measured additions per symbol:          {counts['measured_adds']}")
    return 0


def _add_plot(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("plot", help="plot BER curves from sweep CSV files")
    p.add_argument("csv", nargs="+", help="CSV files written by ber-sweep")
    p.add_argument("--labels", default=None, help="comma-separated series labels")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_plot)


def _cmd_plot(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels = args.labels.split(",") if args.labels else None
    fig, ax = plt.subplots(figsize=(7, 5))
    for i, path in enumerate(args.csv):
        xs, ys = [], []
        with open(path) as fh:
            header = fh.readline()
            for line in fh:
                parts = line.strip().split(",")
                if len(parts) < 3:
                    continue
                xs.append(float(parts[1]))
                ys.append(max(float(parts[2]), 1e-12))
        label = labels[i] if labels and i < len(labels) else path
        ax.semilogy(xs, ys, marker="o", label=label)
    ax.set_xlabel("Eb/N0 (dB)")
    ax.set_ylabel("BER")
    ax.grid(True, which="both", alpha=0.4)
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.out)
    print(f"wrote {args.out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="phasebook",
        description="OFDM phase-noise mitigation by trajectory codebooks",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_mse_table(sub)
    _add_ber_sweep(sub)
    _add_codebook_export(sub)
    _add_ops_count(sub)
    _add_plot(sub)
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FramingError, EstimationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
