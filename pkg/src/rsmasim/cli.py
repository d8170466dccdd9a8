"""Command-line entry point: ``rsmasim <subcommand> [options]``.

Subcommands
    sweep-mcs          empirical sum throughput and quadrant tallies over the MCS grid
    sweep-ber          coded BER versus demapper-input SNR plus JD-over-SIC threshold gains
    calibrate-channel  mean measured alpha/rho of the channel generator per case
    demo-loopback      a few near-noiseless frames through the full OFDM chain

Options given on the command line override the YAML file passed with
``--config``; ``--dump-config`` prints the resulting configuration and exits.
Exit status is 0 on success, 2 for invalid configuration or arguments and 1
for runtime failures.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, ExperimentConfig

log = logging.getLogger("rsmasim")


def _on_off(value: str) -> bool:
    v = value.lower()
    if v not in ("on", "off"):
        raise argparse.ArgumentTypeError(f"expected on or off, got {value!r}")
    return v == "on"


def _seed(value: str) -> int:
    try:
        seed = int(value, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {value!r}") from None
    if not 0 <= seed < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed must fit in an unsigned 64-bit integer, got {seed}")
    return seed


def _common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="YAML experiment configuration")
    p.add_argument("--seed", type=_seed, help="master seed (run r uses seed + r)")
    p.add_argument("--case", type=int, choices=range(1, 7), metavar="1..6", help="scenario preset")
    p.add_argument("--receiver", choices=("jd", "sic", "both"))
    p.add_argument("--runs", type=int, help="frames per grid point")
    p.add_argument("--out", help="output directory")
    p.add_argument("--format", choices=("csv", "json"), help="write only this format")
    p.add_argument("--genie-csi", type=_on_off, metavar="{on,off}")
    p.add_argument("--workers", type=int, help="worker processes")
    p.add_argument("--dump-config", action="store_true", help="print the effective configuration and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="rsmasim", description="RSMA joint-demapping vs SIC link simulator")
    parser.add_argument("--dump-config", action="store_true", dest="top_dump",
                        help="print the default configuration and exit")
    sub = parser.add_subparsers(dest="command", metavar="command")

    mcs = sub.add_parser("sweep-mcs", parents=[common], help="throughput over the MCS grid")
    mcs.add_argument("--snr-db", type=float, nargs="+", help="transmit SNR grid (dB)")
    mcs.add_argument("--t", type=float, nargs="+", help="common power fraction grid")
    mcs.add_argument("--mcs-common", nargs="+", help="common MCS labels, e.g. 16QAM-3/4")
    mcs.add_argument("--mcs-private", nargs="+", help="private MCS labels")

    ber = sub.add_parser("sweep-ber", parents=[common], help="coded BER and threshold gains")
    ber.add_argument("--snr-db", type=float, nargs="+", help="demapper-input SNR grid (dB)")
    ber.add_argument("--t", type=float, help="common power fraction")
    ber.add_argument("--mcs", nargs=3, metavar=("COMMON", "PRIVATE1", "PRIVATE2"))
    ber.add_argument("--bootstrap", type=int, help="bootstrap resamples (0 disables)")

    sub.add_parser("calibrate-channel", parents=[common], help="alpha/rho generator check")

    demo = sub.add_parser("demo-loopback", parents=[common], help="near-noiseless end-to-end frames")
    demo.add_argument("--mcs", nargs=3, metavar=("COMMON", "PRIVATE1", "PRIVATE2"))
    demo.add_argument("--taps", type=int, default=1, help="channel taps (1 enables the time-domain path)")
    demo.add_argument("--snr-db", type=float, default=120.0, help="transmit SNR (dB)")
    return parser


def effective_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.run.master_seed = args.seed
    if args.case is not None:
        cfg.scenario.case = args.case
    if args.receiver is not None:
        cfg.run.receiver = args.receiver
    if args.runs is not None:
        cfg.run.runs_per_point = args.runs
    if args.out is not None:
        cfg.output.dir = args.out
    if args.format is not None:
        cfg.output.formats = [args.format]
    if args.genie_csi is not None:
        cfg.run.genie_csi = args.genie_csi
    if args.workers is not None:
        cfg.run.workers = args.workers
    if args.command == "sweep-mcs":
        if args.snr_db:
            cfg.mcs_sweep.snr_db = args.snr_db
        if args.t:
            cfg.mcs_sweep.t = args.t
        if args.mcs_common:
            cfg.mcs.common = args.mcs_common
        if args.mcs_private:
            cfg.mcs.private = args.mcs_private
    elif args.command == "sweep-ber":
        if args.snr_db:
            cfg.ber_sweep.snr_db = args.snr_db
        if args.t is not None:
            cfg.ber_sweep.t = args.t
        if args.mcs:
            cfg.ber_sweep.mcs = args.mcs
        if args.bootstrap is not None:
            cfg.ber_sweep.bootstrap = args.bootstrap
    elif args.command == "demo-loopback":
        if args.mcs:
            cfg.ber_sweep.mcs = args.mcs
        cfg.scenario.taps = args.taps
    cfg.validate()
    return cfg


def _demo_loopback(cfg: ExperimentConfig, snr_db: float):
    from .harness import FrameSpec, SweepReport, _metadata, simulate_frame
    from .transceiver import McsGroup

    scenario = cfg.scenario.target()
    group = McsGroup.parse(*cfg.ber_sweep.mcs)
    spec = FrameSpec(scenario, group, cfg.ber_sweep.t, snr_db, cfg.receivers, cfg.run.genie_csi,
                     time_domain=scenario.taps == 1, list_size=cfg.run.list_size)
    report = SweepReport("loopback", _metadata(cfg, "loopback"))
    for r in range(cfg.run.runs_per_point):
        seed = cfg.run.master_seed + r
        out = simulate_frame(spec, seed)
        for name in cfg.receivers:
            report.rows.append({
                "run": r, "seed": seed, "receiver": name, "snr_db": snr_db,
                "time_domain": spec.time_domain,
                "common_errors_u1": out.err_c[name][0], "common_errors_u2": out.err_c[name][1],
                "private_errors_u1": out.err_p[name][0], "private_errors_u2": out.err_p[name][1],
            })
    return report


def _summary(report) -> str:
    if report.kind == "mcs_sweep":
        best = {}
        for row in report.rows:
            if row["receiver"] not in best or row["throughput_mbps"] > best[row["receiver"]]["throughput_mbps"]:
                best[row["receiver"]] = row
        return "\n".join(f"{rx}: best {r['mcs_c']}/{r['mcs_1']}/{r['mcs_2']} t={r['t']:g} "
                         f"snr={r['snr_db']:g} dB -> {r['throughput_mbps']:.2f} Mbps"
                         for rx, r in best.items())
    if report.kind == "ber_sweep":
        lines = []
        for g in report.extra.get("threshold_gains", []):
            point = "n/a" if g["delta_gamma_db"] is None else f"{g['delta_gamma_db']:.2f} dB"
            bound = " (lower bound)" if g["censored"] else ""
            lines.append(f"{g['stream']}: delta_gamma({g['beta']:g}) = {point}{bound}, "
                         f"95% CI [{g['ci_low_db']:.2f}, {g['ci_high_db']:.2f}]")
        return "\n".join(lines) or f"{len(report.rows)} BER points"
    if report.kind == "calibration":
        return "\n".join(f"case {r['case']}: alpha {r['alpha_mean_db']:.3f} dB (target {r['alpha_target_db']}), "
                         f"rho {r['rho_mean']:.4f} (target {r['rho_target']}) "
                         f"{'ok' if r['alpha_ok'] and r['rho_ok'] else 'OUT OF TOLERANCE'}"
                         for r in report.rows)
    errors = sum(r["common_errors_u1"] + r["common_errors_u2"] + r["private_errors_u1"]
                 + r["private_errors_u2"] for r in report.rows)
    return f"{len(report.rows)} receiver-frames, {errors} bit errors"


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        if args.top_dump:
            sys.stdout.write(ExperimentConfig().dump())
            return 0
        parser.print_usage(sys.stderr)
        print("rsmasim: error: a subcommand is required", file=sys.stderr)
        return 2

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = effective_config(args)
    except ConfigError as exc:
        print(f"rsmasim: config error: {exc}", file=sys.stderr)
        return 2
    if args.dump_config or args.top_dump:
        sys.stdout.write(cfg.dump())
        return 0

    from . import harness

    try:
        if args.command == "sweep-mcs":
            report = harness.run_mcs_sweep(cfg)
        elif args.command == "sweep-ber":
            report = harness.run_ber_sweep(cfg)
        elif args.command == "calibrate-channel":
            from .channel import CASES

            report = harness.run_calibration(cfg, [args.case] if args.case is not None else list(CASES))
        else:
            report = _demo_loopback(cfg, args.snr_db)
        paths = harness.emit_report(report, cfg.output.dir, cfg.output.formats)
    except (ValueError, OSError) as exc:
        print(f"rsmasim: error: {exc}", file=sys.stderr)
        return 1
    print(_summary(report))
    for path in paths:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
