"""Command-line front end.

Subcommands
-----------
``simulate``   run a Monte-Carlo link experiment from a JSON config and emit
               ``nmse.csv``/``ber.csv`` plus SVG line plots.
``cfr``        draw one random channel and emit the transform-domain
               response magnitude grid (CSV + heat map).
``metrics``    emit overlap-probability, coherence, diversity or PEP tables.
``dict``       build a path-response dictionary to CSV, or inspect one.

Every run writes a ``manifest.json`` recording the configuration, seed,
package version, outputs and timing; a directory that already contains a
manifest is refused.  Exit codes: 0 success, 1 runtime failure, 2
configuration/usage error.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .channel import ChannelConfig, sample_random_channel
from .cfr import compute_total_cfr, cop_enumerate, cop_estimate, unit_path_cfr
from .config import ConfigError, load_config
from .estimators import PilotSpec, dictionary_for_grid, load_dictionary_csv, save_dictionary_csv
from .linksim import run_experiment
from .metrics import diversity_study, mip
from .reports import (
    BER_HEADER,
    COP_HEADER,
    DIVERSITY_HEADER,
    MIP_HEADER,
    PEP_HEADER,
    ManifestError,
    config_snapshot,
    write_cfr_magnitude_csv,
    write_csv,
    write_manifest,
    write_nmse_csv,
    write_ber_csv,
)
from . import plotting

_WAVEFORM_CHOICES = ("ofdm", "ocdm", "afdm")


def _add_simulate(subparsers) -> None:
    p = subparsers.add_parser("simulate", help="run a Monte-Carlo link experiment")
    p.add_argument("--config", required=True, help="JSON experiment configuration")
    p.add_argument("--out", required=True, help="output directory (must not hold a manifest)")
    p.add_argument("--workers", type=int, default=1, help="parallel trial workers")
    p.add_argument("--no-plots", action="store_true", help="skip SVG figure rendering")


def _add_cfr(subparsers) -> None:
    p = subparsers.add_parser("cfr", help="emit a response magnitude grid for one channel draw")
    p.add_argument("--waveform", required=True, choices=_WAVEFORM_CHOICES)
    p.add_argument("--mode", default="msml", choices=("msml", "dfs-only"))
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=128)
    p.add_argument("--n-cpp", type=int, default=20)
    p.add_argument("--f-s", type=float, default=1500.0)
    p.add_argument("--f-c", type=float, default=35000.0)
    p.add_argument("--paths", type=int, default=5)
    p.add_argument("--l-max", type=int, default=19)
    p.add_argument("--q-max", type=int, default=1)
    p.add_argument("--doppler-order", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--per-path", action="store_true", help="also emit each path's grid")
    p.add_argument("--no-plots", action="store_true")


def _add_metrics(subparsers) -> None:
    p = subparsers.add_parser("metrics", help="emit analysis metric tables")
    p.add_argument("kind", choices=("cop", "mip", "diversity", "pep"))
    p.add_argument("--config", required=True, help="JSON experiment configuration")
    p.add_argument("--out", required=True)
    p.add_argument("--no-plots", action="store_true")


def _add_dict(subparsers) -> None:
    p = subparsers.add_parser("dict", help="build or inspect path-response dictionaries")
    p.add_argument("action", choices=("build", "inspect"))
    p.add_argument("--config", help="JSON experiment configuration (build)")
    p.add_argument("--out", help="output directory (build)")
    p.add_argument("--path", help="dictionary directory (inspect)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="afdmsim",
        description="chirp-multicarrier link simulation over multi-scale multi-lag channels",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    _add_simulate(subparsers)
    _add_cfr(subparsers)
    _add_metrics(subparsers)
    _add_dict(subparsers)
    return parser


def _cmd_simulate(args) -> int:
    experiment, _ = load_config(args.config)
    start = time.perf_counter()
    result = run_experiment(experiment, workers=args.workers)
    out = Path(args.out)
    outputs = [
        write_nmse_csv(result, out / "nmse.csv"),
        write_ber_csv(result, out / "ber.csv"),
    ]
    if not args.no_plots:
        snrs = np.asarray(experiment.snr_db)
        nmse_series = {
            f"{w}/{e}": result.nmse_mean(w, e)
            for (w, e) in result.arms
            if e != "ideal"
        }
        ber_series = {f"{w}/{e}": result.ber(w, e) for (w, e) in result.arms}
        if nmse_series:
            outputs.append(
                plotting.save_curves(
                    snrs, nmse_series, out / "nmse.svg", "SNR [dB]", "NMSE", logy=True
                )
            )
        outputs.append(
            plotting.save_curves(
                snrs, ber_series, out / "ber.svg", "SNR [dB]", "BER", logy=True
            )
        )
    write_manifest(
        out,
        "simulate",
        config_snapshot(experiment),
        outputs,
        time.perf_counter() - start,
        seed=experiment.seed,
    )
    print(f"wrote {len(outputs)} file(s) to {out}")
    return 0


def _cmd_cfr(args) -> int:
    from .transforms import preset_params
    from .channel import carrier_for_doppler_order

    f_c = args.f_c
    if args.doppler_order is not None and args.q_max >= 1:
        f_c = carrier_for_doppler_order(args.n, args.f_s, args.q_max, args.doppler_order)
    params = preset_params(
        args.waveform, n=args.n, n_cpp=args.n_cpp, f_s=args.f_s, f_c=f_c, q_max=args.q_max
    )
    channel = ChannelConfig(
        num_paths=args.paths, max_delay=args.l_max, max_dfs=args.q_max, mode=args.mode
    )
    rng = np.random.default_rng(args.seed)
    start = time.perf_counter()
    paths = sample_random_channel(channel, params, rng)
    total = compute_total_cfr(paths, params, args.mode)
    out = Path(args.out)
    outputs = [write_cfr_magnitude_csv(total.entries, out / "cfr_total.csv")]
    if not args.no_plots:
        outputs.append(
            plotting.save_heatmap(
                np.abs(total.entries),
                out / "cfr_total.svg",
                title=f"{args.waveform} response magnitude ({args.mode})",
            )
        )
    if args.per_path:
        for i, path in enumerate(paths):
            cfr = unit_path_cfr(params, path.delay_samples(params), path.doppler, args.mode)
            outputs.append(write_cfr_magnitude_csv(cfr, out / f"cfr_path{i}.csv"))
    write_manifest(
        out,
        "cfr",
        {
            "waveform": args.waveform,
            "mode": args.mode,
            "n": args.n,
            "paths": args.paths,
            "l_max": args.l_max,
            "q_max": args.q_max,
            "doppler_order": args.doppler_order,
            "f_s": args.f_s,
            "f_c": f_c,
        },
        outputs,
        time.perf_counter() - start,
        seed=args.seed,
    )
    print(f"wrote {len(outputs)} file(s) to {out}")
    return 0


def _cmd_metrics(args) -> int:
    experiment, options = load_config(args.config)
    out = Path(args.out)
    rng = np.random.default_rng(experiment.seed)
    start = time.perf_counter()
    outputs: list[Path] = []
    presets = {w: experiment.params_for(w) for w in experiment.waveforms}

    if args.kind == "cop":
        rows = []
        for name, params in presets.items():
            exact = cop_enumerate(experiment.channel.max_delay, experiment.channel.max_dfs, params)
            sampled = cop_estimate(experiment.channel, params, options.cop_trials, rng)
            rows.append(
                {
                    "waveform": name,
                    "cop_enumerated": exact,
                    "cop_monte_carlo": sampled,
                    "trials": options.cop_trials,
                }
            )
            print(f"cop[{name}] enumeration={exact:.6g} monte-carlo={sampled:.6g}")
        outputs.append(write_csv(out / "cop.csv", COP_HEADER, rows))
    elif args.kind == "mip":
        rows = []
        for name, params in presets.items():
            for n_p in options.pilot_counts:
                pilot = PilotSpec.pseudo_random(
                    n_p, placement=experiment.pilot_placement, seed=experiment.pilot_seed
                )
                dictionary = dictionary_for_grid(
                    params,
                    experiment.channel.max_delay,
                    experiment.channel.max_dfs,
                    pilot,
                    mode=experiment.channel.mode,
                )
                value = mip(dictionary)
                rows.append(
                    {
                        "waveform": name,
                        "num_pilots": n_p,
                        "mip": value,
                        "num_atoms": dictionary.num_atoms,
                    }
                )
                print(f"mip[{name}, n_p={n_p}] = {value:.6g}")
        outputs.append(write_csv(out / "mip.csv", MIP_HEADER, rows))
        if not args.no_plots:
            outputs.append(plotting.save_mip_bars(rows, out / "mip.svg", title="dictionary coherence"))
    else:  # diversity / pep share one sweep
        results = diversity_study(
            presets,
            experiment.channel,
            options.draws,
            options.inv_noise,
            rng,
            error_samples=options.error_samples,
            error_weight=options.error_weight,
            epsilon=options.epsilon,
        )
        if args.kind == "diversity":
            rows = []
            max_rank = experiment.channel.num_paths
            for name, res in results.items():
                hist = res.rank_histogram(max_rank)
                for rank, count in enumerate(hist):
                    rows.append(
                        {
                            "waveform": name,
                            "effective_rank": rank,
                            "occurrences": int(count),
                            "fraction": count / res.effective_ranks.size,
                        }
                    )
                print(f"diversity[{name}] mean effective rank = {res.mean_effective_rank:.4g}")
            outputs.append(write_csv(out / "diversity.csv", DIVERSITY_HEADER, rows))
            if not args.no_plots:
                outputs.append(
                    plotting.save_rank_histogram(
                        {name: res.rank_histogram(max_rank) for name, res in results.items()},
                        out / "diversity.svg",
                        title="effective diversity order",
                    )
                )
        else:
            rows = []
            for name, res in results.items():
                bounds = np.sort(res.pep_bounds)
                ccdf = 1.0 - np.arange(1, bounds.size + 1) / bounds.size
                for b, c in zip(bounds, ccdf):
                    rows.append({"waveform": name, "pep_bound": float(b), "ccdf": float(c)})
                print(f"pep[{name}] median bound = {res.median_pep:.6g}")
            outputs.append(write_csv(out / "pep.csv", PEP_HEADER, rows))
            if not args.no_plots:
                outputs.append(
                    plotting.save_ccdf(
                        {name: res.pep_bounds for name, res in results.items()},
                        out / "pep.svg",
                        xlabel="pairwise error probability bound",
                        title="PEP bound CCDF",
                    )
                )
    write_manifest(
        out,
        f"metrics {args.kind}",
        config_snapshot(experiment),
        outputs,
        time.perf_counter() - start,
        seed=experiment.seed,
    )
    print(f"wrote {len(outputs)} file(s) to {out}")
    return 0


def _cmd_dict(args) -> int:
    if args.action == "build":
        if not args.config or not args.out:
            raise ConfigError("dict build needs --config and --out")
        experiment, _ = load_config(args.config)
        if len(experiment.waveforms) != 1:
            raise ConfigError("dict build expects exactly one waveform in the config")
        start = time.perf_counter()
        params = experiment.params_for(experiment.waveforms[0])
        dictionary = dictionary_for_grid(
            params,
            experiment.channel.max_delay,
            experiment.channel.max_dfs,
            experiment.measurement_pilot(),
            mode=experiment.channel.mode,
        )
        out = Path(args.out)
        outputs = save_dictionary_csv(dictionary, out)
        value = mip(dictionary)
        print(
            f"dictionary: {dictionary.num_atoms} atoms "
            f"({experiment.channel.max_delay + 1} delays x "
            f"{2 * experiment.channel.max_dfs + 1} Doppler factors), coherence {value:.6g}"
        )
        write_manifest(
            out,
            "dict build",
            config_snapshot(experiment),
            outputs,
            time.perf_counter() - start,
            seed=experiment.seed,
        )
        return 0
    if not args.path:
        raise ConfigError("dict inspect needs --path")
    dictionary = load_dictionary_csv(args.path)
    delays = sorted(set(float(d) for d in dictionary.delay_samples))
    dopplers = sorted(set(float(a) for a in dictionary.dopplers))
    print(f"atoms: {dictionary.num_atoms} ({len(delays)} delays x {len(dopplers)} Doppler factors)")
    print(f"delay samples: {delays[0]:g} .. {delays[-1]:g}")
    print(f"doppler factors: {dopplers[0]:.6g} .. {dopplers[-1]:.6g}")
    print(f"pilots: {dictionary.pilot.num_pilots} ({dictionary.pilot.placement})")
    print(f"coherence: {mip(dictionary):.6g}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "cfr":
            return _cmd_cfr(args)
        if args.command == "metrics":
            return _cmd_metrics(args)
        return _cmd_dict(args)
    except ConfigError as exc:
        print(f"error: configuration: {exc}", file=sys.stderr)
        return 2
    except ManifestError as exc:
        print(f"error: output: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"error: runtime: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
