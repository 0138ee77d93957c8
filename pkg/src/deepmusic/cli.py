"""Command-line front end.

Subcommands: ``gen-data`` (write a training corpus), ``train`` (fit the
per-subregion networks), ``eval`` (score a trained bundle), ``bench-snr`` /
``bench-corr`` (RMSE sweeps), and ``bench-time`` (latency comparison).  All
tabular output is CSV with a fixed header.  The ``runtime_s`` columns stay
empty in RMSE sweeps unless ``--emit-runtime`` is given, so identical
(config, seed) invocations write byte-identical files; ``bench-time`` always
fills them and is the one command whose output is not reproducible.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import config as cfgmod
from .arraysim import SourceConfig, sample_covariance, simulate_snapshots
from .bench import (
    _STREAM_CORR,
    _STREAM_SNR,
    ExperimentConfig,
    RmseTable,
    run_correlation_sweep,
    run_rmse_vs_snr,
    time_methods,
)
from .datagen import draw_doa_set, generate_dataset, snr_to_noise_variance, SpectrumDataset
from .errors import ConfigError, PersistenceError
from .estimator import DeepMusicModel, fit_model, predict_full_spectrum
from .datagen import build_input_tensor
from .subspace import eigendecompose, grid_manifold, music_spectrum

CSV_HEADER = "method,sweep_value,rmse_deg,crb_deg,runtime_s,runtime_std_s,trials,seed"
SPECTRUM_HEADER = "sweep_value,angle_deg,deepmusic,spectral_music"


def _fmt(value) -> str:
    return format(float(value), ".12g")


def _write_lines(path: str, lines) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def _write_rmse_csv(path: str, table: RmseTable, seed: int, emit_runtime: bool) -> None:
    lines = [CSV_HEADER]
    for row in table.rows:
        runtime = _fmt(row.runtime_s) if emit_runtime and row.runtime_s is not None else ""
        crb = _fmt(row.crb_deg) if row.crb_deg is not None else ""
        lines.append(",".join([
            row.method,
            _fmt(row.sweep_value),
            _fmt(row.rmse_deg),
            crb,
            runtime,
            "",
            str(row.trials),
            str(seed),
        ]))
    _write_lines(path, lines)


def _write_timing_csv(path: str, rows, sweep_value: float, seed: int) -> None:
    lines = [CSV_HEADER]
    for row in rows:
        lines.append(",".join([
            row.method,
            _fmt(sweep_value),
            "",
            "",
            _fmt(row.mean_s),
            _fmt(row.std_s),
            str(row.repetitions),
            str(seed),
        ]))
    _write_lines(path, lines)


def _emit_spectra(path: str, cfg: ExperimentConfig, sweep_values, stream_tag,
                  noise_for, gamma_for, model) -> None:
    """Spectra of each sweep point's first trial, for plotting."""
    from .rng import substream

    partition = cfg.partition()
    manifold = grid_manifold(cfg.grid, cfg.array)
    angles = cfg.grid.angles()
    lines = [SPECTRUM_HEADER]
    for si, value in enumerate(sweep_values):
        rng = substream(cfg.seed, stream_tag, si, 0)
        doas = draw_doa_set(rng, partition, cfg.num_sources)
        src = SourceConfig(doas, gamma_for(value), noise_for(value))
        snaps = simulate_snapshots(src, cfg.array, cfg.num_snapshots, rng)
        cov = sample_covariance(snaps)
        basis = eigendecompose(cov, cfg.num_sources)
        reference = music_spectrum(basis, cfg.grid, cfg.array, manifold=manifold).values
        reference = reference / reference.sum()
        predicted = None
        if model is not None:
            predicted = predict_full_spectrum(model, build_input_tensor(cov)).values
        for i in range(cfg.grid.num_points):
            lines.append(",".join([
                _fmt(value),
                _fmt(angles[i]),
                _fmt(predicted[i]) if predicted is not None else "",
                _fmt(reference[i]),
            ]))
    _write_lines(path, lines)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value configuration file")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override one configuration key")
    parser.add_argument("--seed", type=int, help="shortcut for --set seed=...")


def _resolve(args) -> dict:
    overrides = list(args.overrides)
    if getattr(args, "seed", None) is not None:
        overrides.append(f"seed={args.seed}")
    return cfgmod.resolve_config(args.config, overrides)


def _parse_methods(text: str):
    return tuple(part.strip() for part in text.split(",") if part.strip())


def cmd_gen_data(args) -> int:
    values = _resolve(args)
    dataset = generate_dataset(cfgmod.dataset_config(values), cfgmod.array_config(values))
    dataset.save(args.output)
    print(f"wrote {args.output}: {len(dataset)} records, "
          f"{dataset.num_regions} regions of length {dataset.region_len}")
    return 0


def cmd_train(args) -> int:
    values = _resolve(args)
    dataset = SpectrumDataset.load(args.dataset)

    def log_fn(region, rec):
        print(f"region {region} epoch {rec.epoch:3d} "
              f"train {rec.train_loss:.3e} val {rec.val_loss:.3e} lr {rec.learning_rate:.4g}",
              file=sys.stderr)

    model = fit_model(
        dataset,
        cfgmod.train_config(values),
        num_filters=values["num_filters"],
        fc_width=values["fc_width"],
        dropout_p=values["dropout_p"],
        train_fraction=values["train_fraction"],
        log_fn=log_fn if args.verbose else None,
    )
    model.save(args.output)
    best = [log.best_epoch for log in model.training_logs]
    print(f"wrote {args.output}: {model.num_regions} networks, best epochs {best}")
    return 0


def _experiment(values) -> ExperimentConfig:
    return cfgmod.experiment_config(values)


def cmd_eval(args) -> int:
    values = _resolve(args)
    model = DeepMusicModel.load(args.model)
    cfg = _experiment(values)
    methods = _parse_methods(args.methods)
    table = run_rmse_vs_snr(cfg, methods, model=model)
    _write_rmse_csv(args.output, table, cfg.seed, args.emit_runtime)
    if args.emit_spectrum:
        gamma = np.eye(cfg.num_sources, dtype=complex)
        _emit_spectra(args.emit_spectrum, cfg, cfg.snr_eval_db, _STREAM_SNR,
                      snr_to_noise_variance, lambda _v: gamma, model)
    print(f"wrote {args.output}")
    return 0


def cmd_bench_snr(args) -> int:
    values = _resolve(args)
    methods = _parse_methods(args.methods)
    model = DeepMusicModel.load(args.model) if args.model else None
    cfg = _experiment(values)
    table = run_rmse_vs_snr(cfg, methods, model=model)
    _write_rmse_csv(args.output, table, cfg.seed, args.emit_runtime)
    if args.emit_spectrum:
        gamma = np.eye(cfg.num_sources, dtype=complex)
        _emit_spectra(args.emit_spectrum, cfg, cfg.snr_eval_db, _STREAM_SNR,
                      snr_to_noise_variance, lambda _v: gamma, model)
    print(f"wrote {args.output}")
    return 0


def cmd_bench_corr(args) -> int:
    values = _resolve(args)
    methods = _parse_methods(args.methods)
    model = DeepMusicModel.load(args.model) if args.model else None
    cfg = _experiment(values)
    table = run_correlation_sweep(cfg, methods, model=model)
    _write_rmse_csv(args.output, table, cfg.seed, args.emit_runtime)
    print(f"wrote {args.output}")
    return 0


def cmd_bench_time(args) -> int:
    values = _resolve(args)
    methods = _parse_methods(args.methods)
    model = DeepMusicModel.load(args.model) if args.model else None
    cfg = _experiment(values)
    rows = time_methods(cfg, methods, model=model, repetitions=args.repetitions)
    _write_timing_csv(args.output, rows, sweep_value=cfg.grid.num_points, seed=cfg.seed)
    for row in rows:
        print(f"{row.method}: {row.mean_s * 1e3:.4f} ms +- {row.std_s * 1e3:.4f} ms "
              f"({row.repetitions} reps)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deepmusic",
        description="DOA estimation toolkit: data generation, training, and benchmarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate and save a training corpus")
    _add_config_flags(p)
    p.add_argument("--output", required=True, help="dataset output path (.dmds)")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the per-subregion networks on a corpus")
    _add_config_flags(p)
    p.add_argument("--dataset", required=True, help="dataset path from gen-data")
    p.add_argument("--output", required=True, help="model bundle output path (.dmmb)")
    p.add_argument("--verbose", action="store_true", help="print per-epoch progress")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a trained bundle over the SNR sweep")
    _add_config_flags(p)
    p.add_argument("--model", required=True, help="model bundle path")
    p.add_argument("--output", required=True, help="CSV output path")
    p.add_argument("--methods", default="deepmusic", help="comma list of methods")
    p.add_argument("--emit-runtime", action="store_true",
                   help="fill the runtime_s column (breaks byte reproducibility)")
    p.add_argument("--emit-spectrum", metavar="PATH",
                   help="also dump predicted and reference spectra as CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench-snr", help="RMSE versus SNR for selected methods")
    _add_config_flags(p)
    p.add_argument("--model", help="model bundle (needed for method deepmusic)")
    p.add_argument("--output", required=True, help="CSV output path")
    p.add_argument("--methods", default="spectral_music,root_music",
                   help="comma list of methods")
    p.add_argument("--emit-runtime", action="store_true",
                   help="fill the runtime_s column (breaks byte reproducibility)")
    p.add_argument("--emit-spectrum", metavar="PATH",
                   help="also dump predicted and reference spectra as CSV")
    p.set_defaults(func=cmd_bench_snr)

    p = sub.add_parser("bench-corr", help="RMSE versus source correlation")
    _add_config_flags(p)
    p.add_argument("--model", help="model bundle (needed for method deepmusic)")
    p.add_argument("--output", required=True, help="CSV output path")
    p.add_argument("--methods",
                   default="spectral_music,spectral_music_smoothed,root_music",
                   help="comma list of methods")
    p.add_argument("--emit-runtime", action="store_true",
                   help="fill the runtime_s column (breaks byte reproducibility)")
    p.set_defaults(func=cmd_bench_corr)

    p = sub.add_parser("bench-time", help="covariance-to-DOA latency per method")
    _add_config_flags(p)
    p.add_argument("--model", help="model bundle (needed for method deepmusic)")
    p.add_argument("--output", required=True, help="CSV output path")
    p.add_argument("--methods", default="spectral_music,root_music",
                   help="comma list of methods")
    p.add_argument("--repetitions", type=int, default=100, help="timed repetitions")
    p.set_defaults(func=cmd_bench_time)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, PersistenceError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
