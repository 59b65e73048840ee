"""Command-line entry point.

Each subcommand reads and writes the same files that ``run`` leaves under
``<out>/patients/<id>/``, so a run can be replayed stage by stage::

    coughxai spectra  --out D audio/P01.wav          # D/w000_linear.txt, D/w000_lognorm.txt
    coughxai classify --config C D/w*_lognorm.txt    # scores CSV on stdout
    coughxai occlude  --config C --out D D/w000_lognorm.txt
    coughxai average  --out D --spectrograms D/w000_linear.txt --maps D/w000_map.txt
    coughxai weight   --out D D/avg_spectrogram.txt D/avg_map.txt
    coughxai features --out F.csv --append --patient P01 --threshold 0.5 D/weighted_th0.5.txt
    coughxai stats    --groups G --out R F.csv
    coughxai report   R/results.csv

Exit codes: 0 success, 2 configuration error, 3 data error, 4 format error.
"""

from __future__ import annotations

import argparse
import logging
import re
import sys
from dataclasses import replace
from pathlib import Path

from coughxai import __version__
from coughxai.audio_io import decimate, read_wav, segment_chunks
from coughxai.cnn import score_windows
from coughxai.config import PipelineConfig, load_config
from coughxai.errors import ConfigError, CoughXAIError, DataError, FormatError
from coughxai.features import extract_features
from coughxai.fixture import generate_fixture
from coughxai.matrix_io import MAP_SCALE, read_matrix, read_spectrogram, write_matrix, write_spectrogram
from coughxai.pipeline import build_scorer, compare_and_write, run_pipeline
from coughxai.reporting import (
    FEATURES_HEADER,
    feature_rows,
    fmt,
    read_features_csv,
    read_results_csv,
    render_table,
    write_features_csv,
)
from coughxai.spectrogram import CHUNK_LEN, Scale, compute_spectrogram, log_normalize
from coughxai.stats import GroupConfig
from coughxai.xai import OcclusionMap, WeightMode, build_profile, occlusion_map, weight_spectrogram

_WEIGHTED_NAME = re.compile(r"weighted_th(?P<th>[0-9.eE+-]+)\.txt$")


def _settings(args) -> PipelineConfig:
    """Config file (if any) with command-line overrides applied.

    Stages that need no scorer still accept a config without one, so the
    reference band falls back to the full axis when nothing is configured.
    """
    if args.config is not None:
        cfg = load_config(args.config)
    else:
        cfg = PipelineConfig(reference_band=(0.0, 1.0))
    overrides = {}
    if getattr(args, "weight_mode", None):
        overrides["weight_mode"] = WeightMode(args.weight_mode)
    if getattr(args, "renyi", None):
        overrides["features"] = replace(cfg.features, renyi_literal=args.renyi == "literal")
    if getattr(args, "model", None):
        cfg = replace(cfg, model=Path(args.model).resolve(), reference_band=None)
    return cfg.with_overrides(**overrides)


def _scorer(args, cfg: PipelineConfig):
    if args.config is None and not getattr(args, "model", None):
        raise ConfigError("a scorer is required: pass --config with model/reference_band, or --model")
    if cfg.model is not None and not cfg.resolve(cfg.model).is_file():
        raise ConfigError(f"model file not found: {cfg.model}")
    return build_scorer(cfg)


def _existing(paths) -> list[Path]:
    paths = [Path(p) for p in paths]
    missing = [str(p) for p in paths if not p.is_file()]
    if missing:
        raise ConfigError(f"missing input files: {', '.join(missing)}")
    return paths


def _window_stem(path: Path) -> str:
    stem = path.stem
    for suffix in ("_lognorm", "_linear"):
        if stem.endswith(suffix):
            return stem[: -len(suffix)]
    return stem


def _wrap(path, stage: str, fn, *a, **kw):
    """Run ``fn`` and prefix any failure with the file and stage."""
    try:
        return fn(*a, **kw)
    except CoughXAIError as exc:
        raise type(exc)(f"file {path}, stage {stage}: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"file {path}, stage {stage}: {exc}") from exc
    except OSError as exc:
        raise DataError(f"file {path}, stage {stage}: {exc.strerror or exc}") from exc


# -- subcommands --------------------------------------------------------------


def cmd_spectra(args) -> int:
    cfg = _settings(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    w = 0
    for path in _existing(args.wav):
        clip = _wrap(path, "decode", read_wav, path)
        clip = _wrap(path, "decimate", decimate, clip, cfg.decimation, cfg.filter_taps, cfg.filter_cutoff)
        for chunk in segment_chunks(clip, CHUNK_LEN):
            spec = _wrap(path, "spectrogram", compute_spectrogram, chunk, clip.sample_rate_hz)
            write_spectrogram(out / f"w{w:03d}_linear.txt", spec)
            write_spectrogram(out / f"w{w:03d}_lognorm.txt", log_normalize(spec))
            w += 1
    print(f"{w} window(s) written to {out}", file=sys.stderr)
    return 0


def _read_lognorm(path: Path):
    spec = _wrap(path, "read", read_spectrogram, path)
    if spec.scale is not Scale.LOG_NORMALIZED:
        raise FormatError(f"{path}: classify/occlude expect scale=lognorm, found {spec.scale.value}")
    return spec


def cmd_classify(args) -> int:
    cfg = _settings(args)
    scorer = _scorer(args, cfg)
    paths = _existing(args.matrices)
    specs = [_read_lognorm(p) for p in paths]
    scores = _wrap(",".join(map(str, paths)), "classify", score_windows, scorer, specs)
    lines = ["matrix,p_cough,qualifies"]
    for path, p in zip(paths, scores):
        lines.append(f"{path},{fmt(p)},{'true' if p > cfg.confidence else 'false'}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_occlude(args) -> int:
    cfg = _settings(args)
    scorer = _scorer(args, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for path in _existing(args.matrices):
        spec = _read_lognorm(path)
        m = _wrap(path, "occlusion", occlusion_map, scorer, spec, cfg.occlusion, args.threads)
        write_matrix(out / f"{_window_stem(path)}_map.txt", m.values, spec.sample_rate_hz, MAP_SCALE)
    return 0


def _read_map(path: Path) -> tuple[OcclusionMap, float]:
    values, fs, scale = _wrap(path, "read", read_matrix, path)
    if scale != MAP_SCALE:
        raise FormatError(f"{path}: expected scale=map, found {scale}")
    try:
        return OcclusionMap(values), fs
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


def cmd_average(args) -> int:
    cfg = _settings(args)
    specs = [_wrap(p, "read", read_spectrogram, p) for p in _existing(args.spectrograms)]
    maps = [_read_map(p)[0] for p in _existing(args.maps)]
    if len(specs) != len(maps):
        raise ConfigError(f"{len(specs)} spectrogram(s) but {len(maps)} map(s)")
    if any(s.scale is not Scale.LINEAR for s in specs):
        raise FormatError("average expects linear-scale spectrograms")
    profile = _wrap(args.out, "average", build_profile, "", specs, maps, cfg.spectrogram_average)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_spectrogram(out / "avg_spectrogram.txt", profile.avg_spectrogram)
    write_matrix(out / "avg_map.txt", profile.avg_map.values, profile.avg_spectrogram.sample_rate_hz, MAP_SCALE)
    return 0


def cmd_weight(args) -> int:
    cfg = _settings(args)
    spec_path, map_path = _existing([args.spectrogram, args.map])
    spec = _wrap(spec_path, "read", read_spectrogram, spec_path)
    m, _ = _read_map(map_path)
    thresholds = tuple(args.threshold) if args.threshold else cfg.thresholds
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for th in thresholds:
        weighted = _wrap(spec_path, "weight", weight_spectrogram, spec, m, th, cfg.weight_mode)
        write_spectrogram(out / f"weighted_th{fmt(th)}.txt", weighted)
    return 0


def cmd_features(args) -> int:
    cfg = _settings(args)
    paths = _existing(args.matrices)
    if args.threshold is not None and len(paths) > 1:
        raise ConfigError("--threshold applies to a single matrix; omit it to read thresholds from file names")
    items = []
    for path in paths:
        th = args.threshold
        if th is None:
            match = _WEIGHTED_NAME.search(path.name)
            if match is None:
                raise ConfigError(f"{path}: pass --threshold (file name does not end in weighted_th<th>.txt)")
            th = float(match["th"])
        spec = _wrap(path, "read", read_spectrogram, path)
        feats = _wrap(path, "features", extract_features, spec, cfg.features)
        items.append((args.patient or path.parent.name, th, feats))
    if args.out:
        write_features_csv(args.out, items, append=args.append)
    else:
        print(",".join(FEATURES_HEADER))
        for row in feature_rows(items):
            print(",".join(row))
    return 0


def cmd_stats(args) -> int:
    cfg = _settings(args)
    features_path, = _existing([args.features])
    groups_path = args.groups
    if groups_path is None:
        if cfg.groups is None:
            raise ConfigError("pass --groups or a --config that names a groups file")
        groups_path = cfg.resolve(cfg.groups)
    groups_path, = _existing([groups_path])
    features = read_features_csv(features_path)
    if not features:
        raise DataError(f"{features_path}: no feature rows")
    group_cfg = GroupConfig.read(groups_path)
    thresholds = sorted({th for _, th in features})
    _, warnings, _ = compare_and_write(features, group_cfg, thresholds, args.out, welch=cfg.welch)
    for msg in warnings:
        print(f"warning: {msg}", file=sys.stderr)
    return 0


def cmd_report(args) -> int:
    path, = _existing([args.results])
    text = render_table(read_results_csv(path))
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_gen_fixture(args) -> int:
    cfg = generate_fixture(args.out, seed=args.seed, with_model=not args.no_model)
    print(f"fixture written; config at {cfg}", file=sys.stderr)
    return 0


def cmd_run(args) -> int:
    if args.config is None:
        raise ConfigError("run requires --config")
    cfg = _settings(args)
    report = run_pipeline(cfg, args.out, threads=args.threads)
    for msg in report.warnings:
        print(f"warning: {msg}", file=sys.stderr)
    print(f"{len(report.results)} test result(s) written to {report.out_dir}", file=sys.stderr)
    return 0


# -- parser -------------------------------------------------------------------


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coughxai", description="Explainable cough spectrogram analysis.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, fn, help_text, config=True):
        p = sub.add_parser(name, help=help_text, description=help_text)
        if config:
            p.add_argument("--config", type=Path, help="pipeline config file")
        p.set_defaults(func=fn)
        return p

    p = add("spectra", cmd_spectra, "WAV files -> per-window linear and log-normalized spectrograms")
    p.add_argument("wav", nargs="+")
    p.add_argument("--out", required=True, help="output directory")

    p = add("classify", cmd_classify, "log-normalized spectrograms -> cough probabilities (CSV)")
    p.add_argument("matrices", nargs="+")
    p.add_argument("--model", help="CNNW weights file (overrides the config scorer)")
    p.add_argument("--out", help="CSV path (default: stdout)")

    p = add("occlude", cmd_occlude, "log-normalized spectrograms -> occlusion maps")
    p.add_argument("matrices", nargs="+")
    p.add_argument("--model", help="CNNW weights file (overrides the config scorer)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--threads", type=_positive_int, default=1)

    p = add("average", cmd_average, "qualifying windows -> patient-average spectrogram and map")
    p.add_argument("--spectrograms", nargs="+", required=True, help="linear spectrograms")
    p.add_argument("--maps", nargs="+", required=True, help="matching occlusion maps, same order")
    p.add_argument("--out", required=True, help="output directory")

    p = add("weight", cmd_weight, "spectrogram + occlusion map -> threshold-weighted spectrograms")
    p.add_argument("spectrogram")
    p.add_argument("map")
    p.add_argument("--threshold", type=float, action="append",
                   help="repeatable; default: the config's threshold list")
    p.add_argument("--weight-mode", choices=[m.value for m in WeightMode])
    p.add_argument("--out", required=True, help="output directory (weighted_th<th>.txt)")

    p = add("features", cmd_features, "weighted spectrograms -> feature CSV rows")
    p.add_argument("matrices", nargs="+")
    p.add_argument("--patient", help="patient id (default: the matrix's directory name)")
    p.add_argument("--threshold", type=float, help="default: parsed from weighted_th<th>.txt")
    p.add_argument("--renyi", choices=["normalized", "literal"])
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.add_argument("--append", action="store_true", help="append rows to an existing CSV")

    p = add("stats", cmd_stats, "feature CSV + group file -> results CSV, boxplot JSON, report")
    p.add_argument("features")
    p.add_argument("--groups", type=Path)
    p.add_argument("--out", required=True, help="output directory")

    p = add("report", cmd_report, "results CSV -> per-group threshold x feature p-value table", config=False)
    p.add_argument("results")
    p.add_argument("--out", help="text path (default: stdout)")

    p = add("gen-fixture", cmd_gen_fixture, "write the seeded synthetic corpus", config=False)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-model", action="store_true", help="skip the synthetic CNNW weights")

    p = add("run", cmd_run, "full pipeline from a config file")
    p.add_argument("--out", help="output directory (default: the config's 'out')")
    p.add_argument("--threads", type=_positive_int, default=1)
    p.add_argument("--weight-mode", choices=[m.value for m in WeightMode])
    p.add_argument("--renyi", choices=["normalized", "literal"])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except CoughXAIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
