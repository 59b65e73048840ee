"""End-to-end run: WAV files per patient to group separability tables."""

from __future__ import annotations

import contextlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from coughxai import __version__
from coughxai.audio_io import decimate, read_wav, segment_chunks
from coughxai.cnn import FORMAT_VERSION, ReferenceClassifier, read_model, score_windows
from coughxai.config import PipelineConfig
from coughxai.errors import ConfigError, CoughXAIError, DataError, DegenerateInputError
from coughxai.features import FEATURE_NAMES, extract_features
from coughxai.matrix_io import MAP_SCALE, write_matrix, write_spectrogram
from coughxai.reporting import (
    FEATURES_HEADER,
    RESULTS_HEADER,
    boxplot_data,
    fmt,
    render_table,
    write_features_csv,
    write_json,
    write_results_csv,
)
from coughxai.spectrogram import CHUNK_LEN, compute_spectrogram, log_normalize
from coughxai.stats import GroupConfig, compare_groups
from coughxai.xai import PatientProfile, build_profile, occlusion_map, weight_spectrogram

log = logging.getLogger(__name__)


@dataclass
class PatientRun:
    patient_id: str
    windows: list = field(default_factory=list)  # (wav path, chunk index)
    scores: list = field(default_factory=list)
    qualifying: list = field(default_factory=list)
    profile: PatientProfile | None = None


@dataclass
class RunReport:
    out_dir: Path
    patients: dict
    excluded: list
    features: dict
    results: list
    warnings: list


@contextlib.contextmanager
def _stage(patient: str, path, stage: str):
    try:
        yield
    except CoughXAIError as exc:
        raise type(exc)(f"patient {patient}, file {path}, stage {stage}: {exc}") from exc
    except (ValueError, OSError) as exc:
        raise DataError(f"patient {patient}, file {path}, stage {stage}: {exc}") from exc


def build_scorer(cfg: PipelineConfig):
    if cfg.model is not None:
        return read_model(cfg.resolve(cfg.model))
    lo, hi = cfg.reference_band
    try:
        return ReferenceClassifier(lo, hi, cfg.reference_gain)
    except ValueError as exc:
        raise ConfigError(f"reference_band: {exc}") from None


def _check_inputs(cfg: PipelineConfig) -> GroupConfig:
    if not cfg.manifest:
        raise ConfigError("the manifest lists no patients")
    if cfg.groups is None:
        raise ConfigError("'groups' is required for a pipeline run")
    missing = [
        str(path) for paths in cfg.manifest.values() for path in paths
        if not cfg.resolve(path).is_file()
    ]
    if cfg.model is not None and not cfg.resolve(cfg.model).is_file():
        missing.append(str(cfg.model))
    groups_path = cfg.resolve(cfg.groups)
    if not groups_path.is_file():
        missing.append(str(cfg.groups))
    if missing:
        raise ConfigError(f"missing input files: {', '.join(missing)}")
    groups = GroupConfig.read(groups_path)
    undiagnosed = sorted(set(cfg.manifest) - set(groups.diagnoses))
    if undiagnosed:
        raise ConfigError(f"patients without a diagnosis in {cfg.groups}: {undiagnosed}")
    return groups


def process_patient(patient_id: str, cfg: PipelineConfig, scorer, out_dir: Path | None = None) -> PatientRun:
    """Decode, window, score and explain one patient's recordings."""
    run = PatientRun(patient_id)
    linear, lognorm = [], []
    for path in cfg.manifest[patient_id]:
        with _stage(patient_id, path, "decode"):
            clip = read_wav(cfg.resolve(path))
        with _stage(patient_id, path, "decimate"):
            clip = decimate(clip, cfg.decimation, cfg.filter_taps, cfg.filter_cutoff)
        with _stage(patient_id, path, "spectrogram"):
            for idx, chunk in enumerate(segment_chunks(clip, CHUNK_LEN)):
                spec = compute_spectrogram(chunk, clip.sample_rate_hz)
                linear.append(spec)
                lognorm.append(log_normalize(spec))
                run.windows.append((str(path), idx))
    where = ", ".join(str(p) for p in cfg.manifest[patient_id])
    with _stage(patient_id, where, "classify"):
        run.scores = [float(p) for p in score_windows(scorer, lognorm)]
    run.qualifying = [i for i, p in enumerate(run.scores) if p > cfg.confidence]
    with _stage(patient_id, where, "occlusion"):
        maps = [occlusion_map(scorer, lognorm[i], cfg.occlusion) for i in run.qualifying]
    if run.qualifying:
        run.profile = build_profile(
            patient_id, [linear[i] for i in run.qualifying], maps, cfg.spectrogram_average
        )

    if out_dir is not None:
        pdir = out_dir / "patients" / patient_id
        pdir.mkdir(parents=True, exist_ok=True)
        lines = ["window,file,chunk,p_cough,qualifies"]
        for w, ((path, chunk), p) in enumerate(zip(run.windows, run.scores)):
            lines.append(f"{w},{path},{chunk},{fmt(p)},{'true' if w in run.qualifying else 'false'}")
            write_spectrogram(pdir / f"w{w:03d}_linear.txt", linear[w])
            write_spectrogram(pdir / f"w{w:03d}_lognorm.txt", lognorm[w])
        (pdir / "windows.csv").write_text("\n".join(lines) + "\n")
        for w, m in zip(run.qualifying, maps):
            write_matrix(pdir / f"w{w:03d}_map.txt", m.values, linear[w].sample_rate_hz, MAP_SCALE)
        if run.profile is not None:
            write_spectrogram(pdir / "avg_spectrogram.txt", run.profile.avg_spectrogram)
            write_matrix(pdir / "avg_map.txt", run.profile.avg_map.values,
                         run.profile.avg_spectrogram.sample_rate_hz, MAP_SCALE)
    return run


def compare_and_write(features: dict, group_cfg: GroupConfig, thresholds, out_dir, welch: bool = False):
    """Group tests over ``{(patient_id, th): SpectralFeatures}``.

    Writes results.csv, boxplots.json and report.txt under ``out_dir`` and
    returns ``(results, warnings, group_specs)``. Groups with an empty side
    among the patients present in ``features`` are skipped with a warning.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    included = sorted({pid for pid, _ in features})
    warnings = []
    skipped = group_cfg.empty_sides(included)
    for name in skipped:
        msg = f"group {name}: a side has no included patients; comparison skipped"
        log.warning(msg)
        warnings.append(msg)
    kept_rules = [rule for rule in group_cfg.rules if rule[0] not in skipped]
    group_specs = GroupConfig(group_cfg.diagnoses, group_cfg.categories, kept_rules).groups(included) if kept_rules else []
    results = compare_groups(features, group_specs, thresholds, welch=welch)
    write_results_csv(out_dir / "results.csv", results)
    write_json(out_dir / "boxplots.json", boxplot_data(results, features, group_specs))
    (out_dir / "report.txt").write_text(render_table(results))
    return results, warnings, group_specs


def run_pipeline(cfg: PipelineConfig, out_dir=None, threads: int = 1) -> RunReport:
    """Run every stage and write all artifacts under ``out_dir``.

    Raises ConfigError before any processing for an empty manifest or
    missing inputs, and DataError when features cannot be computed.
    """
    out_dir = out_dir if out_dir is not None else cfg.out
    if out_dir is None:
        raise ConfigError("no output directory configured (use --out)")
    out_dir = Path(out_dir)
    if threads < 1:
        raise ConfigError("threads must be at least 1")
    group_cfg = _check_inputs(cfg)
    scorer = build_scorer(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)

    patient_ids = sorted(cfg.manifest)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            runs = list(pool.map(lambda pid: process_patient(pid, cfg, scorer, out_dir), patient_ids))
    else:
        runs = [process_patient(pid, cfg, scorer, out_dir) for pid in patient_ids]
    patients = {r.patient_id: r for r in runs}

    warnings = []
    excluded = [r.patient_id for r in runs if r.profile is None]
    for pid in excluded:
        msg = f"patient {pid}: no window scored above confidence {cfg.confidence}; excluded from statistics"
        log.warning(msg)
        warnings.append(msg)
    included = [pid for pid in patient_ids if patients[pid].profile is not None]

    features, degenerate = {}, []
    feature_items = []
    for pid in included:
        profile = patients[pid].profile
        pdir = out_dir / "patients" / pid
        for th in cfg.thresholds:
            weighted = weight_spectrogram(profile.avg_spectrogram, profile.avg_map, th, cfg.weight_mode)
            write_spectrogram(pdir / f"weighted_th{fmt(th)}.txt", weighted)
            try:
                feats = extract_features(weighted, cfg.features)
            except DegenerateInputError as exc:
                degenerate.append(f"patient {pid}, threshold {th}: {exc}")
                continue
            features[(pid, th)] = feats
            feature_items.append((pid, th, feats))
    write_features_csv(out_dir / "features.csv", feature_items)
    if degenerate:
        raise DataError("stage features: degenerate weighted spectrogram(s):\n  " + "\n  ".join(degenerate))

    results, group_warnings, group_specs = compare_and_write(
        features, group_cfg, cfg.thresholds, out_dir, welch=cfg.welch
    )
    warnings.extend(group_warnings)

    write_json(out_dir / "run_metadata.json", {
        "package_version": __version__,
        "formats": {
            "cnnw_version": FORMAT_VERSION,
            "matrix_header": "K=<K> N=<N> fs=<Hz> scale=<linear|lognorm|map>",
            "features_csv": ",".join(FEATURES_HEADER),
            "results_csv": ",".join(RESULTS_HEADER),
            "boxplots_json": "group -> side(a|b) -> feature -> threshold",
        },
        "config": cfg.metadata(),
        "features": list(FEATURE_NAMES),
        "patients": {
            pid: {
                "windows": len(patients[pid].windows),
                "qualifying_windows": patients[pid].qualifying,
                "excluded": patients[pid].profile is None,
            }
            for pid in patient_ids
        },
        "groups": {
            g.name: {"a": sorted(g.group_a), "b": sorted(g.group_b), "rule_a": g.label_a, "rule_b": g.label_b}
            for g in group_specs
        },
        "excluded_patients": excluded,
        "warnings": warnings,
    })
    return RunReport(out_dir, patients, excluded, features, results, warnings)
