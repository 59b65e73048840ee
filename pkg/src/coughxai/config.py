"""Pipeline configuration file.

INI-style text with a ``[pipeline]`` section of ``key = value`` settings and
a ``[manifest]`` section mapping each patient id to one or more WAV paths
(whitespace or comma separated). Relative paths resolve against the config
file's directory. Example::

    [pipeline]
    reference_band = 793 2973      # or: model = model.cnnw
    confidence = 0.9
    thresholds = 0.5 0.6 0.7 0.8 0.9
    groups = groups.txt

    [manifest]
    P01 = audio/P01.wav
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

from coughxai.audio_io import DEFAULT_CUTOFF_RATIO, DEFAULT_DECIMATION, DEFAULT_FILTER_TAPS
from coughxai.errors import ConfigError
from coughxai.features import FeatureConfig, ZeroFramePolicy
from coughxai.xai import AverageDomain, Baseline, OcclusionConfig, WeightMode

DEFAULT_THRESHOLDS = (0.5, 0.6, 0.7, 0.8, 0.9)


@dataclass(frozen=True)
class PipelineConfig:
    manifest: dict = field(default_factory=dict)
    model: Path | None = None
    reference_band: tuple | None = None
    reference_gain: float = 20.0
    confidence: float = 0.9
    decimation: int = DEFAULT_DECIMATION
    filter_taps: int = DEFAULT_FILTER_TAPS
    filter_cutoff: float = DEFAULT_CUTOFF_RATIO
    occlusion: OcclusionConfig = OcclusionConfig()
    weight_mode: WeightMode = WeightMode.MAP_VALUE
    thresholds: tuple = DEFAULT_THRESHOLDS
    features: FeatureConfig = FeatureConfig()
    spectrogram_average: AverageDomain = AverageDomain.LINEAR
    welch: bool = False
    groups: Path | None = None
    out: Path | None = None
    base_dir: Path = Path(".")

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ConfigError(f"confidence must lie in [0, 1], got {self.confidence}")
        ths = tuple(float(t) for t in self.thresholds)
        if not ths:
            raise ConfigError("at least one threshold is required")
        if any(not 0.0 <= t <= 1.0 for t in ths):
            raise ConfigError(f"thresholds must lie in [0, 1], got {ths}")
        if any(b <= a for a, b in zip(ths, ths[1:])):
            raise ConfigError(f"thresholds must be strictly increasing, got {ths}")
        object.__setattr__(self, "thresholds", ths)
        if self.model is None and self.reference_band is None:
            raise ConfigError("configure either 'model' or 'reference_band'")
        if self.model is not None and self.reference_band is not None:
            raise ConfigError("'model' and 'reference_band' are mutually exclusive")

    def with_overrides(self, **changes) -> "PipelineConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        return replace(self, **changes) if changes else self

    def metadata(self) -> dict:
        """Every setting as JSON-ready values (paths as written, relative)."""
        occ = self.occlusion
        feat = self.features
        return {
            "manifest": {pid: [str(p) for p in paths] for pid, paths in self.manifest.items()},
            "scorer": (
                {"kind": "cnn", "model": str(self.model)}
                if self.model is not None
                else {"kind": "reference", "band_hz": list(self.reference_band), "gain": self.reference_gain}
            ),
            "confidence": self.confidence,
            "decimation": {
                "factor": self.decimation,
                "filter": "hamming-windowed sinc FIR, unity DC gain",
                "taps": self.filter_taps,
                "cutoff_ratio_of_new_nyquist": self.filter_cutoff,
                "alignment": "zero-padded convolution, delay (taps-1)//2 removed",
            },
            "occlusion": {
                "patch": [occ.patch_h, occ.patch_w],
                "stride": [occ.stride_h, occ.stride_w],
                "baseline": occ.baseline.value,
                "importance": "max(0, p_orig - p_occluded), bilinear resize, min-max",
            },
            "weight_mode": self.weight_mode.value,
            "thresholds": list(self.thresholds),
            "features": {
                "renyi": "literal" if feat.renyi_literal else "normalized",
                "renyi_q": feat.renyi_q,
                "rolloff_fraction": feat.rolloff_fraction,
                "eps": feat.eps,
                "zero_frame_policy": feat.zero_frame_policy.value,
            },
            "spectrogram_average": self.spectrogram_average.value,
            "tests": {
                "gaussianity": "shapiro-wilk",
                "alpha": 0.05,
                "parametric": "welch_t" if self.welch else "student_t (pooled)",
                "nonparametric": "mann_whitney_u (exact up to n=25, else normal approx.)",
            },
            "groups": None if self.groups is None else str(self.groups),
        }

    def resolve(self, path) -> Path:
        path = Path(path)
        return path if path.is_absolute() else self.base_dir / path


def _floats(text: str, key: str, count: int | None = None) -> tuple:
    try:
        values = tuple(float(v) for v in text.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"{key}: expected numbers, got {text!r}") from None
    if count is not None and len(values) != count:
        raise ConfigError(f"{key}: expected {count} numbers, got {len(values)}")
    return values


def _ints(text: str, key: str, count: int) -> tuple:
    values = _floats(text, key, count)
    if any(v != int(v) for v in values):
        raise ConfigError(f"{key}: expected integers, got {text!r}")
    return tuple(int(v) for v in values)


def _choice(enum_cls, text: str, key: str):
    try:
        return enum_cls(text.strip().lower())
    except ValueError:
        options = ", ".join(m.value for m in enum_cls)
        raise ConfigError(f"{key}: {text!r} is not one of {options}") from None


_KNOWN_KEYS = {
    "model", "reference_band", "reference_gain", "confidence", "decimation",
    "filter_taps", "filter_cutoff", "patch", "stride", "baseline", "weight_mode",
    "thresholds", "renyi", "renyi_q", "rolloff", "eps", "zero_frame_policy",
    "spectrogram_average", "t_test", "groups", "out",
}


def parse_config(text: str, base_dir=".", source: str = "<config>") -> PipelineConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    if not parser.has_section("pipeline"):
        raise ConfigError(f"{source}: missing [pipeline] section")
    p = parser["pipeline"]
    unknown = set(p) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"{source}: unknown keys {sorted(unknown)}")

    manifest = {}
    if parser.has_section("manifest"):
        for pid, value in parser["manifest"].items():
            paths = [Path(v) for v in value.replace(",", " ").split()]
            if not paths:
                raise ConfigError(f"{source}: patient {pid} lists no WAV files")
            manifest[pid] = tuple(paths)

    kwargs = {"manifest": manifest, "base_dir": Path(base_dir)}
    try:
        if "model" in p:
            kwargs["model"] = Path(p["model"])
        if "reference_band" in p:
            kwargs["reference_band"] = _floats(p["reference_band"], "reference_band", 2)
        if "reference_gain" in p:
            kwargs["reference_gain"] = _floats(p["reference_gain"], "reference_gain", 1)[0]
        if "confidence" in p:
            kwargs["confidence"] = _floats(p["confidence"], "confidence", 1)[0]
        if "decimation" in p:
            kwargs["decimation"] = _ints(p["decimation"], "decimation", 1)[0]
        if "filter_taps" in p:
            kwargs["filter_taps"] = _ints(p["filter_taps"], "filter_taps", 1)[0]
        if "filter_cutoff" in p:
            kwargs["filter_cutoff"] = _floats(p["filter_cutoff"], "filter_cutoff", 1)[0]
        occ = {}
        if "patch" in p:
            occ["patch_h"], occ["patch_w"] = _ints(p["patch"], "patch", 2)
        if "stride" in p:
            occ["stride_h"], occ["stride_w"] = _ints(p["stride"], "stride", 2)
        if "baseline" in p:
            occ["baseline"] = _choice(Baseline, p["baseline"], "baseline")
        kwargs["occlusion"] = OcclusionConfig(**occ)
        if "weight_mode" in p:
            kwargs["weight_mode"] = _choice(WeightMode, p["weight_mode"], "weight_mode")
        if "thresholds" in p:
            kwargs["thresholds"] = _floats(p["thresholds"], "thresholds")
        feat = {}
        if "renyi" in p:
            mode = p["renyi"].strip().lower()
            if mode not in ("normalized", "literal"):
                raise ConfigError(f"renyi: expected normalized or literal, got {mode!r}")
            feat["renyi_literal"] = mode == "literal"
        if "renyi_q" in p:
            feat["renyi_q"] = _floats(p["renyi_q"], "renyi_q", 1)[0]
        if "rolloff" in p:
            feat["rolloff_fraction"] = _floats(p["rolloff"], "rolloff", 1)[0]
        if "eps" in p:
            feat["eps"] = _floats(p["eps"], "eps", 1)[0]
        if "zero_frame_policy" in p:
            feat["zero_frame_policy"] = _choice(ZeroFramePolicy, p["zero_frame_policy"], "zero_frame_policy")
        kwargs["features"] = FeatureConfig(**feat)
        if "spectrogram_average" in p:
            kwargs["spectrogram_average"] = _choice(AverageDomain, p["spectrogram_average"], "spectrogram_average")
        if "t_test" in p:
            mode = p["t_test"].strip().lower()
            if mode not in ("pooled", "welch"):
                raise ConfigError(f"t_test: expected pooled or welch, got {mode!r}")
            kwargs["welch"] = mode == "welch"
        if "groups" in p:
            kwargs["groups"] = Path(p["groups"])
        if "out" in p:
            kwargs["out"] = Path(p["out"])
        return PipelineConfig(**kwargs)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, path.parent, str(path))
