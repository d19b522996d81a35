"""Dataset and artifact I/O, plus the synthetic data generator.

File formats:

* Datasets are JSON Lines, one object per line with exact field names
  ``{"id", "direction", "q_small"?, "q_large"?, "features"?, "tokens"?,
  "first_step_entropy"?}``. Routing is per-request, so the on-disk format
  is too: it streams, diffs and appends naturally.
* Frequency tables are UTF-8 TSV ``token<TAB>frequency`` with an optional
  ``#floor_freq=<float>`` header. Frequencies are relative, in (0, 1].
* Heads and calibration profiles are single JSON objects carrying a
  ``"version": 1`` tag; floats round-trip exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Direction, RequestRecord
from .errors import (
    ConfigError,
    DatasetValidationError,
    DomainError,
    MissingSignalError,
    RoutingError,
    SchemaError,
    VersionError,
)
from .heads import LinearHead, Target
from .policy import CalibrationProfile, ProfileEntry, budget_size

DEFAULT_FLOOR_FREQ = 1e-8

_RECORD_FIELDS = (
    "id",
    "direction",
    "q_small",
    "q_large",
    "features",
    "tokens",
    "first_step_entropy",
)


@dataclass(frozen=True)
class Dataset:
    """Validated, immutable collection of request records.

    All ids are unique and every record that carries features has the
    same dimension.
    """

    records: tuple[RequestRecord, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))
        seen: set[str] = set()
        dim: int | None = None
        for record in self.records:
            if record.id in seen:
                raise DatasetValidationError(f"duplicate id {record.id!r}")
            seen.add(record.id)
            if record.features is not None:
                if dim is None:
                    dim = len(record.features)
                elif len(record.features) != dim:
                    raise DatasetValidationError(
                        f"record {record.id!r} has feature dim {len(record.features)}, "
                        f"expected {dim}"
                    )

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def feature_dim(self) -> int:
        for record in self.records:
            if record.features is not None:
                return len(record.features)
        return 0

    @property
    def directions(self) -> frozenset[Direction]:
        return frozenset(record.direction for record in self.records)

    def ids(self) -> list[str]:
        return [record.id for record in self.records]

    def features_matrix(self) -> np.ndarray:
        """(n, feature_dim) array; raises if any record lacks features."""
        rows = []
        for record in self.records:
            if record.features is None:
                raise MissingSignalError(f"record {record.id!r} has no features")
            rows.append(record.features)
        return np.asarray(rows, dtype=float)


@dataclass(frozen=True)
class FreqTable:
    """Unigram relative frequencies with an out-of-vocabulary floor.

    Unknown tokens resolve to floor_freq instead of erroring: live
    traffic always contains unseen tokens.
    """

    frequencies: dict[str, float]
    floor_freq: float = DEFAULT_FLOOR_FREQ

    def __post_init__(self) -> None:
        if not 0.0 < self.floor_freq <= 1.0:
            raise DomainError(f"floor_freq={self.floor_freq!r} outside (0, 1]")
        for token, freq in self.frequencies.items():
            if not 0.0 < freq <= 1.0:
                raise DomainError(f"frequency for {token!r} outside (0, 1]: {freq!r}")

    def lookup(self, token: str) -> float:
        return self.frequencies.get(token, self.floor_freq)


# ---------------------------------------------------------------------------
# Dataset files
# ---------------------------------------------------------------------------


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _parse_record_obj(obj: dict, where: str) -> RequestRecord:
    if not isinstance(obj, dict):
        raise DatasetValidationError(f"{where}: expected a JSON object")
    unknown = set(obj) - set(_RECORD_FIELDS)
    if unknown:
        raise DatasetValidationError(f"{where}: unknown fields {sorted(unknown)}")
    for field in ("id", "direction"):
        if field not in obj:
            raise DatasetValidationError(f"{where}: missing field {field!r}")
        if not isinstance(obj[field], str):
            raise DatasetValidationError(f"{where}: field {field!r} must be a string")
    for field in ("q_small", "q_large", "first_step_entropy"):
        if obj.get(field) is not None and not _is_number(obj[field]):
            raise DatasetValidationError(f"{where}: field {field!r} must be a number")
    features = obj.get("features")
    if features is not None:
        if not isinstance(features, list) or not all(_is_number(x) for x in features):
            raise DatasetValidationError(f"{where}: 'features' must be a list of numbers")
    tokens = obj.get("tokens")
    if tokens is not None:
        if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
            raise DatasetValidationError(f"{where}: 'tokens' must be a list of strings")
    try:
        return RequestRecord(
            id=obj["id"],
            direction=Direction(obj["direction"]),
            q_small=None if obj.get("q_small") is None else float(obj["q_small"]),
            q_large=None if obj.get("q_large") is None else float(obj["q_large"]),
            features=None if features is None else tuple(float(x) for x in features),
            tokens=None if tokens is None else tuple(tokens),
            first_step_entropy=(
                None
                if obj.get("first_step_entropy") is None
                else float(obj["first_step_entropy"])
            ),
        )
    except DomainError as exc:
        raise DatasetValidationError(f"{where}: {exc}") from exc


def load_dataset(path: str | Path) -> Dataset:
    """Load and validate a JSON Lines dataset.

    Every failure message names the offending line; duplicate ids report
    both lines involved.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DatasetValidationError(f"cannot read {path}: {exc}") from exc
    records: list[RequestRecord] = []
    errors: list[str] = []
    id_lines: dict[str, int] = {}
    dim: int | None = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        where = f"line {lineno}"
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            errors.append(f"{where}: invalid JSON ({exc.msg})")
            continue
        try:
            record = _parse_record_obj(obj, where)
        except DatasetValidationError as exc:
            errors.append(str(exc))
            continue
        if record.id in id_lines:
            errors.append(
                f"{where}: duplicate id {record.id!r} (first seen on line "
                f"{id_lines[record.id]})"
            )
            continue
        id_lines[record.id] = lineno
        if record.features is not None:
            if dim is None:
                dim = len(record.features)
            elif len(record.features) != dim:
                errors.append(
                    f"{where}: feature dim {len(record.features)} != {dim} "
                    f"seen earlier in the file"
                )
                continue
        records.append(record)
    if errors:
        raise DatasetValidationError(
            f"{path}: {len(errors)} invalid line(s):\n" + "\n".join(errors)
        )
    return Dataset(records=tuple(records))


def _record_to_obj(record: RequestRecord) -> dict:
    obj: dict = {"id": record.id, "direction": record.direction.tag}
    if record.q_small is not None:
        obj["q_small"] = record.q_small
    if record.q_large is not None:
        obj["q_large"] = record.q_large
    if record.features is not None:
        obj["features"] = list(record.features)
    if record.tokens is not None:
        obj["tokens"] = list(record.tokens)
    if record.first_step_entropy is not None:
        obj["first_step_entropy"] = record.first_step_entropy
    return obj


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    """Write JSON Lines; load_dataset(save_dataset(ds)) is the identity."""
    path = Path(path)
    lines = [
        json.dumps(_record_to_obj(record), ensure_ascii=False, separators=(",", ":"))
        for record in dataset
    ]
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8", newline="\n")


# ---------------------------------------------------------------------------
# Frequency tables
# ---------------------------------------------------------------------------


def load_freq_table(path: str | Path) -> FreqTable:
    """Load a token<TAB>frequency table, honoring a #floor_freq header."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DatasetValidationError(f"cannot read {path}: {exc}") from exc
    floor = DEFAULT_FLOOR_FREQ
    frequencies: dict[str, float] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            if line.startswith("#floor_freq="):
                try:
                    floor = float(line.split("=", 1)[1])
                except ValueError as exc:
                    raise DatasetValidationError(
                        f"line {lineno}: bad floor_freq header"
                    ) from exc
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DatasetValidationError(
                f"line {lineno}: expected 'token<TAB>frequency'"
            )
        token, raw = parts
        try:
            freq = float(raw)
        except ValueError as exc:
            raise DatasetValidationError(f"line {lineno}: bad frequency {raw!r}") from exc
        if not 0.0 < freq <= 1.0:
            raise DatasetValidationError(
                f"line {lineno}: frequency {freq!r} outside (0, 1]"
            )
        if token in frequencies:
            raise DatasetValidationError(f"line {lineno}: duplicate token {token!r}")
        frequencies[token] = freq
    try:
        return FreqTable(frequencies=frequencies, floor_freq=floor)
    except DomainError as exc:
        raise DatasetValidationError(str(exc)) from exc


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PlantedLinear:
    """Gains follow weights . features + bias + N(0, noise_sigma^2).

    Features are drawn i.i.d. standard normal, so a ridge fit with a
    vanishing penalty recovers `weights` on noiseless data.
    """

    weights: tuple[float, ...]
    bias: float = 0.0
    noise_sigma: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")


@dataclass(frozen=True)
class Independent:
    """q_small and q_large drawn independently from uniform bands."""

    q_small_range: tuple[float, float] = (0.0, 100.0)
    q_large_range: tuple[float, float] = (0.0, 100.0)

    def __post_init__(self) -> None:
        for name in ("q_small_range", "q_large_range"):
            low, high = getattr(self, name)
            if not low <= high:
                raise ConfigError(f"{name}: low must be <= high")


@dataclass(frozen=True)
class SyntheticConfig:
    n: int
    feature_dim: int
    seed: int
    gain_model: PlantedLinear | Independent
    severe_fraction: float = 0.0
    direction_tags: tuple[str, ...] = ("en-zh", "en-ru", "zh-en", "ru-en")

    def __post_init__(self) -> None:
        if self.n <= 0:
            raise ConfigError("n must be > 0")
        if self.feature_dim < 0:
            raise ConfigError("feature_dim must be >= 0")
        if not 0.0 <= self.severe_fraction <= 1.0:
            raise ConfigError("severe_fraction must be in [0, 1]")
        if isinstance(self.gain_model, PlantedLinear):
            if self.feature_dim != len(self.gain_model.weights):
                raise ConfigError(
                    f"feature_dim={self.feature_dim} != planted weight count "
                    f"{len(self.gain_model.weights)}"
                )
            if self.feature_dim == 0:
                raise ConfigError("PlantedLinear needs feature_dim >= 1")
        if not self.direction_tags:
            raise ConfigError("need at least one direction tag")


@dataclass(frozen=True)
class SynthReport:
    """What generation had to adjust; zero everywhere on a clean run."""

    clamped_gains: int = 0  # raw gains clipped into [-100, 100]
    clamped_qualities: int = 0  # quality draws clipped into [0, 100]
    forced_severe: int = 0  # gains pushed to <= -5 by severe_fraction
    bumped_nonsevere: int = 0  # natural severe gains nudged above -5 to keep the count exact


# Margin below -5 so severe gains survive float round-trips through q values.
_SEVERE_MARGIN = 1e-6
_NONSEVERE_GAIN = -4.999


def generate_synthetic(config: SyntheticConfig) -> tuple[Dataset, SynthReport]:
    """Deterministically generate a labeled dataset from the config.

    When severe_fraction > 0, exactly round(severe_fraction * n) records
    end up with gain <= -5: a seeded subset is forced below the boundary
    and any other record that lands there naturally is nudged just above
    it. Both adjustments are counted in the report, as are gain/quality
    clamps, so tests can assert the generator did not silently distort
    the planted structure.
    """
    rng = np.random.default_rng(config.seed & 0xFFFFFFFFFFFFFFFF)
    n = config.n
    directions = [Direction(tag) for tag in config.direction_tags]

    features = (
        rng.standard_normal((n, config.feature_dim)) if config.feature_dim > 0 else None
    )

    clamped_gains = 0
    clamped_qualities = 0

    if isinstance(config.gain_model, PlantedLinear):
        model = config.gain_model
        noise = (
            rng.normal(0.0, model.noise_sigma, n) if model.noise_sigma > 0 else np.zeros(n)
        )
        gains = features @ np.asarray(model.weights) + model.bias + noise
        out_of_range = (gains < -100.0) | (gains > 100.0)
        clamped_gains = int(out_of_range.sum())
        if clamped_gains == n:
            raise ConfigError(
                "planted gains exceed the quality range for every record; "
                "shrink |bias| or the weights"
            )
        gains = np.clip(gains, -100.0, 100.0)
        gains, forced, bumped = _enforce_severe_count(gains, config.severe_fraction, rng)
        # q_small uniform in the band keeping both qualities inside [0, 100].
        low = np.maximum(0.0, -gains)
        high = np.minimum(100.0, 100.0 - gains)
        q_small = low + rng.uniform(0.0, 1.0, n) * (high - low)
        q_large = q_small + gains
    else:
        model = config.gain_model
        q_small = rng.uniform(*model.q_small_range, n)
        q_large = rng.uniform(*model.q_large_range, n)
        out_small = (q_small < 0.0) | (q_small > 100.0)
        out_large = (q_large < 0.0) | (q_large > 100.0)
        clamped_qualities = int(out_small.sum() + out_large.sum())
        q_small = np.clip(q_small, 0.0, 100.0)
        q_large = np.clip(q_large, 0.0, 100.0)
        q_small, q_large, forced, bumped = _enforce_severe_count_qualities(
            q_small, q_large, config.severe_fraction, rng
        )

    # Float addition can overshoot the band edge by one ulp; snap it back.
    q_small = np.clip(q_small, 0.0, 100.0)
    q_large = np.clip(q_large, 0.0, 100.0)

    width = len(str(n - 1))
    records = tuple(
        RequestRecord(
            id=f"syn-{i:0{width}d}",
            direction=directions[i % len(directions)],
            q_small=float(q_small[i]),
            q_large=float(q_large[i]),
            features=None if features is None else tuple(map(float, features[i])),
        )
        for i in range(n)
    )
    report = SynthReport(
        clamped_gains=clamped_gains,
        clamped_qualities=clamped_qualities,
        forced_severe=forced,
        bumped_nonsevere=bumped,
    )
    return Dataset(records=records), report


def _enforce_severe_count(
    gains: np.ndarray, severe_fraction: float, rng: np.random.Generator
) -> tuple[np.ndarray, int, int]:
    if severe_fraction <= 0.0:
        return gains, 0, 0
    n = len(gains)
    k = budget_size(severe_fraction, n)
    chosen = rng.choice(n, size=k, replace=False)
    extras = rng.exponential(2.0, size=k)
    forced = 0
    gains = gains.copy()
    for idx, extra in zip(chosen, extras):
        if gains[idx] > -5.0 - _SEVERE_MARGIN:
            gains[idx] = max(-100.0, -5.0 - _SEVERE_MARGIN - extra)
            forced += 1
    chosen_set = set(int(i) for i in chosen)
    bumped = 0
    for idx in range(n):
        if idx not in chosen_set and gains[idx] <= -5.0:
            gains[idx] = _NONSEVERE_GAIN
            bumped += 1
    return gains, forced, bumped


def _enforce_severe_count_qualities(
    q_small: np.ndarray,
    q_large: np.ndarray,
    severe_fraction: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, int, int]:
    if severe_fraction <= 0.0:
        return q_small, q_large, 0, 0
    n = len(q_small)
    k = budget_size(severe_fraction, n)
    chosen = rng.choice(n, size=k, replace=False)
    extras = rng.exponential(2.0, size=k)
    q_small = q_small.copy()
    q_large = q_large.copy()
    forced = 0
    for idx, extra in zip(chosen, extras):
        if q_large[idx] - q_small[idx] > -5.0 - _SEVERE_MARGIN:
            q_small[idx] = max(q_small[idx], 5.0 + _SEVERE_MARGIN)
            q_large[idx] = max(0.0, q_small[idx] - 5.0 - _SEVERE_MARGIN - extra)
            forced += 1
    chosen_set = set(int(i) for i in chosen)
    bumped = 0
    for idx in range(n):
        if idx not in chosen_set and q_large[idx] - q_small[idx] <= -5.0:
            q_large[idx] = q_small[idx] + _NONSEVERE_GAIN
            bumped += 1
    return q_small, q_large, forced, bumped


# ---------------------------------------------------------------------------
# Head and profile files
# ---------------------------------------------------------------------------

_HEAD_KIND = "linear_head"
_PROFILE_KIND = "calibration_profile"
FILE_VERSION = 1


def save_head(head: LinearHead, path: str | Path) -> None:
    obj = {
        "version": FILE_VERSION,
        "kind": _HEAD_KIND,
        "target": head.target.value,
        "dim": head.dim,
        "weights": list(head.weights),
        "bias": head.bias,
        "feature_mean": list(head.feature_mean),
        "feature_scale": list(head.feature_scale),
        "lambda": head.ridge_lambda,
        "train_fingerprint": head.train_fingerprint,
    }
    Path(path).write_text(
        json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n"
    )


def _load_versioned(path: str | Path, kind: str) -> dict:
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc.msg})") from exc
    if not isinstance(obj, dict):
        raise SchemaError(f"{path}: expected a JSON object")
    if obj.get("version") != FILE_VERSION:
        raise VersionError(
            f"{path}: unsupported version {obj.get('version')!r}, expected {FILE_VERSION}"
        )
    if obj.get("kind") != kind:
        raise SchemaError(f"{path}: kind {obj.get('kind')!r}, expected {kind!r}")
    return obj


def load_head(path: str | Path) -> LinearHead:
    obj = _load_versioned(path, _HEAD_KIND)
    try:
        weights = obj["weights"]
        if obj["dim"] != len(weights):
            raise SchemaError(
                f"{path}: declared dim {obj['dim']} != weight count {len(weights)}"
            )
        return LinearHead(
            weights=tuple(weights),
            bias=float(obj["bias"]),
            target=Target(obj["target"]),
            feature_mean=tuple(obj["feature_mean"]),
            feature_scale=tuple(obj["feature_scale"]),
            ridge_lambda=float(obj["lambda"]),
            train_fingerprint=str(obj.get("train_fingerprint", "")),
        )
    except SchemaError:
        raise
    except (KeyError, TypeError, ValueError, RoutingError) as exc:
        raise SchemaError(f"{path}: malformed head file ({exc})") from exc


def save_profile(profile: CalibrationProfile, path: str | Path) -> None:
    obj = {
        "version": FILE_VERSION,
        "kind": _PROFILE_KIND,
        "scorer_fingerprint": profile.scorer_fingerprint,
        "entries": [
            {
                "p": entry.p,
                "tau": entry.tau,
                "scope": entry.scope,
                "n_calibration": entry.n_calibration,
            }
            for entry in profile.entries
        ],
    }
    Path(path).write_text(
        json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n"
    )


def load_profile(path: str | Path) -> CalibrationProfile:
    obj = _load_versioned(path, _PROFILE_KIND)
    try:
        entries = tuple(
            ProfileEntry(
                p=float(e["p"]),
                tau=float(e["tau"]),
                scope=str(e["scope"]),
                n_calibration=int(e["n_calibration"]),
            )
            for e in obj["entries"]
        )
        return CalibrationProfile(
            entries=entries, scorer_fingerprint=str(obj.get("scorer_fingerprint", ""))
        )
    except (KeyError, TypeError, ValueError, RoutingError) as exc:
        raise SchemaError(f"{path}: malformed profile file ({exc})") from exc
