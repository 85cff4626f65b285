"""Item-keyed time series, long-format ingestion and backtest splits."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

FREQ_SECONDS = {"hourly": 3600, "daily": 86400}
DEFAULT_SEASONALITY = {"hourly": 24, "daily": 7}
DEFAULT_SCHEMA = {"item_id": "item_id", "timestamp": "timestamp", "target": "target"}


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeSeries:
    item_id: str
    start: int  # epoch seconds
    freq: str
    values: np.ndarray

    def __post_init__(self):
        if self.freq not in FREQ_SECONDS:
            raise DataError(f"unknown frequency {self.freq!r}")
        values = _frozen(self.values)
        if values.ndim != 1 or values.size == 0:
            raise DataError(f"item {self.item_id!r}: values must be a non-empty 1-d sequence")
        if np.isnan(values).any():
            raise DataError(f"item {self.item_id!r}: NaN values after ingestion")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size

    @property
    def step_seconds(self) -> int:
        return FREQ_SECONDS[self.freq]

    def timestamps(self) -> np.ndarray:
        return self.start + self.step_seconds * np.arange(len(self))

    def slice(self, lo: int, hi: int) -> "TimeSeries":
        """Sub-series over 0-based half-open index range [lo, hi)."""
        return TimeSeries(self.item_id, self.start + lo * self.step_seconds, self.freq, self.values[lo:hi])


@dataclass(frozen=True)
class Dataset:
    name: str
    items: tuple[TimeSeries, ...]
    horizon_k: int
    seasonality_m: int
    imputed_points: int = 0

    def __post_init__(self):
        items = tuple(self.items)
        object.__setattr__(self, "items", items)
        if not items:
            raise DataError(f"dataset {self.name!r} has no items")
        if self.horizon_k < 1:
            raise DataError("horizon_k must be a positive integer")
        if self.seasonality_m < 1:
            raise DataError("seasonality_m must be >= 1")
        freqs = {ts.freq for ts in items}
        if len(freqs) > 1:
            raise DataError(f"dataset {self.name!r} mixes frequencies {sorted(freqs)}")
        ids = [ts.item_id for ts in items]
        if len(set(ids)) != len(ids):
            raise DataError(f"dataset {self.name!r} has duplicate item ids")

    @property
    def freq(self) -> str:
        return self.items[0].freq

    @property
    def item_ids(self) -> list[str]:
        return [ts.item_id for ts in self.items]

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def min_length(self) -> int:
        return min(len(ts) for ts in self.items)

    def with_items(self, items: Sequence[TimeSeries]) -> "Dataset":
        return replace(self, items=tuple(items))


@dataclass(frozen=True)
class SplitSet:
    """Disjoint train / test / validation windows of a dataset."""

    train: Dataset
    test: Dataset
    validation: Dataset

    @property
    def train_plus_test(self) -> Dataset:
        """Items truncated to z_{1:t-k}, i.e. everything except validation."""
        items = [
            TimeSeries(tr.item_id, tr.start, tr.freq, np.concatenate([tr.values, te.values]))
            for tr, te in zip(self.train.items, self.test.items)
        ]
        return self.train.with_items(items)


def split_three_way(d: Dataset) -> SplitSet:
    """Split every item into [1, t-2k], [t-2k+1, t-k], [t-k+1, t]."""
    k = d.horizon_k
    train, test, val = [], [], []
    for ts in d.items:
        t = len(ts)
        if t < 3 * k:
            raise DataError(f"item {ts.item_id!r} has length {t} < 3*horizon ({3 * k})")
        train.append(ts.slice(0, t - 2 * k))
        test.append(ts.slice(t - 2 * k, t - k))
        val.append(ts.slice(t - k, t))
    return SplitSet(d.with_items(train), d.with_items(test), d.with_items(val))


def tuning_split(train: Dataset) -> tuple[Dataset, Dataset]:
    """Nested split of the training window used only by hyperparameter tuning."""
    k = train.horizon_k
    fit, hold = [], []
    for ts in train.items:
        n = len(ts)
        if n < 2 * k:
            raise DataError(f"item {ts.item_id!r}: training length {n} < 2*horizon ({2 * k})")
        fit.append(ts.slice(0, n - k))
        hold.append(ts.slice(n - k, n))
    return train.with_items(fit), train.with_items(hold)


# --------------------------------------------------------------------------
# long-format CSV


def _parse_timestamp(text: str) -> int:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    stamp = datetime.fromisoformat(text)
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    return int(round(stamp.timestamp()))


def _format_timestamp(epoch: int) -> str:
    return datetime.fromtimestamp(int(epoch), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%S")


def _infer_freq(deltas: list[int]) -> str:
    if not deltas:
        raise DataError("cannot infer frequency: every item has a single observation; pass freq")
    step = min(deltas)
    for name, seconds in FREQ_SECONDS.items():
        if step == seconds:
            return name
    raise DataError(f"unsupported sampling interval of {step} seconds (hourly or daily only)")


def ingest_long_csv(
    path: str | Path,
    schema: Mapping[str, str] | None = None,
    *,
    name: str | None = None,
    horizon_k: int = 1,
    seasonality_m: int | None = None,
    freq: str | None = None,
) -> Dataset:
    """Read a long-format CSV into a :class:`Dataset`.

    Gaps on the sampling grid and empty targets are forward-filled; leading
    gaps are zero-filled. The number of imputed points is stored on the
    dataset and logged.
    """
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    path = Path(path)
    raw: dict[str, list[tuple[int, float, int]]] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        try:
            cols = [header.index(schema[key]) for key in ("item_id", "timestamp", "target")]
        except ValueError:
            raise DataError(f"{path}: header {header} lacks columns {list(schema.values())}") from None
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            item, stamp_text, target_text = (row[c].strip() for c in cols)
            if not item:
                raise DataError(f"{path}:{lineno}: empty item_id")
            try:
                stamp = _parse_timestamp(stamp_text)
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad timestamp {stamp_text!r}") from None
            if target_text == "":
                value = math.nan
            else:
                try:
                    value = float(target_text)
                except ValueError:
                    raise DataError(f"{path}:{lineno}: bad target {target_text!r}") from None
            raw.setdefault(item, []).append((stamp, value, lineno))

    if not raw:
        raise DataError(f"{path}: no data rows")

    deltas = []
    for item, rows in raw.items():
        for (s0, _, _), (s1, _, line) in zip(rows, rows[1:]):
            if s1 == s0:
                raise DataError(f"{path}:{line}: duplicate (item, timestamp) ({item}, {_format_timestamp(s1)})")
            if s1 < s0:
                raise DataError(f"{path}:{line}: timestamps not strictly increasing for item {item!r}")
            deltas.append(s1 - s0)
    freq = freq or _infer_freq(deltas)
    step = FREQ_SECONDS[freq]

    items = []
    imputed = 0
    for item, rows in raw.items():
        start = rows[0][0]
        offsets = []
        for stamp, _, line in rows:
            off, rem = divmod(stamp - start, step)
            if rem:
                raise DataError(f"{path}:{line}: item {item!r} is off the {freq} grid (mixed frequencies)")
            offsets.append(off)
        values = np.full(offsets[-1] + 1, np.nan)
        values[offsets] = [v for _, v, _ in rows]
        missing = np.isnan(values)
        imputed += int(missing.sum())
        items.append(TimeSeries(item, start, freq, _fill_forward(values)))

    if imputed:
        logger.info("%s: imputed %d missing points (forward fill, zero at head)", path, imputed)
    return Dataset(
        name=name or path.stem,
        items=tuple(items),
        horizon_k=horizon_k,
        seasonality_m=seasonality_m or DEFAULT_SEASONALITY[freq],
        imputed_points=imputed,
    )


def _fill_forward(values: np.ndarray) -> np.ndarray:
    out = values.copy()
    last = 0.0
    for i, v in enumerate(out):
        if np.isnan(v):
            out[i] = last
        else:
            last = v
    return out


def write_long_csv(d: Dataset, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["item_id", "timestamp", "target"])
        for ts in d.items:
            for stamp, value in zip(ts.timestamps(), ts.values):
                writer.writerow([ts.item_id, _format_timestamp(stamp), repr(float(value))])


@dataclass(frozen=True)
class Manifest:
    name: str
    freq: str
    horizon_k: int
    seasonality_m: int
    source_path: str

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True)


def write_manifest(d: Dataset, source_path: str | Path, path: str | Path) -> Manifest:
    manifest = Manifest(d.name, d.freq, d.horizon_k, d.seasonality_m, str(source_path))
    Path(path).write_text(manifest.to_json() + "\n", encoding="utf-8")
    return manifest


def load_manifest(path: str | Path) -> Dataset:
    path = Path(path)
    try:
        meta = json.loads(path.read_text(encoding="utf-8"))
        source = Path(meta["source_path"])
        if not source.is_absolute():
            source = path.parent / source
        return ingest_long_csv(
            source,
            name=meta["name"],
            horizon_k=int(meta["horizon_k"]),
            seasonality_m=int(meta["seasonality_m"]),
            freq=meta["freq"],
        )
    except (KeyError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: invalid manifest ({exc})") from None


# --------------------------------------------------------------------------
# synthetic data


@dataclass(frozen=True)
class SyntheticSpec:
    n_items: int = 10
    n_steps: int = 120
    horizon_k: int = 10
    seasonality_m: int = 7
    level: float = 10.0
    trend_slope: float = 0.0
    seasonal_amplitude: float = 1.0
    noise_std: float = 0.1
    freq: str = "daily"
    random_phase: bool = True
    item_scale: tuple[float, float] = (1.0, 1.0)
    name: str = "synthetic"
    start: str = "2020-01-01T00:00:00"

    @classmethod
    def from_dict(cls, data: Mapping) -> "SyntheticSpec":
        data = dict(data)
        if "item_scale" in data:
            data["item_scale"] = tuple(data["item_scale"])
        return cls(**data)


def generate_synthetic(spec: SyntheticSpec, seed: int) -> Dataset:
    """Linear trend + sinusoid of period ``seasonality_m`` + Gaussian noise."""
    if spec.n_steps < 3 * spec.horizon_k:
        raise DataError(f"n_steps={spec.n_steps} < 3*horizon ({3 * spec.horizon_k})")
    rng = np.random.default_rng(seed)
    t = np.arange(spec.n_steps, dtype=float)
    start = _parse_timestamp(spec.start)
    items = []
    for i in range(spec.n_items):
        phase = rng.uniform(0, 2 * np.pi) if spec.random_phase else 0.0
        scale = rng.uniform(*spec.item_scale)
        noise = rng.normal(0.0, 1.0, spec.n_steps) * spec.noise_std
        values = spec.level + spec.trend_slope * t + noise
        if spec.seasonal_amplitude:
            values = values + spec.seasonal_amplitude * np.sin(2 * np.pi * t / spec.seasonality_m + phase)
        items.append(TimeSeries(f"item_{i:03d}", start, spec.freq, scale * values))
    return Dataset(spec.name, tuple(items), spec.horizon_k, spec.seasonality_m)


def dataset_from_arrays(
    arrays: Sequence[Sequence[float]] | Mapping[str, Sequence[float]],
    horizon_k: int,
    seasonality_m: int = 1,
    *,
    name: str = "arrays",
    freq: str = "daily",
) -> Dataset:
    """Convenience constructor used by tests and examples."""
    if isinstance(arrays, Mapping):
        pairs = list(arrays.items())
    else:
        pairs = [(f"item_{i:03d}", a) for i, a in enumerate(arrays)]
    items = tuple(TimeSeries(str(k), 0, freq, np.asarray(v, dtype=float)) for k, v in pairs)
    return Dataset(name, items, horizon_k, seasonality_m)


__all__ = [
    "DataError",
    "TimeSeries",
    "Dataset",
    "SplitSet",
    "split_three_way",
    "tuning_split",
    "ingest_long_csv",
    "write_long_csv",
    "Manifest",
    "write_manifest",
    "load_manifest",
    "SyntheticSpec",
    "generate_synthetic",
    "dataset_from_arrays",
]
