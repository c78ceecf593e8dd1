"""Dataset ingestion: IDX pairs, pixel CSVs, and synthetic generators.

A :class:`Dataset` is an images tensor [N, C, H, W], integer labels, and
four named index splits: ``search-train`` and ``search-val`` feed the
bilevel search phases, ``eval-train`` trains derived networks from
scratch, and ``test`` is held out for reporting. Splitting is a seeded
shuffle with configurable fractions, so a (spec, seed) pair maps to
byte-identical data every time.

Synthetic sources are ``gaussian-blobs`` (one Gaussian prototype image per
class plus noise — linearly separable for margins comfortably above the
noise scale) and ``striped-textures`` (class-specific stripe frequency and
orientation with a random per-sample phase).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

__all__ = [
    "SPLIT_NAMES",
    "Dataset",
    "load_dataset",
    "make_blobs",
    "make_stripes",
    "load_idx_pair",
    "load_pixel_csv",
]

SPLIT_NAMES = ("search-train", "search-val", "eval-train", "test")
DEFAULT_FRACTIONS = (0.25, 0.25, 0.30, 0.20)

_IDX_IMAGE_MAGIC = 2051
_IDX_LABEL_MAGIC = 2049


@dataclass
class Dataset:
    """Images, labels and the four named splits (index arrays)."""

    images: np.ndarray
    labels: np.ndarray
    splits: dict[str, np.ndarray]

    def __post_init__(self) -> None:
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise DataError(f"images must be [N, C, H, W], got {self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise DataError(f"labels must be one id per image, got "
                            f"{self.labels.shape} for {self.images.shape[0]} images")
        if self.num_classes < 2:
            raise DataError(f"need at least 2 classes, got {self.num_classes}")
        if set(self.splits) != set(SPLIT_NAMES):
            raise DataError(f"splits must be exactly {SPLIT_NAMES}")

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def split(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        if name not in self.splits:
            raise DataError(f"unknown split {name!r}; have {sorted(self.splits)}")
        idx = self.splits[name]
        return self.images[idx], self.labels[idx]

    def split_size(self, name: str) -> int:
        return len(self.splits[name])


def _make_splits(count: int, fractions, seed: int) -> dict[str, np.ndarray]:
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 4:
        raise ConfigError(f"need 4 split fractions, got {len(fractions)}")
    if any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must be nonnegative and sum to 1, "
                          f"got {fractions}")
    order = np.random.default_rng(np.random.SeedSequence([seed, 0xD5])).permutation(count)
    bounds = np.cumsum([int(round(f * count)) for f in fractions[:3]])
    parts = np.split(order, bounds)
    splits = dict(zip(SPLIT_NAMES, parts))
    if any(len(v) == 0 for v in splits.values()):
        raise DataError(f"{count} samples are too few for split fractions {fractions}")
    return splits


def _standardize(images: np.ndarray) -> np.ndarray:
    mean = images.mean(axis=(0, 2, 3), keepdims=True)
    std = images.std(axis=(0, 2, 3), keepdims=True)
    std[std < 1e-8] = 1.0
    return (images - mean) / std


def make_blobs(classes: int, count: int, *, channels: int = 1, height: int = 8,
               width: int = 8, noise: float = 1.0, margin: float = 2.0,
               seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Class-prototype images plus Gaussian noise; balanced labels."""
    if classes < 2:
        raise DataError(f"need at least 2 classes, got {classes}")
    if count < classes:
        raise DataError(f"need at least one sample per class, got {count}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xB1]))
    prototypes = rng.standard_normal((classes, channels, height, width))
    prototypes /= np.sqrt((prototypes ** 2).mean(axis=(1, 2, 3), keepdims=True))
    labels = np.arange(count) % classes
    images = margin * prototypes[labels] \
        + noise * rng.standard_normal((count, channels, height, width))
    return images, labels.astype(np.int64)


def make_stripes(classes: int, count: int, *, channels: int = 1, height: int = 8,
                 width: int = 8, noise: float = 0.3,
                 seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Striped textures: class k sets stripe frequency and orientation."""
    if classes < 2:
        raise DataError(f"need at least 2 classes, got {classes}")
    if count < classes:
        raise DataError(f"need at least one sample per class, got {count}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x57]))
    angles = np.pi * rng.permutation(classes) / classes
    freqs = 1.0 + np.arange(classes, dtype=np.float64)
    labels = np.arange(count) % classes
    rows = np.arange(height)[:, None] / height
    cols = np.arange(width)[None, :] / width
    images = np.empty((count, channels, height, width))
    for i, k in enumerate(labels):
        phase = rng.uniform(0.0, 2.0 * np.pi)
        wave = np.sin(2.0 * np.pi * freqs[k]
                      * (rows * np.cos(angles[k]) + cols * np.sin(angles[k]))
                      + phase)
        images[i] = wave[None] + noise * rng.standard_normal((channels, height, width))
    return images, labels.astype(np.int64)


def _read_idx(path: str, expected_magic: int) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4:
        raise DataError(f"{path}: truncated IDX header")
    magic = struct.unpack(">i", blob[:4])[0]
    if magic != expected_magic:
        raise DataError(f"{path}: IDX magic number mismatch: expected "
                        f"{expected_magic}, got {magic}")
    ndim = 1 if expected_magic == _IDX_LABEL_MAGIC else 3
    header = 4 + 4 * ndim
    if len(blob) < header:
        raise DataError(f"{path}: truncated IDX dimension header")
    dims = struct.unpack(f">{ndim}i", blob[4:header])
    expected = int(np.prod(dims))
    payload = np.frombuffer(blob, dtype=np.uint8, offset=header)
    if payload.size != expected:
        raise DataError(f"{path}: IDX payload holds {payload.size} bytes, header "
                        f"promises {expected}")
    return payload.reshape(dims)


def load_idx_pair(image_path: str, label_path: str) -> tuple[np.ndarray, np.ndarray]:
    """Read a big-endian IDX image/label file pair into arrays."""
    raw_images = _read_idx(image_path, _IDX_IMAGE_MAGIC)
    raw_labels = _read_idx(label_path, _IDX_LABEL_MAGIC)
    if raw_images.shape[0] != raw_labels.shape[0]:
        raise DataError(f"IDX pair mismatch: {raw_images.shape[0]} images vs "
                        f"{raw_labels.shape[0]} labels")
    images = raw_images.astype(np.float64)[:, None] / 255.0
    return images, raw_labels.astype(np.int64)


def load_pixel_csv(path: str, *, channels: int, height: int,
                   width: int) -> tuple[np.ndarray, np.ndarray]:
    """Read flattened-pixels-plus-label rows; the last column is the label."""
    pixels = channels * height * width
    rows: list[np.ndarray] = []
    labels: list[int] = []
    with open(path, "r", encoding="utf-8") as fh:
        for number, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if len(cells) != pixels + 1:
                raise DataError(f"{path}: row {number} has {len(cells)} columns, "
                                f"expected {pixels + 1}")
            values = np.empty(pixels)
            for col, cell in enumerate(cells[:-1], start=1):
                try:
                    values[col - 1] = float(cell)
                except ValueError:
                    raise DataError(f"{path}: row {number}, column {col}: "
                                    f"non-numeric pixel {cell.strip()!r}") from None
            try:
                labels.append(int(cells[-1]))
            except ValueError:
                raise DataError(f"{path}: row {number}: non-integer label "
                                f"{cells[-1].strip()!r}") from None
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no data rows")
    images = np.stack(rows).reshape(len(rows), channels, height, width)
    return images, np.asarray(labels, dtype=np.int64)


def load_dataset(spec: dict) -> Dataset:
    """Build a dataset from a source spec.

    ``spec["source"]`` selects ``synthetic`` (with ``generator`` of
    ``gaussian-blobs`` or ``striped-textures``), ``idx`` (``images`` and
    ``labels`` paths) or ``csv`` (``path`` plus image geometry). Optional
    everywhere: ``fractions`` (four split fractions), ``seed`` (shuffle and
    generation seed), ``standardize`` (default true).
    """
    if not isinstance(spec, dict):
        raise ConfigError(f"dataset spec must be a mapping, got {type(spec).__name__}")
    source = spec.get("source")
    seed = int(spec.get("seed", 0))
    if source == "synthetic":
        generator = spec.get("generator", "gaussian-blobs")
        common = dict(
            channels=int(spec.get("channels", 1)),
            height=int(spec.get("height", 8)),
            width=int(spec.get("width", 8)),
            noise=float(spec.get("noise", 1.0)),
            seed=seed,
        )
        classes = int(spec.get("classes", 2))
        count = int(spec.get("count", 256))
        if generator == "gaussian-blobs":
            common["margin"] = float(spec.get("margin", 2.0))
            images, labels = make_blobs(classes, count, **common)
        elif generator == "striped-textures":
            images, labels = make_stripes(classes, count, **common)
        else:
            raise ConfigError(f"unknown synthetic generator {generator!r}")
    elif source == "idx":
        for key in ("images", "labels"):
            if key not in spec:
                raise ConfigError(f"idx dataset spec needs a {key!r} path")
        images, labels = load_idx_pair(spec["images"], spec["labels"])
    elif source == "csv":
        if "path" not in spec:
            raise ConfigError("csv dataset spec needs a 'path'")
        images, labels = load_pixel_csv(
            spec["path"],
            channels=int(spec.get("channels", 1)),
            height=int(spec.get("height", 8)),
            width=int(spec.get("width", 8)),
        )
    else:
        raise ConfigError(f"unknown dataset source {source!r}")
    if labels.size and labels.min() < 0:
        raise DataError("labels must be nonnegative class ids")
    if int(labels.max()) + 1 < 2:
        raise DataError("need at least 2 classes")
    if bool(spec.get("standardize", True)):
        images = _standardize(images)
    fractions = spec.get("fractions", DEFAULT_FRACTIONS)
    splits = _make_splits(images.shape[0], fractions, seed)
    return Dataset(images=images, labels=labels, splits=splits)
