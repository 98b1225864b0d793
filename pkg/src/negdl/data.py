"""Datasets and the fixed-width binary attribute encoding.

An instance of ``M`` integer attributes becomes an ``m = L * M`` bit string:
each attribute is written as ``L`` big-endian bits and the attributes are
concatenated in order. Bit ``i * L + j`` (0-based) therefore carries weight
``2 ** (L - 1 - j)`` of attribute ``i``.
"""

from __future__ import annotations

import gzip
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .seeding import stage_rng

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

BREAST_CANCER_ATTRIBUTES = 9
BREAST_CANCER_CLASSES = {2: 0, 4: 1}


class CodecRangeError(ValueError):
    """An attribute value does not fit in ``L`` bits."""

    def __init__(self, index: int, value, bits: int):
        self.index = index
        self.value = value
        super().__init__(
            f"attribute {index}: value {value!r} outside [0, {2 ** bits - 1}]"
        )


class BitFormatError(ValueError):
    pass


class DataFormatError(ValueError):
    """Malformed dataset file. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class AttributeCodec:
    bits: int
    attributes: int

    def __post_init__(self):
        if self.bits < 1 or self.attributes < 1:
            raise ValueError(f"bits and attributes must be positive, got {self.bits}, {self.attributes}")

    @property
    def m(self) -> int:
        return self.bits * self.attributes

    @property
    def max_value(self) -> int:
        return 2 ** self.bits - 1

    @property
    def weights(self) -> np.ndarray:
        """Positional weights of one attribute's bits, most significant first."""
        return 2.0 ** np.arange(self.bits - 1, -1, -1)

    def check(self, values) -> np.ndarray:
        arr = np.asarray(values)
        if arr.ndim != 1 or arr.shape[0] != self.attributes:
            raise ValueError(f"expected {self.attributes} attribute values, got shape {arr.shape}")
        for i, v in enumerate(arr.tolist()):
            if isinstance(v, float) and not v.is_integer():
                raise CodecRangeError(i, v, self.bits)
            if not 0 <= v <= self.max_value:
                raise CodecRangeError(i, v, self.bits)
        return arr.astype(np.int64)

    def to_bits(self, values) -> np.ndarray:
        """Encode to a uint8 array of length ``m`` (the array form of :func:`encode_instance`)."""
        arr = self.check(values)
        shifts = np.arange(self.bits - 1, -1, -1)
        return ((arr[:, None] >> shifts) & 1).astype(np.uint8).ravel()

    def to_bits_batch(self, instances: np.ndarray) -> np.ndarray:
        """Vectorised encoding of an ``n x M`` matrix; values are assumed in range."""
        instances = np.asarray(instances, dtype=np.int64)
        if instances.min(initial=0) < 0 or instances.max(initial=0) > self.max_value:
            bad = np.argwhere((instances < 0) | (instances > self.max_value))[0]
            raise CodecRangeError(int(bad[1]), int(instances[tuple(bad)]), self.bits)
        shifts = np.arange(self.bits - 1, -1, -1)
        bits = (instances[:, :, None] >> shifts) & 1
        return bits.reshape(len(instances), self.m).astype(np.uint8)

    def from_bits(self, bits) -> np.ndarray:
        arr = np.asarray(bits, dtype=np.int64).reshape(self.attributes, self.bits)
        return arr @ (1 << np.arange(self.bits - 1, -1, -1))


def encode_instance(values, codec: AttributeCodec) -> str:
    return "".join("1" if b else "0" for b in codec.to_bits(values))


def decode_bits(bits: str, length: int | None = None) -> int:
    if length is not None and len(bits) != length:
        raise BitFormatError(f"expected {length} bits, got {len(bits)}")
    if not bits or set(bits) - {"0", "1"}:
        raise BitFormatError(f"not a binary string: {bits!r}")
    return int(bits, 2)


def bits_from_string(s: str) -> np.ndarray:
    if set(s) - {"0", "1"}:
        raise BitFormatError(f"not a binary string: {s[:40]!r}")
    return np.frombuffer(s.encode("ascii"), dtype=np.uint8) - ord("0")


def bits_to_string(bits) -> str:
    return (np.asarray(bits, dtype=np.uint8) + ord("0")).tobytes().decode("ascii")


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    test: np.ndarray
    seed: int


@dataclass
class Dataset:
    instances: np.ndarray
    labels: np.ndarray
    codec: AttributeCodec
    name: str = "dataset"
    normalizer: float = 1.0
    n_classes: int = field(default=0)
    dropped: int = 0

    def __post_init__(self):
        self.instances = np.asarray(self.instances, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.instances.ndim != 2 or self.instances.shape[1] != self.codec.attributes:
            raise ValueError(
                f"instances must be n x {self.codec.attributes}, got {self.instances.shape}"
            )
        if len(self.instances) != len(self.labels):
            raise ValueError(f"{len(self.instances)} instances but {len(self.labels)} labels")
        if self.instances.size and (
            self.instances.min() < 0 or self.instances.max() > self.codec.max_value
        ):
            raise ValueError(f"attribute values outside [0, {self.codec.max_value}]")
        if not self.n_classes:
            self.n_classes = int(self.labels.max()) + 1 if len(self.labels) else 0

    def __len__(self) -> int:
        return len(self.labels)

    def split(self, seed: int, train_fraction: float = 0.7) -> Split:
        """Seeded uniform shuffle, then a prefix cut of ``round(n * train_fraction)``."""
        if not 0 < train_fraction < 1:
            raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
        order = stage_rng(seed, "split").permutation(len(self))
        cut = int(round(len(self) * train_fraction))
        return Split(train=np.sort(order[:cut]), test=np.sort(order[cut:]), seed=seed)

    def subset(self, index) -> Dataset:
        return Dataset(
            self.instances[index], self.labels[index], self.codec, self.name,
            self.normalizer, self.n_classes,
        )

    def bit_strings(self) -> np.ndarray:
        return self.codec.to_bits_batch(self.instances)


def load_breast_cancer(path) -> Dataset:
    """Read the UCI breast-cancer-wisconsin file (id, 9 attributes, class).

    Rows with a ``?`` are dropped. Classes 2/4 map to 0 (benign) / 1 (malignant).
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    rows, labels = [], []
    dropped = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != BREAST_CANCER_ATTRIBUTES + 2:
            raise DataFormatError(f"expected 11 fields, got {len(fields)}", lineno)
        if "?" in fields:
            dropped += 1
            continue
        try:
            values = [int(f) for f in fields[1:-1]]
            cls = int(fields[-1])
        except ValueError as exc:
            raise DataFormatError(f"non-integer field ({exc})", lineno) from None
        if any(not 1 <= v <= 10 for v in values):
            raise DataFormatError(f"attribute outside [1, 10]: {values}", lineno)
        if cls not in BREAST_CANCER_CLASSES:
            raise DataFormatError(f"unknown class {cls}", lineno)
        rows.append(values)
        labels.append(BREAST_CANCER_CLASSES[cls])
    return Dataset(
        np.array(rows, dtype=np.int64).reshape(-1, BREAST_CANCER_ATTRIBUTES),
        np.array(labels, dtype=np.int64),
        AttributeCodec(bits=4, attributes=BREAST_CANCER_ATTRIBUTES),
        name="breast-cancer",
        normalizer=10.0,
        n_classes=2,
        dropped=dropped,
    )


def _read_maybe_gzip(path: Path) -> bytes:
    try:
        with open(path, "rb") as fh:
            head = fh.read(2)
        opener = gzip.open if head == b"\x1f\x8b" else open
        with opener(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc


def load_idx_images(path_images, path_labels, limit: int | None = None) -> Dataset:
    """Load an IDX image/label pair (optionally gzipped) as 8-bit pixel attributes."""
    img = _read_maybe_gzip(Path(path_images))
    lab = _read_maybe_gzip(Path(path_labels))
    if len(img) < 16 or len(lab) < 8:
        raise DataFormatError("truncated IDX header")
    magic, count, rows, cols = struct.unpack(">IIII", img[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise DataFormatError(f"bad image magic 0x{magic:08x}")
    lmagic, lcount = struct.unpack(">II", lab[:8])
    if lmagic != IDX_LABELS_MAGIC:
        raise DataFormatError(f"bad label magic 0x{lmagic:08x}")
    if lcount != count:
        raise DataFormatError(f"{count} images but {lcount} labels")
    pixels = rows * cols
    if len(img) - 16 < count * pixels or len(lab) - 8 < count:
        raise DataFormatError("truncated IDX payload")
    n = count if limit is None else min(count, int(limit))
    images = np.frombuffer(img, dtype=np.uint8, count=n * pixels, offset=16).reshape(n, pixels)
    labels = np.frombuffer(lab, dtype=np.uint8, count=n, offset=8)
    return Dataset(
        images.astype(np.int64),
        labels.astype(np.int64),
        AttributeCodec(bits=8, attributes=pixels),
        name="mnist",
        normalizer=255.0,
        n_classes=10,
    )


def write_idx(path_images, path_labels, images: np.ndarray, labels: np.ndarray, shape=(28, 28)) -> None:
    images = np.asarray(images, dtype=np.uint8).reshape(len(images), -1)
    opener = gzip.open if str(path_images).endswith(".gz") else open
    with opener(path_images, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, len(images), *shape))
        fh.write(images.tobytes())
    opener = gzip.open if str(path_labels).endswith(".gz") else open
    with opener(path_labels, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)))
        fh.write(np.asarray(labels, dtype=np.uint8).tobytes())


def export_jsonl(dataset: Dataset, path) -> None:
    with open(path, "w") as fh:
        for values, label in zip(dataset.instances.tolist(), dataset.labels.tolist()):
            fh.write(json.dumps({"attributes": values, "label": label}) + "\n")


def read_jsonl(path, codec: AttributeCodec, **kwargs) -> Dataset:
    rows, labels = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                rows.append([int(v) for v in rec["attributes"]])
                labels.append(int(rec["label"]))
            except (ValueError, KeyError, TypeError) as exc:
                raise DataFormatError(f"bad record ({exc})", lineno) from None
    return Dataset(np.array(rows, dtype=np.int64).reshape(-1, codec.attributes), labels, codec, **kwargs)
