"""Dataset ingestion and egress.

Supported on-disk formats:

* CIFAR-10 binary: records of one label byte followed by 3072 pixel bytes,
  stored as the R, G and B planes of a 32x32 image in row-major order.
* A directory of lossless PNG or binary PPM (P6) files, read in filename
  order, with optional ``labels.txt`` (one integer per line).

Pixels are stored as bytes, so floating-point images are rounded to the
nearest integer and clipped to ``[0, 255]`` on save.
"""

import csv
import os
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from ._validation import check_images
from .exceptions import DatasetFormatError

CIFAR_SIDE = 32
CIFAR_CHANNELS = 3
CIFAR_RECORD = 1 + CIFAR_SIDE * CIFAR_SIDE * CIFAR_CHANNELS
IMAGE_SUFFIXES = {".png": "png", ".ppm": "ppm"}
LABELS_FILE = "labels.txt"


@dataclass
class Dataset:
    """Ordered images ``(n, H, W, C)`` with optional integer labels."""

    images: np.ndarray
    labels: np.ndarray = None
    source_format: str = "memory"

    def __post_init__(self):
        self.images = check_images(self.images)
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (len(self.images),):
                raise ValueError("labels must have one entry per image")

    def __len__(self):
        return len(self.images)


def to_bytes(images):
    """Round and clip pixel values into ``uint8``."""
    return np.clip(np.rint(images), 0, 255).astype(np.uint8)


def load_cifar10_bin(path):
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size % CIFAR_RECORD:
        raise DatasetFormatError(
            f"{path}: length {raw.size} is not a multiple of the {CIFAR_RECORD}-byte record"
        )
    records = raw.reshape(-1, CIFAR_RECORD)
    planes = records[:, 1:].reshape(-1, CIFAR_CHANNELS, CIFAR_SIDE, CIFAR_SIDE)
    images = planes.transpose(0, 2, 3, 1).astype(np.float64)
    return Dataset(images, records[:, 0].astype(np.int64), "cifar10")


def save_cifar10_bin(ds, path):
    if ds.images.shape[1:] != (CIFAR_SIDE, CIFAR_SIDE, CIFAR_CHANNELS) and len(ds):
        raise DatasetFormatError(f"CIFAR-10 records hold 32x32x3 images, got {ds.images.shape[1:]}")
    labels = np.zeros(len(ds), dtype=np.int64) if ds.labels is None else ds.labels
    if np.any((labels < 0) | (labels > 255)):
        raise DatasetFormatError("CIFAR-10 labels must fit in one byte")
    records = np.empty((len(ds), CIFAR_RECORD), dtype=np.uint8)
    records[:, 0] = labels
    if len(ds):
        records[:, 1:] = to_bytes(ds.images).transpose(0, 3, 1, 2).reshape(len(ds), -1)
    records.tofile(path)


def load_image_dir(path):
    path = Path(path)
    files = sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    labels = None
    if (path / LABELS_FILE).exists():
        labels = np.loadtxt(path / LABELS_FILE, dtype=np.int64, ndmin=1)
    if not files:
        warnings.warn(f"{path} contains no PNG or PPM images", stacklevel=2)
        return Dataset(np.zeros((0, 0, 0, 0)), labels if labels is not None and labels.size else None, "empty")
    images = []
    for f in files:
        try:
            with Image.open(f) as im:
                if im.mode not in ("L", "RGB"):
                    im = im.convert("RGB")
                arr = np.asarray(im, dtype=np.float64)
        except OSError as exc:
            raise DatasetFormatError(f"{f}: {exc}") from exc
        images.append(arr)
    fmt = IMAGE_SUFFIXES[files[0].suffix.lower()]
    return Dataset(check_images(images), labels, fmt)


def save_image_dir(ds, path, fmt="png"):
    if fmt not in ("png", "ppm"):
        raise DatasetFormatError(f"unsupported image format {fmt!r}")
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    pixels = to_bytes(ds.images)
    if fmt == "ppm" and len(ds) and pixels.shape[-1] != 3:
        raise DatasetFormatError("PPM (P6) output needs 3-channel images")
    width = max(5, len(str(max(len(ds) - 1, 0))))
    for i, px in enumerate(pixels):
        im = Image.fromarray(px[:, :, 0] if px.shape[-1] == 1 else px)
        im.save(path / f"{i:0{width}d}.{fmt}", format="PNG" if fmt == "png" else "PPM")
    if ds.labels is not None:
        np.savetxt(path / LABELS_FILE, ds.labels, fmt="%d")


def detect_format(path):
    path = Path(path)
    if path.is_dir():
        return "dir"
    suffix = path.suffix.lower()
    if suffix in IMAGE_SUFFIXES:
        return IMAGE_SUFFIXES[suffix]
    return "cifar10"


def load_dataset(path):
    """Load a CIFAR-10 binary file or a PNG/PPM directory."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{path} does not exist")
    if path.is_dir():
        return load_image_dir(path)
    if detect_format(path) != "cifar10":
        raise DatasetFormatError(f"{path}: single image files are not datasets; pass their directory")
    return load_cifar10_bin(path)


def save_dataset(ds, path, fmt="cifar10"):
    """Write ``ds`` as ``'cifar10'`` binary or a ``'png'``/``'ppm'`` directory."""
    if fmt == "cifar10":
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        save_cifar10_bin(ds, path)
    elif fmt in ("png", "ppm"):
        save_image_dir(ds, path, fmt)
    else:
        raise DatasetFormatError(f"unsupported format {fmt!r}")


def write_mask(mask, path):
    """One ``0``/``1`` line per image ordinal."""
    with open(path, "w") as fh:
        fh.writelines(f"{int(bool(m))}\n" for m in mask)


def read_mask(path):
    with open(path) as fh:
        return np.array([line.strip() == "1" for line in fh if line.strip()], dtype=bool)


def format_number(x):
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.10g}"
    return str(x)


def write_csv(fh, rows, columns, header=None):
    """Write ``rows`` (dicts) as CSV with ``# key=value`` header comment lines."""
    for key, value in (header or {}).items():
        fh.write(f"# {key}={value}\n")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_number(row[c]) for c in columns])


def read_csv(path):
    """Read a CSV written by :func:`write_csv`, skipping header comments."""
    with open(path) as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(lines))


def run_header_path(output_path):
    """Sidecar that records the run configuration for a dataset output."""
    output_path = Path(output_path)
    if output_path.is_dir():
        return output_path / "run.txt"
    return output_path.with_name(output_path.name + ".run.txt")


def write_run_header(output_path, header):
    with open(run_header_path(output_path), "w") as fh:
        for key, value in header.items():
            fh.write(f"{key}={value}\n")


def ensure_parent(path):
    parent = os.path.dirname(os.fspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)
