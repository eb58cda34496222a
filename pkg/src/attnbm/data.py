"""Dataset ingestion and preprocessing: IDX files, ZCA whitening, patches, PGM export."""

import math
import struct
from dataclasses import dataclass

import numpy as np

from ._validation import check_batch, check_memory, check_rng
from .exceptions import FormatError

__all__ = [
    "Dataset",
    "ZcaTransform",
    "read_idx_raw",
    "load_idx",
    "write_idx",
    "fit_zca",
    "apply_zca",
    "extract_patches",
    "filter_grid",
    "export_filter_grid",
    "read_pgm",
]

_IDX_UBYTE = 0x08


@dataclass(frozen=True)
class ZcaTransform:
    """``x -> (x - mean) @ matrix`` with ``matrix = U (Lambda + eps I)^(-1/2) U^T``."""

    mean: np.ndarray
    matrix: np.ndarray
    epsilon: float


@dataclass(frozen=True)
class Dataset:
    samples: np.ndarray
    image_shape: tuple
    whitening: ZcaTransform = None

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 2:
            raise ValueError(f"samples must be (P, N), got shape {samples.shape}")
        h, w = self.image_shape
        if h * w != samples.shape[1]:
            raise ValueError(f"image shape {self.image_shape} does not match N={samples.shape[1]}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples contain non-finite entries")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "image_shape", (int(h), int(w)))

    def __len__(self):
        return self.samples.shape[0]


# -- IDX ---------------------------------------------------------------------

def read_idx_raw(path):
    """Parse an unsigned-byte IDX file into a uint8 array of its declared shape.

    Raises
    ------
    FormatError
        On a bad magic number or a truncated header or payload; the
        exception carries the failing byte offset.
    """
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 4:
        raise FormatError("truncated IDX magic", offset=len(buf))
    zero, dtype, ndim = struct.unpack_from(">HBB", buf, 0)
    if zero != 0 or dtype != _IDX_UBYTE or not 1 <= ndim <= 4:
        raise FormatError(f"bad IDX magic 0x{int.from_bytes(buf[:4], 'big'):08x}", offset=0)
    header = 4 + 4 * ndim
    if len(buf) < header:
        raise FormatError("truncated IDX dimension header", offset=len(buf))
    dims = struct.unpack_from(f">{ndim}I", buf, 4)
    count = math.prod(dims)
    if len(buf) < header + count:
        raise FormatError(f"truncated IDX payload: expected {count} bytes", offset=len(buf))
    return np.frombuffer(buf, dtype=np.uint8, count=count, offset=header).reshape(dims).copy()


def load_idx(path):
    """IDX tensor with pixel bytes mapped to ``[0, 1]``."""
    return read_idx_raw(path).astype(np.float64) / 255.0


def write_idx(path, array):
    """Write a uint8 array as IDX (magic ``0x000008<ndim>``, big-endian sizes)."""
    array = np.asarray(array)
    if array.dtype != np.uint8:
        raise ValueError(f"IDX writer expects uint8, got {array.dtype}")
    if not 1 <= array.ndim <= 4:
        raise ValueError(f"IDX supports 1 to 4 dimensions, got {array.ndim}")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">HBB", 0, _IDX_UBYTE, array.ndim))
        fh.write(struct.pack(f">{array.ndim}I", *array.shape))
        fh.write(np.ascontiguousarray(array).tobytes())


# -- ZCA ---------------------------------------------------------------------

def fit_zca(samples, epsilon=1e-5):
    """Estimate the ZCA whitening transform from the (biased) sample covariance."""
    x = check_batch(samples)
    if x.shape[0] < 2:
        raise ValueError(f"ZCA needs at least two samples, got n_samples = {x.shape[0]}")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / x.shape[0]
    if not np.all(np.isfinite(cov)):
        raise ValueError("sample covariance is not finite")
    lam, u = np.linalg.eigh(cov)
    lam = np.clip(lam, 0.0, None)
    matrix = (u / np.sqrt(lam + epsilon)) @ u.T
    matrix = 0.5 * (matrix + matrix.T)
    return ZcaTransform(mean, matrix, float(epsilon))


def apply_zca(t, samples):
    x = check_batch(samples, t.mean.shape[0])
    return (x - t.mean) @ t.matrix


# -- patches -----------------------------------------------------------------

def extract_patches(images, patch_size, stride=1, rng=None, count=1000):
    """Random square crops on a stride grid, flattened row-major.

    Crops are drawn without replacement from all (image, position) pairs
    when ``count`` does not exceed their number, otherwise with replacement.
    """
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 2:
        images = images[None]
    n, h, w = images.shape
    if patch_size > min(h, w):
        raise ValueError(f"patch size {patch_size} exceeds image size {h}x{w}")
    rows = np.arange(0, h - patch_size + 1, stride)
    cols = np.arange(0, w - patch_size + 1, stride)
    if count == 0:
        return Dataset(np.empty((0, patch_size * patch_size)), (patch_size, patch_size))
    rng = check_rng(rng)
    total = n * rows.size * cols.size
    picks = rng.choice(total, size=count, replace=count > total)
    img, rest = np.divmod(picks, rows.size * cols.size)
    r, c = np.divmod(rest, cols.size)
    out = np.empty((count, patch_size * patch_size))
    for k in range(count):
        y, x = rows[r[k]], cols[c[k]]
        out[k] = images[img[k], y:y + patch_size, x:x + patch_size].reshape(-1)
    return Dataset(out, (patch_size, patch_size))


# -- filter visualization ----------------------------------------------------

def _tile(vec, shape):
    lo, hi = float(vec.min()), float(vec.max())
    if hi == lo:
        return np.full(shape, 128, dtype=np.uint8)
    return np.rint((vec - lo) / (hi - lo) * 255.0).astype(np.uint8).reshape(shape)


def filter_grid(xi, image_shape):
    """Square grid of min-max normalized filter tiles with 1-pixel black separators."""
    xi = check_memory(xi)
    h, w = image_shape
    if h * w != xi.shape[1]:
        raise ValueError(f"image shape {image_shape} does not match N={xi.shape[1]}")
    side = math.ceil(math.sqrt(xi.shape[0]))
    grid = np.zeros((side * h + side - 1, side * w + side - 1), dtype=np.uint8)
    for mu, row in enumerate(xi):
        gy, gx = divmod(mu, side)
        y, x = gy * (h + 1), gx * (w + 1)
        grid[y:y + h, x:x + w] = _tile(row, (h, w))
    return grid


def export_filter_grid(xi, image_shape, path):
    """Write :func:`filter_grid` as a binary PGM (P5)."""
    grid = filter_grid(xi, image_shape)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{grid.shape[1]} {grid.shape[0]}\n255\n".encode("ascii"))
        fh.write(grid.tobytes())
    return grid


def read_pgm(path):
    """Parse a binary PGM (P5, maxval 255) into a uint8 array."""
    with open(path, "rb") as fh:
        buf = fh.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if buf[pos:pos + 1] == b"#":
            pos = buf.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header", offset=pos)
        fields.append(buf[start:pos])
    if fields[0] != b"P5":
        raise FormatError(f"not a binary PGM: {fields[0]!r}", offset=0)
    width, height, maxval = (int(f) for f in fields[1:])
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval}", offset=pos)
    pos += 1
    if len(buf) < pos + width * height:
        raise FormatError("truncated PGM payload", offset=len(buf))
    return np.frombuffer(buf, dtype=np.uint8, count=width * height, offset=pos).reshape(height, width).copy()
