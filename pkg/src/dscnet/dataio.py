"""Binary PGM images, bilinear resizing, the DSCMAT1 matrix container and CSV helpers."""

import csv
import os
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import FormatError, ShapeError

MATRIX_MAGIC = b"DSCMAT1\n"
_PGM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n?)*(\S+)")


@dataclass
class DatasetBundle:
    images: np.ndarray
    labels: np.ndarray | None
    name: str
    filenames: list

    @property
    def n_samples(self):
        return self.images.shape[0]


def read_pgm(path):
    """Read a binary (P5) PGM; returns intensities scaled to [0, 1]."""
    data = Path(path).read_bytes()
    pos = 0
    fields = []
    for _ in range(4):
        m = _PGM_TOKEN.match(data, pos)
        if m is None:
            raise FormatError(path, "truncated PGM header")
        fields.append(m.group(1))
        pos = m.end()
    if fields[0] != b"P5":
        raise FormatError(path, f"expected P5 magic, got {fields[0][:8]!r}")
    try:
        width, height, maxval = (int(f) for f in fields[1:])
    except ValueError:
        raise FormatError(path, "non-numeric PGM header field") from None
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise FormatError(path, f"invalid PGM header {width}x{height} maxval {maxval}")
    pos += 1  # single whitespace byte before the raster
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    size = width * height * dtype.itemsize
    if len(data) - pos < size:
        raise FormatError(path, "truncated PGM raster")
    pixels = np.frombuffer(data, dtype=dtype, count=width * height, offset=pos)
    return pixels.reshape(height, width).astype(np.float64) / maxval


def write_pgm(path, image, maxval=255):
    """Write a [0, 1] image as binary PGM (16-bit when ``maxval > 255``)."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ShapeError(f"expected a 2-d image, got shape {image.shape}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    raster = np.rint(np.clip(image, 0.0, 1.0) * maxval).astype(dtype)
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        fh.write(raster.tobytes())


def read_labels_csv(path):
    """``filename,label`` sidecar -> dict."""
    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            try:
                out[row["filename"]] = int(row["label"])
            except (KeyError, TypeError, ValueError):
                raise FormatError(path, f"bad labels row {row!r}") from None
    return out


def load_pgm_dir(path, name=None):
    """Load every ``*.pgm`` in ``path`` (lexicographic order) as one bundle.

    A ``labels.csv`` sidecar with ``filename,label`` rows, if present, must
    cover every image.
    """
    path = Path(path)
    files = sorted(p for p in os.listdir(path) if p.lower().endswith(".pgm"))
    if not files:
        raise FormatError(path, "no .pgm files found")
    images = []
    for fname in files:
        img = read_pgm(path / fname)
        if images and img.shape != images[0].shape:
            raise FormatError(path / fname, f"image is {img.shape}, expected {images[0].shape}")
        images.append(img)
    labels = None
    sidecar = path / "labels.csv"
    if sidecar.exists():
        table = read_labels_csv(sidecar)
        missing = [f for f in files if f not in table]
        if missing:
            raise FormatError(sidecar, f"no label for {missing[0]}" + (f" and {len(missing) - 1} more" if len(missing) > 1 else ""))
        labels = np.array([table[f] for f in files])
    return DatasetBundle(np.stack(images)[:, None], labels, name or path.name, files)


def save_pgm_dir(path, images, labels=None, maxval=65535):
    """Write ``(N, 1, H, W)`` images as numbered PGMs plus optional ``labels.csv``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    images = np.asarray(images)
    width = len(str(len(images) - 1))
    names = []
    for i, img in enumerate(images):
        fname = f"img_{i:0{width}d}.pgm"
        write_pgm(path / fname, img.reshape(img.shape[-2:]), maxval=maxval)
        names.append(fname)
    if labels is not None:
        with open(path / "labels.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["filename", "label"])
            writer.writerows(zip(names, (int(v) for v in labels)))
    return names


def _interp_axis(n_in, n_out):
    if n_out == 1 or n_in == 1:
        pos = np.zeros(n_out)
    else:
        pos = np.arange(n_out) * ((n_in - 1) / (n_out - 1))
    lo = np.minimum(np.floor(pos).astype(int), n_in - 1)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, pos - lo


def resize_bilinear(images, target_hw, clamp=True):
    """Bilinear resize over the last two axes with corner-aligned sampling.

    Output pixel ``(i, j)`` samples the input at
    ``(i (H-1)/(h-1), j (W-1)/(w-1))``, so corner pixels are preserved.
    """
    images = np.asarray(images, dtype=np.float64)
    th, tw = (int(v) for v in target_hw)
    if th < 1 or tw < 1:
        raise ShapeError(f"target size must be positive, got {target_hw}")
    h, w = images.shape[-2:]
    if (h, w) == (th, tw):
        out = images.copy()
    else:
        r0, r1, fr = _interp_axis(h, th)
        c0, c1, fc = _interp_axis(w, tw)
        rows = images[..., r0, :] * (1 - fr)[:, None] + images[..., r1, :] * fr[:, None]
        out = rows[..., c0] * (1 - fc) + rows[..., c1] * fc
    return np.clip(out, 0.0, 1.0) if clamp else out


def write_matrix(path, M):
    """Store a 2-d float64 matrix in the DSCMAT1 container."""
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or min(M.shape) < 1:
        raise ShapeError(f"matrix must be 2-d with positive shape, got {M.shape}")
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(f"{M.shape[0]} {M.shape[1]}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(M, dtype="<f8").tobytes())


def read_matrix(path):
    data = Path(path).read_bytes()
    if not data.startswith(MATRIX_MAGIC):
        raise FormatError(path, "not a DSCMAT1 file")
    end = data.find(b"\n", len(MATRIX_MAGIC))
    if end < 0:
        raise FormatError(path, "missing shape line")
    try:
        rows, cols = (int(v) for v in data[len(MATRIX_MAGIC) : end].split())
    except ValueError:
        raise FormatError(path, "malformed shape line") from None
    if rows < 1 or cols < 1:
        raise FormatError(path, f"shape must be positive, got {rows}x{cols}")
    payload = data[end + 1 :]
    if len(payload) != 8 * rows * cols:
        raise FormatError(path, f"payload has {len(payload)} bytes, expected {8 * rows * cols}")
    return np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(rows, cols)


def write_heatmap(path, M):
    """Render a matrix as an 8-bit PGM, affinely mapping its range to [0, 255]."""
    M = np.asarray(M, dtype=np.float64)
    lo, hi = M.min(), M.max()
    scaled = (M - lo) / (hi - lo) if hi > lo else np.zeros_like(M)
    write_pgm(path, scaled, maxval=255)


def write_label_csv(path, labels):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "label"])
        writer.writerows((i, int(v)) for i, v in enumerate(labels))


def read_label_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    try:
        pairs = sorted((int(r["index"]), int(r["label"])) for r in rows)
    except (KeyError, TypeError, ValueError):
        raise FormatError(path, "expected 'index,label' rows") from None
    if [i for i, _ in pairs] != list(range(len(pairs))):
        raise FormatError(path, "indices must run 0..N-1")
    return np.array([v for _, v in pairs], dtype=int)
