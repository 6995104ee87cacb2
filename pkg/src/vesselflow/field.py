"""Dense 2D scalar/direction fields: continuous sampling, gradients, file I/O.

Coordinate convention: pixel centers sit at integer coordinates, ``data[y, x]``
with x running along the width. Out-of-bounds access clamps to the nearest
valid pixel (constant edge extension), so sampling never produces artificial
dark rings near borders.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ScalarField2D:
    """Dense grid of finite real values, immutable once constructed."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("scalar field requires a 2D array with positive dimensions")
        if not np.all(np.isfinite(arr)):
            raise ValueError("scalar field values must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @classmethod
    def full(cls, width: int, height: int, value: float = 0.0) -> "ScalarField2D":
        return cls(np.full((height, width), value, dtype=np.float64))


@dataclass(frozen=True)
class DirectionField2D:
    """Per-pixel unit direction stored as an angle in [-pi, pi)."""

    angle: np.ndarray

    def __post_init__(self):
        arr = np.array(self.angle, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("direction field requires a 2D array with positive dimensions")
        if not np.all(np.isfinite(arr)):
            raise ValueError("direction field angles must be finite")
        arr = wrap_angle(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "angle", arr)

    @property
    def width(self) -> int:
        return self.angle.shape[1]

    @property
    def height(self) -> int:
        return self.angle.shape[0]

    def unit_vectors(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (x, y) components; unit norm holds by construction."""
        return np.cos(self.angle), np.sin(self.angle)


def wrap_angle(a):
    """Wrap angles into [-pi, pi); values already in range pass through exactly."""
    a = np.asarray(a, dtype=np.float64)
    wrapped = (a + np.pi) % (2.0 * np.pi) - np.pi
    return np.where((a >= -np.pi) & (a < np.pi), a, wrapped)


def sample_bilinear_array(data: np.ndarray, xs, ys) -> np.ndarray:
    """Bilinear interpolation of data[y, x] at real coordinates, clamp-to-edge.

    xs and ys are arrays of arbitrary (matching) shape. The lower corner is
    clamped to width-2/height-2 so the upper neighbour stays in range; the
    fractional weight compensates, which keeps results identical to the
    textbook formula while allowing flat-index gathers.
    """
    h, w = data.shape
    xs = np.clip(np.asarray(xs, dtype=np.float64), 0.0, w - 1.0)
    ys = np.clip(np.asarray(ys, dtype=np.float64), 0.0, h - 1.0)
    x0 = np.minimum(xs.astype(np.intp), max(w - 2, 0))
    y0 = np.minimum(ys.astype(np.intp), max(h - 2, 0))
    fx = xs - x0
    fy = ys - y0
    flat = data.reshape(-1)
    base = y0 * w + x0
    # for w, h >= 2 the clamped corner keeps base + w + 1 in range; the
    # degenerate 1-pixel dimensions read a harmless neighbour with zero weight
    mode = "raise" if w >= 2 and h >= 2 else "clip"
    v00 = flat.take(base, mode=mode)
    v01 = flat.take(base + 1, mode=mode)
    v10 = flat.take(base + w, mode=mode)
    v11 = flat.take(base + w + 1, mode=mode)
    top = v00 + fx * (v01 - v00)
    bottom = v10 + fx * (v11 - v10)
    return top + fy * (bottom - top)


def sample_bilinear(f: ScalarField2D, x: float, y: float) -> float:
    """Sample a scalar field at a real coordinate (clamped at the borders)."""
    return float(sample_bilinear_array(f.data, np.float64(x), np.float64(y)))


def nearest_lookup(data: np.ndarray, xs, ys) -> np.ndarray:
    """Value of the nearest pixel (round-half-up), clamp-to-edge."""
    h, w = data.shape
    ix = np.clip(np.floor(np.asarray(xs) + 0.5), 0, w - 1).astype(np.intp)
    iy = np.clip(np.floor(np.asarray(ys) + 0.5), 0, h - 1).astype(np.intp)
    return data[iy, ix]


def gradient(f: ScalarField2D) -> tuple[ScalarField2D, ScalarField2D]:
    """Finite-difference gradient (d/dx, d/dy): central in the interior,
    one-sided on the border. Requires both dimensions >= 3."""
    if f.width < 3 or f.height < 3:
        raise ValueError("gradient requires width >= 3 and height >= 3")
    dy, dx = np.gradient(f.data)
    return ScalarField2D(dx), ScalarField2D(dy)


# --- PGM (P2/P5) ---------------------------------------------------------
# Mask convention: 0 = background, 255 = vessel. Intensities are normalized
# to [0, 1] on read so loss weights and noise sigmas are comparable.


def _parse_pgm_header(blob: bytes):
    """Return (magic, width, height, maxval, payload_offset)."""
    tokens = []
    i = 0
    n = len(blob)
    while len(tokens) < 4:
        if i >= n:
            raise ValueError("malformed PGM header: truncated")
        c = blob[i : i + 1]
        if c == b"#":
            while i < n and blob[i : i + 1] not in (b"\n", b"\r"):
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < n and not blob[j : j + 1].isspace() and blob[j : j + 1] != b"#":
                j += 1
            tokens.append(blob[i:j])
            i = j
    if i >= n or not blob[i : i + 1].isspace():
        raise ValueError("malformed PGM header: missing separator after maxval")
    i += 1  # exactly one whitespace byte before the payload
    magic = tokens[0].decode("ascii", errors="replace")
    if magic not in ("P2", "P5"):
        raise ValueError(f"unsupported PGM magic number: {magic!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
    except ValueError as exc:
        raise ValueError("malformed PGM header: non-integer size field") from exc
    if width <= 0 or height <= 0:
        raise ValueError("malformed PGM header: non-positive dimensions")
    if not 0 < maxval <= 65535:
        raise ValueError(f"unsupported PGM maxval: {maxval}")
    return magic, width, height, maxval, i


def read_pgm(path) -> ScalarField2D:
    """Read a P2/P5 PGM image, rescaled to [0, 1]."""
    with open(path, "rb") as fh:
        blob = fh.read()
    magic, width, height, maxval, off = _parse_pgm_header(blob)
    count = width * height
    if magic == "P5":
        itemsize = 1 if maxval < 256 else 2
        payload = blob[off : off + count * itemsize]
        if len(payload) != count * itemsize:
            raise ValueError("truncated PGM payload")
        dtype = np.uint8 if itemsize == 1 else ">u2"
        raw = np.frombuffer(payload, dtype=dtype).astype(np.float64)
    else:
        try:
            raw = np.array(blob[off:].split()[:count], dtype=np.float64)
        except ValueError as exc:
            raise ValueError("malformed P2 payload") from exc
        if raw.size != count:
            raise ValueError("truncated PGM payload")
    if raw.min() < 0 or raw.max() > maxval:
        raise ValueError("PGM sample out of range")
    return ScalarField2D((raw / maxval).reshape(height, width))


def write_pgm(f: ScalarField2D, path) -> None:
    """Write as binary 8-bit P5; values are clamped to [0, 1] and quantized."""
    q = np.round(np.clip(f.data, 0.0, 1.0) * 255.0).astype(np.uint8)
    header = f"P5\n{f.width} {f.height}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(q.tobytes())


# --- TFF1 float32 container ----------------------------------------------
# One ASCII header line "TFF1 <width> <height> <channels>\n" followed by
# little-endian float32, row-major, channel-interleaved. Values are stored as
# float32, so the file-level round trip is bit-exact.


def write_f32(path, values) -> None:
    """Write a field, (H, W) or (H, W, C) array to the TFF1 float32 format."""
    if isinstance(values, ScalarField2D):
        arr = values.data
    else:
        arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValueError("expected an (H, W) or (H, W, C) array")
    h, w, c = arr.shape
    header = f"TFF1 {w} {h} {c}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_f32(path) -> np.ndarray:
    """Read a TFF1 file; returns (H, W) for one channel, else (H, W, C)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    nl = blob.find(b"\n")
    if nl < 0:
        raise ValueError("malformed TFF1 header: missing newline")
    parts = blob[:nl].split()
    if len(parts) != 4 or parts[0] != b"TFF1":
        raise ValueError("malformed TFF1 header")
    try:
        w, h, c = (int(p) for p in parts[1:])
    except ValueError as exc:
        raise ValueError("malformed TFF1 header: non-integer field") from exc
    if w <= 0 or h <= 0 or c <= 0:
        raise ValueError("malformed TFF1 header: non-positive dimensions")
    payload = blob[nl + 1 :]
    expected = w * h * c * 4
    if len(payload) != expected:
        raise ValueError(
            f"TFF1 payload length mismatch: expected {expected} bytes, got {len(payload)}"
        )
    arr = np.frombuffer(payload, dtype="<f4").reshape(h, w, c).astype(np.float64)
    return arr[:, :, 0] if c == 1 else arr
