"""Binary (P5) PGM reading and writing, 8-bit only."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import PgmError


def _read_token(data: bytes, pos: int, path: Path) -> tuple[bytes, int]:
    # skip whitespace and '#' comment lines between header tokens
    n = len(data)
    while pos < n:
        c = data[pos : pos + 1]
        if c == b"#":
            nl = data.find(b"\n", pos)
            if nl < 0:
                raise PgmError(f"{path}: unterminated comment in header")
            pos = nl + 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise PgmError(f"{path}: truncated header")
    return data[start:pos], pos


def read_pgm(path: str | Path) -> np.ndarray:
    """Read an 8-bit P5 PGM into a uint8 array of shape (height, width)."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise PgmError(f"{path}: {exc}") from exc
    if data[:2] != b"P5":
        raise PgmError(f"{path}: not a binary PGM (missing P5 magic)")
    pos = 2
    fields = []
    for _ in range(3):
        token, pos = _read_token(data, pos, path)
        try:
            fields.append(int(token))
        except ValueError:
            raise PgmError(f"{path}: non-numeric header field {token!r}") from None
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise PgmError(f"{path}: invalid dimensions {width}x{height}")
    if not 0 < maxval <= 255:
        raise PgmError(f"{path}: only 8-bit PGM supported, maxval={maxval}")
    pos += 1  # single whitespace byte after maxval
    pixels = data[pos : pos + width * height]
    if len(pixels) != width * height:
        raise PgmError(f"{path}: expected {width * height} pixel bytes, found {len(pixels)}")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(height, width).copy()


def write_pgm(path: str | Path, image: np.ndarray) -> None:
    """Write a uint8 array of shape (height, width) as a P5 PGM."""
    if image.dtype != np.uint8 or image.ndim != 2:
        raise PgmError(f"image must be a 2-D uint8 array, got dtype={image.dtype}, ndim={image.ndim}")
    height, width = image.shape
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + image.tobytes())
