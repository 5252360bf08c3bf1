"""
Binary PGM (P5, maxval 255) reader and writer.

Header written: "P5\\n{W} {H}\\n255\\n", then H*W bytes row-major with
byte = round_half_up(255 * v). The reader accepts any whitespace between
header fields and '#' comment lines, as netpbm does.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from core.constants import PGM_MAXVAL
from core.errors import PgmHeaderError, PgmMaxvalError, PgmTruncatedError, ShapeError

_WHITESPACE = b" \t\r\n\x0b\x0c"


def quantize(image: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(image * PGM_MAXVAL + 0.5), 0, PGM_MAXVAL).astype(np.uint8)


def write_pgm(image: np.ndarray) -> bytes:
    """Encode a (1, H, W) image with values in [0, 1]."""
    if image.ndim != 3 or image.shape[0] != 1:
        raise ShapeError(f"PGM needs a single-channel (1, H, W) image, got {image.shape}")
    _, h, w = image.shape
    if h < 1 or w < 1:
        raise ShapeError(f"PGM dimensions must be positive, got {h}x{w}")
    header = f"P5\n{w} {h}\n{PGM_MAXVAL}\n".encode("ascii")
    return header + quantize(image[0]).tobytes()


def _next_token(data: bytes, pos: int) -> tuple[bytes, int]:
    n = len(data)
    while pos < n:
        if data[pos] in _WHITESPACE:
            pos += 1
        elif data[pos:pos + 1] == b"#":
            end = data.find(b"\n", pos)
            pos = n if end < 0 else end + 1
        else:
            break
    start = pos
    while pos < n and data[pos] not in _WHITESPACE and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise PgmHeaderError("unexpected end of header")
    return data[start:pos], pos


def read_pgm(data: bytes) -> np.ndarray:
    """Decode a binary PGM into a (1, H, W) float64 image in [0, 1]."""
    if not data.startswith(b"P5"):
        raise PgmHeaderError(f"bad magic number {data[:2]!r}")
    pos = 2
    fields = []
    for name in ("width", "height", "maxval"):
        token, pos = _next_token(data, pos)
        if not token.isdigit():
            raise PgmHeaderError(f"{name} is not a decimal integer: {token!r}")
        fields.append(int(token))
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise PgmHeaderError(f"dimensions must be positive, got {width}x{height}")
    if maxval != PGM_MAXVAL:
        raise PgmMaxvalError(f"maxval must be {PGM_MAXVAL}, got {maxval}")
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise PgmHeaderError("header must end with a single whitespace byte")
    payload = data[pos + 1:]
    if len(payload) < width * height:
        raise PgmTruncatedError(f"expected {width * height} pixel bytes, got {len(payload)}")
    pixels = np.frombuffer(payload[: width * height], dtype=np.uint8).reshape(height, width)
    return (pixels.astype(np.float64) / PGM_MAXVAL)[None]


def save_pgm(path: Path, image: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(write_pgm(image))


def load_pgm(path: Path) -> np.ndarray:
    return read_pgm(Path(path).read_bytes())
