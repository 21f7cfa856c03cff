"""Binary PPM (P6) and PGM (P5) readers and writers, 8-bit only.

Images are RGB uint8 arrays of shape H×W×3; masks/maps are uint8 H×W.
Headers are written in one canonical form so write→read→write round trips
are byte-identical.
"""

from __future__ import annotations

import numpy as np

from .errors import ParseError


def _write_pnm(path, magic: bytes, arr: np.ndarray) -> None:
    h, w = arr.shape[:2]
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (w, h))
        fh.write(arr.tobytes())


def write_ppm(path, pixels: np.ndarray) -> None:
    a = np.asarray(pixels, dtype=np.uint8)
    if a.ndim != 3 or a.shape[2] != 3:
        raise ParseError(f"write_ppm: H×W×3 array required, got {a.shape}")
    _write_pnm(path, b"P6", a)


def write_pgm(path, values: np.ndarray) -> None:
    a = np.asarray(values, dtype=np.uint8)
    if a.ndim != 2:
        raise ParseError(f"write_pgm: H×W array required, got {a.shape}")
    _write_pnm(path, b"P5", a)


def _read_header(fh, path) -> tuple[bytes, int, int, int]:
    def token():
        # skip whitespace and '#' comments, then read one token
        tok = b""
        while True:
            ch = fh.read(1)
            if not ch:
                raise ParseError(f"{path}: truncated header")
            if ch == b"#":
                while ch not in (b"\n", b""):
                    ch = fh.read(1)
                continue
            if ch.isspace():
                if tok:
                    return tok
                continue
            tok += ch

    magic = token()
    try:
        w, h, maxval = int(token()), int(token()), int(token())
    except ParseError:
        raise
    except ValueError as e:
        raise ParseError(f"{path}: non-numeric header field") from e
    if maxval != 255:
        raise ParseError(f"{path}: only 8-bit maxval 255 supported, got {maxval}")
    if w < 1 or h < 1:
        raise ParseError(f"{path}: bad dimensions {w}×{h}")
    return magic, w, h, maxval


def _read_pnm(path, magic_want: bytes, channels: int) -> np.ndarray:
    with open(path, "rb") as fh:
        magic, w, h, _ = _read_header(fh, path)
        if magic != magic_want:
            raise ParseError(f"{path}: expected {magic_want.decode()} file, "
                             f"got {magic!r}")
        count = w * h * channels
        payload = fh.read(count)
        if len(payload) != count:
            raise ParseError(f"{path}: truncated pixel data "
                             f"({len(payload)} of {count} bytes)")
    arr = np.frombuffer(payload, dtype=np.uint8)
    shape = (h, w, 3) if channels == 3 else (h, w)
    return arr.reshape(shape).copy()


def read_ppm(path) -> np.ndarray:
    return _read_pnm(path, b"P6", 3)


def read_pgm(path) -> np.ndarray:
    return _read_pnm(path, b"P5", 1)
