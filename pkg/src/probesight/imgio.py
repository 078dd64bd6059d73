"""Image and float-map file formats.

Grayscale images travel as binary PGM (P5, maxval 255), color as binary
PPM (P6); intensities map linearly between [0, 1] floats and bytes.
Float maps (disparity, depth) travel as grayscale PFM, little-endian
(scale -1.0), rows stored bottom-up as the format requires.

All writers are deterministic and atomic (temp file + rename) so that
repeated runs produce byte-identical outputs.
"""

from __future__ import annotations

import os
import tempfile

import numpy as np

from .errors import DimensionMismatch


def _atomic_write(path: str, payload: bytes) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp_", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def to_bytes_image(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(img, dtype=float) * 255.0), 0, 255).astype(np.uint8)


def save_pgm(path: str, img: np.ndarray) -> None:
    """img: (h, w) floats in [0, 1] or uint8/uint16 taken as-is."""
    img = np.asarray(img)
    if img.ndim != 2:
        raise DimensionMismatch("PGM wants a 2D array")
    if img.dtype == np.uint16:
        header = f"P5\n{img.shape[1]} {img.shape[0]}\n65535\n".encode()
        payload = header + img.astype(">u2").tobytes()
    else:
        data = img if img.dtype == np.uint8 else to_bytes_image(img)
        header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode()
        payload = header + data.tobytes()
    _atomic_write(path, payload)


def save_ppm(path: str, img: np.ndarray) -> None:
    """img: (h, w, 3) floats in [0, 1]."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DimensionMismatch("PPM wants an (h, w, 3) array")
    data = img if img.dtype == np.uint8 else to_bytes_image(img)
    header = f"P6\n{img.shape[1]} {img.shape[0]}\n255\n".encode()
    _atomic_write(path, header + data.tobytes())


def _read_pnm_header(f):
    def token():
        tok = b""
        while True:
            c = f.read(1)
            if not c:
                raise ValueError("truncated PNM header")
            if c in b" \t\r\n":
                if tok:
                    return tok
                continue
            if c == b"#":
                f.readline()
                continue
            tok += c

    magic = token()
    w = int(token())
    h = int(token())
    maxval = int(token())
    return magic, w, h, maxval


def load_pgm(path: str) -> np.ndarray:
    """Returns (h, w) floats in [0, 1] (maxval 255) or uint16 (maxval 65535)."""
    with open(path, "rb") as f:
        magic, w, h, maxval = _read_pnm_header(f)
        if magic != b"P5":
            raise ValueError(f"not a binary PGM: {magic!r}")
        if maxval == 65535:
            return np.frombuffer(f.read(w * h * 2), dtype=">u2").reshape(h, w).astype(np.uint16)
        data = np.frombuffer(f.read(w * h), dtype=np.uint8).reshape(h, w)
        return data.astype(float) / maxval


def load_ppm(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        magic, w, h, maxval = _read_pnm_header(f)
        if magic != b"P6":
            raise ValueError(f"not a binary PPM: {magic!r}")
        data = np.frombuffer(f.read(w * h * 3), dtype=np.uint8).reshape(h, w, 3)
        return data.astype(float) / maxval


def save_pfm(path: str, data: np.ndarray) -> None:
    """Grayscale PFM, float32 little-endian (scale -1.0)."""
    data = np.asarray(data, dtype=np.float32)
    if data.ndim != 2:
        raise DimensionMismatch("PFM wants a 2D array")
    header = f"Pf\n{data.shape[1]} {data.shape[0]}\n-1.0\n".encode()
    _atomic_write(path, header + data[::-1].astype("<f4").tobytes())


def load_pfm(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic != b"Pf":
            raise ValueError(f"not a grayscale PFM: {magic!r}")
        w, h = (int(t) for t in f.readline().split())
        scale = float(f.readline())
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(f.read(w * h * 4), dtype=dtype).reshape(h, w)
        return data[::-1].astype(np.float32)


def save_xyz(path: str, points: np.ndarray) -> None:
    """ASCII point cloud, one "x y z" triple per line."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    lines = [f"{p[0]!r} {p[1]!r} {p[2]!r}" for p in pts]
    _atomic_write(path, ("\n".join(lines) + "\n").encode())


def load_xyz(path: str) -> np.ndarray:
    with open(path) as f:
        rows = [[float(t) for t in line.split()] for line in f if line.strip()]
    return np.array(rows, dtype=float).reshape(-1, 3)


def format_sig(x: float) -> str:
    """Numeric CLI output format: 9 significant digits."""
    return f"{x:.9g}"


def write_csv(path: str, header: list[str], rows: list[list]) -> None:
    """Deterministic CSV writer; floats rendered with 9 significant digits."""
    out = [",".join(header)]
    for row in rows:
        cells = [format_sig(c) if isinstance(c, float) else str(c) for c in row]
        out.append(",".join(cells))
    _atomic_write(path, ("\n".join(out) + "\n").encode())


def luminance(img: np.ndarray) -> np.ndarray:
    """Rec. 601 luma of an (h, w, 3) image in [0, 1]."""
    img = np.asarray(img, dtype=float)
    return 0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]
