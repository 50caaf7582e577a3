"""8-bit image files <-> H x W x C float arrays in [0, 1].

PNG goes through Pillow; binary PGM/PPM (P5/P6) is read and written here.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from .errors import IOFormatError, TruncatedFileError

_PNG_SIG = b"\x89PNG\r\n\x1a\n"


def _pnm_tokens(buf: bytes, count: int) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(buf):
            raise TruncatedFileError("PNM header ends early")
        if buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
            pos += 1
        tokens.append(buf[start:pos])
    # exactly one whitespace byte separates the header from the raster
    if pos >= len(buf) or not buf[pos:pos + 1].isspace():
        raise IOFormatError("PNM header is not followed by whitespace")
    return tokens, pos + 1


def decode_pnm(buf: bytes) -> np.ndarray:
    magic = buf[:2]
    if magic not in (b"P5", b"P6"):
        raise IOFormatError(f"unsupported PNM variant {magic!r} (only binary P5/P6)")
    tokens, offset = _pnm_tokens(buf[2:], 3)
    offset += 2
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise IOFormatError(f"malformed PNM header: {tokens!r}") from exc
    if width <= 0 or height <= 0:
        raise IOFormatError(f"bad PNM dimensions {width}x{height}")
    if maxval != 255:
        raise IOFormatError(f"only 8-bit PNM (maxval 255) is supported, got maxval {maxval}")
    channels = 1 if magic == b"P5" else 3
    need = width * height * channels
    raster = buf[offset:offset + need]
    if len(raster) < need:
        raise TruncatedFileError(f"PNM raster truncated: {len(raster)} of {need} bytes")
    arr = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, channels)
    return arr.astype(np.float64) / 255.0


def encode_pnm(img: np.ndarray) -> bytes:
    q = quantize(img)
    h, w, c = q.shape
    if c not in (1, 3):
        raise IOFormatError(f"PNM needs 1 or 3 channels, got {c}")
    magic = b"P5" if c == 1 else b"P6"
    return magic + f"\n{w} {h}\n255\n".encode("ascii") + q.tobytes()


def quantize(img: np.ndarray) -> np.ndarray:
    a = np.asarray(img, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3:
        raise IOFormatError(f"expected H x W x C image, got shape {a.shape}")
    return np.clip(np.round(a * 255.0), 0, 255).astype(np.uint8)


def decode_image(buf: bytes) -> np.ndarray:
    if buf[:2] in (b"P5", b"P6"):
        return decode_pnm(buf)
    if buf[:8] == _PNG_SIG:
        from PIL import Image

        try:
            with Image.open(io.BytesIO(buf)) as im:
                im.load()
                if im.mode in ("1", "LA"):
                    im = im.convert("L")
                elif im.mode in ("P", "RGBA"):
                    im = im.convert("RGB")
                elif im.mode not in ("L", "RGB"):
                    raise IOFormatError(f"unsupported PNG mode {im.mode} (8-bit gray/RGB only)")
                arr = np.asarray(im, dtype=np.uint8)
        except IOFormatError:
            raise
        except (OSError, SyntaxError, ValueError) as exc:
            if "truncat" in str(exc).lower():
                raise TruncatedFileError(f"PNG truncated: {exc}") from exc
            raise IOFormatError(f"unreadable PNG: {exc}") from exc
        if arr.ndim == 2:
            arr = arr[:, :, None]
        return arr.astype(np.float64) / 255.0
    raise IOFormatError("unsupported image format (expected PNG or binary PGM/PPM)")


def load_image(path) -> np.ndarray:
    """Read an 8-bit PNG/PGM/PPM as an H x W x C float array in [0, 1]."""
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise IOFormatError(f"cannot read {path}: {exc}") from exc
    return decode_image(buf)


def save_image(path, img: np.ndarray) -> Path:
    """Write by extension: .png, .pgm or .ppm. Values are rounded to the
    nearest 1/255 step, so images already on that grid round-trip exactly."""
    path = Path(path)
    ext = path.suffix.lower()
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if ext in (".pgm", ".ppm", ".pnm"):
            path.write_bytes(encode_pnm(img))
        elif ext == ".png":
            from PIL import Image

            q = quantize(img)
            if q.shape[2] not in (1, 3):
                raise IOFormatError(f"PNG needs 1 or 3 channels, got {q.shape[2]}")
            buf = io.BytesIO()
            Image.fromarray(q[:, :, 0] if q.shape[2] == 1 else q).save(buf, format="PNG")
            path.write_bytes(buf.getvalue())
        else:
            raise IOFormatError(f"unsupported output extension {ext!r}")
    except OSError as exc:
        raise IOFormatError(f"cannot write {path}: {exc}") from exc
    return path


def to_batch(img: np.ndarray) -> np.ndarray:
    """H x W x C -> 1 x C x H x W."""
    a = np.asarray(img, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    return np.ascontiguousarray(a.transpose(2, 0, 1)[None])


def from_batch(x: np.ndarray, index: int = 0) -> np.ndarray:
    """N x C x H x W -> H x W x C for one sample."""
    return np.ascontiguousarray(np.asarray(x)[index].transpose(1, 2, 0))
