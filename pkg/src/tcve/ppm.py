"""Binary PPM (P6, maxval 255) frame files and frame directories.

Zero-dependency, byte-exact video storage: a video is a directory of
``frame_0000.ppm``-style files read in lexicographic order. Pixel float
values map to bytes by round(x * 255) and back by k / 255, so a
write-read-write cycle is byte-identical.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .stubs import PixelVideo


def frame_to_bytes(frame: np.ndarray) -> bytes:
    """One (3, h, w) float frame in [0, 1] as a P6 PPM byte string."""
    if frame.ndim != 3 or frame.shape[0] != 3:
        raise ValueError(f"frame must be (3, h, w), got {frame.shape}")
    h, w = frame.shape[1:]
    data = np.clip(np.round(frame.astype(np.float64) * 255.0), 0, 255).astype(np.uint8)
    # interleave to h x w x rgb scanline order
    body = np.ascontiguousarray(data.transpose(1, 2, 0)).tobytes()
    return b"P6\n%d %d\n255\n" % (w, h) + body


def bytes_to_frame(blob: bytes) -> np.ndarray:
    """Parse a P6 PPM byte string into a (3, h, w) float32 frame."""
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if blob[pos:pos + 1] == b"#":
            while pos < len(blob) and blob[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("ppm: truncated header")
        fields.append(blob[start:pos])
    if fields[0] != b"P6":
        raise ValueError(f"ppm: expected magic P6, got {fields[0]!r}")
    try:
        w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    except ValueError:
        raise ValueError("ppm: malformed header fields") from None
    if maxval != 255:
        raise ValueError(f"ppm: only maxval 255 is supported, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    body = blob[pos:pos + 3 * w * h]
    if len(body) != 3 * w * h:
        raise ValueError(f"ppm: expected {3 * w * h} pixel bytes, got {len(body)}")
    data = np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3).transpose(2, 0, 1)
    return (data.astype(np.float32) / np.float32(255.0)).astype(np.float32)


def write_frame(path: str | Path, frame: np.ndarray) -> None:
    Path(path).write_bytes(frame_to_bytes(frame))


def read_frame(path: str | Path) -> np.ndarray:
    return bytes_to_frame(Path(path).read_bytes())


def save_video_dir(directory: str | Path, video: PixelVideo) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i in range(video.frame_count):
        write_frame(directory / f"frame_{i:04d}.ppm", video.frames[i])


def load_video_dir(directory: str | Path) -> PixelVideo:
    directory = Path(directory)
    if not directory.is_dir():
        raise ValueError(f"video directory not found: {directory}")
    paths = sorted(directory.glob("*.ppm"))
    if not paths:
        raise ValueError(f"no .ppm frames in {directory}")
    frames = [read_frame(p) for p in paths]
    first = frames[0].shape
    for p, f in zip(paths, frames):
        if f.shape != first:
            raise ValueError(
                f"frame extent mismatch: {p.name} is {f.shape[1:]} "
                f"but {paths[0].name} is {first[1:]}")
    return PixelVideo(np.stack(frames))
