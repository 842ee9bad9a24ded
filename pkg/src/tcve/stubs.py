"""Deterministic stand-ins for the pretrained components that are out of
scope: the text encoder, the pixel<->latent autoencoder, and the frame
embedder used by the metrics.

Everything here is pure and seed-determined; no files, no network. The codec
is exactly invertible by construction (affine in float64 plus space-to-depth),
so pipeline reconstruction error is attributable to the diffusion model alone.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .ops import interp_matrix
from .rng import CounterRng, fnv1a64

TEXT_DIM = 64
TEXT_TOKENS = 16
_VOCAB_ROWS = 4096
_EMBED_DIM = 64
_EMBED_PATCH = 16

_TABLE_SEED = 0x7C3E
_PROJECTION_SEED = 0x51A5

_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float64)

_token_table: np.ndarray | None = None
_frame_projection: np.ndarray | None = None


@dataclass(frozen=True)
class PromptEmbedding:
    """Fixed-length sequence of token vectors conditioning the denoiser."""

    tokens: np.ndarray  # (TEXT_TOKENS, TEXT_DIM) float32
    source_text: str

    def __post_init__(self):
        if self.tokens.shape != (TEXT_TOKENS, TEXT_DIM):
            raise ValueError(
                f"prompt embedding must be ({TEXT_TOKENS}, {TEXT_DIM}), got {self.tokens.shape}")


@dataclass
class PixelVideo:
    """Frames shaped (frame, 3, height, width), float32 values in [0, 1]."""

    frames: np.ndarray

    def __post_init__(self):
        self.frames = np.ascontiguousarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 4 or self.frames.shape[1] != 3:
            raise ValueError(
                f"pixel video must be (frames, 3, h, w), got {self.frames.shape}")
        if self.frames.shape[0] < 1:
            raise ValueError("pixel video needs at least one frame")
        if self.frames.min() < 0.0 or self.frames.max() > 1.0:
            raise ValueError("pixel values must lie in [0, 1]")

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[2]

    @property
    def width(self) -> int:
        return self.frames.shape[3]


def _table() -> np.ndarray:
    global _token_table
    if _token_table is None:
        rng = CounterRng(_TABLE_SEED)
        _token_table = rng.normal((_VOCAB_ROWS, TEXT_DIM), dtype=np.float32)
    return _token_table


def _positions() -> np.ndarray:
    pos = np.arange(TEXT_TOKENS, dtype=np.float64)[:, None]
    half = TEXT_DIM // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half, dtype=np.float64) / half)[None, :]
    return np.concatenate([np.sin(pos * freqs), np.cos(pos * freqs)], axis=1).astype(np.float32)


def tokenize(text: str) -> list[str]:
    return re.findall(r"[a-z0-9']+", text.lower())


def encode_text(text: str) -> PromptEmbedding:
    """Hash-based text embedding: token -> table row, plus positions.

    Identical text gives an identical embedding bitwise. Empty or
    all-punctuation text yields the reserved unconditional embedding (pad
    rows only), which classifier-free guidance uses for the empty prompt.
    """
    words = tokenize(text)[:TEXT_TOKENS]
    table = _table()
    rows = np.zeros((TEXT_TOKENS, TEXT_DIM), dtype=np.float32)
    for i, word in enumerate(words):
        # row 0 is reserved for padding
        rows[i] = table[fnv1a64(word) % (_VOCAB_ROWS - 1) + 1]
    rows[len(words):] = table[0]
    tokens = rows + _positions()
    return PromptEmbedding(np.ascontiguousarray(tokens), text)


def unconditional_embedding() -> PromptEmbedding:
    return encode_text("")


def encode_video(video: PixelVideo) -> np.ndarray:
    """Pixels to latent: map [0,1] to [-1,1], then space-to-depth by 2.

    Output is (1, 12, f, h/2, w/2) float64; the affine runs in float64 so the
    round trip through :func:`decode_video` reproduces float32 pixels exactly.
    """
    f, _, h, w = video.frames.shape
    if h % 2 or w % 2:
        raise ValueError(f"encode_video: height and width must be even, got {h}x{w}")
    x = video.frames.astype(np.float64)
    z = 2.0 * x - 1.0
    z = z.reshape(f, 3, h // 2, 2, w // 2, 2)
    z = z.transpose(1, 3, 5, 0, 2, 4).reshape(1, 12, f, h // 2, w // 2)
    return np.ascontiguousarray(z)


def decode_video(latent: np.ndarray) -> PixelVideo:
    """Latent back to pixels: depth-to-space, inverse affine, clamp to [0,1]."""
    if latent.ndim != 5 or latent.shape[0] != 1 or latent.shape[1] != 12:
        raise ValueError(
            f"decode_video: latent must be (1, 12, f, h, w), got {latent.shape}")
    _, _, f, hh, hw = latent.shape
    z = latent.astype(np.float64).reshape(3, 2, 2, f, hh, hw)
    z = z.transpose(3, 0, 4, 1, 5, 2).reshape(f, 3, hh * 2, hw * 2)
    x = (z + 1.0) / 2.0
    return PixelVideo(np.clip(x, 0.0, 1.0).astype(np.float32))


def _projection() -> np.ndarray:
    global _frame_projection
    if _frame_projection is None:
        rng = CounterRng(_PROJECTION_SEED)
        n = _EMBED_PATCH * _EMBED_PATCH
        _frame_projection = rng.normal((n, _EMBED_DIM), dtype=np.float64) / np.sqrt(n)
    return _frame_projection


def embed_frame(frame: np.ndarray) -> np.ndarray:
    """Unit-norm 64-d embedding of one (3, h, w) frame.

    Bilinear resize to 16x16, luma grayscale, mean removal (so unrelated
    content decorrelates instead of sharing a brightness component), fixed
    random projection, L2 normalization. Structureless constant frames all
    map to one reserved direction.
    """
    if frame.ndim != 3 or frame.shape[0] != 3:
        raise ValueError(f"embed_frame: frame must be (3, h, w), got {frame.shape}")
    x = frame.astype(np.float64)
    wh = interp_matrix(frame.shape[1], _EMBED_PATCH)
    ww = interp_matrix(frame.shape[2], _EMBED_PATCH)
    small = np.einsum("chw,ih,jw->cij", x, wh, ww)
    gray = np.tensordot(_LUMA, small, axes=(0, 0)).reshape(-1)
    gray = gray - gray.mean()
    vec = gray @ _projection()
    norm = np.linalg.norm(vec)
    if norm < 1e-12:
        vec = _projection()[0].copy()
        norm = np.linalg.norm(vec)
    return (vec / norm).astype(np.float64)
