"""Video quality metrics over the stub embedders, on the 0-100 report scale.

Frame consistency is the mean cosine similarity over all unordered distinct
frame pairs; textual alignment is the mean frame-to-prompt cosine. Both are
pure, deterministic, and accept an injectable embedder so tests can drive
them with controlled vectors.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .stubs import PixelVideo, embed_frame, encode_text

EmbedFn = Callable[[np.ndarray], np.ndarray]


def frame_consistency(video: PixelVideo, embed_fn: EmbedFn = embed_frame) -> float:
    """100 x mean pairwise cosine over unordered frame pairs (i < j).

    Identical frames score exactly 100; requires at least two frames.
    """
    n = video.frame_count
    if n < 2:
        raise ValueError(f"frame_consistency needs >= 2 frames, got {n}")
    embeds = np.stack([embed_fn(video.frames[i]) for i in range(n)])
    total = 0.0
    count = 0
    for i in range(n):
        for j in range(i + 1, n):
            if np.array_equal(embeds[i], embeds[j]):
                total += 1.0
            else:
                total += float(embeds[i] @ embeds[j])
            count += 1
    return 100.0 * total / count


def pooled_prompt_vector(prompt: str) -> np.ndarray:
    """Mean token vector of the prompt embedding, L2-normalized."""
    tokens = encode_text(prompt).tokens.astype(np.float64)
    pooled = tokens.mean(axis=0)
    norm = np.linalg.norm(pooled)
    if norm < 1e-12:
        raise ValueError("prompt pooled to a zero vector")
    return pooled / norm


def textual_alignment(video: PixelVideo, prompt: str,
                      embed_fn: EmbedFn = embed_frame,
                      prompt_vector: np.ndarray | None = None) -> float:
    """100 x mean cosine between each frame embedding and the pooled prompt."""
    if prompt_vector is None:
        if not prompt.strip():
            raise ValueError("textual_alignment requires a nonempty prompt")
        prompt_vector = pooled_prompt_vector(prompt)
    scores = []
    for i in range(video.frame_count):
        e = embed_fn(video.frames[i])
        if np.array_equal(e, prompt_vector):
            scores.append(1.0)
        else:
            scores.append(float(e @ prompt_vector))
    return 100.0 * float(np.mean(scores))
