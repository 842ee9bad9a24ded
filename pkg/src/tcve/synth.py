"""Deterministic toy footage for training demos and tests.

The bundled clip is a bright square drifting over a color gradient with a
dimming background, quantized to 8-bit levels so disk round trips are exact.
"""

from __future__ import annotations

import numpy as np

from .stubs import PixelVideo


def make_toy_video(frames: int = 8, height: int = 16, width: int = 16) -> PixelVideo:
    """Moving-square clip with smooth motion, values on the 8-bit grid."""
    if frames < 1 or height < 2 or width < 2:
        raise ValueError("toy video needs frames >= 1 and extents >= 2")
    ys = np.linspace(0.0, 1.0, height)[:, None]
    xs = np.linspace(0.0, 1.0, width)[None, :]
    out = np.zeros((frames, 3, height, width), dtype=np.float64)
    side = max(2, height // 4)
    for f in range(frames):
        phase = f / max(frames, 1)
        base_r = 0.15 + 0.55 * xs + 0.0 * ys
        base_g = 0.20 + 0.45 * ys + 0.05 * np.sin(2 * np.pi * (xs + phase))
        base_b = 0.60 - 0.35 * xs * ys + 0.1 * phase
        top = int(round((height - side) * phase))
        left = int(round((width - side) * (0.5 + 0.5 * np.sin(2 * np.pi * phase)) / 1.0)) % (width - side + 1)
        for c, base in enumerate((base_r, base_g, base_b)):
            img = np.clip(base, 0.0, 1.0).copy()
            img[top:top + side, left:left + side] = (0.95, 0.85, 0.2)[c]
            out[f, c] = img
    quantized = np.round(out * 255.0) / 255.0
    return PixelVideo(quantized.astype(np.float32))
