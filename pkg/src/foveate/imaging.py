"""Mixed-acuity imaging: resampling, fixation discs, patch crops, rendering.

Images are float64 arrays of shape (H, W, 3) with values in [0, 1].
Coordinates follow the action convention: ``cx`` runs along width, ``cy``
along height, so pixel (px, py) lives at ``array[py, px]``.  Disc
membership uses the pixel-center test ``(px - cx)^2 + (py - cy)^2 <= r^2``
on integer coordinates directly, which keeps revealed-pixel counts
bit-reproducible.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger("foveate.imaging")


class ImagingError(ValueError):
    pass


def quantize8(img: np.ndarray) -> np.ndarray:
    """Snap values to the 8-bit grid (round(v*255)/255), the wire precision."""
    return np.round(np.clip(img, 0.0, 1.0) * 255.0) / 255.0


def to_u8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def from_u8(raw: np.ndarray) -> np.ndarray:
    return raw.astype(np.float64) / 255.0


# ---------------------------------------------------------------------------
# resampling


def _area_weights(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) row-stochastic matrix averaging aligned cells.

    Output cell i covers the interval [i*n_in/n_out, (i+1)*n_in/n_out); each
    input pixel contributes its overlap with the cell.  Handles non-divisible
    ratios with fractional edge weights.
    """
    w = np.zeros((n_out, n_in))
    cell = n_in / n_out
    for i in range(n_out):
        lo, hi = i * cell, (i + 1) * cell
        j0, j1 = int(np.floor(lo)), int(np.ceil(hi))
        for j in range(j0, min(j1, n_in)):
            w[i, j] = min(hi, j + 1) - max(lo, j)
    return w / cell


def _linear_weights(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) corner-aligned linear interpolation matrix."""
    w = np.zeros((n_out, n_in))
    if n_in == 1 or n_out == 1:
        if n_out == 1 and n_in > 1:
            # collapsing to one sample: take the corner-aligned midpoint
            pos = (n_in - 1) / 2.0
            j = int(np.floor(pos))
            frac = pos - j
            w[0, j] = 1 - frac
            if frac:
                w[0, min(j + 1, n_in - 1)] += frac
        else:
            w[:, 0] = 1.0
        return w
    scale = (n_in - 1) / (n_out - 1)
    for i in range(n_out):
        pos = i * scale
        j = min(int(np.floor(pos)), n_in - 2)
        frac = pos - j
        w[i, j] = 1 - frac
        w[i, j + 1] = frac
    return w


def _apply_separable(img: np.ndarray, wr: np.ndarray, wc: np.ndarray) -> np.ndarray:
    out = np.tensordot(wr, img, axes=(1, 0))        # (oh, W, C)
    out = np.tensordot(out, wc, axes=(1, 1))        # (oh, C, ow)
    return np.ascontiguousarray(np.transpose(out, (0, 2, 1)))


def downsample(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Area-average pooling over aligned rectangular cells."""
    h, w = img.shape[:2]
    if out_h <= 0 or out_w <= 0:
        raise ImagingError("downsample: output dims must be positive")
    if out_h > h or out_w > w:
        raise ImagingError(f"downsample: output ({out_h},{out_w}) exceeds input ({h},{w})")
    return _apply_separable(img, _area_weights(h, out_h), _area_weights(w, out_w))


def upsample_psi(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear interpolation with corner-aligned sampling (the Psi operator)."""
    h, w = img.shape[:2]
    if out_h < h or out_w < w:
        raise ImagingError(f"upsample_psi: output ({out_h},{out_w}) below input ({h},{w})")
    return resize_bilinear(img, out_h, out_w)


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = img.shape[:2]
    if out_h <= 0 or out_w <= 0:
        raise ImagingError("resize: output dims must be positive")
    return _apply_separable(img, _linear_weights(h, out_h), _linear_weights(w, out_w))


# ---------------------------------------------------------------------------
# fixations


@dataclass
class FixationGeometry:
    cx: float
    cy: float
    radius: float


@dataclass
class MixedAcuityImage:
    """Upsampled thumbnail canvas with revealed high-acuity pixels tracked."""

    canvas: np.ndarray
    mask: np.ndarray = field(default=None)
    revealed_count: int = 0

    def __post_init__(self):
        if self.mask is None:
            self.mask = np.zeros(self.canvas.shape[:2], dtype=bool)

    @property
    def pixel_fraction(self) -> float:
        h, w = self.canvas.shape[:2]
        return self.revealed_count / float(h * w)

    def copy(self) -> "MixedAcuityImage":
        return MixedAcuityImage(
            self.canvas.copy(), self.mask.copy(), self.revealed_count
        )


def denormalize_action(a, h: int, w: int, b1: float, b2: float) -> FixationGeometry:
    """Map normalized (x, y, l) in [-1,1]^3 to pixel center and radius.

    cx = (1+x)/2 * w, cy = (1+y)/2 * h, radius = b1 + (1+l)/2 * (b2 - b1).
    Components outside [-1, 1] (exploration noise can overshoot) are clamped
    with a warning.
    """
    a = np.asarray(a, dtype=np.float64)
    if np.any(np.abs(a) > 1.0):
        log.warning("action %s outside [-1,1], clamping", np.round(a, 4).tolist())
        a = np.clip(a, -1.0, 1.0)
    x, y, l = a
    return FixationGeometry(
        cx=(1.0 + x) / 2.0 * w,
        cy=(1.0 + y) / 2.0 * h,
        radius=b1 + (1.0 + l) / 2.0 * (b2 - b1),
    )


def _disc_bounds(g: FixationGeometry, h: int, w: int):
    x0 = max(0, int(np.ceil(g.cx - g.radius)))
    x1 = min(w - 1, int(np.floor(g.cx + g.radius)))
    y0 = max(0, int(np.ceil(g.cy - g.radius)))
    y1 = min(h - 1, int(np.floor(g.cy + g.radius)))
    return x0, x1, y0, y1


def reveal_fixation(m: MixedAcuityImage, g: FixationGeometry, high: np.ndarray) -> int:
    """Overwrite the disc around ``g`` with high-acuity pixels.

    Returns the number of pixels revealed for the first time; the canvas,
    mask and revealed_count are updated in place.  Off-image disc portions
    are clipped silently.
    """
    h, w = m.canvas.shape[:2]
    if high.shape[:2] != (h, w):
        raise ImagingError(f"reveal: high-acuity shape {high.shape} != canvas {(h, w)}")
    x0, x1, y0, y1 = _disc_bounds(g, h, w)
    if x1 < x0 or y1 < y0:
        return 0
    ys, xs = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
    disc = (xs - g.cx) ** 2 + (ys - g.cy) ** 2 <= g.radius**2
    sub = m.mask[y0 : y1 + 1, x0 : x1 + 1]
    new = disc & ~sub
    m.canvas[y0 : y1 + 1, x0 : x1 + 1][new] = high[y0 : y1 + 1, x0 : x1 + 1][new]
    sub |= disc
    new_pixels = int(new.sum())
    m.revealed_count += new_pixels
    return new_pixels


def crop_local_patch(
    m: MixedAcuityImage, g: FixationGeometry, out_h: int, out_w: int
) -> np.ndarray:
    """Square of side 2*radius around the fixation, clipped, then resized.

    The crop takes integer rows floor(cy-r)..ceil(cy+r) and the analogous
    columns (end-exclusive slice at ceil+1 is not used; the slice covers the
    square's pixel footprint).  A degenerate clip falls back to the full
    canvas with a warning.
    """
    h, w = m.canvas.shape[:2]
    x0 = max(0, int(np.floor(g.cx - g.radius)))
    x1 = min(w, int(np.ceil(g.cx + g.radius)))
    y0 = max(0, int(np.floor(g.cy - g.radius)))
    y1 = min(h, int(np.ceil(g.cy + g.radius)))
    if x1 <= x0 or y1 <= y0:
        log.warning(
            "degenerate local patch at (%.1f,%.1f) r=%.1f; using full canvas",
            g.cx,
            g.cy,
            g.radius,
        )
        return resize_bilinear(m.canvas, out_h, out_w)
    return resize_bilinear(m.canvas[y0:y1, x0:x1], out_h, out_w)


def fit_bounding_box(fixations, h: int, w: int):
    """Tightest axis-aligned box (x0, y0, x1, y1) containing every disc,
    clipped to image bounds."""
    if not fixations:
        raise ImagingError("fit_bounding_box: empty fixation list")
    x0 = min(g.cx - g.radius for g in fixations)
    y0 = min(g.cy - g.radius for g in fixations)
    x1 = max(g.cx + g.radius for g in fixations)
    y1 = max(g.cy + g.radius for g in fixations)
    return (
        float(np.clip(x0, 0, w)),
        float(np.clip(y0, 0, h)),
        float(np.clip(x1, 0, w)),
        float(np.clip(y1, 0, h)),
    )


# ---------------------------------------------------------------------------
# rendering


def render_png(img, path, circles=(), box=None) -> None:
    """Write an 8-bit RGB PNG with red circle outlines and a green box."""
    from PIL import Image, ImageDraw

    if isinstance(img, MixedAcuityImage):
        img = img.canvas
    pil = Image.fromarray(to_u8(img), mode="RGB")
    if circles or box is not None:
        draw = ImageDraw.Draw(pil)
        for g in circles:
            draw.ellipse(
                [g.cx - g.radius, g.cy - g.radius, g.cx + g.radius, g.cy + g.radius],
                outline=(255, 0, 0),
            )
        if box is not None:
            x0, y0, x1, y1 = box
            draw.rectangle([x0, y0, x1, y1], outline=(0, 255, 0))
    try:
        pil.save(path, format="PNG")
    except OSError as exc:
        raise ImagingError(f"failed to write PNG {path}: {exc}") from exc


def load_png(path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as pil:
        return from_u8(np.asarray(pil.convert("RGB"), dtype=np.uint8))
