"""GlyphWorld: procedural fine-grained dataset generator.

Each 64x64 image holds one class glyph and K distractor glyphs, every glyph
drawn dark inside a bright disc on a textured noise background.  The discs
survive thumbnail downsampling (candidate locations are visible at low
acuity) but the glyph bitmaps are constructed with exactly half the bits set
in every quadrant, so all glyphs average to the same value at thumbnail
ratio — identity is only recoverable at high acuity.  Distractors come from
a pool shared across classes and carry no label information.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .imaging import from_u8, resize_bilinear, to_u8

GLYPH_VALUE = 0.08  # dark glyph bits
DISC_VALUE = 0.90  # bright support disc
DISC_RADIUS = 7  # pixels; the 8x8 glyph square fits inside (corner at 5.66)


class DataError(ValueError):
    pass


@dataclass
class DataConfig:
    seed: int = 1234
    classes: int = 10
    image_size: int = 64
    thumb_size: int = 8
    n_train: int = 5000
    n_test: int = 1000
    n_calib: int = 1000
    distractors: int = 3
    glyph_size: int = 8
    pool_size: int = 12
    box_margin: int = 10

    def items(self):
        return sorted(self.__dict__.items())


def data_fingerprint(cfg: DataConfig) -> str:
    """Stable short hash identifying a dataset (config + seed)."""
    text = "\n".join(f"{k}={v!r}" for k, v in cfg.items())
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


@dataclass
class SampleRecord:
    image: np.ndarray  # (H, W, 3) float64 on the 8-bit grid
    label: int
    box: tuple  # GT (x0, y0, x1, y1); evaluation-only, never used in training


@dataclass
class GlyphWorld:
    config: DataConfig
    class_glyphs: np.ndarray  # (C, g, g) bool
    distractor_pool: np.ndarray  # (P, g, g) bool
    splits: dict = field(default_factory=dict)  # name -> (images_u8, labels, boxes)
    fingerprint: str = ""

    def n(self, split: str) -> int:
        return len(self.splits[split][1])

    def image(self, split: str, i: int) -> np.ndarray:
        return from_u8(self.splits[split][0][i])

    def label(self, split: str, i: int) -> int:
        return int(self.splits[split][1][i])

    def sample(self, split: str, i: int) -> SampleRecord:
        images, labels, boxes = self.splits[split]
        return SampleRecord(from_u8(images[i]), int(labels[i]), tuple(boxes[i]))


# ---------------------------------------------------------------------------
# glyph bitmaps


def _balanced_glyph(rng, g: int) -> np.ndarray:
    """Binary (g, g) pattern with exactly half the bits set per quadrant."""
    q = g // 2
    bits = np.zeros((g, g), dtype=bool)
    for qi in (0, 1):
        for qj in (0, 1):
            flat = np.zeros(q * q, dtype=bool)
            flat[rng.permutation(q * q)[: q * q // 2]] = True
            bits[qi * q : (qi + 1) * q, qj * q : (qj + 1) * q] = flat.reshape(q, q)
    return bits


def _generate_glyphs(rng, count: int, g: int, min_hamming: int, retries: int = 500):
    accepted = []
    budget = retries
    while len(accepted) < count:
        cand = _balanced_glyph(rng, g)
        if all(int(np.sum(cand ^ a)) >= min_hamming for a in accepted):
            accepted.append(cand)
        else:
            budget -= 1
            if budget <= 0:
                raise DataError(
                    f"could not draw {count} glyphs {min_hamming} bits apart"
                )
    return np.array(accepted)


# ---------------------------------------------------------------------------
# image synthesis


def _place_spots(rng, size: int, count: int, retries: int = 100) -> np.ndarray:
    """Uniform disc centers, pairwise at least 2*DISC_RADIUS+2 apart."""
    lo, hi = DISC_RADIUS + 1, size - DISC_RADIUS - 1
    min_d2 = (2 * DISC_RADIUS + 2) ** 2
    for _ in range(retries):
        pts = rng.integers(lo, hi + 1, size=(count, 2))
        diff = pts[:, None, :] - pts[None, :, :]
        d2 = (diff**2).sum(axis=2)
        d2[np.diag_indices(count)] = min_d2
        if (d2 >= min_d2).all():
            return pts
    raise DataError("glyph placement overflow after bounded retries")


def _draw_glyph_cell(canvas: np.ndarray, cx: int, cy: int, bits: np.ndarray) -> None:
    r = DISC_RADIUS
    ys, xs = np.mgrid[cy - r : cy + r + 1, cx - r : cx + r + 1]
    disc = (xs - cx) ** 2 + (ys - cy) ** 2 <= r * r
    canvas[cy - r : cy + r + 1, cx - r : cx + r + 1][disc] = DISC_VALUE
    g = bits.shape[0]
    h = g // 2
    block = canvas[cy - h : cy - h + g, cx - h : cx - h + g]
    block[bits] = GLYPH_VALUE


def _render_sample(rng, cfg: DataConfig, class_glyph: np.ndarray, pool: np.ndarray):
    size = cfg.image_size
    coarse = rng.uniform(0.15, 0.45, size=(16, 16, 3))
    canvas = resize_bilinear(coarse, size, size)
    canvas += rng.normal(0.0, 0.02, size=canvas.shape)
    np.clip(canvas, 0.0, 1.0, out=canvas)

    spots = _place_spots(rng, size, cfg.distractors + 1)
    chosen = rng.choice(len(pool), size=cfg.distractors, replace=False)
    cx, cy = int(spots[0, 0]), int(spots[0, 1])
    _draw_glyph_cell(canvas, cx, cy, class_glyph)
    for k in range(cfg.distractors):
        _draw_glyph_cell(canvas, int(spots[k + 1, 0]), int(spots[k + 1, 1]), pool[chosen[k]])

    b = DISC_RADIUS + cfg.box_margin
    box = (
        float(np.clip(cx - b, 0, size)),
        float(np.clip(cy - b, 0, size)),
        float(np.clip(cx + b, 0, size)),
        float(np.clip(cy + b, 0, size)),
    )
    return to_u8(canvas), box


def generate_dataset(cfg: DataConfig) -> GlyphWorld:
    """Build train/test/calib splits deterministically from the config.

    Per-image RNG streams are spawned from the root seed in a fixed order,
    so any sample can be regenerated independently and the whole dataset is
    bit-identical across runs.
    """
    if cfg.classes < 2:
        raise DataError("need at least 2 classes")
    sizes = {"train": cfg.n_train, "test": cfg.n_test, "calib": cfg.n_calib}
    total = sum(sizes.values())
    root = np.random.SeedSequence(cfg.seed)
    children = root.spawn(total + 1)
    glyph_rng = np.random.default_rng(children[0])

    area = cfg.glyph_size * cfg.glyph_size
    glyphs = _generate_glyphs(
        glyph_rng, cfg.classes + cfg.pool_size, cfg.glyph_size, min_hamming=area // 4
    )
    class_glyphs, pool = glyphs[: cfg.classes], glyphs[cfg.classes :]

    ds = GlyphWorld(
        config=cfg,
        class_glyphs=class_glyphs,
        distractor_pool=pool,
        fingerprint=data_fingerprint(cfg),
    )
    offset = 1
    for split in ("train", "test", "calib"):
        n = sizes[split]
        images = np.zeros((n, cfg.image_size, cfg.image_size, 3), dtype=np.uint8)
        labels = np.arange(n, dtype=np.int64) % cfg.classes
        boxes = np.zeros((n, 4), dtype=np.float64)
        for i in range(n):
            rng = np.random.default_rng(children[offset + i])
            images[i], boxes[i] = _render_sample(
                rng, cfg, class_glyphs[labels[i]], pool
            )
        ds.splits[split] = (images, labels, boxes)
        offset += n
    return ds


# ---------------------------------------------------------------------------
# manifest I/O


def write_dataset(ds: GlyphWorld, outdir) -> str:
    """PNG per sample plus a JSON-lines manifest; returns the manifest path."""
    from .imaging import render_png

    img_dir = os.path.join(outdir, "images")
    os.makedirs(img_dir, exist_ok=True)
    manifest = os.path.join(outdir, "manifest.jsonl")
    with open(manifest, "w") as fh:
        header = {
            "kind": "glyphworld-manifest",
            "data_hash": ds.fingerprint,
            "config": dict(ds.config.items()),
        }
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for split in ds.splits:
            images, labels, boxes = ds.splits[split]
            for i in range(len(labels)):
                rel = os.path.join("images", f"{split}_{i:05d}.png")
                render_png(from_u8(images[i]), os.path.join(outdir, rel))
                rec = {
                    "split": split,
                    "index": i,
                    "path": rel,
                    "label": int(labels[i]),
                    "box": list(boxes[i]),
                }
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return manifest


def load_dataset(outdir) -> GlyphWorld:
    """Read a manifest directory back; images come back bit-identical."""
    from .imaging import load_png

    manifest = os.path.join(outdir, "manifest.jsonl")
    with open(manifest) as fh:
        header = json.loads(fh.readline())
        if header.get("kind") != "glyphworld-manifest":
            raise DataError(f"{manifest}: not a dataset manifest")
        cfg = DataConfig(**header["config"])
        ds = GlyphWorld(
            config=cfg,
            class_glyphs=None,
            distractor_pool=None,
            fingerprint=header["data_hash"],
        )
        if data_fingerprint(cfg) != ds.fingerprint:
            raise DataError(f"{manifest}: data hash does not match its config")
        records = {}
        for line in fh:
            rec = json.loads(line)
            records.setdefault(rec["split"], []).append(rec)
    for split, recs in records.items():
        recs.sort(key=lambda r: r["index"])
        n = len(recs)
        images = np.zeros((n, cfg.image_size, cfg.image_size, 3), dtype=np.uint8)
        labels = np.zeros(n, dtype=np.int64)
        boxes = np.zeros((n, 4), dtype=np.float64)
        for i, rec in enumerate(recs):
            images[i] = to_u8(load_png(os.path.join(outdir, rec["path"])))
            labels[i] = rec["label"]
            boxes[i] = rec["box"]
        ds.splits[split] = (images, labels, boxes)
    return ds


def solvability_check(ds: GlyphWorld, epochs: int = 8, subset: int = 2000, seed: int = 0):
    """Validate that GlyphWorld actually forces foveation.

    Trains the standard classifier twice — (i) on upsampled thumbnails only
    and (ii) on GT-box high-acuity crops — and gates on test accuracy:
    (i) must stay within 15 points of chance, (ii) must reach 95%.  Returns
    a report dict with a ``passed`` flag and both accuracies.
    """
    from .training import fit_classifier  # local import; trainer depends on us

    chance = 1.0 / ds.config.classes
    acc_low = fit_classifier(ds, "thumbnail", epochs=epochs, subset=subset, seed=seed)
    acc_crop = fit_classifier(ds, "gt_crop", epochs=epochs, subset=subset, seed=seed)
    report = {
        "chance": chance,
        "thumbnail_accuracy": acc_low,
        "crop_accuracy": acc_crop,
        "low_gate": acc_low <= chance + 0.15,
        "high_gate": acc_crop >= 0.95,
    }
    report["passed"] = report["low_gate"] and report["high_gate"]
    return report
