"""Synthetic identity corpora, binary PPM image IO, manifests and pair lists.

Images travel through the package as float64 arrays of shape (C, H, W) with
values in [0, 1]; on disk they are 8-bit binary PPM (P6).  A corpus is a
directory of PPM files plus a UTF-8 CSV manifest ``path,label``.  Face
verification uses a second CSV ``pathA,pathB,same`` with same in {0,1}.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ContractError, DataError


@dataclass
class ImageSample:
    """One training image: pixels in [0,1], identity label, augmentation seed."""

    pixels: np.ndarray
    label: int
    seed: int = 0


@dataclass
class VerificationPair:
    path_a: str
    path_b: str
    same: bool


@dataclass
class DatasetManifest:
    root: Path
    rows: list[tuple[str, int]] = field(default_factory=list)
    split: str = "train"

    @property
    def num_classes(self) -> int:
        return max(label for _, label in self.rows) + 1 if self.rows else 0

    def __len__(self) -> int:
        return len(self.rows)


def write_ppm(path, pixels: np.ndarray) -> None:
    """Write a (3, H, W) float image in [0,1] as an 8-bit binary PPM."""
    arr = np.asarray(pixels)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise DataError(f"PPM images are 3-channel, got shape {arr.shape} for {path}")
    quantized = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    h, w = arr.shape[1], arr.shape[2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(quantized.transpose(1, 2, 0).tobytes())


def read_ppm(path) -> np.ndarray:
    """Read an 8-bit binary PPM into a (3, H, W) float array in [0,1]."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataError(f"truncated PPM header in {path}")
        fields.append(raw[start:pos])
    pos += 1  # single whitespace byte after maxval
    magic, w_s, h_s, maxval = fields
    if magic != b"P6":
        raise DataError(f"{path} is not a binary PPM (magic {magic!r})")
    if maxval != b"255":
        raise DataError(f"{path}: only maxval 255 is supported, got {maxval!r}")
    w, h = int(w_s), int(h_s)
    body = raw[pos : pos + 3 * w * h]
    if len(body) != 3 * w * h:
        raise DataError(f"{path}: expected {3 * w * h} pixel bytes, got {len(body)}")
    flat = np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3)
    return flat.transpose(2, 0, 1).astype(np.float64) / 255.0


def load_manifest(path, split: str = "train") -> DatasetManifest:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"manifest not found: {path}")
    rows: list[tuple[str, int]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if len(row) != 2:
                raise DataError(f"{path}:{lineno}: expected 'path,label', got {row!r}")
            rel, label_s = row
            try:
                label = int(label_s)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: label {label_s!r} is not an integer") from exc
            if label < 0:
                raise DataError(f"{path}:{lineno}: negative label {label}")
            target = path.parent / rel
            if not target.is_file():
                raise DataError(f"{path}:{lineno}: referenced image missing: {target}")
            rows.append((rel, label))
    if not rows:
        raise DataError(f"manifest {path} has no rows")
    return DatasetManifest(root=path.parent, rows=rows, split=split)


def load_pairs(path) -> list[VerificationPair]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"pairs file not found: {path}")
    pairs: list[VerificationPair] = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if len(row) != 3 or row[2] not in ("0", "1"):
                raise DataError(f"{path}:{lineno}: expected 'pathA,pathB,same(0|1)', got {row!r}")
            pairs.append(VerificationPair(row[0], row[1], row[2] == "1"))
    if not pairs:
        raise DataError(f"pairs file {path} has no rows")
    return pairs


def blur_image(pixels: np.ndarray, sigma: float) -> np.ndarray:
    """Per-channel Gaussian blur, clamped back to [0,1]."""
    if sigma <= 0:
        return pixels.copy()
    out = np.stack([gaussian_filter(ch, sigma, mode="nearest") for ch in pixels])
    return np.clip(out, 0.0, 1.0)


def _identity_base(rng: np.random.Generator, side: int) -> np.ndarray:
    """Smooth low-frequency field plus identity-specific geometric layout."""
    hh, ww = np.meshgrid(np.arange(side) / side, np.arange(side) / side, indexing="ij")
    img = np.zeros((3, side, side))
    for ch in range(3):
        for _ in range(3):
            fu, fv = rng.integers(0, 3, size=2)
            amp = rng.uniform(0.1, 0.3)
            phase = rng.uniform(0, 2 * np.pi)
            img[ch] += amp * np.sin(2 * np.pi * (fu * hh + fv * ww) + phase)
    # geometric layout: a few colored rectangles and discs
    for _ in range(4):
        kind = rng.integers(0, 2)
        color = rng.uniform(-0.5, 0.5, size=3)
        cy, cx = rng.integers(2, side - 2, size=2)
        extent = int(rng.integers(3, max(4, side // 3)))
        if kind == 0:
            y0, y1 = max(0, cy - extent), min(side, cy + extent)
            x0, x1 = max(0, cx - extent), min(side, cx + extent)
            img[:, y0:y1, x0:x1] += color[:, None, None]
        else:
            mask = (np.arange(side)[:, None] - cy) ** 2 + (np.arange(side)[None, :] - cx) ** 2 <= extent**2
            img[:, mask] += color[:, None]
    lo, hi = img.min(), img.max()
    if hi > lo:
        img = (img - lo) / (hi - lo)
    return 0.15 + 0.7 * img  # keep head-room for photometric jitter


def generate_toy_dataset(
    out_dir,
    identities: int,
    per_id: int,
    side: int = 32,
    seed: int = 0,
    force: bool = False,
) -> Path:
    """Write a deterministic synthetic identity corpus; returns the manifest path.

    Each identity has a fixed base pattern; its images vary in brightness,
    contrast, noise and blur, with degradation ramping from crisp (easy) to
    heavily blurred and noisy (hard).
    """
    if identities < 2 or per_id < 2:
        raise ContractError(f"need at least 2 identities and 2 images each, got {identities}x{per_id}")
    out_dir = Path(out_dir)
    if out_dir.exists() and any(out_dir.iterdir()) and not force:
        raise DataError(f"output directory {out_dir} is not empty (use force to overwrite)")
    out_dir.mkdir(parents=True, exist_ok=True)
    rows: list[tuple[str, int]] = []
    for ident in range(identities):
        base = _identity_base(np.random.default_rng(np.random.SeedSequence([seed, ident])), side)
        for j in range(per_id):
            rng = np.random.default_rng(np.random.SeedSequence([seed, ident, j]))
            hardness = j / (per_id - 1)
            img = base * rng.uniform(0.85, 1.15) + rng.uniform(-0.08, 0.08)
            sigma_blur = 2.5 * hardness * rng.uniform(0.5, 1.0)
            if sigma_blur > 0.05:
                img = np.stack([gaussian_filter(ch, sigma_blur, mode="nearest") for ch in img])
            img += rng.normal(0.0, 0.01 + 0.05 * hardness, size=img.shape)
            img = np.clip(img, 0.0, 1.0)
            name = f"id{ident:03d}_img{j:03d}.ppm"
            write_ppm(out_dir / name, img)
            rows.append((name, ident))
    manifest_path = out_dir / "manifest.csv"
    with open(manifest_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerows(rows)
    return manifest_path


def make_pairs(manifest: DatasetManifest, count: int, seed: int = 0) -> list[VerificationPair]:
    """Draw a balanced list of genuine/impostor pairs from a manifest."""
    if count < 2:
        raise ContractError(f"need at least 2 pairs, got {count}")
    by_label: dict[int, list[str]] = {}
    for rel, label in manifest.rows:
        by_label.setdefault(label, []).append(rel)
    labels = [lab for lab, paths in by_label.items() if len(paths) >= 2]
    if len(labels) < 2:
        raise DataError("pair generation needs >= 2 identities with >= 2 images each")
    rng = np.random.default_rng(np.random.SeedSequence([seed, len(manifest.rows)]))
    pairs: list[VerificationPair] = []
    for i in range(count):
        if i % 2 == 0:
            lab = labels[rng.integers(len(labels))]
            a, b = rng.choice(len(by_label[lab]), size=2, replace=False)
            pairs.append(VerificationPair(by_label[lab][a], by_label[lab][b], True))
        else:
            la, lb = rng.choice(len(labels), size=2, replace=False)
            pa = by_label[labels[la]][rng.integers(len(by_label[labels[la]]))]
            pb = by_label[labels[lb]][rng.integers(len(by_label[labels[lb]]))]
            pairs.append(VerificationPair(pa, pb, False))
    return pairs


def write_pairs(path, pairs: list[VerificationPair]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        for p in pairs:
            writer.writerow([p.path_a, p.path_b, "1" if p.same else "0"])
