"""Reconstruction quality reports and the shear-range sweep."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .lightfield import LightField4D, LightFieldSlice, to_luminance
from .metrics import psnr, ssim
from .pipeline import reconstruct_slice

CSV_HEADER = ["scene", "scale", "psnr_db", "ssim"]


@dataclass
class EvalEntry:
    scene: str
    scale: str
    psnr_db: float
    ssim: float


@dataclass
class EvalReport:
    entries: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def add(self, entry: EvalEntry):
        self.entries.append(entry)

    def averages(self) -> dict:
        """Mean PSNR/SSIM per scale."""
        out = {}
        for scale in sorted({e.scale for e in self.entries}):
            rows = [e for e in self.entries if e.scale == scale]
            out[scale] = {
                "psnr_db": float(np.mean([e.psnr_db for e in rows])),
                "ssim": float(np.mean([e.ssim for e in rows])),
            }
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for e in self.entries:
            writer.writerow([e.scene, e.scale, _fmt(e.psnr_db), _fmt(e.ssim)])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {"config": self.config, "entries": [asdict(e) for e in self.entries], "averages": self.averages()},
            indent=2,
        )

    def write(self, path):
        path = Path(path)
        if path.suffix == ".json":
            path.write_text(self.to_json())
        else:
            path.write_text(self.to_csv())


def _fmt(v: float) -> str:
    return "inf" if np.isinf(v) else f"{v:.6f}"


def input_positions(views: int, alpha: int) -> list[int]:
    """Indices of original input views in an ``alpha``-upsampled axis."""
    return list(range(0, views, alpha))


def evaluate(recon: LightField4D, truth: LightField4D, input_positions=None, border: int = 0) -> dict:
    """Average PSNR/SSIM on luminance over the synthesized views.

    ``input_positions`` lists ``(s, t)`` pairs (or, for 3D light fields,
    plain ``s`` indices) that are excluded from scoring. ``border`` crops
    that many pixels from every image edge before measuring.
    """
    if recon.shape[:4] != truth.shape[:4]:
        raise ValueError(f"shape mismatch: {recon.shape} vs {truth.shape}")
    a = to_luminance(recon).data[..., 0].astype(np.float64)
    b = to_luminance(truth).data[..., 0].astype(np.float64)
    if border:
        a = a[border:-border, border:-border]
        b = b[border:-border, border:-border]
    excluded = set()
    for p in input_positions or []:
        excluded.add(tuple(p) if np.ndim(p) else (int(p), 0))
    psnrs, ssims = [], []
    for s in range(a.shape[2]):
        for t in range(a.shape[3]):
            if (s, t) in excluded:
                continue
            psnrs.append(psnr(a[:, :, s, t], b[:, :, s, t]))
            ssims.append(ssim(a[:, :, s, t], b[:, :, s, t]))
    if not psnrs:
        raise ValueError("no synthesized views left to score")
    return {"psnr_db": float(np.mean(psnrs)), "ssim": float(np.mean(ssims)), "views": len(psnrs)}


def shear_range_hypotheses(lo: float, hi: float, step: float = 4.0) -> np.ndarray:
    """Hypotheses every ``step`` pixels within ``[lo, hi]``, always including 0."""
    vals = set(np.round(np.arange(0.0, hi + 1e-9, step), 9)) | set(np.round(-np.arange(0.0, -lo + 1e-9, step), 9))
    return np.array(sorted(v for v in vals if lo - 1e-9 <= v <= hi + 1e-9))


def sweep_shear_range(sl, truth, ranges, ni_params=None, dibr_params=None, alpha: int = 4, *,
                      step: float = 4.0, interpolator: str = "ni", cost_fn=None, mask=None, out_csv=None):
    """PSNR/SSIM of the reconstruction of ``sl`` for each shear range.

    ``ranges`` holds ``(lo, hi)`` pairs or a half-width ``r`` for ``[-r, r]``.
    ``mask`` optionally restricts scoring (e.g. to a fixed region). Rows
    are returned sorted by range width, and written as CSV if ``out_csv``.
    """
    truth_data = truth.data if isinstance(truth, LightFieldSlice) else np.asarray(truth)
    parsed = [(-float(r), float(r)) if np.ndim(r) == 0 else (float(r[0]), float(r[1])) for r in ranges]
    parsed = sorted(set(parsed), key=lambda r: (r[1] - r[0], r[0]))
    rows = []
    for lo, hi in parsed:
        hyps = shear_range_hypotheses(lo, hi, step)
        r = reconstruct_slice(sl, hyps, ni_params, dibr_params, alpha, interpolator=interpolator, cost_fn=cost_fn)
        rows.append({
            "lo": lo,
            "hi": hi,
            "hypotheses": len(hyps),
            "psnr_db": psnr(r.slice.data, truth_data, mask),
            "ssim": ssim(r.slice.data, truth_data, mask),
        })
    if out_csv is not None:
        with open(out_csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["lo", "hi", "hypotheses", "psnr_db", "ssim"], lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
    return rows
