"""Light-field containers, directory I/O, colour handling and slicing.

Arrays are stored in ``(x, y, s, t, c)`` order, i.e. ``(W, H, A_s, A_t, C)``.
A 3D slice keeps one angular axis and is stored as ``(W, H, A, 1)`` with the
axis that gets sheared always first.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

VIEW_PATTERN = "view_{s:02d}_{t:02d}.png"
SIDECAR = "lf.json"

_BT601_Y = np.array([0.299, 0.587, 0.114])
_BT601_CB = np.array([-0.168736, -0.331264, 0.5])
_BT601_CR = np.array([0.5, -0.418688, -0.081312])


class LightFieldError(ValueError):
    """Raised for malformed light-field directories or arrays."""


@dataclass
class LightField4D:
    """A 4D light field ``L(x, y, s, t)`` with one or three channels."""

    data: np.ndarray
    color_space: str | None = None  # inferred from the channel count when omitted

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 5:
            raise LightFieldError(f"expected (W, H, A_s, A_t, C) array, got shape {data.shape}")
        if self.color_space is None:
            self.color_space = "rgb" if data.shape[-1] == 3 else "y"
        if data.shape[-1] not in (1, 3):
            raise LightFieldError(f"channel count must be 1 or 3, got {data.shape[-1]}")
        if min(data.shape) < 1:
            raise LightFieldError(f"empty light field: {data.shape}")
        if self.color_space not in ("rgb", "y"):
            raise LightFieldError(f"unknown color space {self.color_space!r}")
        if self.color_space == "rgb" and data.shape[-1] != 3:
            raise LightFieldError("rgb light field needs 3 channels")
        if self.color_space == "y" and data.shape[-1] != 1:
            raise LightFieldError("luminance light field needs 1 channel")
        if not np.all(np.isfinite(data)):
            raise LightFieldError("light field contains non-finite values")
        self.data = data

    @property
    def width(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def angular_s(self) -> int:
        return self.data.shape[2]

    @property
    def angular_t(self) -> int:
        return self.data.shape[3]

    @property
    def shape(self):
        return self.data.shape

    def metadata(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "angular_s": self.angular_s,
            "angular_t": self.angular_t,
            "color_space": self.color_space,
        }


@dataclass
class LightFieldSlice:
    """A 3D light field with a single angular axis, shape ``(W, H, A, 1)``.

    ``axis`` records whether the angular axis is ``s`` (fixed ``t``) or ``t``
    (fixed ``s``, spatial axes transposed). ``index`` is the fixed angular
    coordinate of the other axis.
    """

    data: np.ndarray
    axis: str = "s"
    index: int = 0
    mask: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 3:
            data = data[..., None]
        if data.ndim != 4 or data.shape[-1] != 1:
            raise LightFieldError(f"slice must have shape (W, H, A, 1), got {data.shape}")
        if self.axis not in ("s", "t"):
            raise LightFieldError(f"slice axis must be 's' or 't', got {self.axis!r}")
        if not np.all(np.isfinite(data)):
            raise LightFieldError("slice contains non-finite values")
        self.data = data

    @property
    def width(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def views(self) -> int:
        return self.data.shape[2]


def _read_png(path: Path) -> np.ndarray:
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise LightFieldError(f"cannot read image {path}")
    if img.dtype == np.uint8:
        scale = 255.0
    elif img.dtype == np.uint16:
        scale = 65535.0
    else:
        raise LightFieldError(f"unsupported bit depth {img.dtype} in {path}")
    if img.ndim == 2:
        img = img[..., None]
    elif img.shape[-1] == 4:
        img = img[..., :3]
    if img.shape[-1] == 3:
        img = img[..., ::-1]  # BGR -> RGB
    # (H, W, C) -> (W, H, C)
    return np.transpose(img.astype(np.float64) / scale, (1, 0, 2))


def _write_png(path: Path, image: np.ndarray, bits: int = 8):
    """Write a ``(W, H, C)`` image in [0, 1] as an 8- or 16-bit PNG."""
    dtype = np.uint8 if bits == 8 else np.uint16
    peak = 2**bits - 1
    arr = np.round(np.clip(image, 0.0, 1.0) * peak).astype(dtype)
    arr = np.transpose(arr, (1, 0, 2))
    if arr.shape[-1] == 3:
        arr = arr[..., ::-1]
    else:
        arr = arr[..., 0]
    if not cv2.imwrite(str(path), np.ascontiguousarray(arr)):
        raise LightFieldError(f"failed to write {path}")


def _scan_grid(root: Path, pattern: str):
    regex = re.escape(pattern)
    regex = re.sub(r"\\\{s(:[^}]*)?\\\}", r"(?P<s>\\d+)", regex)
    regex = re.sub(r"\\\{t(:[^}]*)?\\\}", r"(?P<t>\\d+)", regex)
    found = []
    for name in os.listdir(root):
        m = re.fullmatch(regex, name)
        if m:
            found.append((int(m.group("s")), int(m.group("t"))))
    return found


def load_lightfield(path, layout: str = VIEW_PATTERN) -> LightField4D:
    """Load a directory of sub-aperture PNGs into a :class:`LightField4D`.

    The grid size comes from the ``lf.json`` sidecar when present, otherwise
    from the largest indices found on disk.
    """
    root = Path(path)
    if not root.is_dir():
        raise LightFieldError(f"not a directory: {root}")
    meta = {}
    sidecar = root / SIDECAR
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
    if "angular_s" in meta and "angular_t" in meta:
        a_s, a_t = int(meta["angular_s"]), int(meta["angular_t"])
    else:
        found = _scan_grid(root, layout)
        if not found:
            raise LightFieldError(f"no views matching {layout!r} in {root}")
        a_s = max(s for s, _ in found) + 1
        a_t = max(t for _, t in found) + 1

    views = {}
    for t in range(a_t):
        for s in range(a_s):
            fname = layout.format(s=s, t=t)
            fpath = root / fname
            if not fpath.exists():
                raise LightFieldError(f"incomplete grid: {Path(fname).stem}")
            views[s, t] = _read_png(fpath)

    first = views[0, 0]
    for key, img in views.items():
        if img.shape != first.shape:
            raise LightFieldError(
                f"dimension mismatch: view {key} has shape {img.shape[:2]}, expected {first.shape[:2]}"
            )
    if "width" in meta and (meta["width"], meta["height"]) != first.shape[:2]:
        raise LightFieldError(
            f"dimension mismatch: sidecar says {meta['width']}x{meta['height']}, images are {first.shape[0]}x{first.shape[1]}"
        )

    w, h, c = first.shape
    data = np.empty((w, h, a_s, a_t, c), dtype=np.float64)
    for (s, t), img in views.items():
        data[:, :, s, t] = img
    color_space = meta.get("color_space", "rgb" if c == 3 else "y")
    return LightField4D(data.astype(np.float32), color_space=color_space)


def save_lightfield(lf: LightField4D, path, layout: str = VIEW_PATTERN, bits: int = 8):
    """Write ``lf`` as one PNG per view plus the ``lf.json`` sidecar."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    for t in range(lf.angular_t):
        for s in range(lf.angular_s):
            _write_png(root / layout.format(s=s, t=t), lf.data[:, :, s, t], bits=bits)
    (root / SIDECAR).write_text(json.dumps(lf.metadata(), indent=2))


def rgb_to_ycbcr(rgb: np.ndarray) -> np.ndarray:
    """Full-range BT.601 conversion; chroma is offset by 0.5 into [0, 1]."""
    rgb = np.asarray(rgb, dtype=np.float64)
    y = rgb @ _BT601_Y
    cb = rgb @ _BT601_CB + 0.5
    cr = rgb @ _BT601_CR + 0.5
    return np.stack([y, cb, cr], axis=-1)


def ycbcr_to_rgb(ycc: np.ndarray) -> np.ndarray:
    ycc = np.asarray(ycc, dtype=np.float64)
    y, cb, cr = ycc[..., 0], ycc[..., 1] - 0.5, ycc[..., 2] - 0.5
    r = y + 1.402 * cr
    g = y - 0.344136 * cb - 0.714136 * cr
    b = y + 1.772 * cb
    return np.stack([r, g, b], axis=-1)


def to_luminance(lf: LightField4D) -> LightField4D:
    """Return the Y channel of ``lf``; luminance input is returned unchanged."""
    if lf.color_space == "y":
        return lf
    y = lf.data.astype(np.float64) @ _BT601_Y
    y = np.clip(y, 0.0, 1.0)
    return LightField4D(y[..., None].astype(lf.data.dtype), color_space="y")


def extract_slices(lf: LightField4D) -> list[LightFieldSlice]:
    """Split ``lf`` into its 3D slices.

    Returns ``A_t`` slices ``L(x, y, s)`` followed by ``A_s`` slices
    ``L(y, x, t)``; the latter have their spatial axes swapped so that the
    sheared axis is always the first one.
    """
    if lf.data.shape[-1] != 1:
        raise LightFieldError("extract_slices expects a luminance light field")
    out = []
    for t in range(lf.angular_t):
        out.append(LightFieldSlice(lf.data[:, :, :, t, :], axis="s", index=t))
    for s in range(lf.angular_s):
        out.append(LightFieldSlice(np.transpose(lf.data[:, :, s, :, :], (1, 0, 2, 3)), axis="t", index=s))
    return out


def assemble_slices(slices: list[LightFieldSlice], axis: str = "s") -> LightField4D:
    """Inverse of :func:`extract_slices` for the slices along ``axis``."""
    chosen = sorted((sl for sl in slices if sl.axis == axis), key=lambda sl: sl.index)
    if not chosen:
        raise LightFieldError(f"no slices along axis {axis!r}")
    if axis == "s":
        data = np.stack([sl.data for sl in chosen], axis=3)
    else:
        data = np.stack([np.transpose(sl.data, (1, 0, 2, 3)) for sl in chosen], axis=2)
    return LightField4D(data, color_space="y")


def extract_epi(sl: LightFieldSlice, y: int) -> np.ndarray:
    """Epipolar plane image ``E(x, s)`` of row ``y``, shape ``(W, A)``."""
    if not 0 <= y < sl.height:
        raise IndexError(f"row {y} out of range for slice of height {sl.height}")
    return sl.data[:, y, :, 0]
