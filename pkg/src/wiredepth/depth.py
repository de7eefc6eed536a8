"""Fixed-range normalized disparity and the 16-bit PNG depth codec."""

from __future__ import annotations

import enum
import io
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

PNG_MAX_CODE = 65535
# code 0 marks invalid pixels; valid disparity spans codes 1..65535
PNG_LEVELS = PNG_MAX_CODE - 1
QUANT_BOUND = 1.0 / (2 * PNG_LEVELS)


class DepthRangeError(ValueError):
    def __init__(self, message: str, pixel: tuple[int, ...] | None = None):
        super().__init__(message)
        self.pixel = pixel


class DepthFormatError(ValueError):
    pass


class DepthSpace(str, enum.Enum):
    METRIC_DEPTH = "metric_depth"
    NORMALIZED_DISPARITY = "normalized_disparity"


@dataclass(frozen=True)
class DisparityConfig:
    z_near: float = 0.5
    z_far: float = 2.5

    def __post_init__(self):
        if not (0 < self.z_near < self.z_far):
            raise ValueError(f"need 0 < z_near < z_far, got {self.z_near}, {self.z_far}")

    def to_dict(self) -> dict:
        return {"z_near": self.z_near, "z_far": self.z_far}


@dataclass(frozen=True)
class DepthImage:
    values: np.ndarray
    validity: np.ndarray
    config: DisparityConfig
    space: DepthSpace

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def valid_values(self) -> np.ndarray:
        return self.values[self.validity]


def _first_bad(mask: np.ndarray) -> tuple[int, ...]:
    return tuple(int(i) for i in np.argwhere(mask)[0])


def depth_to_disparity_values(z, cfg: DisparityConfig):
    inv_near = 1.0 / cfg.z_near
    inv_far = 1.0 / cfg.z_far
    return (1.0 / z - inv_far) / (inv_near - inv_far)


def disparity_to_depth_values(y, cfg: DisparityConfig):
    inv_near = 1.0 / cfg.z_near
    inv_far = 1.0 / cfg.z_far
    return 1.0 / (y * (inv_near - inv_far) + inv_far)


def depth_to_disparity(z: DepthImage, cfg: DisparityConfig | None = None) -> DepthImage:
    cfg = cfg or z.config
    valid = np.asarray(z.validity, dtype=bool)
    vals = np.asarray(z.values, dtype=float)
    bad = valid & ~((vals >= cfg.z_near) & (vals <= cfg.z_far))
    if bad.any():
        px = _first_bad(bad)
        raise DepthRangeError(
            f"depth {vals[px]} at pixel {px} outside [{cfg.z_near}, {cfg.z_far}]", pixel=px
        )
    out = np.full(vals.shape, np.nan)
    y = depth_to_disparity_values(vals[valid], cfg)
    out[valid] = np.clip(y, 0.0, 1.0)
    return DepthImage(out, valid.copy(), cfg, DepthSpace.NORMALIZED_DISPARITY)


def disparity_to_depth(y: DepthImage, cfg: DisparityConfig | None = None) -> DepthImage:
    cfg = cfg or y.config
    valid = np.asarray(y.validity, dtype=bool)
    vals = np.asarray(y.values, dtype=float)
    bad = valid & ~((vals >= 0.0) & (vals <= 1.0))
    if bad.any():
        px = _first_bad(bad)
        raise DepthRangeError(f"disparity {vals[px]} at pixel {px} outside [0, 1]", pixel=px)
    out = np.full(vals.shape, np.nan)
    out[valid] = disparity_to_depth_values(vals[valid], cfg)
    return DepthImage(out, valid.copy(), cfg, DepthSpace.METRIC_DEPTH)


def metric_image(values: np.ndarray, validity: np.ndarray, cfg: DisparityConfig) -> DepthImage:
    return DepthImage(np.asarray(values, float), np.asarray(validity, bool), cfg, DepthSpace.METRIC_DEPTH)


def disparity_image(values: np.ndarray, validity: np.ndarray, cfg: DisparityConfig) -> DepthImage:
    return DepthImage(
        np.asarray(values, float), np.asarray(validity, bool), cfg, DepthSpace.NORMALIZED_DISPARITY
    )


# --- PNG codec ---------------------------------------------------------------


def disparity_to_codes(values: np.ndarray, validity: np.ndarray) -> np.ndarray:
    codes = np.zeros(values.shape, dtype=np.uint16)
    y = np.clip(values[validity], 0.0, 1.0)
    codes[validity] = (1 + np.rint(y * PNG_LEVELS)).astype(np.uint16)
    return codes


def codes_to_disparity(codes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    valid = codes > 0
    y = np.full(codes.shape, np.nan)
    y[valid] = (codes[valid].astype(float) - 1.0) / PNG_LEVELS
    return y, valid


def _png_header(data: bytes) -> tuple[int, int]:
    """(bit depth, colour type) from the IHDR chunk."""
    if data[:8] != b"\x89PNG\r\n\x1a\n" or data[12:16] != b"IHDR":
        raise DepthFormatError("not a PNG stream")
    bit_depth, colour_type = struct.unpack(">BB", data[24:26])
    return bit_depth, colour_type


def sidecar_dict(cfg: DisparityConfig, extra: dict | None = None) -> dict:
    doc = {"z_near": cfg.z_near, "z_far": cfg.z_far, "space": DepthSpace.NORMALIZED_DISPARITY.value}
    if extra:
        doc.update(extra)
    return doc


def encode_depth_png(img: DepthImage) -> tuple[bytes, str]:
    """Encode a disparity image; returns (PNG bytes, JSON sidecar text)."""
    if img.space is not DepthSpace.NORMALIZED_DISPARITY:
        raise DepthFormatError("only normalized disparity images can be encoded")
    codes = disparity_to_codes(np.asarray(img.values, float), np.asarray(img.validity, bool))
    buf = io.BytesIO()
    Image.fromarray(codes).save(buf, format="PNG")
    return buf.getvalue(), json.dumps(sidecar_dict(img.config), sort_keys=True)


def decode_depth_png(data: bytes, sidecar: str | dict | None) -> DepthImage:
    if sidecar is None:
        raise DepthFormatError("missing depth sidecar")
    doc = json.loads(sidecar) if isinstance(sidecar, str) else sidecar
    try:
        cfg = DisparityConfig(float(doc["z_near"]), float(doc["z_far"]))
        space = DepthSpace(doc.get("space", DepthSpace.NORMALIZED_DISPARITY.value))
    except (KeyError, TypeError, ValueError) as exc:
        raise DepthFormatError(f"bad depth sidecar: {exc}") from exc
    if space is not DepthSpace.NORMALIZED_DISPARITY:
        raise DepthFormatError(f"unsupported sidecar space {space.value}")
    bit_depth, colour = _png_header(data)
    if bit_depth != 16 or colour != 0:
        raise DepthFormatError(f"expected 16-bit grayscale PNG, got depth {bit_depth} colour type {colour}")
    codes = np.array(Image.open(io.BytesIO(data))).astype(np.uint16)
    y, valid = codes_to_disparity(codes)
    return DepthImage(y, valid, cfg, DepthSpace.NORMALIZED_DISPARITY)


def sidecar_path(png_path: Path) -> Path:
    return Path(png_path).with_suffix(".json")


def write_depth_png(path, img: DepthImage, extra: dict | None = None) -> tuple[Path, Path]:
    """Write ``path`` and its ``.json`` sidecar; ``extra`` keys go into the sidecar."""
    path = Path(path)
    data, side = encode_depth_png(img)
    path.write_bytes(data)
    side_path = sidecar_path(path)
    doc = json.loads(side)
    if extra:
        doc.update(extra)
    side_path.write_text(json.dumps(doc, sort_keys=True), encoding="utf-8")
    return path, side_path


def read_sidecar(path) -> dict:
    side = sidecar_path(Path(path))
    if not side.exists():
        raise DepthFormatError(f"missing sidecar {side}")
    try:
        return json.loads(side.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DepthFormatError(f"malformed sidecar {side}: {exc.msg}") from exc


def read_depth_png(path) -> DepthImage:
    return decode_depth_png(Path(path).read_bytes(), read_sidecar(path))


def encode_mask_png(mask: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(mask, dtype=bool)).save(buf, format="PNG")
    return buf.getvalue()


def decode_mask_png(data: bytes) -> np.ndarray:
    img = Image.open(io.BytesIO(data))
    return np.array(img.convert("L")) > 0


def write_mask_png(path, mask: np.ndarray) -> Path:
    path = Path(path)
    path.write_bytes(encode_mask_png(mask))
    return path


def read_mask_png(path) -> np.ndarray:
    return decode_mask_png(Path(path).read_bytes())
