"""Paired-dataset ingestion: image codecs, bilinear resize, scan and split.

Datasets live under `<root>/<raw_dir>/` and `<root>/<ref_dir>/` with files
paired by filename stem. An optional `<root>/manifest.json` of the form
{"pairs": [{"id", "raw", "ref"}], "split_seed": int} overrides stem pairing
for layouts that do not follow it.

Image values cross this boundary as (1, 3, H, W) float32 tensors in [0, 1];
8-bit files map x -> x / 255 on decode, and encode clamps to [0, 1] before
rounding back to 8 bits. PPM (P6, maxval 255) is decoded and encoded here
byte-exactly; PNG and JPEG go through Pillow when it is installed.
"""

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .ops import ShapeMismatchError


class ImageFormatError(ValueError):
    """Undecodable or unsupported image payload."""

    def __init__(self, message: str, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)


class DatasetError(ValueError):
    pass


class EmptyDatasetError(DatasetError):
    pass


# ---------------------------------------------------------------------------
# codecs

_PPM_TOKEN = re.compile(rb"(\S+)")


def _ppm_tokens(data: bytes, count: int):
    """First `count` header tokens after the magic, skipping #-comments.

    Returns (tokens, offset just past the single whitespace after the last one).
    """
    tokens = []
    pos = 2  # past "P6"
    while len(tokens) < count:
        if pos >= len(data):
            raise ImageFormatError("truncated header", offset=pos)
        c = data[pos : pos + 1]
        if c == b"#":
            nl = data.find(b"\n", pos)
            if nl == -1:
                raise ImageFormatError("unterminated comment", offset=pos)
            pos = nl + 1
        elif c.isspace():
            pos += 1
        else:
            m = _PPM_TOKEN.match(data, pos)
            tokens.append(m.group(1))
            pos = m.end()
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise ImageFormatError("missing whitespace after maxval", offset=pos)
    return tokens, pos + 1


def decode_ppm(data: bytes) -> np.ndarray:
    if data[:2] != b"P6":
        raise ImageFormatError(f"not a P6 file: magic {data[:2]!r}", offset=0)
    tokens, pos = _ppm_tokens(data, 3)
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise ImageFormatError(f"non-numeric header fields {tokens}", offset=2) from None
    if width < 1 or height < 1:
        raise ImageFormatError(f"bad dimensions {width} x {height}", offset=2)
    if maxval != 255:
        raise ImageFormatError(f"only maxval 255 is supported, got {maxval}", offset=2)
    need = width * height * 3
    payload = data[pos : pos + need]
    if len(payload) < need:
        raise ImageFormatError(
            f"pixel payload short by {need - len(payload)} bytes", offset=pos + len(payload)
        )
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
    return np.ascontiguousarray(pixels.transpose(2, 0, 1)[None].astype(np.float32) / 255.0)


def encode_ppm(tensor: np.ndarray) -> bytes:
    pixels = _to_uint8(tensor)
    h, w = pixels.shape[:2]
    return b"P6\n%d %d\n255\n" % (w, h) + pixels.tobytes()


def _to_uint8(tensor: np.ndarray) -> np.ndarray:
    if tensor.ndim != 4 or tensor.shape[0] != 1 or tensor.shape[1] != 3:
        raise ShapeMismatchError("encodable tensor", "(1, 3, H, W)", tensor.shape)
    clamped = np.clip(tensor[0], 0.0, 1.0)
    return np.rint(clamped * 255.0).astype(np.uint8).transpose(1, 2, 0)


def decode_image(data: bytes) -> np.ndarray:
    """Sniff the container and decode to a (1, 3, H, W) tensor in [0, 1]."""
    if data[:2] == b"P6":
        return decode_ppm(data)
    if data[:8] == b"\x89PNG\r\n\x1a\n" or data[:2] == b"\xff\xd8":
        try:
            import io

            from PIL import Image
        except ImportError:
            raise ImageFormatError("PNG/JPEG support needs Pillow installed") from None
        try:
            with Image.open(io.BytesIO(data)) as im:
                rgb = np.asarray(im.convert("RGB"), dtype=np.uint8)
        except Exception as exc:
            raise ImageFormatError(f"undecodable image: {exc}") from None
        return np.ascontiguousarray(rgb.transpose(2, 0, 1)[None].astype(np.float32) / 255.0)
    raise ImageFormatError(f"unsupported format (magic {data[:8]!r})", offset=0)


def encode_image(tensor: np.ndarray, format: str) -> bytes:
    fmt = format.lower().lstrip(".")
    if fmt == "ppm":
        return encode_ppm(tensor)
    if fmt in ("png", "jpg", "jpeg"):
        try:
            import io

            from PIL import Image
        except ImportError:
            raise ImageFormatError("PNG/JPEG support needs Pillow installed") from None
        buf = io.BytesIO()
        Image.fromarray(_to_uint8(tensor)).save(buf, format="PNG" if fmt == "png" else "JPEG")
        return buf.getvalue()
    raise ImageFormatError(f"unsupported output format {format!r}")


def read_image(path) -> np.ndarray:
    return decode_image(Path(path).read_bytes())


def write_image(path, tensor: np.ndarray) -> None:
    path = Path(path)
    path.write_bytes(encode_image(tensor, path.suffix or "ppm"))


# ---------------------------------------------------------------------------
# resize


def resize_bilinear(tensor: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    """Bilinear resample with half-pixel centers; same-size calls are exact."""
    if tensor.ndim != 4:
        raise ShapeMismatchError("resize input", "(N, C, H, W)", tensor.shape)
    if target_h < 1 or target_w < 1:
        raise ValueError(f"target dims must be positive, got {target_h} x {target_w}")
    n, c, h, w = tensor.shape
    if (h, w) == (target_h, target_w):
        return tensor.copy()

    def axis_coords(src, dst):
        s = (np.arange(dst, dtype=np.float64) + 0.5) * (src / dst) - 0.5
        i0 = np.floor(s).astype(np.int64)
        frac = s - i0
        i0c = np.clip(i0, 0, src - 1)
        i1c = np.clip(i0 + 1, 0, src - 1)
        return i0c, i1c, frac.clip(0.0, 1.0)

    y0, y1, fy = axis_coords(h, target_h)
    x0, x1, fx = axis_coords(w, target_w)
    fy = fy[:, None]
    fx = fx[None, :]
    v00 = tensor[:, :, y0[:, None], x0[None, :]]
    v01 = tensor[:, :, y0[:, None], x1[None, :]]
    v10 = tensor[:, :, y1[:, None], x0[None, :]]
    v11 = tensor[:, :, y1[:, None], x1[None, :]]
    top = v00 * (1.0 - fx) + v01 * fx
    bot = v10 * (1.0 - fx) + v11 * fx
    out = top * (1.0 - fy) + bot * fy
    return out.astype(tensor.dtype, copy=False)


# ---------------------------------------------------------------------------
# dataset scan / split

_EXT_RANK = {".png": 0, ".ppm": 1, ".jpg": 2, ".jpeg": 3}


@dataclass
class PairedSample:
    id: str
    raw: np.ndarray
    reference: np.ndarray


@dataclass
class DatasetManifest:
    root: Path
    pairs: dict  # id -> {"raw": Path, "ref": Path}
    warnings: list = field(default_factory=list)
    assignments: dict = field(default_factory=dict)  # id -> "train" | "val" | "test"
    resize_target: tuple = (256, 256)
    split_seed: int = None  # set by split(); manifest.json may pre-seed it

    @property
    def ids(self) -> list:
        return sorted(self.pairs)

    def split_ids(self, which: str) -> list:
        return [i for i in self.ids if self.assignments.get(i) == which]


def _scan_side(directory: Path, warnings: list) -> dict:
    by_stem = {}
    for p in sorted(directory.iterdir()):
        rank = _EXT_RANK.get(p.suffix.lower())
        if rank is None or not p.is_file():
            continue
        prev = by_stem.get(p.stem)
        if prev is None:
            by_stem[p.stem] = p
        else:
            keep, drop = sorted((prev, p), key=lambda q: _EXT_RANK[q.suffix.lower()])
            by_stem[p.stem] = keep
            warnings.append(f"duplicate stem {p.stem!r}: using {keep.name}, ignoring {drop.name}")
    return by_stem


def scan_dataset(root, raw_dir: str = "raw", ref_dir: str = "ref") -> DatasetManifest:
    """Pair files by stem across the raw and reference directories.

    Unmatched files become warnings; an empty intersection is an error. A
    manifest.json at the root takes precedence over directory scanning.
    """
    root = Path(root)
    manifest_path = root / "manifest.json"
    if manifest_path.is_file():
        return _manifest_from_json(root, manifest_path)
    raw_path = root / raw_dir
    ref_path = root / ref_dir
    for side, p in (("raw", raw_path), ("reference", ref_path)):
        if not p.is_dir():
            raise DatasetError(f"{side} directory missing: {p}")
    warnings = []
    raw_files = _scan_side(raw_path, warnings)
    ref_files = _scan_side(ref_path, warnings)
    ids = sorted(set(raw_files) & set(ref_files))
    for stem in sorted(set(raw_files) - set(ref_files)):
        warnings.append(f"raw file {raw_files[stem].name!r} has no reference counterpart")
    for stem in sorted(set(ref_files) - set(raw_files)):
        warnings.append(f"reference file {ref_files[stem].name!r} has no raw counterpart")
    if not ids:
        raise EmptyDatasetError(f"empty intersection: no shared stems under {root}")
    pairs = {i: {"raw": raw_files[i], "ref": ref_files[i]} for i in ids}
    return DatasetManifest(root=root, pairs=pairs, warnings=warnings)


def _manifest_from_json(root: Path, manifest_path: Path) -> DatasetManifest:
    spec = json.loads(manifest_path.read_text())
    pairs = {}
    for entry in spec.get("pairs", []):
        pid = entry["id"]
        if pid in pairs:
            raise DatasetError(f"manifest.json lists id {pid!r} twice")
        pairs[pid] = {"raw": root / entry["raw"], "ref": root / entry["ref"]}
    if not pairs:
        raise EmptyDatasetError(f"manifest.json at {root} lists no pairs")
    missing = [str(p[s]) for p in pairs.values() for s in ("raw", "ref") if not p[s].is_file()]
    if missing:
        raise DatasetError(f"manifest.json points at missing files: {missing}")
    return DatasetManifest(
        root=root, pairs=pairs, split_seed=int(spec.get("split_seed", 0))
    )


def split(manifest: DatasetManifest, train_n: int, val_n: int, seed: int) -> DatasetManifest:
    """Seeded shuffle, then first train_n ids train, next val_n val, rest test."""
    ids = manifest.ids
    if train_n < 0 or val_n < 0 or train_n + val_n > len(ids):
        raise DatasetError(
            f"split counts {train_n} + {val_n} exceed population {len(ids)}"
        )
    order = [ids[i] for i in np.random.default_rng(seed).permutation(len(ids))]
    assignments = {}
    for pos, pid in enumerate(order):
        if pos < train_n:
            assignments[pid] = "train"
        elif pos < train_n + val_n:
            assignments[pid] = "val"
        else:
            assignments[pid] = "test"
    return replace(manifest, assignments=assignments, split_seed=seed)


def load_pair(manifest: DatasetManifest, pair_id: str) -> PairedSample:
    entry = manifest.pairs[pair_id]
    raw = read_image(entry["raw"])
    ref = read_image(entry["ref"])
    if manifest.resize_target is not None:
        th, tw = manifest.resize_target
        raw = resize_bilinear(raw, th, tw)
        ref = resize_bilinear(ref, th, tw)
    if raw.shape != ref.shape:
        raise DatasetError(
            f"pair {pair_id!r}: raw {raw.shape} and reference {ref.shape} disagree after resize"
        )
    return PairedSample(id=pair_id, raw=raw, reference=ref)
