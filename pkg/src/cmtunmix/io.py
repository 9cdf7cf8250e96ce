"""Reading and writing: ENVI rasters, water-band presets, a portable binary
matrix format, PGM images, and scene bundles."""
from __future__ import annotations

import hashlib
import json
import os
import re
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import AbundanceMatrix, HsiCube, SignatureMatrix


class EnviParseError(ValueError):
    pass


class MatrixFormatError(ValueError):
    pass


class PresetError(ValueError):
    pass


# ---------------------------------------------------------------------------
# band-removal presets (1-based band numbers)

def _span(a, b):
    return list(range(a, b + 1))


@dataclass(frozen=True)
class BandRemovalPreset:
    name: str
    n_original: int
    removed: tuple

    @property
    def n_retained(self) -> int:
        return self.n_original - len(self.removed)


CUPRITE = BandRemovalPreset("cuprite", 224, tuple([1, 2] + _span(104, 113) + _span(148, 167) + _span(221, 224)))
URBAN = BandRemovalPreset("urban", 210, tuple(_span(1, 4) + [76, 87] + _span(101, 111) + _span(136, 153) + _span(198, 210)))
PRESETS = {"cuprite": CUPRITE, "urban": URBAN, "none": None}


def retained_indices(preset, n_bands: int) -> np.ndarray:
    """0-based indices of bands kept by ``preset`` for an ``n_bands`` cube.

    This is the one place where 1-based band numbers become 0-based indices.
    """
    if preset is None:
        return np.arange(n_bands)
    if n_bands != preset.n_original:
        raise PresetError(f"preset {preset.name!r} expects {preset.n_original} bands, "
                          f"cube has {n_bands}")
    removed0 = np.asarray(preset.removed, dtype=np.intp) - 1
    keep = np.ones(n_bands, dtype=bool)
    keep[removed0] = False
    return np.flatnonzero(keep)


def apply_band_removal(cube: HsiCube, preset) -> HsiCube:
    """Drop the preset's bands; ``band_mask`` records the kept original 0-based indices."""
    if isinstance(preset, str):
        if preset not in PRESETS:
            raise PresetError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        preset = PRESETS[preset]
    if preset is None:
        return cube
    keep = retained_indices(preset, cube.bands)
    base = cube.band_mask
    mask = [base[i] for i in keep] if base is not None else keep.tolist()
    wl = cube.wavelengths[keep] if cube.wavelengths is not None else None
    return cube.with_data(cube.data[keep], wavelengths=wl, band_mask=mask)


# ---------------------------------------------------------------------------
# ENVI

_DTYPES = {4: np.float32, 12: np.uint16}


def parse_envi_header(path) -> dict:
    """Parse an ENVI ``.hdr`` file into a dict of lower-cased keys to strings
    (brace-delimited values become lists of strings)."""
    text = Path(path).read_text()
    if not text.lstrip().startswith("ENVI"):
        raise EnviParseError(f"{path}: missing 'ENVI' signature on the first line")
    header = {}
    body = text.lstrip()[4:]
    for m in re.finditer(r"^\s*([^=\n]+?)\s*=\s*(\{[^}]*\}|[^\n]*)", body, re.M):
        key, value = m.group(1).strip().lower(), m.group(2).strip()
        if value.startswith("{"):
            value = [v.strip() for v in value[1:-1].split(",") if v.strip()]
        header[key] = value
    return header


def _find_binary(header_path: Path, header: dict) -> Path:
    if "data file" in header:
        return header_path.parent / header["data file"]
    stem = header_path.with_suffix("")
    for cand in (stem, stem.with_suffix(".img"), stem.with_suffix(".dat"),
                 stem.with_suffix(".raw"), stem.with_suffix(".bin")):
        if cand.exists():
            return cand
    raise EnviParseError(f"{header_path}: no binary file found next to the header")


def read_envi(header_path, reflectance_scale=None) -> HsiCube:
    """Load an ENVI raster into an ``L x N`` cube (pixels row-major over the image).

    Supports bsq/bil/bip interleave, float32 (type 4) and uint16 (type 12),
    either byte order. uint16 values are divided by ``reflectance_scale`` or,
    when not given, by the header's ``reflectance scale factor`` if present.
    """
    header_path = Path(header_path)
    header = parse_envi_header(header_path)
    for key in ("samples", "lines", "bands", "interleave", "data type", "byte order"):
        if key not in header:
            raise EnviParseError(f"{header_path}: missing header key {key!r}")
    try:
        samples, lines, bands = (int(header[k]) for k in ("samples", "lines", "bands"))
        dtype_code = int(header["data type"])
        byte_order = int(header["byte order"])
        offset = int(header.get("header offset", 0))
    except (TypeError, ValueError) as exc:
        raise EnviParseError(f"{header_path}: malformed numeric header field ({exc})") from None
    if dtype_code not in _DTYPES:
        raise EnviParseError(f"{header_path}: unsupported data type {dtype_code} "
                             f"(supported: 4 float32, 12 uint16)")
    interleave = header["interleave"].strip().lower()
    if interleave not in ("bsq", "bil", "bip"):
        raise EnviParseError(f"{header_path}: unsupported interleave {interleave!r}")
    dtype = np.dtype(_DTYPES[dtype_code]).newbyteorder(">" if byte_order == 1 else "<")

    raw = _find_binary(header_path, header).read_bytes()[offset:]
    expected = samples * lines * bands * dtype.itemsize
    if len(raw) != expected:
        raise EnviParseError(f"{header_path}: binary holds {len(raw)} bytes, header implies {expected}")
    arr = np.frombuffer(raw, dtype=dtype)
    if interleave == "bsq":
        cube = arr.reshape(bands, lines, samples).transpose(1, 2, 0)
    elif interleave == "bil":
        cube = arr.reshape(lines, bands, samples).transpose(0, 2, 1)
    else:
        cube = arr.reshape(lines, samples, bands)
    data = cube.astype(np.float64)

    if dtype_code == 12:
        scale = reflectance_scale
        if scale is None and "reflectance scale factor" in header:
            scale = float(header["reflectance scale factor"])
        if scale:
            data = data / scale

    wavelengths = None
    if isinstance(header.get("wavelength"), list) and len(header["wavelength"]) == bands:
        wavelengths = np.array([float(w) for w in header["wavelength"]])
        units = str(header.get("wavelength units", "")).lower()
        if units.startswith("nano") or (not units and wavelengths.max() > 100):
            wavelengths = wavelengths / 1000.0
        if np.any(np.diff(wavelengths) <= 0):
            wavelengths = None
    return HsiCube.from_image(data, wavelengths=wavelengths)


def write_envi(header_path, cube: HsiCube, interleave: str = "bsq") -> None:
    """Write a cube as float32 little-endian ENVI (used for fixtures and exports)."""
    header_path = Path(header_path)
    img = cube.image().astype("<f4")
    if interleave == "bsq":
        arr = img.transpose(2, 0, 1)
    elif interleave == "bil":
        arr = img.transpose(0, 2, 1)
    elif interleave == "bip":
        arr = img
    else:
        raise ValueError(f"unsupported interleave {interleave!r}")
    header_path.with_suffix(".img").write_bytes(np.ascontiguousarray(arr).tobytes())
    lines = ["ENVI", f"samples = {cube.width}", f"lines = {cube.height}",
             f"bands = {cube.bands}", "header offset = 0", "data type = 4",
             f"interleave = {interleave}", "byte order = 0"]
    if cube.wavelengths is not None:
        lines.append("wavelength units = Micrometers")
        lines.append("wavelength = {" + ", ".join(f"{w:.6f}" for w in cube.wavelengths) + "}")
    header_path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# binary matrix format: magic, uint64 rows, uint64 cols, float64 row-major, all little-endian

MATRIX_MAGIC = b"CMTUMAT1"
_MATRIX_HEADER = struct.Struct("<8sQQ")


def matrix_bytes(matrix) -> bytes:
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    return _MATRIX_HEADER.pack(MATRIX_MAGIC, m.shape[0], m.shape[1]) + np.ascontiguousarray(m, dtype="<f8").tobytes()


def write_matrix(path, matrix) -> None:
    atomic_write(path, matrix_bytes(matrix))


def read_matrix(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if len(blob) < _MATRIX_HEADER.size:
        raise MatrixFormatError(f"{path}: file too short for a matrix header")
    magic, rows, cols = _MATRIX_HEADER.unpack_from(blob)
    if magic != MATRIX_MAGIC:
        raise MatrixFormatError(f"{path}: bad magic {magic!r}")
    need = _MATRIX_HEADER.size + rows * cols * 8
    if len(blob) != need:
        raise MatrixFormatError(f"{path}: expected {need} bytes for {rows}x{cols}, found {len(blob)}")
    return np.frombuffer(blob, dtype="<f8", offset=_MATRIX_HEADER.size).reshape(rows, cols).astype(np.float64)


# ---------------------------------------------------------------------------
# images, JSON, atomic writes

def atomic_write(path, payload) -> None:
    """Write bytes or text to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = payload.encode("utf-8") if isinstance(payload, str) else payload
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj) -> None:
    atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_pgm(path, image, vmin=None, vmax=None) -> None:
    """8-bit binary PGM of a 2-D array linearly scaled from [vmin, vmax] to 0..255."""
    img = np.asarray(image, dtype=np.float64)
    lo = img.min() if vmin is None else vmin
    hi = img.max() if vmax is None else vmax
    scaled = np.zeros_like(img) if hi <= lo else (img - lo) / (hi - lo)
    pix = np.clip(np.rint(scaled * 255), 0, 255).astype(np.uint8)
    h, w = pix.shape
    atomic_write(path, f"P5\n{w} {h}\n255\n".encode("ascii") + pix.tobytes())


def read_pgm(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", blob)
    if not m:
        raise ValueError(f"{path}: not a binary PGM")
    w, h = int(m.group(1)), int(m.group(2))
    return np.frombuffer(blob, dtype=np.uint8, offset=m.end()).reshape(h, w)


def write_label_map(stem, labels, width, height, n_clusters=None) -> None:
    """Export crisp labels as ``<stem>.pgm`` (ids scaled to 0..255) and ``<stem>.csv`` (grid)."""
    labels = np.asarray(labels, dtype=np.intp).reshape(height, width)
    top = (n_clusters - 1) if n_clusters else max(int(labels.max()), 1)
    write_pgm(f"{stem}.pgm", labels, vmin=0, vmax=max(top, 1))
    text = "\n".join(",".join(str(int(v)) for v in row) for row in labels) + "\n"
    atomic_write(f"{stem}.csv", text)


def write_abundance_maps(directory, S, width, height, prefix="abundance") -> list:
    """One PGM per endmember (0..1 mapped to 0..255)."""
    S = S.data if isinstance(S, AbundanceMatrix) else np.asarray(S)
    paths = []
    for j, row in enumerate(S):
        p = Path(directory) / f"{prefix}_{j:02d}.pgm"
        write_pgm(p, row.reshape(height, width), vmin=0.0, vmax=1.0)
        paths.append(p)
    return paths


# ---------------------------------------------------------------------------
# scene bundles

def write_scene_bundle(directory, scene, extra=None) -> dict:
    """Write Y (noisy), Y_clean, A_true, S_true matrices plus ``manifest.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = {"Y": scene.noisy.data, "Y_clean": scene.clean.data,
             "A_true": scene.A_true.data, "S_true": scene.S_true.data}
    for name, m in files.items():
        write_matrix(d / f"{name}.mat", m)
    manifest = {
        "kind": "scene",
        "width": scene.noisy.width,
        "height": scene.noisy.height,
        "bands": scene.noisy.bands,
        "spec": scene.spec.to_dict(),
        "seed": scene.spec.seed,
        "library_columns": list(scene.library_columns),
        "signature_names": list(scene.A_true.names) if scene.A_true.names else None,
        "wavelengths": None if scene.noisy.wavelengths is None else [float(w) for w in scene.noisy.wavelengths],
        "files": {name: f"{name}.mat" for name in files},
        "digests": {name: sha256_file(d / f"{name}.mat") for name in files},
    }
    if extra:
        manifest.update(extra)
    write_json(d / "manifest.json", manifest)
    return manifest


def read_scene_bundle(directory):
    """Returns ``(cube, A_true or None, S_true or None, manifest)``; ``cube`` is the noisy Y."""
    d = Path(directory)
    mpath = d / "manifest.json"
    if not mpath.exists():
        raise FileNotFoundError(f"{d}: no manifest.json")
    manifest = json.loads(mpath.read_text())
    wl = manifest.get("wavelengths")
    cube = HsiCube(read_matrix(d / "Y.mat"), manifest["width"], manifest["height"],
                   wavelengths=None if wl is None else np.array(wl))
    A_true = S_true = None
    if (d / "A_true.mat").exists():
        A_true = SignatureMatrix(read_matrix(d / "A_true.mat"), names=manifest.get("signature_names"))
    if (d / "S_true.mat").exists():
        S_true = AbundanceMatrix(read_matrix(d / "S_true.mat"))
    return cube, A_true, S_true, manifest


def read_clean_cube(directory):
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    p = d / "Y_clean.mat"
    if not p.exists():
        return None
    return HsiCube(read_matrix(p), manifest["width"], manifest["height"])
