"""Synthetic scenes: library signatures mixed through smoothed block
abundance maps, with no pure pixels and Gaussian noise at a set SNR."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from importlib import resources
from typing import Optional

import numpy as np
from scipy.ndimage import uniform_filter

from .core import AbundanceMatrix, HsiCube, SignatureMatrix, forward_model

SNR_LEVELS = (15.0, 20.0, 25.0, 30.0, 35.0)
MONTE_CARLO_RUNS = 20
STANDIN_LIBRARY = "standin_library.csv"

USGS_NOTE = """\
The USGS spectral library (splib07) is distributed by the U.S. Geological Survey
at https://www.usgs.gov/labs/spectroscopy-lab/science/spectral-library . It is not
bundled here. To use it, resample the chosen spectra to the sensor wavelengths and
write a CSV whose first column is wavelength in micrometers and whose remaining
columns are reflectance spectra, one per material, with a header row of names."""


class LibraryParseError(ValueError):
    pass


@dataclass(frozen=True)
class SynthSpec:
    width: int = 64
    height: int = 64
    c: int = 6
    block_size: int = 8
    filter_size: int = 7
    purity_threshold: float = 0.8
    snr_db: float = 25.0
    seed: int = 0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image must be at least 1x1, got {self.width}x{self.height}")
        if self.c < 1:
            raise ValueError(f"need at least one endmember, got c={self.c}")
        if self.filter_size < 1 or self.filter_size % 2 == 0:
            raise ValueError(f"filter_size must be odd and >= 1, got {self.filter_size}")
        if not 0 < self.purity_threshold <= 1:
            raise ValueError(f"purity_threshold must lie in (0, 1], got {self.purity_threshold}")
        if self.block_size < 1:
            raise ValueError(f"block_size must be >= 1, got {self.block_size}")

    def to_dict(self) -> dict:
        d = asdict(self)
        if math.isinf(d["snr_db"]):
            d["snr_db"] = "inf"
        return d


@dataclass(frozen=True, eq=False)
class Scene:
    noisy: HsiCube
    clean: HsiCube
    A_true: SignatureMatrix
    S_true: AbundanceMatrix
    spec: SynthSpec
    library_columns: tuple


def block_abundances(spec: SynthSpec, rng) -> np.ndarray:
    """Piecewise-constant one-hot abundance planes (c x N), one endmember per block."""
    if spec.block_size > spec.width or spec.block_size > spec.height:
        raise ValueError(f"block_size {spec.block_size} exceeds the "
                         f"{spec.width}x{spec.height} grid")
    nby = -(-spec.height // spec.block_size)
    nbx = -(-spec.width // spec.block_size)
    blocks = rng.integers(spec.c, size=(nby, nbx))
    grid = np.kron(blocks, np.ones((spec.block_size, spec.block_size), dtype=blocks.dtype))
    grid = grid[:spec.height, :spec.width]
    S = np.zeros((spec.c, spec.height * spec.width))
    S[grid.ravel(), np.arange(grid.size)] = 1.0
    return S


def smooth_and_limit(S_blocks, spec: SynthSpec) -> np.ndarray:
    """Mean-filter each abundance plane, renormalize, and replace overly pure pixels."""
    c = spec.c
    planes = S_blocks.reshape(c, spec.height, spec.width)
    if spec.filter_size > 1:
        planes = np.stack([uniform_filter(p, size=spec.filter_size, mode="mirror")
                           for p in planes])
    S = np.clip(planes.reshape(c, -1), 0.0, None)
    S = S / S.sum(axis=0)
    pure = S.max(axis=0) > spec.purity_threshold
    S[:, pure] = 1.0 / c
    return S


def add_noise(cube: HsiCube, snr_db: float, seed=0) -> HsiCube:
    """Add white Gaussian noise with ``10 log10(||Y||^2 / ||noise||^2) = snr_db``.

    The noise is rescaled to hit the target exactly, then reflectances are
    clamped at zero. ``snr_db = inf`` returns the cube unchanged.
    """
    if math.isinf(snr_db) and snr_db > 0:
        return cube
    Y = cube.data
    power = float(np.sum(Y * Y))
    if power == 0:
        raise ValueError("cannot set an SNR for an all-zero cube")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    noise = rng.standard_normal(Y.shape)
    noise *= math.sqrt(power / 10 ** (snr_db / 10) / float(np.sum(noise * noise)))
    return cube.with_data(np.maximum(Y + noise, 0.0))


def generate_scene(spec: SynthSpec, library: SignatureMatrix) -> Scene:
    """Build a noisy/clean scene pair with its true signatures and abundances."""
    M = library.n_endmembers
    if spec.c > M:
        raise ValueError(f"library has {M} spectra, need c={spec.c}")
    scene_seq, noise_seq = np.random.SeedSequence(spec.seed).spawn(2)
    rng = np.random.default_rng(scene_seq)
    cols = tuple(int(j) for j in rng.choice(M, size=spec.c, replace=False))
    A_true = library.select(cols)
    S = smooth_and_limit(block_abundances(spec, rng), spec)
    S_true = AbundanceMatrix(S)
    clean = HsiCube(forward_model(A_true, S_true), spec.width, spec.height,
                    wavelengths=library.wavelengths)
    noisy = add_noise(clean, spec.snr_db, np.random.default_rng(noise_seq))
    return Scene(noisy, clean, A_true, S_true, spec, cols)


def monte_carlo_seed(seed: int, run: int, level: int = 0) -> int:
    """Per-run seed derived from the base seed and the (run, level) indices."""
    seq = np.random.SeedSequence(seed, spawn_key=(level, run))
    return int(seq.generate_state(1, dtype=np.uint32)[0])


# ---------------------------------------------------------------------------
# spectral libraries

def load_library(path) -> SignatureMatrix:
    """Read a spectral library CSV.

    Layout: a header row (first cell labels the wavelength column, then one
    material name per column) followed by one row per band with wavelength in
    micrometers and reflectances.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [(i + 1, r) for i, r in enumerate(rows) if any(cell.strip() for cell in r)]
    if not rows:
        raise LibraryParseError(f"{path}: empty file")
    header_line, header = rows[0]
    names = [h.strip() for h in header[1:]]
    if not names:
        raise LibraryParseError(f"{path}: line {header_line}: header names no materials")
    if len(rows) == 1:
        raise LibraryParseError(f"{path}: no spectra")
    wl, data = [], []
    for lineno, r in rows[1:]:
        if len(r) != len(header):
            raise LibraryParseError(f"{path}: line {lineno}: expected {len(header)} fields, "
                                    f"got {len(r)}")
        try:
            values = [float(x) for x in r]
        except ValueError as exc:
            raise LibraryParseError(f"{path}: line {lineno}: {exc}") from None
        wl.append(values[0])
        data.append(values[1:])
    data = np.array(data)
    if np.any(~np.isfinite(data)) or np.any(data < 0):
        raise LibraryParseError(f"{path}: reflectances must be finite and nonnegative")
    try:
        return SignatureMatrix(data, names=names, wavelengths=np.array(wl))
    except ValueError as exc:
        raise LibraryParseError(f"{path}: {exc}") from None


def save_library(path, library: SignatureMatrix) -> None:
    names = library.names or [f"material_{j}" for j in range(library.n_endmembers)]
    wl = library.wavelengths if library.wavelengths is not None else np.arange(library.bands, dtype=float)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["wavelength_um", *names])
        for w, row in zip(wl, library.data):
            writer.writerow([f"{w:.6f}", *(f"{x:.6f}" for x in row)])


def standin_library() -> SignatureMatrix:
    """The packaged 188-band, 12-material stand-in library."""
    with resources.as_file(resources.files("cmtunmix") / "data" / STANDIN_LIBRARY) as p:
        return load_library(p)


def make_standin_library(seed: int = 7) -> SignatureMatrix:
    """Generate smooth mineral-like spectra on AVIRIS-like retained bands.

    Each spectrum is a sloped continuum multiplied by a handful of Gaussian
    absorption features. This is what ``data/standin_library.csv`` holds
    (rounded to six decimals).
    """
    from .io import CUPRITE, retained_indices

    wl_all = np.linspace(0.4, 2.5, 224)
    wl = wl_all[retained_indices(CUPRITE, 224)]
    rng = np.random.default_rng(seed)
    spectra, names = [], []
    for j in range(12):
        level = rng.uniform(0.15, 0.55)
        slope = rng.uniform(-0.15, 0.25)
        edge = rng.uniform(0.5, 1.2)
        cont = level + slope * (wl - 0.4) / 2.1 + rng.uniform(0.0, 0.2) / (1 + np.exp(-(wl - edge) / 0.05))
        absorb = np.ones_like(wl)
        for _ in range(rng.integers(2, 6)):
            centre = rng.uniform(0.45, 2.45)
            width = rng.uniform(0.02, 0.15)
            depth = rng.uniform(0.1, 0.6)
            absorb *= 1 - depth * np.exp(-0.5 * ((wl - centre) / width) ** 2)
        spectra.append(np.clip(cont * absorb, 0.01, 0.99))
        names.append(f"synthetic_{j + 1:02d}")
    data = np.round(np.array(spectra).T, 6)
    return SignatureMatrix(data, names=names, wavelengths=np.round(wl, 6))
