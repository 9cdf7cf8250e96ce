"""Domain types and the linear mixing forward model.

All matrices are float64. Pixel-indexed matrices (``L x N`` cubes, ``c x N``
abundances) are stored Fortran-ordered so that a single pixel's column is
contiguous in memory.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

ASC_TOL = 1e-9


class ShapeError(ValueError):
    """Raised when matrix dimensions are incompatible."""


def _frozen(arr, order="F"):
    out = np.array(arr, dtype=np.float64, order=order, copy=True)
    out.setflags(write=False)
    return out


def _as_array(x):
    return x.data if hasattr(x, "data") and not isinstance(x, np.ndarray) else np.asarray(x, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class HsiCube:
    """Observed reflectance ``Y`` as an ``L x N`` band-by-pixel matrix.

    Pixel ``k`` sits at row ``k // width`` and column ``k % width`` of the
    scene (row-major over the image grid).
    """

    data: np.ndarray
    width: int
    height: int
    wavelengths: Optional[np.ndarray] = None
    band_mask: Optional[tuple] = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ShapeError(f"cube data must be 2-D (L x N), got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("cube data contains non-finite values")
        if int(self.width) * int(self.height) != data.shape[1]:
            raise ShapeError(
                f"width*height = {self.width}*{self.height} != N = {data.shape[1]}"
            )
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        if self.wavelengths is not None:
            wl = _frozen(np.ravel(self.wavelengths), order="C")
            if wl.shape[0] != data.shape[0]:
                raise ShapeError(f"{wl.shape[0]} wavelengths for {data.shape[0]} bands")
            if np.any(np.diff(wl) <= 0):
                raise ValueError("wavelengths must be strictly increasing")
            object.__setattr__(self, "wavelengths", wl)
        if self.band_mask is not None:
            mask = tuple(int(b) for b in self.band_mask)
            if len(mask) != data.shape[0]:
                raise ShapeError(f"band_mask has {len(mask)} entries for {data.shape[0]} bands")
            object.__setattr__(self, "band_mask", mask)

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def n_pixels(self) -> int:
        return self.data.shape[1]

    def with_data(self, data, **changes) -> "HsiCube":
        kw = dict(width=self.width, height=self.height,
                  wavelengths=self.wavelengths, band_mask=self.band_mask)
        kw.update(changes)
        return HsiCube(data, **kw)

    def image(self) -> np.ndarray:
        """Return the cube as a ``(height, width, L)`` array."""
        return self.data.T.reshape(self.height, self.width, self.bands)

    @classmethod
    def from_image(cls, image, **kw) -> "HsiCube":
        image = np.asarray(image, dtype=np.float64)
        h, w, L = image.shape
        return cls(image.reshape(h * w, L).T, width=w, height=h, **kw)


@dataclass(frozen=True, eq=False)
class SignatureMatrix:
    """Endmember spectra ``A`` (``L x c``), nonnegative."""

    data: np.ndarray
    names: Optional[tuple] = None
    wavelengths: Optional[np.ndarray] = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ShapeError(f"signature matrix must be 2-D, got shape {data.shape}")
        if self.wavelengths is not None:
            wl = _frozen(np.ravel(self.wavelengths), order="C")
            if wl.shape[0] != data.shape[0]:
                raise ShapeError(f"{wl.shape[0]} wavelengths for {data.shape[0]} bands")
            object.__setattr__(self, "wavelengths", wl)
        if not np.all(np.isfinite(data)):
            raise ValueError("signature matrix contains non-finite values")
        if np.any(data < 0):
            raise ValueError("signature matrix has negative entries")
        if data.shape[1] and np.any(~data.any(axis=0)):
            raise ValueError("signature matrix has an all-zero column")
        object.__setattr__(self, "data", _frozen(data))
        if self.names is not None:
            names = tuple(str(n) for n in self.names)
            if len(names) != data.shape[1]:
                raise ShapeError(f"{len(names)} names for {data.shape[1]} signatures")
            object.__setattr__(self, "names", names)

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def n_endmembers(self) -> int:
        return self.data.shape[1]

    def select(self, columns: Sequence[int]) -> "SignatureMatrix":
        columns = list(columns)
        names = None if self.names is None else [self.names[j] for j in columns]
        return SignatureMatrix(self.data[:, columns], names=names, wavelengths=self.wavelengths)


@dataclass(frozen=True, eq=False)
class AbundanceMatrix:
    """Fractional abundances ``S`` (``c x N``); columns lie on the simplex."""

    data: np.ndarray
    tol: float = field(default=ASC_TOL, repr=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ShapeError(f"abundance matrix must be 2-D, got shape {data.shape}")
        report = validate_abundances(data, self.tol)
        if report:
            raise ValueError(f"abundances violate ASC/ANC: {report.summary()}")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def n_endmembers(self) -> int:
        return self.data.shape[0]

    @property
    def n_pixels(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of the clustered multitask unmixing solver.

    ``lambda_mode`` is either the string ``"auto"`` (band-sparsity estimate
    from the data) or a fixed nonnegative float.
    """

    mu: float = 0.02
    eta: float = 0.1
    lambda_mode: object = "auto"
    q: float = 2.0
    max_iter: int = 300
    epsilon: float = 1e-8
    clusters: int = 6
    connectivity: int = 4
    gradient_sign: str = "descent_consistent"
    seed: int = 0
    sparsity_floor: float = 1e-8
    renormalize_rho: bool = False
    fcm_m: float = 2.0
    fcm_tol: float = 1e-5
    fcm_max_iter: int = 300

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be > 0, got {self.mu}")
        if not self.eta >= 0:
            raise ValueError(f"eta must be >= 0, got {self.eta}")
        if isinstance(self.lambda_mode, str):
            if self.lambda_mode != "auto":
                raise ValueError(f"lambda_mode must be 'auto' or a float, got {self.lambda_mode!r}")
        elif not float(self.lambda_mode) >= 0:
            raise ValueError(f"fixed lambda must be >= 0, got {self.lambda_mode}")
        if not 0 < self.q <= 2:
            raise ValueError(f"q must lie in (0, 2], got {self.q}")
        if self.max_iter < 0:
            raise ValueError(f"max_iter must be >= 0, got {self.max_iter}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.clusters < 1:
            raise ValueError(f"clusters must be >= 1, got {self.clusters}")
        if self.connectivity not in (4, 8):
            raise ValueError(f"connectivity must be 4 or 8, got {self.connectivity}")
        if self.gradient_sign not in ("descent_consistent", "paper_literal"):
            raise ValueError(f"unknown gradient_sign {self.gradient_sign!r}")
        if not self.sparsity_floor > 0:
            raise ValueError("sparsity_floor must be > 0")

    def to_dict(self) -> dict:
        from dataclasses import asdict
        return asdict(self)


@dataclass
class AbundanceReport:
    """Columns that break the nonnegativity or sum-to-one constraints."""

    anc_violations: list = field(default_factory=list)
    asc_violations: list = field(default_factory=list)

    def __bool__(self):
        return bool(self.anc_violations or self.asc_violations)

    @property
    def valid(self) -> bool:
        return not self

    def summary(self, limit: int = 5) -> str:
        parts = []
        if self.anc_violations:
            parts.append(f"ANC at columns {self.anc_violations[:limit]}"
                         + (" ..." if len(self.anc_violations) > limit else ""))
        if self.asc_violations:
            parts.append(f"ASC at columns {self.asc_violations[:limit]}"
                         + (" ..." if len(self.asc_violations) > limit else ""))
        return "; ".join(parts) or "valid"


def validate_abundances(S, tol: float = ASC_TOL) -> AbundanceReport:
    """Report abundance columns with negative entries or ``|sum - 1| > tol``.

    The returned report is falsy when every column is feasible.
    """
    S = _as_array(S)
    if S.ndim == 1:
        S = S[:, None]
    anc = np.flatnonzero(np.any(S < 0, axis=0) | ~np.all(np.isfinite(S), axis=0))
    asc = np.flatnonzero(~(np.abs(S.sum(axis=0) - 1.0) <= tol))
    return AbundanceReport(anc.tolist(), asc.tolist())


def forward_model(A, S) -> np.ndarray:
    """Linear mixing ``A @ S`` of signatures ``A`` (L x c) and abundances ``S`` (c x N)."""
    A = _as_array(A)
    S = _as_array(S)
    if A.ndim != 2 or S.ndim != 2:
        raise ShapeError("forward_model expects 2-D matrices")
    if A.shape[1] != S.shape[0]:
        raise ShapeError(f"A has {A.shape[1]} columns but S has {S.shape[0]} rows")
    return np.asfortranarray(A @ S)
