"""
Radial discretization substrate: grids, fields, quadrature, the radial
Laplacian, dilations and the binary field dump.

The discretization is a vertex-centred finite-volume scheme. Node ``j`` owns
the dual cell bounded by the midpoints of its neighbouring intervals (the
origin cell is ``[0, h_0/2]``, the last cell ends at ``r_max``). Quadrature
weights are the exact ``N``-dimensional volumes of those dual cells and the
stiffness matrix couples neighbours through the flux coefficients
``omega_N * r_{j+1/2}^{N-1} / h_j``. With this pairing ``-Laplacian = W^{-1} K``
is self-adjoint in the weighted inner product, the kinetic energy is the
quadratic form of ``K`` and every grid rescaling changes kinetic, quartic and
cubic integrals exactly like the continuous dilation does.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sparse
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline
from scipy.special import gamma as gamma_function

from exceptions import ConfigurationError, DilationRangeError, UsageError

SUPPORTED_DIMENSIONS = (1, 2, 3, 4)
MIN_NODES = 64
SPACINGS = ("uniform", "graded")
GRADED_STRETCH = 4.0
DILATION_MASS_DRIFT = 1e-6

FIELD_DUMP_MAGIC = b"NLSF"
FIELD_DUMP_VERSION = 1
FIELD_DUMP_HEADER = np.dtype([
    ("magic", "S4"),
    ("version", "<u4"),
    ("dimension", "<u4"),
    ("n", "<u8"),
    ("r_max", "<f8"),
])


def sphere_area(dimension: int) -> float:
    """Surface area of the unit sphere in R^N; 2 for N=1 (even extension)."""
    return float(2.0 * np.pi ** (dimension / 2.0) / gamma_function(dimension / 2.0))


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """
    Radial grid on ``[0, r_max]`` for radially symmetric functions on R^N.

    Args:
        dimension: Space dimension N in {1, 2, 3, 4}.
        r_max: Truncation radius; the last node sits on it.
        nodes: Strictly increasing radii starting at 0.
        weights: Dual-cell volumes, so that ``weights @ f`` approximates the
            integral of a radial function over the ball of radius ``r_max``.
        spacing: Label of the node distribution.
    """
    dimension: int
    r_max: float
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    spacing: str = "uniform"

    @property
    def n(self) -> int:
        return int(self.nodes.size)

    @cached_property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.nodes[1:] + self.nodes[:-1])

    @cached_property
    def fluxes(self) -> np.ndarray:
        """Stiffness coupling of each interval, ``omega r_mid^{N-1} / h``."""
        widths = np.diff(self.nodes)
        return sphere_area(self.dimension) * self.midpoints ** (self.dimension - 1) / widths

    @cached_property
    def stiffness(self) -> sparse.csr_matrix:
        """Symmetric tridiagonal stiffness ``K`` with ``f @ K @ f = int |grad f|^2``."""
        kappa = self.fluxes
        diagonal = np.zeros(self.n)
        diagonal[:-1] += kappa
        diagonal[1:] += kappa
        return sparse.diags([-kappa, diagonal, -kappa], [-1, 0, 1], format="csr")

    def stiffness_banded(self, shift: float = 0.0) -> np.ndarray:
        """
        Banded storage of ``K + shift * W`` restricted to the free nodes.

        The last node carries the Dirichlet condition and is dropped, which
        is the layout ``scipy.linalg.solve_banded((1, 1), ...)`` expects.
        """
        kappa = self.fluxes
        diagonal = np.zeros(self.n)
        diagonal[:-1] += kappa
        diagonal[1:] += kappa
        diagonal = diagonal + shift * self.weights
        free = self.n - 1
        banded = np.zeros((3, free))
        banded[0, 1:] = -kappa[:free - 1]
        banded[1, :] = diagonal[:free]
        banded[2, :-1] = -kappa[:free - 1]
        return banded

    def scaled(self, factor: float) -> "RadialGrid":
        """Grid with every radius multiplied by ``factor``."""
        if factor <= 0 or not np.isfinite(factor):
            raise UsageError(f"Grid scale factor must be positive and finite, got {factor}")
        return RadialGrid(
            dimension=self.dimension,
            r_max=self.r_max * factor,
            nodes=self.nodes * factor,
            weights=self.weights * factor ** self.dimension,
            spacing=self.spacing,
        )

    def same_as(self, other: "RadialGrid") -> bool:
        if self is other:
            return True
        return (self.dimension == other.dimension and self.n == other.n
                and np.allclose(self.nodes, other.nodes, rtol=1e-13, atol=0.0))

    def describe(self) -> Dict[str, Union[int, float, str]]:
        return {"N": self.dimension, "n": self.n, "r_max": float(self.r_max),
                "spacing": self.spacing}


def _dual_cell_weights(nodes: np.ndarray, dimension: int) -> np.ndarray:
    edges = np.empty(nodes.size + 1)
    edges[0] = 0.0
    edges[1:-1] = 0.5 * (nodes[1:] + nodes[:-1])
    edges[-1] = nodes[-1]
    omega = sphere_area(dimension)
    return omega / dimension * np.diff(edges ** dimension)


def build_radial_grid(N: int, r_max: float, n: int, spacing: str = "uniform",
                      stretch: float = GRADED_STRETCH) -> RadialGrid:
    """
    Build a radial grid.

    Args:
        N: Space dimension.
        r_max: Truncation radius.
        n: Number of nodes, at least 64.
        spacing: ``uniform`` or ``graded``; graded places
            ``r = r_max sinh(stretch s) / sinh(stretch)`` so nodes cluster at the origin.
        stretch: Grading strength for ``graded`` spacing.

    Returns:
        RadialGrid whose dual-cell weights reproduce the ball volume.
    """
    if N not in SUPPORTED_DIMENSIONS:
        raise ConfigurationError(f"dimension must be one of {SUPPORTED_DIMENSIONS}, got {N}",
                                 key_path="grid.N")
    if not np.isfinite(r_max) or r_max <= 0:
        raise ConfigurationError(f"r_max must be positive, got {r_max}", key_path="grid.r_max")
    if int(n) != n or n < MIN_NODES:
        raise ConfigurationError(f"n must be an integer >= {MIN_NODES}, got {n}",
                                 key_path="grid.n")
    if spacing not in SPACINGS:
        raise ConfigurationError(f"spacing must be one of {SPACINGS}, got {spacing!r}",
                                 key_path="grid.spacing")

    s = np.linspace(0.0, 1.0, int(n))
    if spacing == "uniform":
        nodes = r_max * s
    else:
        nodes = r_max * np.sinh(stretch * s) / np.sinh(stretch)
    nodes[-1] = r_max
    weights = _dual_cell_weights(nodes, N)
    logging.debug(f"Built {spacing} radial grid N={N} n={n} r_max={r_max}")
    return RadialGrid(dimension=N, r_max=float(r_max), nodes=nodes, weights=weights,
                      spacing=spacing)


@dataclass(frozen=True, eq=False)
class RadialField:
    """
    Samples of a radial function on a grid.

    Values are stored read-only; real fields are float64 and evolution
    fields complex128.
    """
    grid: RadialGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, copy=True)
        if not np.iscomplexobj(values):
            values = values.astype(float)
        if values.shape != (self.grid.n,):
            raise UsageError(
                f"Field has shape {values.shape}, grid has {self.grid.n} nodes")
        if not np.all(np.isfinite(values)):
            raise UsageError("Field values must be finite")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: RadialGrid) -> "RadialField":
        return cls(grid, np.zeros(grid.n))

    def peak(self) -> float:
        return float(np.max(np.abs(self.values)))

    def boundary_ratio(self, outer_fraction: float = 0.1) -> float:
        """Largest modulus on the outer part of the grid relative to the peak."""
        peak = self.peak()
        if peak == 0.0:
            return 0.0
        outer = self.grid.nodes >= (1.0 - outer_fraction) * self.grid.r_max
        return float(np.max(np.abs(self.values[outer])) / peak)


@dataclass(frozen=True, eq=False)
class StatePair:
    """
    A pair of fields on one grid together with their target masses.

    A mass of zero marks an inactive component (scalar runs); its field is
    identically zero.
    """
    u: RadialField
    v: RadialField
    b1: float
    b2: float

    def __post_init__(self):
        if not self.u.grid.same_as(self.v.grid):
            raise UsageError("Components of a state must share one grid")
        if self.b1 < 0 or self.b2 < 0 or (self.b1 == 0 and self.b2 == 0):
            raise UsageError(f"Masses must be nonnegative and not both zero, got "
                             f"({self.b1}, {self.b2})")

    @property
    def grid(self) -> RadialGrid:
        return self.u.grid

    @property
    def masses(self) -> Tuple[float, float]:
        return (self.b1, self.b2)

    def with_values(self, u_values: np.ndarray, v_values: np.ndarray,
                    grid: Optional[RadialGrid] = None) -> "StatePair":
        grid = grid or self.grid
        return StatePair(RadialField(grid, u_values), RadialField(grid, v_values),
                         self.b1, self.b2)

    def normalized(self) -> "StatePair":
        """Rescale each active component onto its mass sphere."""
        u = _scale_to_mass(self.u, self.b1)
        v = _scale_to_mass(self.v, self.b2)
        return self.with_values(u, v)

    def mass_errors(self) -> Tuple[float, float]:
        errors = []
        for comp, b in ((self.u, self.b1), (self.v, self.b2)):
            mass = integrate_modulus_squared(comp)
            errors.append(abs(mass - b * b) / (b * b) if b > 0 else mass)
        return errors[0], errors[1]

    def modulus(self) -> "StatePair":
        """Real state made of the moduli of a complex state."""
        return self.with_values(np.abs(self.u.values), np.abs(self.v.values))


def _scale_to_mass(f: RadialField, b: float) -> np.ndarray:
    if b == 0:
        return np.zeros_like(f.values)
    mass = integrate_modulus_squared(f)
    if mass <= 0:
        raise UsageError("Cannot normalize a zero component to a positive mass")
    return f.values * (b / np.sqrt(mass))


def integrate(f: RadialField) -> float:
    """Quadrature of ``int_{R^N} f dx``."""
    value = np.dot(f.grid.weights, f.values)
    return complex(value) if np.iscomplexobj(value) else float(value)


def inner(f: RadialField, g: RadialField) -> float:
    """Weighted inner product ``int f conj(g)``, real part."""
    _require_same_grid(f.grid, g.grid)
    return float(np.real(np.dot(f.grid.weights, f.values * np.conj(g.values))))


def integrate_modulus_squared(f: RadialField) -> float:
    return float(np.dot(f.grid.weights, np.abs(f.values) ** 2))


def kinetic(f: RadialField) -> float:
    """``int |grad f|^2`` as the stiffness quadratic form."""
    diffs = np.diff(f.values)
    return float(np.dot(f.grid.fluxes, np.abs(diffs) ** 2))


def stiffness_apply(grid: RadialGrid, values: np.ndarray) -> np.ndarray:
    """``K @ values`` without assembling the sparse matrix."""
    kappa = grid.fluxes
    flux = kappa * np.diff(values)
    out = np.zeros_like(values)
    out[:-1] -= flux
    out[1:] += flux
    return out


def laplacian_apply(f: RadialField, clamp: bool = True) -> RadialField:
    """
    Radial Laplacian ``f'' + (N-1)/r f'`` as ``-W^{-1} K f``.

    The origin row reduces to the regularized value ``2N (f_1 - f_0) / h^2``.
    With ``clamp`` the Dirichlet node at ``r_max`` is set to zero.
    """
    values = -stiffness_apply(f.grid, f.values) / f.grid.weights
    if clamp:
        values[-1] = 0.0
    return RadialField(f.grid, values)


def _require_same_grid(a: RadialGrid, b: RadialGrid):
    if not a.same_as(b):
        raise UsageError("Fields live on different grids", details={
            "left": a.describe(), "right": b.describe()})


def resample(f: RadialField, grid: RadialGrid) -> RadialField:
    """
    Cubic-spline resampling with even symmetry at the origin and zero
    extension beyond the source radius.
    """
    if f.grid.same_as(grid):
        return RadialField(grid, f.values)
    source = f.grid
    spline = CubicSpline(source.nodes, f.values, bc_type=((1, 0.0), "not-a-knot"))
    targets = grid.nodes
    values = np.zeros(grid.n, dtype=f.values.dtype)
    inside = targets <= source.r_max
    values[inside] = spline(targets[inside])
    return RadialField(grid, values)


def _dilate_field(f: RadialField, t: float) -> np.ndarray:
    grid = f.grid
    spline = CubicSpline(grid.nodes, f.values, bc_type=((1, 0.0), "not-a-knot"))
    stretched = np.exp(t) * grid.nodes
    values = np.zeros(grid.n, dtype=f.values.dtype)
    inside = stretched <= grid.r_max
    values[inside] = spline(stretched[inside])
    values[-1] = 0.0
    return np.exp(grid.dimension * t / 2.0) * values


def _simpson_mass(f: RadialField, values: np.ndarray) -> float:
    grid = f.grid
    return float(simpson(np.abs(values) ** 2 * grid.nodes ** (grid.dimension - 1), x=grid.nodes))


def dilate(s: StatePair, t: float) -> StatePair:
    """
    Mass-preserving dilation ``e^{Nt/2} u(e^t x)`` resampled on the same grid.

    The mass of each component is checked with Simpson quadrature on the
    nodes before and after resampling; the result is only put back on the
    mass sphere once that drift is within ``1e-6``.

    Raises:
        DilationRangeError: When more than ``1e-6`` of the mass of a
            component is pushed past ``r_max`` or the resampled mass drifts
            by more than ``1e-6``.
    """
    if t == 0:
        return s
    u_values = _dilate_field(s.u, t)
    v_values = _dilate_field(s.v, t)
    grid = s.grid
    kept = grid.nodes <= np.exp(t) * grid.r_max
    for name, original, values in (("u", s.u, u_values), ("v", s.v, v_values)):
        density = grid.weights * np.abs(original.values) ** 2
        total = float(density.sum())
        if total == 0:
            continue
        lost = float(density[~kept].sum()) / total
        before = _simpson_mass(original, original.values)
        drift = abs(_simpson_mass(original, values) - before) / before
        if lost > DILATION_MASS_DRIFT or drift > DILATION_MASS_DRIFT:
            raise DilationRangeError(
                f"Dilation by t={t} lost {lost:.3e} of the mass of {name} "
                f"(resampling drift {drift:.3e})",
                details={"t": t, "component": name, "lost": lost, "drift": drift,
                         "grid": grid.describe()})
    return s.with_values(u_values, v_values).normalized()


def rescale_dilate(s: StatePair, t: float) -> StatePair:
    """
    Exact dilation by moving the grid: radii times ``e^{-t}``, values times
    ``e^{Nt/2}``. Masses are unchanged and kinetic, quartic and cubic
    integrals scale by ``e^{2t}``, ``e^{Nt}`` and ``e^{Nt/2}``.
    """
    if t == 0:
        return s
    grid = s.grid.scaled(np.exp(-t))
    amplitude = np.exp(s.grid.dimension * t / 2.0)
    return s.with_values(amplitude * s.u.values, amplitude * s.v.values, grid=grid)


def h1_norm_squared(f: RadialField) -> float:
    return kinetic(f) + integrate_modulus_squared(f)


def h1_distance(a: StatePair, b: StatePair) -> float:
    """``(sum over components of int |grad(a-b)|^2 + |a-b|^2)^{1/2}``."""
    _require_same_grid(a.grid, b.grid)
    total = 0.0
    for fa, fb in ((a.u, b.u), (a.v, b.v)):
        diff = RadialField(a.grid, fa.values - fb.values)
        total += h1_norm_squared(diff)
    return float(np.sqrt(total))


def state_h1_norm(s: StatePair) -> float:
    return float(np.sqrt(h1_norm_squared(s.u) + h1_norm_squared(s.v)))


def write_field_dump(path: Union[str, Path], grid: RadialGrid,
                     fields: Sequence[np.ndarray]) -> Path:
    """
    Write fields in the little-endian ``NLSF`` binary format: header,
    node radii, then one block of ``n`` float64 samples per field.
    Complex fields are written as two blocks (real part, imaginary part).
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = np.zeros(1, dtype=FIELD_DUMP_HEADER)
    header["magic"] = FIELD_DUMP_MAGIC
    header["version"] = FIELD_DUMP_VERSION
    header["dimension"] = grid.dimension
    header["n"] = grid.n
    header["r_max"] = grid.r_max
    blocks: List[np.ndarray] = [np.asarray(grid.nodes, dtype="<f8")]
    for values in fields:
        values = np.asarray(values)
        if values.shape != (grid.n,):
            raise UsageError(f"Field of shape {values.shape} does not match grid size {grid.n}")
        if np.iscomplexobj(values):
            blocks.append(values.real.astype("<f8"))
            blocks.append(values.imag.astype("<f8"))
        else:
            blocks.append(values.astype("<f8"))
    with open(path, "wb") as handle:
        handle.write(header.tobytes())
        for block in blocks:
            handle.write(block.tobytes())
    logging.debug(f"Wrote {len(blocks) - 1} field blocks to {path}")
    return path


def read_field_dump(path: Union[str, Path]) -> Tuple[Dict[str, Union[int, float]], np.ndarray,
                                                      List[np.ndarray]]:
    """
    Read an ``NLSF`` dump.

    Returns:
        Tuple of (header dict, node radii, list of field blocks).
    """
    raw = Path(path).read_bytes()
    if len(raw) < FIELD_DUMP_HEADER.itemsize:
        raise UsageError(f"{path} is too short to be a field dump")
    header = np.frombuffer(raw[:FIELD_DUMP_HEADER.itemsize], dtype=FIELD_DUMP_HEADER)[0]
    if bytes(header["magic"]) != FIELD_DUMP_MAGIC:
        raise UsageError(f"{path} is not a field dump (bad magic)")
    n = int(header["n"])
    body = np.frombuffer(raw[FIELD_DUMP_HEADER.itemsize:], dtype="<f8")
    if body.size % n != 0 or body.size < n:
        raise UsageError(f"{path} has a truncated body")
    blocks = body.reshape(-1, n)
    meta = {
        "version": int(header["version"]),
        "N": int(header["dimension"]),
        "n": n,
        "r_max": float(header["r_max"]),
    }
    return meta, blocks[0].copy(), [block.copy() for block in blocks[1:]]


def grid_from_nodes(dimension: int, nodes: np.ndarray, spacing: str = "uniform") -> RadialGrid:
    """Rebuild a grid from stored radii (used when reloading dumps)."""
    nodes = np.asarray(nodes, dtype=float)
    return RadialGrid(dimension=dimension, r_max=float(nodes[-1]), nodes=nodes,
                      weights=_dual_cell_weights(nodes, dimension), spacing=spacing)
