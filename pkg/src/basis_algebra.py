"""
Coordinates for the Hilbert space L2(I) on a truncated orthonormal basis.

Every curve and operator downstream lives in the coefficient space of a
BasisContext; the quadrature grid is only used for ingestion, projection
and plotting.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from src.errors import ContextMismatchError, DataError, DimensionError, SizingError
from src.utils import SCHEMA_VERSION, to_jsonable

logger = logging.getLogger(__name__)

ORTHONORMALITY_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class BasisContext:
    """Truncated orthonormal basis with its quadrature grid"""

    interval: Tuple[float, float]
    q: int
    grid: np.ndarray          # (m,) abscissae
    eval_matrix: np.ndarray   # (m, q) values phi_n(u_j)
    quad_weights: np.ndarray  # (m,) trapezoid weights
    name: str = 'fourier'

    @property
    def m(self) -> int:
        return int(self.grid.shape[0])

    def gram(self) -> np.ndarray:
        """Discrete Gram matrix sum_j w_j phi_n(u_j) phi_n'(u_j)"""
        return self.eval_matrix.T @ (self.quad_weights[:, None] * self.eval_matrix)

    def orthonormality_defect(self) -> float:
        return float(np.max(np.abs(self.gram() - np.eye(self.q))))

    def same_as(self, other: 'BasisContext') -> bool:
        if self is other:
            return True
        return (
            self.name == other.name
            and self.q == other.q
            and tuple(self.interval) == tuple(other.interval)
            and self.m == other.m
        )

    def to_dict(self) -> Dict[str, Any]:
        return {'name': self.name, 'interval': list(self.interval), 'q': self.q, 'm': self.m}


@dataclass
class Curve:
    """Element of H in coordinates of a BasisContext"""

    coeffs: np.ndarray
    context: BasisContext

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.context.q,):
            raise DimensionError(
                f"Curve needs {self.context.q} coefficients, got shape {self.coeffs.shape}"
            )


@dataclass
class FunctionalPanel:
    """p x T panel of curves stored as a (p, T, q) coefficient tensor"""

    coeffs: np.ndarray
    context: BasisContext
    series_ids: Optional[List[str]] = None
    times: Optional[List[str]] = None
    provenance: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.ndim != 3 or self.coeffs.shape[2] != self.context.q:
            raise DimensionError(
                f"Panel tensor must be (p, T, {self.context.q}), got {self.coeffs.shape}"
            )
        if not np.all(np.isfinite(self.coeffs)):
            raise DataError("Panel coefficients must be finite")
        if self.series_ids is not None and len(self.series_ids) != self.p:
            raise DimensionError(f"{len(self.series_ids)} series ids for p={self.p}")
        if self.times is not None and len(self.times) != self.T:
            raise DimensionError(f"{len(self.times)} time labels for T={self.T}")

    @property
    def p(self) -> int:
        return int(self.coeffs.shape[0])

    @property
    def T(self) -> int:
        return int(self.coeffs.shape[1])

    def scaled(self, factor: float) -> 'FunctionalPanel':
        return FunctionalPanel(
            self.coeffs * factor, self.context, self.series_ids, self.times, dict(self.provenance)
        )


def fourier_functions(u: np.ndarray, q: int, interval: Tuple[float, float] = (0.0, 1.0)) -> np.ndarray:
    """
    Evaluate the real Fourier system on points u

    phi_1 = 1, phi_{2j} = sqrt(2) sin(2 pi j x), phi_{2j+1} = sqrt(2) cos(2 pi j x)
    with x the position of u rescaled to [0, 1] (and 1/sqrt(b-a) normalization).

    Args:
        u: Evaluation points
        q: Number of basis functions
        interval: Domain [a, b]

    Returns:
        Array of shape (len(u), q)
    """
    a, b = interval
    length = b - a
    x = (np.asarray(u, dtype=float) - a) / length
    values = np.empty((x.shape[0], q))
    values[:, 0] = 1.0
    for n in range(1, q):
        j = (n + 1) // 2
        if n % 2 == 1:
            values[:, n] = np.sqrt(2.0) * np.sin(2.0 * np.pi * j * x)
        else:
            values[:, n] = np.sqrt(2.0) * np.cos(2.0 * np.pi * j * x)

    return values / np.sqrt(length)


def trapezoid_weights(grid: np.ndarray) -> np.ndarray:
    """Composite trapezoid weights for an increasing grid"""
    weights = np.zeros_like(grid, dtype=float)
    spacing = np.diff(grid)
    weights[:-1] += spacing / 2.0
    weights[1:] += spacing / 2.0
    return weights


def build_fourier_basis(q: int, m: int = 101, interval: Tuple[float, float] = (0.0, 1.0)) -> BasisContext:
    """
    Build the Fourier context used by all simulations

    Args:
        q: Truncation order
        m: Number of grid points (at least 4q+1)
        interval: Domain of the curves

    Returns:
        BasisContext with trapezoid quadrature
    """
    if q < 1:
        raise SizingError(f"Truncation order must be at least 1, got q={q}")
    if m < 4 * q + 1:
        raise SizingError(f"Grid of m={m} points is too coarse for q={q}; need m >= {4 * q + 1}")

    grid = np.linspace(interval[0], interval[1], m)
    ctx = BasisContext(
        interval=(float(interval[0]), float(interval[1])),
        q=int(q),
        grid=grid,
        eval_matrix=fourier_functions(grid, q, interval),
        quad_weights=trapezoid_weights(grid),
    )

    defect = ctx.orthonormality_defect()
    if defect > ORTHONORMALITY_TOL:
        logger.warning(f"Fourier basis q={q}, m={m} has orthonormality defect {defect:.2e}")

    return ctx


def project_curve(samples: np.ndarray, ctx: BasisContext) -> Curve:
    """
    Least-squares projection of gridded samples onto the basis

    Minimizes sum_j w_j (f(u_j) - sum_n c_n phi_n(u_j))^2.

    Args:
        samples: Curve values on ctx.grid
        ctx: Basis context

    Returns:
        Curve with the fitted coefficients
    """
    samples = np.asarray(samples, dtype=float)
    if samples.shape != (ctx.m,):
        raise DimensionError(f"Expected {ctx.m} samples, got shape {samples.shape}")
    if not np.all(np.isfinite(samples)):
        raise DataError("Cannot project non-finite samples")

    return Curve(project_samples(samples[None, :], ctx)[0], ctx)


def project_samples(samples: np.ndarray, ctx: BasisContext) -> np.ndarray:
    """
    Vectorized projection of many curves

    Args:
        samples: Array (..., m) of curve values
        ctx: Basis context

    Returns:
        Array (..., q) of coefficients
    """
    samples = np.asarray(samples, dtype=float)
    sqrt_w = np.sqrt(ctx.quad_weights)
    design = sqrt_w[:, None] * ctx.eval_matrix
    flat = samples.reshape(-1, ctx.m) * sqrt_w[None, :]
    coeffs, _, _, _ = np.linalg.lstsq(design, flat.T, rcond=None)
    return coeffs.T.reshape(samples.shape[:-1] + (ctx.q,))


def reconstruct(curve: Curve) -> np.ndarray:
    """Evaluate a curve on its context grid"""
    return curve.context.eval_matrix @ curve.coeffs


def inner_product(f: Curve, g: Curve) -> float:
    """
    Inner product of two curves (Parseval in orthonormal coordinates)

    Args:
        f: First curve
        g: Second curve

    Returns:
        <f, g>
    """
    if not f.context.same_as(g.context):
        raise ContextMismatchError("Curves live on different basis contexts")

    return float(np.dot(f.coeffs, g.coeffs))


def quadrature_inner_product(f: np.ndarray, g: np.ndarray, ctx: BasisContext) -> float:
    """Inner product of two gridded functions by the context quadrature"""
    return float(np.sum(ctx.quad_weights * f * g))


def save_panel(panel: FunctionalPanel, path: str) -> str:
    """
    Write a panel to an npz container with embedded JSON metadata

    Arrays: coeffs (p, T, q), grid, quad_weights. The 'meta' entry is a JSON
    string holding the context parameters, labels and provenance.

    Args:
        panel: Panel to save
        path: Destination (.npz)

    Returns:
        Path of the written file
    """
    meta = {
        'schema_version': SCHEMA_VERSION,
        'context': panel.context.to_dict(),
        'series_ids': panel.series_ids,
        'times': panel.times,
        'provenance': to_jsonable(panel.provenance),
    }
    with open(path, 'wb') as f:
        np.savez(
            f,
            coeffs=panel.coeffs,
            grid=panel.context.grid,
            quad_weights=panel.context.quad_weights,
            meta=np.array(json.dumps(meta, sort_keys=True)),
        )

    return path


def load_panel(path: str) -> FunctionalPanel:
    """
    Read a panel written by save_panel

    Args:
        path: npz file

    Returns:
        FunctionalPanel with its rebuilt context
    """
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data['meta']))
        coeffs = data['coeffs']

    context = meta['context']
    if context['name'] != 'fourier':
        raise DataError(f"Unsupported basis '{context['name']}' in {path}")

    ctx = build_fourier_basis(context['q'], context['m'], tuple(context['interval']))
    return FunctionalPanel(coeffs, ctx, meta.get('series_ids'), meta.get('times'), meta.get('provenance') or {})
