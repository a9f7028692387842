"""
Matrices of kernel operators on H^K in basis coordinates.

An OperatorMatrix with K rows and L columns stores its blocks as a dense
(K, L, q, q) array; block (i, j) is the coefficient matrix of the kernel
operator in row i, column j.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from src.basis_algebra import BasisContext, Curve
from src.errors import ConfigError, ContextMismatchError, DimensionError, NumericError

logger = logging.getLogger(__name__)

SELF_ADJOINT_TOL = 1e-10


@dataclass
class KernelOperator:
    """Single integral operator on H acting on coefficients as c -> G c"""

    mat: np.ndarray
    context: BasisContext

    def __post_init__(self):
        self.mat = np.asarray(self.mat, dtype=float)
        q = self.context.q
        if self.mat.shape != (q, q):
            raise DimensionError(f"Kernel operator must be {q}x{q}, got {self.mat.shape}")
        if not np.all(np.isfinite(self.mat)):
            raise ConfigError("Kernel operator entries must be finite")

    def apply(self, curve: Curve) -> Curve:
        if not curve.context.same_as(self.context):
            raise ContextMismatchError("Operator and curve live on different contexts")
        return Curve(self.mat @ curve.coeffs, self.context)

    @classmethod
    def identity(cls, ctx: BasisContext) -> 'KernelOperator':
        return cls(np.eye(ctx.q), ctx)


@dataclass
class OperatorMatrix:
    """K x L matrix of kernel operators sharing one context"""

    blocks: np.ndarray
    context: BasisContext
    self_adjoint: bool = False

    def __post_init__(self):
        self.blocks = np.asarray(self.blocks, dtype=float)
        q = self.context.q
        if self.blocks.ndim != 4 or self.blocks.shape[2:] != (q, q):
            raise DimensionError(f"Operator matrix blocks must be (K, L, {q}, {q}), got {self.blocks.shape}")
        if not np.all(np.isfinite(self.blocks)):
            raise ConfigError("Operator matrix entries must be finite")
        if self.self_adjoint:
            defect = float(np.max(np.abs(self.blocks - self.blocks.transpose(1, 0, 3, 2)), initial=0.0))
            if defect > SELF_ADJOINT_TOL * max(1.0, float(np.max(np.abs(self.blocks), initial=0.0))):
                raise ConfigError(f"Operator matrix flagged self-adjoint has defect {defect:.2e}")

    @property
    def rows(self) -> int:
        return int(self.blocks.shape[0])

    @property
    def cols(self) -> int:
        return int(self.blocks.shape[1])

    def block(self, i: int, j: int) -> KernelOperator:
        return KernelOperator(self.blocks[i, j], self.context)

    @classmethod
    def from_blocks(cls, blocks: Sequence[Sequence[KernelOperator]], self_adjoint: bool = False) -> 'OperatorMatrix':
        """Stack a nested list of KernelOperators"""
        ctx = blocks[0][0].context
        for row in blocks:
            for op in row:
                if not op.context.same_as(ctx):
                    raise ContextMismatchError("All blocks must share one basis context")
        return cls(np.array([[op.mat for op in row] for row in blocks]), ctx, self_adjoint)

    @classmethod
    def identity(cls, ctx: BasisContext, K: int) -> 'OperatorMatrix':
        blocks = np.zeros((K, K, ctx.q, ctx.q))
        for k in range(K):
            blocks[k, k] = np.eye(ctx.q)
        return cls(blocks, ctx, self_adjoint=True)


@dataclass
class CovarianceSpec:
    """Innovation covariance C_eps, diagonal on the basis with eigenvalues c"""

    c: np.ndarray
    context: BasisContext
    setting: str = 'custom'

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        if self.c.shape != (self.context.q,):
            raise DimensionError(f"Covariance needs {self.context.q} eigenvalues, got shape {self.c.shape}")
        if np.any(self.c < 0) or not np.all(np.isfinite(self.c)):
            raise ConfigError("Covariance eigenvalues must be finite and nonnegative")

    @property
    def hs_norm(self) -> float:
        """Hilbert-Schmidt norm ||C_eps||_2"""
        return float(np.sqrt(np.sum(self.c ** 2)))

    def as_operator(self) -> KernelOperator:
        return KernelOperator(np.diag(self.c), self.context)


def _check_context(*items) -> BasisContext:
    ctx = items[0].context
    for item in items[1:]:
        if not item.context.same_as(ctx):
            raise ContextMismatchError("Operators live on different basis contexts")
    return ctx


def sandwich(C1: KernelOperator, Om: OperatorMatrix, C2: KernelOperator) -> OperatorMatrix:
    """
    Operator-matrix product C1 Om C2

    Block (i, j) of the result is C1 Om_ij C2.

    Args:
        C1: Left operator
        Om: Operator matrix
        C2: Right operator

    Returns:
        OperatorMatrix with the same shape as Om
    """
    ctx = _check_context(C1, Om, C2)
    blocks = np.einsum('ab,klbc,cd->klad', C1.mat, Om.blocks, C2.mat, optimize=True)

    return OperatorMatrix(blocks, ctx)


def adjoint(Om: OperatorMatrix) -> OperatorMatrix:
    """Block (i, j) of the adjoint is the transpose of block (j, i)"""
    return OperatorMatrix(Om.blocks.transpose(1, 0, 3, 2).copy(), Om.context, Om.self_adjoint)


def trace(Om: OperatorMatrix) -> float:
    """
    Trace on H^K: sum of the traces of the diagonal blocks

    Args:
        Om: Square operator matrix

    Returns:
        sum_i tr(Om_ii)
    """
    if Om.rows != Om.cols:
        raise DimensionError(f"Trace needs a square operator matrix, got {Om.rows}x{Om.cols}")

    return float(np.einsum('kkaa->', Om.blocks))


def hs_norm(Om: OperatorMatrix) -> float:
    """Hilbert-Schmidt norm sqrt(sum_ij ||Om_ij||_F^2)"""
    return float(np.sqrt(np.sum(Om.blocks ** 2)))


def assemble(Om: OperatorMatrix) -> np.ndarray:
    """
    Flatten the blocks into a (Kq) x (Lq) matrix

    Row index k*q + a, column index l*q + b.
    """
    K, L, q, _ = Om.blocks.shape
    return Om.blocks.transpose(0, 2, 1, 3).reshape(K * q, L * q)


def op_norm(Om: OperatorMatrix) -> float:
    """Largest singular value of the assembled matrix"""
    try:
        return float(np.linalg.norm(assemble(Om), 2))
    except np.linalg.LinAlgError as e:
        raise NumericError(f"Operator norm failed to converge: {e}")


def compose(A: OperatorMatrix, B: OperatorMatrix) -> OperatorMatrix:
    """
    Product of two operator matrices, (AB)_ij = sum_k A_ik B_kj

    Args:
        A: K x M operator matrix
        B: M x L operator matrix

    Returns:
        K x L operator matrix
    """
    ctx = _check_context(A, B)
    if A.cols != B.rows:
        raise DimensionError(f"Cannot compose {A.rows}x{A.cols} with {B.rows}x{B.cols}")

    return OperatorMatrix(np.einsum('kmab,mlbc->klac', A.blocks, B.blocks, optimize=True), ctx)


def sqrt_covariance(spec: CovarianceSpec) -> KernelOperator:
    """
    Square root of a diagonal covariance operator

    Args:
        spec: Covariance with nonnegative eigenvalues

    Returns:
        KernelOperator diag(sqrt(c_n))
    """
    if np.any(spec.c < 0):
        raise ConfigError("Cannot take the square root of a covariance with negative eigenvalues")

    return KernelOperator(np.diag(np.sqrt(spec.c)), spec.context)


def build_loading_operator(loadings: np.ndarray, ctx: BasisContext) -> OperatorMatrix:
    """
    Loading operator Psi as a p x K operator matrix

    Psi_ik = sum_n a_nik phi_n (x) phi_n, so every block is diagonal.

    Args:
        loadings: Array (q, p, K) of the matrices A_n
        ctx: Basis context

    Returns:
        p x K OperatorMatrix
    """
    loadings = np.asarray(loadings, dtype=float)
    if loadings.ndim != 3 or loadings.shape[0] != ctx.q:
        raise DimensionError(f"Loadings must be (q={ctx.q}, p, K), got {loadings.shape}")

    q, p, K = loadings.shape
    blocks = np.zeros((p, K, q, q))
    idx = np.arange(q)
    blocks[:, :, idx, idx] = loadings.transpose(1, 2, 0)

    return OperatorMatrix(blocks, ctx)


def omega_diagonals(loadings: np.ndarray) -> np.ndarray:
    """
    Diagonals of the Omega blocks: out[k, l, n] = (A_n' A_n)_kl

    Args:
        loadings: Array (q, p, K)

    Returns:
        Array (K, K, q)
    """
    return np.einsum('nik,nil->kln', loadings, loadings, optimize=True)


def build_omega(loadings, ctx: Optional[BasisContext] = None) -> OperatorMatrix:
    """
    Omega = Psi* Psi for the structured loading operator

    Block (k, l) is diag over n of (A_n' A_n)_kl.

    Args:
        loadings: LoadingSpec (or a raw (q, p, K) array together with ctx)
        ctx: Basis context, required for raw arrays

    Returns:
        Self-adjoint K x K OperatorMatrix
    """
    if hasattr(loadings, 'A'):
        ctx = loadings.context
        A = loadings.A
    else:
        A = np.asarray(loadings, dtype=float)
    if ctx is None:
        raise ConfigError("build_omega needs a basis context for raw loadings")

    diagonals = omega_diagonals(A)
    K = diagonals.shape[0]
    blocks = np.zeros((K, K, ctx.q, ctx.q))
    idx = np.arange(ctx.q)
    blocks[:, :, idx, idx] = diagonals

    return OperatorMatrix(blocks, ctx, self_adjoint=True)
