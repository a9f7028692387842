"""
Gram matrices of a functional panel and their eigenstructure.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict

import numpy as np

from src.basis_algebra import FunctionalPanel
from src.errors import DimensionError, NumericError
from src.operator_calculus import OperatorMatrix, assemble
from src.spurious_diagnostics import spurious_vector

logger = logging.getLogger(__name__)

DEFAULT_K_MAX = 8


@dataclass
class GramMatrix:
    """T x T demeaned Gram matrix of a panel"""

    S: np.ndarray
    p: int = 1

    @property
    def T(self) -> int:
        return int(self.S.shape[0])


@dataclass
class MThetaSVD:
    """Singular value decomposition M Theta' = W diag(sigma) V'"""

    sigma: np.ndarray
    W: np.ndarray
    V: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.W * self.sigma[None, :]) @ self.V.T


def centering_matrix(T: int) -> np.ndarray:
    """M = I - 11'/T"""
    if T < 1:
        raise DimensionError(f"Need T >= 1, got T={T}")
    return np.eye(T) - np.full((T, T), 1.0 / T)


def cumulation_matrix(T: int) -> np.ndarray:
    """Upper triangular Theta with Theta_st = 1{s <= t}"""
    if T < 1:
        raise DimensionError(f"Need T >= 1, got T={T}")
    return np.triu(np.ones((T, T)))


def gram_matrix(panel: FunctionalPanel) -> GramMatrix:
    """
    Demeaned Gram matrix of a panel

    S_st = p^{-1} sum_i <X_is - mean_i, X_it - mean_i>, computed in coefficient
    space as p^{-1} M (sum_n C_n' C_n) M with C_n the p x T slice at basis index n.

    Args:
        panel: Functional panel

    Returns:
        GramMatrix
    """
    centred = panel.coeffs - panel.coeffs.mean(axis=1, keepdims=True)
    S = np.tensordot(centred, centred, axes=([0, 2], [0, 2])) / panel.p

    return GramMatrix(0.5 * (S + S.T), panel.p)


def covariance_matrix(panel: FunctionalPanel) -> np.ndarray:
    """
    Dual (pq) x (pq) sample covariance p^{-1} sum_t x_t x_t' of the demeaned panel

    Shares its nonzero eigenvalues with gram_matrix(panel).
    """
    centred = panel.coeffs - panel.coeffs.mean(axis=1, keepdims=True)
    stacked = centred.transpose(0, 2, 1).reshape(panel.p * panel.context.q, panel.T)
    return stacked @ stacked.T / panel.p


def mtheta_svd(T: int) -> MThetaSVD:
    """
    Closed-form SVD of M Theta'

    sigma_t = 1 / (2 sin(t pi / 2T)) for t < T and sigma_T = 0, with
    w_tn = -sqrt(2/T) cos((n - 1/2) pi t / T), v_tn = sqrt(2/T) sin((n - 1) pi t / T),
    w_T = 1/sqrt(T) and v_T = e_1.

    Args:
        T: Time length (at least 2)

    Returns:
        MThetaSVD with singular vectors as columns
    """
    if T < 2:
        raise DimensionError(f"Need T >= 2, got T={T}")

    t = np.arange(1, T)
    n = np.arange(1, T + 1)[:, None]
    sigma = np.zeros(T)
    sigma[:-1] = 1.0 / (2.0 * np.sin(t * np.pi / (2.0 * T)))

    W = np.empty((T, T))
    V = np.zeros((T, T))
    W[:, :-1] = -np.sqrt(2.0 / T) * np.cos((n - 0.5) * np.pi * t[None, :] / T)
    V[:, :-1] = np.sqrt(2.0 / T) * np.sin((n - 1) * np.pi * t[None, :] / T)
    W[:, -1] = 1.0 / np.sqrt(T)
    V[0, -1] = 1.0

    return MThetaSVD(sigma, W, V)


def w_matrix(innovations: np.ndarray, Om: OperatorMatrix) -> np.ndarray:
    """
    W_st = sum_kl <eps_ks, Om_kl eps_lt>

    Args:
        innovations: (K, T, q) innovation coefficients
        Om: K x K operator matrix

    Returns:
        T x T matrix
    """
    innovations = np.asarray(innovations, dtype=float)
    if innovations.ndim != 3:
        raise DimensionError(f"Innovations must be (K, T, q), got {innovations.shape}")
    K, T, q = innovations.shape
    if (Om.rows, Om.cols, Om.context.q) != (K, K, q):
        raise DimensionError(
            f"Innovations (K={K}, q={q}) do not match a {Om.rows}x{Om.cols} operator matrix on q={Om.context.q}"
        )

    Y = innovations.transpose(1, 0, 2).reshape(T, K * q)
    W = Y @ assemble(Om) @ Y.T

    return 0.5 * (W + W.T) if Om.self_adjoint else W


def eigendecompose(S: GramMatrix, k_max: int = DEFAULT_K_MAX) -> Dict[str, Any]:
    """
    Symmetric eigendecomposition with a reproducible sign convention

    Eigenvector k is flipped so that its inner product with d_k (or with e_1
    when k >= T) is nonnegative.

    Args:
        S: Gram matrix
        k_max: Number of leading eigenvectors to keep

    Returns:
        Dictionary with 'values' (all T, descending) and 'vectors' (T x k_max)
    """
    T = S.T
    if not 1 <= k_max <= T:
        raise DimensionError(f"k_max must lie in [1, {T}], got {k_max}")

    try:
        values, vectors = np.linalg.eigh(S.S)
    except np.linalg.LinAlgError as e:
        raise NumericError(f"Eigendecomposition did not converge: {e}")

    order = np.argsort(values)[::-1]
    values = values[order]
    vectors = vectors[:, order[:k_max]]

    # Sign convention
    for k in range(1, k_max + 1):
        reference = spurious_vector(k, T) if k < T else np.eye(T)[0]
        if np.dot(vectors[:, k - 1], reference) < 0:
            vectors[:, k - 1] *= -1.0

    return {
        'values': values,
        'vectors': vectors
    }
