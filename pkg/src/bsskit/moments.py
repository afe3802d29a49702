"""Second- and fourth-order statistics.

Lagged covariances, the fourth-order cumulant tensor with its unfoldings and
multilinear transform, kurtosis, Hermite polynomials and the truncated
Edgeworth density.  Moment estimators use the 1/(T - lag) convention and
remove the sample mean first.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import DegenerateChannel, DimensionMismatch, InvalidSpec, LagTooLarge

_PERMS4 = list(itertools.permutations(range(4)))

_VAR_FLOOR = 1e-12


def _as_data(U) -> np.ndarray:
    """Accept a SignalMatrix or a bare channels x samples array."""
    data = getattr(U, "data", U)
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D channel matrix, got shape {arr.shape}")
    return arr


def _symmetrize4(values: np.ndarray) -> np.ndarray:
    # Average over all 24 index permutations, then write the single averaged
    # float into every permuted slot so equality across permutations is exact
    # rather than up to rounding.
    N = values.shape[0]
    sym = np.empty_like(values)
    for idx in itertools.combinations_with_replacement(range(N), 4):
        total = 0.0
        for perm in _PERMS4:
            total += values[idx[perm[0]], idx[perm[1]], idx[perm[2]], idx[perm[3]]]
        v = total / 24.0
        for perm in _PERMS4:
            sym[idx[perm[0]], idx[perm[1]], idx[perm[2]], idx[perm[3]]] = v
    return sym


@dataclass(frozen=True)
class Cumulant4Tensor:
    """Super-symmetric fourth-order cumulant tensor (N x N x N x N).

    Symmetry is enforced on construction, so entries at permuted index
    quadruples compare equal exactly.
    """

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=float)
        if arr.ndim != 4 or len(set(arr.shape)) != 1:
            raise DimensionMismatch(f"cumulant tensor must be an N^4 hypercube, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidSpec("cumulant tensor contains non-finite entries")
        arr = _symmetrize4(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class LaggedCovariance:
    """Sample covariance E[u(n) u(n-lag)^T] at one lag."""

    lag: int
    matrix: np.ndarray


def sample_covariance(U, lag: int = 0) -> LaggedCovariance:
    """Mean-removed sample covariance at the given lag.

    Normalizes by the number of summed pairs, T - lag.  The lag-0 result is
    symmetrized so downstream eigensolvers see an exactly symmetric matrix.
    """
    X = _as_data(U)
    T = X.shape[1]
    if lag < 0:
        raise InvalidSpec(f"lag must be nonnegative, got {lag}")
    if lag >= T:
        raise LagTooLarge(f"lag {lag} leaves no pairs in {T} samples")
    X = X - X.mean(axis=1, keepdims=True)
    C = X[:, lag:] @ X[:, : T - lag].T / (T - lag)
    if lag == 0:
        C = (C + C.T) / 2.0
    return LaggedCovariance(lag=lag, matrix=C)


def estimate_cum4(U) -> Cumulant4Tensor:
    """Fourth-order cumulant tensor from sample moments.

    cum(i,j,k,l) = m4(i,j,k,l) - m2(i,j) m2(k,l) - m2(i,k) m2(j,l)
                   - m2(i,l) m2(j,k), with mean-removed sample moments.
    """
    X = _as_data(U)
    T = X.shape[1]
    X = X - X.mean(axis=1, keepdims=True)
    m2 = X @ X.T / T
    m4 = np.einsum("it,jt,kt,lt->ijkl", X, X, X, X, optimize=True) / T
    cum = (
        m4
        - np.einsum("ij,kl->ijkl", m2, m2)
        - np.einsum("ik,jl->ijkl", m2, m2)
        - np.einsum("il,jk->ijkl", m2, m2)
    )
    return Cumulant4Tensor(cum)


def kurtosis(y) -> float:
    """Excess kurtosis of a single channel after standardization."""
    y = np.asarray(y, dtype=float).ravel()
    y = y - y.mean()
    var = float(np.mean(y * y))
    if var <= _VAR_FLOOR:
        raise DegenerateChannel(f"channel variance {var:.3e} below {_VAR_FLOOR:.0e}")
    return float(np.mean(y**4) / (var * var) - 3.0)


def tucker_transform(C: Cumulant4Tensor, G) -> Cumulant4Tensor:
    """Apply G to every mode: out = C x1 G x2 G x3 G x4 G.

    With y = G u this maps the cumulant tensor of u to the cumulant tensor
    of y (multilinearity).  G may be rectangular (P x N).
    """
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[1] != C.dim:
        raise DimensionMismatch(f"mode matrix {G.shape} does not match tensor dim {C.dim}")
    out = np.einsum("abcd,ia,jb,kc,ld->ijkl", C.values, G, G, G, G, optimize=True)
    return Cumulant4Tensor(out)


def tensor_norm(C) -> float:
    """Frobenius norm; invariant under orthogonal tucker_transform."""
    values = C.values if isinstance(C, Cumulant4Tensor) else np.asarray(C, dtype=float)
    return float(np.sqrt(np.sum(values * values)))


def unfold(C: Cumulant4Tensor, grouping: str) -> np.ndarray:
    """Matricize the tensor.

    "1x3": N x N^3 with column index j*N^2 + k*N + l (row-major).
    "2x2": N^2 x N^2 with row index i*N + j and column index k*N + l.
    Both are plain reshapes, so refolding with the inverse reshape is exact.
    """
    N = C.dim
    if grouping == "1x3":
        return C.values.reshape(N, N**3).copy()
    if grouping == "2x2":
        return C.values.reshape(N * N, N * N).copy()
    raise InvalidSpec(f"grouping must be '1x3' or '2x2', got {grouping!r}")


def psi4_contrast(C: Cumulant4Tensor):
    """Split the squared Frobenius mass into diagonal and off-diagonal parts.

    Returns (diag_mass, offdiag_mass); their sum is tensor_norm(C)^2, which
    orthogonal transforms preserve even though the split shifts.
    """
    N = C.dim
    idx = np.arange(N)
    diag = float(np.sum(C.values[idx, idx, idx, idx] ** 2))
    off = float(np.sum(C.values * C.values) - diag)
    return diag, max(off, 0.0)


@lru_cache(maxsize=None)
def _hermite_coeffs(k: int):
    # h_0 = 1, h_1 = y, h_{k+1} = y h_k - h_k'
    coeffs = np.array([1.0])
    for _ in range(k):
        shifted = np.concatenate(([0.0], coeffs))
        deriv = npoly.polyder(coeffs) if len(coeffs) > 1 else np.array([0.0])
        coeffs = npoly.polysub(shifted, deriv)
    return tuple(coeffs)


def hermite(k: int, y):
    """Probabilists' Hermite polynomial h_k evaluated at y."""
    if not isinstance(k, (int, np.integer)) or k < 0:
        raise InvalidSpec(f"hermite order must be a nonnegative integer, got {k!r}")
    y = np.asarray(y, dtype=float)
    val = npoly.polyval(y, np.array(_hermite_coeffs(int(k))))
    return float(val) if val.ndim == 0 else val


def edgeworth_pdf(y, c3: float, c4: float):
    """Truncated Edgeworth expansion around the standard normal.

    p(y) = p_G(y) [1 + c3 h3/3! + c4 h4/4! + 10 c3^2 h6/6!].  For large
    cumulants the truncation can dip below zero; no correction is applied.
    """
    y = np.asarray(y, dtype=float)
    gauss = np.exp(-0.5 * y * y) / np.sqrt(2.0 * np.pi)
    series = (
        1.0
        + c3 * hermite(3, y) / 6.0
        + c4 * hermite(4, y) / 24.0
        + 10.0 * c3 * c3 * hermite(6, y) / 720.0
    )
    out = gauss * series
    return float(out) if out.ndim == 0 else out
