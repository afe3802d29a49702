"""Synthetic source generation and linear mixing.

Sources are zero-mean, unit-variance, mutually independent channels arranged
as the rows of a channels x samples matrix.  Mixing models cover static,
noisy-static and convolutive (FIR) channels, plus the block-Toeplitz lifting
that turns a convolutive problem into a tall static one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidSpec

SOURCE_KINDS = ("bpsk", "uniform", "laplace", "gaussian", "ar1")

_AR_BURN_IN = 1000


@dataclass(frozen=True)
class SourceSpec:
    """One source channel: distribution family, optional AR pole, seed."""

    kind: str
    ar_coefficient: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SOURCE_KINDS:
            raise InvalidSpec(f"unknown source kind {self.kind!r}")
        if self.kind == "ar1":
            rho = self.ar_coefficient
            if rho is None or not (-1.0 < rho < 1.0):
                raise InvalidSpec("ar1 needs ar_coefficient in (-1, 1)")
        elif self.ar_coefficient is not None:
            raise InvalidSpec(f"ar_coefficient is only valid for ar1, not {self.kind!r}")
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise InvalidSpec("seed must be a nonnegative integer")


@dataclass(frozen=True)
class SignalMatrix:
    """A bundle of synchronous channels, one row per channel.

    ``transient_prefix`` marks how many leading samples are start-up
    transient (nonzero only for convolutive outputs).  The data array is
    frozen after construction.
    """

    data: np.ndarray
    transient_prefix: int = 0

    def __post_init__(self):
        arr = np.array(self.data, dtype=float, order="C")
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionMismatch(f"signal data must be 2-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidSpec("signal data contains non-finite entries")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def channel_count(self) -> int:
        return self.data.shape[0]

    @property
    def sample_count(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class MixingModel:
    """Static, noisy-static or convolutive mixing channel.

    variant: "static" uses ``matrix`` alone; "noisy" adds white Gaussian
    sensor noise of standard deviation ``noise_std`` drawn from the
    ``noise_seed`` substream; "convolutive" applies the FIR taps
    ``taps[0] .. taps[order]``.
    """

    variant: str
    matrix: np.ndarray | None = None
    noise_std: float = 0.0
    noise_seed: int = 0
    taps: tuple = field(default=())

    def __post_init__(self):
        if self.variant not in ("static", "noisy", "convolutive"):
            raise InvalidSpec(f"unknown mixing variant {self.variant!r}")
        if self.variant in ("static", "noisy"):
            if self.matrix is None:
                raise InvalidSpec(f"{self.variant} mixing needs a matrix")
            H = np.array(self.matrix, dtype=float)
            if H.ndim != 2:
                raise DimensionMismatch("mixing matrix must be 2-D")
            object.__setattr__(self, "matrix", H)
            if self.variant == "noisy" and self.noise_std < 0:
                raise InvalidSpec("noise_std must be nonnegative")
        else:
            taps = tuple(np.array(Hk, dtype=float) for Hk in self.taps)
            if not taps:
                raise InvalidSpec("convolutive mixing needs at least one tap")
            shape = taps[0].shape
            if len(shape) != 2 or any(Hk.shape != shape for Hk in taps):
                raise DimensionMismatch("all taps must share one M x N shape")
            object.__setattr__(self, "taps", taps)

    @property
    def order(self) -> int:
        """FIR order (number of taps minus one); 0 for static variants."""
        return len(self.taps) - 1 if self.variant == "convolutive" else 0


def _channel_rng(spec: SourceSpec, channel: int) -> np.random.Generator:
    # Substream keyed by (seed, channel index): identical specs on different
    # rows still get independent streams, and runs are reproducible.
    return np.random.default_rng([spec.seed, channel])


def _draw(spec: SourceSpec, T: int, rng: np.random.Generator) -> np.ndarray:
    if spec.kind == "bpsk":
        return rng.integers(0, 2, size=T).astype(float) * 2.0 - 1.0
    if spec.kind == "uniform":
        half = math.sqrt(3.0)
        return rng.uniform(-half, half, size=T)
    if spec.kind == "laplace":
        # Inverse-CDF transform at scale 1/sqrt(2) for unit variance.  The
        # uniform draw is clipped away from 0 so the log stays finite.
        b = 1.0 / math.sqrt(2.0)
        u = rng.random(T)
        u = np.clip(u, np.finfo(float).tiny, None)
        return np.where(u < 0.5, b * np.log(2.0 * u), -b * np.log(np.clip(2.0 * (1.0 - u), np.finfo(float).tiny, None)))
    if spec.kind == "gaussian":
        return rng.standard_normal(T)
    # ar1: unit-variance stationary AR(1) with Gaussian innovations.
    rho = spec.ar_coefficient
    innov_std = math.sqrt(1.0 - rho * rho)
    e = rng.standard_normal(T + _AR_BURN_IN) * innov_std
    x = np.empty(T + _AR_BURN_IN)
    prev = 0.0
    for n in range(T + _AR_BURN_IN):
        prev = rho * prev + e[n]
        x[n] = prev
    return x[_AR_BURN_IN:]


def generate_sources(specs, T: int) -> SignalMatrix:
    """Draw ``T`` samples of every source in ``specs``.

    Parameters
    ----------
    specs : sequence of SourceSpec
        One entry per channel.
    T : int
        Sample count, at least 1.

    Returns
    -------
    SignalMatrix
        ``len(specs)`` x ``T``; channels are mutually independent and have
        zero mean and unit variance in expectation.
    """
    if T < 1:
        raise InvalidSpec(f"sample count must be positive, got {T}")
    specs = list(specs)
    if not specs:
        raise InvalidSpec("need at least one source spec")
    rows = [_draw(spec, T, _channel_rng(spec, i)) for i, spec in enumerate(specs)]
    return SignalMatrix(np.vstack(rows))


def convolve_mimo(taps, A: SignalMatrix) -> SignalMatrix:
    """FIR-filter the source matrix: u(n) = sum_k H_k a(n - k).

    Prehistory is zero, so the first ``order`` output samples are start-up
    transient; they are kept but flagged via ``transient_prefix``.
    """
    taps = [np.asarray(Hk, dtype=float) for Hk in taps]
    M, N = taps[0].shape
    if N != A.channel_count:
        raise DimensionMismatch(f"taps expect {N} sources, signal has {A.channel_count}")
    T = A.sample_count
    out = np.zeros((M, T))
    for k, Hk in enumerate(taps):
        if k >= T:
            break
        out[:, k:] += Hk @ A.data[:, : T - k]
    return SignalMatrix(out, transient_prefix=len(taps) - 1)


def mix(model: MixingModel, A: SignalMatrix) -> SignalMatrix:
    """Pass sources through a mixing model and return the sensor signals."""
    if model.variant == "convolutive":
        return convolve_mimo(model.taps, A)
    H = model.matrix
    if H.shape[1] != A.channel_count:
        raise DimensionMismatch(f"mixing matrix expects {H.shape[1]} sources, signal has {A.channel_count}")
    U = H @ A.data
    if model.variant == "noisy" and model.noise_std > 0:
        rng = np.random.default_rng([model.noise_seed, 0x6E])
        U = U + model.noise_std * rng.standard_normal(U.shape)
    return SignalMatrix(U)


def lift_convolutive(taps, L: int) -> np.ndarray:
    """Block-Toeplitz lifting of an FIR channel to a static matrix.

    Stacking L consecutive sensor vectors gives a static model whose input
    is the last L + order source vectors; the lifted matrix is
    (M*L) x (N*(L+order)) with block row r carrying H_0 .. H_order starting
    at block column r.
    """
    if L < 1:
        raise InvalidSpec(f"window length must be positive, got {L}")
    taps = [np.asarray(Hk, dtype=float) for Hk in taps]
    M, N = taps[0].shape
    order = len(taps) - 1
    lifted = np.zeros((M * L, N * (L + order)))
    for r in range(L):
        for k, Hk in enumerate(taps):
            c = r + k
            lifted[r * M : (r + 1) * M, c * N : (c + 1) * N] = Hk
    return lifted


def window_stack(U: SignalMatrix, L: int) -> np.ndarray:
    """Sliding windows of depth L, newest sample on top.

    Column n of the result is [u(n); u(n-1); ...; u(n-L+1)] for
    n = L-1 .. T-1, matching the lifted model's row convention.
    """
    if L < 1:
        raise InvalidSpec(f"window length must be positive, got {L}")
    if L > U.sample_count:
        raise DimensionMismatch("window length exceeds sample count")
    M, T = U.data.shape
    cols = T - L + 1
    out = np.empty((M * L, cols))
    for d in range(L):
        out[d * M : (d + 1) * M, :] = U.data[:, L - 1 - d : T - d]
    return out
