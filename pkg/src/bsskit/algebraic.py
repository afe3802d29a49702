"""Algebraic separation: tensor decompositions of the fourth-order cumulant.

Everything here manipulates the estimated (or exact) cumulant tensor rather
than streaming data: Jacobi rotations that concentrate its mass on the
diagonal, joint diagonalization of eigenmatrices, higher-order EVD and power
method, unconstrained PARAFAC, the two-stage rank-one initializer, and the
constant-modulus solvers built on the same Kronecker-square structure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateSpectrum,
    DimensionMismatch,
    InvalidSpec,
    NotConverged,
    RankDeficient,
    SingularLS,
    ZeroContraction,
    ZeroUpdate,
)
from .moments import Cumulant4Tensor, _as_data, estimate_cum4, tucker_transform, unfold
from .second_order import Separator, Whitener, fix_signs, whiten
from .signals import SignalMatrix, window_stack

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _pair_diag_mass(C: np.ndarray, i: int, j: int, theta: float) -> float:
    # Diagonal mass of the (i, j) pair after a Givens rotation by theta,
    # evaluated from the five pair entries via the quartic multinomial
    # expansion; entries outside the pair keep their diagonal values.
    c, s = math.cos(theta), math.sin(theta)
    t0 = C[i, i, i, i]
    t1 = C[i, i, i, j]
    t2 = C[i, i, j, j]
    t3 = C[i, j, j, j]
    t4 = C[j, j, j, j]
    di = c**4 * t0 + 4 * c**3 * s * t1 + 6 * c * c * s * s * t2 + 4 * c * s**3 * t3 + s**4 * t4
    dj = s**4 * t0 - 4 * s**3 * c * t1 + 6 * s * s * c * c * t2 - 4 * s * c**3 * t3 + c**4 * t4
    return di * di + dj * dj


def _golden_max(fun, lo: float, hi: float, resolution: float = 1e-10) -> float:
    # Coarse grid to land in the right basin, then golden-section refinement
    # down to the angle resolution.
    grid = np.linspace(lo, hi, 65)
    vals = [fun(t) for t in grid]
    best = int(np.argmax(vals))
    a = grid[max(best - 1, 0)]
    b = grid[min(best + 1, len(grid) - 1)]
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = fun(x1), fun(x2)
    while b - a > resolution:
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = fun(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = fun(x1)
    return (a + b) / 2.0


def _givens(N: int, i: int, j: int, theta: float) -> np.ndarray:
    R = np.eye(N)
    c, s = math.cos(theta), math.sin(theta)
    R[i, i] = c
    R[i, j] = s
    R[j, i] = -s
    R[j, j] = c
    return R


def jacobi_diagonalize(C: Cumulant4Tensor, sweep_tolerance: float = 1e-10, max_sweeps: int = 50) -> np.ndarray:
    """Diagonalize a cumulant tensor by pairwise Jacobi rotations.

    For every pair the rotation angle in (-pi/4, pi/4] maximizing the pair's
    diagonal mass is found by a 1-D search; a rotation is applied only when
    it strictly increases the mass.  Sweeps stop when the best available
    single-rotation gain falls below ``sweep_tolerance``.

    Returns the orthogonal demixing rotation Q: tucker_transform(C, Q) is
    the (locally) most diagonal representative.
    """
    N = C.dim
    if N < 2:
        raise InvalidSpec("need at least a 2 x 2 x 2 x 2 tensor")
    Q = np.eye(N)
    current = C
    for _ in range(max_sweeps):
        best_gain = 0.0
        for i in range(N):
            for j in range(i + 1, N):
                V = current.values
                base = _pair_diag_mass(V, i, j, 0.0)
                theta = _golden_max(lambda t: _pair_diag_mass(V, i, j, t), -math.pi / 4, math.pi / 4)
                gain = _pair_diag_mass(V, i, j, theta) - base
                if gain > 0.0:
                    R = _givens(N, i, j, theta)
                    current = tucker_transform(current, R)
                    Q = R @ Q
                    best_gain = max(best_gain, gain)
        if best_gain < sweep_tolerance:
            break
    return Q


def joint_diagonalize(matrices, sweep_tolerance: float = 1e-12, max_sweeps: int = 100) -> np.ndarray:
    """Jointly diagonalize a set of symmetric matrices by Jacobi sweeps.

    Each pair rotation maximizes the summed squared diagonals of the whole
    set in closed form, so the off-diagonal objective never increases.
    Returns orthogonal Q whose columns are the joint eigenvectors:
    Q.T A_k Q is (as nearly as possible) diagonal for every k.
    """
    A = np.array([np.asarray(M, dtype=float) for M in matrices])
    if A.ndim != 3 or A.shape[1] != A.shape[2]:
        raise DimensionMismatch("need a set of square matrices of one size")
    A = (A + A.transpose(0, 2, 1)) / 2.0
    N = A.shape[1]
    Q = np.eye(N)
    for _ in range(max_sweeps):
        rotated = False
        for i in range(N):
            for j in range(i + 1, N):
                h = A[:, i, i] - A[:, j, j]
                o = A[:, i, j] + A[:, j, i]
                ton = float(h @ h - o @ o)
                toff = float(2.0 * (h @ o))
                theta = 0.5 * math.atan2(toff, ton + math.hypot(ton, toff))
                if abs(math.sin(theta)) <= sweep_tolerance:
                    continue
                rotated = True
                c, s = math.cos(theta), math.sin(theta)
                # rows, then columns, of the (i, j) plane for every matrix
                Ai, Aj = A[:, i, :].copy(), A[:, j, :].copy()
                A[:, i, :] = c * Ai + s * Aj
                A[:, j, :] = -s * Ai + c * Aj
                Ai, Aj = A[:, :, i].copy(), A[:, :, j].copy()
                A[:, :, i] = c * Ai + s * Aj
                A[:, :, j] = -s * Ai + c * Aj
                Qi, Qj = Q[:, i].copy(), Q[:, j].copy()
                Q[:, i] = c * Qi + s * Qj
                Q[:, j] = -s * Qi + c * Qj
        if not rotated:
            break
    return fix_signs(Q)


def jade_rotation(C: Cumulant4Tensor) -> np.ndarray:
    """Joint diagonalizer of the N most significant eigenmatrices of C.

    The 2x2 unfolding is eigendecomposed; the N eigenvectors of largest
    magnitude eigenvalue are reshaped to (symmetric) eigenmatrices, weighted
    by their eigenvalues, and jointly diagonalized.
    """
    N = C.dim
    B = unfold(C, "2x2")
    B = (B + B.T) / 2.0
    eigvals, eigvecs = np.linalg.eigh(B)
    order = np.argsort(np.abs(eigvals))[::-1][:N]
    eigenmatrices = []
    for idx in order:
        M = eigvals[idx] * eigvecs[:, idx].reshape(N, N)
        eigenmatrices.append((M + M.T) / 2.0)
    return joint_diagonalize(eigenmatrices)


def jade(U, whitener: Whitener | None = None) -> Separator:
    """Separate sphered data by joint diagonalization of cumulant slices.

    ``U`` must already be sphered; pass the fitted whitener to fold it into
    the returned separator so that it applies to raw sensor data.
    """
    C = estimate_cum4(U)
    Q = jade_rotation(C)
    if whitener is not None:
        return Separator(matrix=Q.T @ whitener.matrix, whitener=whitener)
    return Separator(matrix=Q.T)


def hoevd(C: Cumulant4Tensor):
    """Higher-order EVD: shared factor from the 1x3 unfolding.

    Returns (factor, core) with factor N x N orthogonal (left singular
    vectors, sign-fixed, singular values descending) and
    core = tucker_transform(C, factor.T), so tucker_transform(core, factor)
    reconstructs C.
    """
    M = unfold(C, "1x3")
    left, _, _ = np.linalg.svd(M, full_matrices=False)
    factor = fix_signs(left)
    core = tucker_transform(C, factor.T)
    return factor, core


def hopm(C: Cumulant4Tensor, init=None, max_iterations: int = 500, tolerance: float = 1e-12):
    """Higher-order power method for the dominant symmetric rank-1 term.

    Iterates g <- C . g . g . g (contraction on three modes), normalized
    each step; convergence is on the direction, so eigenvalue sign flips do
    not stall it.  Returns (lambda, g) with lambda = C contracted with g on
    all four modes.
    """
    V = C.values
    if init is None:
        g = hoevd(C)[0][:, 0]
    else:
        g = np.asarray(init, dtype=float).ravel()
        if g.shape != (C.dim,):
            raise DimensionMismatch(f"init has shape {g.shape} for dimension {C.dim}")
        norm = np.linalg.norm(g)
        if norm < 1e-12:
            raise ZeroUpdate("init vector has zero norm")
        g = g / norm
    for _ in range(max_iterations):
        t = np.einsum("ijkl,j,k,l->i", V, g, g, g)
        norm = np.linalg.norm(t)
        if norm < 1e-12:
            raise ZeroContraction(f"contraction norm {norm:.3e} vanished")
        g_new = t / norm
        if 1.0 - abs(float(g_new @ g)) < tolerance:
            g = g_new if g_new[int(np.argmax(np.abs(g_new)))] >= 0 else -g_new
            lam = float(np.einsum("ijkl,i,j,k,l->", V, g, g, g, g))
            return lam, g
        g = g_new
    raise NotConverged(f"power method did not settle in {max_iterations} iterations")


@dataclass(frozen=True)
class ParafacFactors:
    """Symmetric CP description: unit-norm factor columns plus weights.

    The reconstruction sum_j weights[j] * h_j (x) h_j (x) h_j (x) h_j uses
    column j of ``factor``.  ``converged`` is False when the cycle limit was
    hit; ``error_trajectory`` holds the unconstrained four-factor fit error
    after each completed cycle.
    """

    factor: np.ndarray
    weights: np.ndarray
    converged: bool = True
    error_trajectory: tuple = ()

    def reconstruction(self) -> np.ndarray:
        H = self.factor
        return np.einsum("j,ij,kj,lj,mj->iklm", self.weights, H, H, H, H)


def _khatri_rao(mats):
    out = mats[0]
    for M in mats[1:]:
        out = (out[:, None, :] * M[None, :, :]).reshape(-1, M.shape[1])
    return out


def kruskal_check(M: int, N: int) -> bool:
    """Uniqueness bound for N symmetric rank-1 terms in dimension M: 4M >= 2N + 3."""
    if not (isinstance(M, (int, np.integer)) and isinstance(N, (int, np.integer))):
        raise InvalidSpec("dimensions must be integers")
    if M < 1 or N < 1:
        raise InvalidSpec(f"dimensions must be positive, got M={M}, N={N}")
    return 4 * M >= 2 * N + 3


def parafac_als(C: Cumulant4Tensor, r: int, init: ParafacFactors | None = None,
                max_iterations: int = 200, tolerance: float = 1e-10) -> ParafacFactors:
    """Unconstrained 4-mode alternating least squares, rank ``r``.

    The four factor matrices evolve independently (symmetry is not imposed)
    and are folded into a symmetric description at the end: columns of the
    mode-1 factor are normalized and the weights refitted by least squares
    on the symmetrized dictionary.  Initialized from the truncated HO-EVD
    factor unless ``init`` is given.
    """
    N = C.dim
    if not (1 <= r <= N):
        raise InvalidSpec(f"rank must lie in 1..{N}, got {r}")
    if init is None:
        base = hoevd(C)[0][:, :r]
    else:
        base = np.asarray(init.factor, dtype=float)[:, :r]
        if base.shape != (N, r):
            raise DimensionMismatch(f"init factor {init.factor.shape} does not fit (N={N}, r={r})")
    factors = [base.copy() for _ in range(4)]
    V = C.values
    norm_c = np.linalg.norm(V)
    errors = []
    prev_err = None
    converged = False
    for _ in range(max_iterations):
        for mode in range(4):
            others = [factors[m] for m in range(4) if m != mode]
            gram = np.ones((r, r))
            for A in others:
                gram = gram * (A.T @ A)
            if np.linalg.cond(gram) > 1e12:
                raise SingularLS("factor Gram product is numerically singular")
            axes = [mode] + [m for m in range(4) if m != mode]
            unfolded = np.transpose(V, axes).reshape(N, N**3)
            Z = _khatri_rao(others)
            factors[mode] = unfolded @ Z @ np.linalg.inv(gram)
        recon = np.einsum("ir,jr,kr,lr->ijkl", *factors)
        err = float(np.linalg.norm(V - recon))
        errors.append(err)
        if prev_err is not None and abs(prev_err - err) <= tolerance * max(1.0, norm_c):
            converged = True
            break
        prev_err = err

    H = factors[0].copy()
    norms = np.linalg.norm(H, axis=0)
    if np.any(norms < 1e-12):
        raise SingularLS("a factor column collapsed to zero")
    H = H / norms
    H = fix_signs(H)
    gram = (H.T @ H) ** 4
    rhs = np.einsum("ijkl,ir,jr,kr,lr->r", V, H, H, H, H)
    if np.linalg.cond(gram) > 1e12:
        raise SingularLS("symmetrized dictionary is numerically singular")
    weights = np.linalg.solve(gram, rhs)
    return ParafacFactors(factor=H, weights=weights, converged=converged,
                          error_trajectory=tuple(errors))


@dataclass(frozen=True)
class Rank1Init:
    """Two-stage rank-one initialization of a kurtosis search.

    eigenvalue: dominant-magnitude eigenvalue of the 2x2 unfolding.
    matrix:     its eigenvector reshaped and symmetrized (the W matrix).
    varsigma:   dominant-magnitude eigenvalue of that matrix.
    g0:         the corresponding unit eigenvector, the initial separator.
    """

    g0: np.ndarray
    eigenvalue: float
    varsigma: float
    matrix: np.ndarray


def rank1_init(C: Cumulant4Tensor) -> Rank1Init:
    """Initialize a one-unit search from the cumulant unfolding.

    Takes the dominant-magnitude eigenvector of the symmetrized 2x2
    unfolding, reshapes it into the symmetric W, and reads the initial
    separator off W's dominant eigenvector.  The dominant eigenvalue must be
    isolated: a tie (within 1e-8 in magnitude) leaves the eigenvector, and
    hence the initialization, undetermined.
    """
    N = C.dim
    B = unfold(C, "2x2")
    B = (B + B.T) / 2.0
    eigvals, eigvecs = np.linalg.eigh(B)
    order = np.argsort(np.abs(eigvals))[::-1]
    if len(order) > 1 and abs(abs(eigvals[order[0]]) - abs(eigvals[order[1]])) < 1e-8:
        raise DegenerateSpectrum(
            f"two leading unfolding eigenvalues have magnitudes "
            f"{abs(eigvals[order[0]]):.6e} and {abs(eigvals[order[1]]):.6e}"
        )
    lam = float(eigvals[order[0]])
    w = fix_signs(eigvecs[:, order[0]][:, None])[:, 0]
    W = w.reshape(N, N)
    W = (W + W.T) / 2.0
    wvals, wvecs = np.linalg.eigh(W)
    widx = int(np.argmax(np.abs(wvals)))
    varsigma = float(wvals[widx])
    g0 = fix_signs(wvecs[:, widx][:, None])[:, 0]
    return Rank1Init(g0=g0, eigenvalue=lam, varsigma=varsigma, matrix=W)


def _cum_unfolding_power(X: np.ndarray, iterations: int = 16):
    # Dominant-magnitude eigenmatrix of the cumulant 2x2 unfolding of
    # sphered data, via iteration on the implicit operator
    #   V -> E[(u^T V u) u u^T] - tr(V) I - 2 V,
    # which never materializes the K^4 tensor.  For i.i.d. finite-alphabet
    # window content the operator is -|c4| times the source-coordinate
    # diagonal of V, so its extremal eigenspace is massively degenerate and
    # plain power iteration cannot pick a member.  Each operator step is
    # therefore followed by a matrix squaring: V @ V stays inside that
    # eigenspace while squaring the hidden diagonal profile, so the iterate
    # collapses onto a single rank-one vertex at double-exponential rate.
    K, T = X.shape
    x0 = X[:, 0]
    V = np.outer(x0, x0)  # anisotropic start; its hidden profile has a generic argmax
    norm = np.linalg.norm(V)
    if norm < 1e-15:
        raise ZeroContraction("leading window is zero")
    V /= norm
    lam = 0.0
    for _ in range(iterations):
        s = np.einsum("it,ij,jt->t", X, V, X, optimize=True)
        W = (X * s) @ X.T / T
        W -= np.trace(V) * np.eye(K) + 2.0 * V
        W = (W + W.T) / 2.0
        norm = np.linalg.norm(W)
        if norm < 1e-15:
            raise ZeroContraction("cumulant operator annihilated the iterate")
        lam = float(np.sum(V * W))
        V = W @ W
        V /= np.linalg.norm(V)
    return lam, V


@dataclass(frozen=True)
class UnimodalResult:
    """Outcome of the online constant-modulus eigenvector search.

    g and W live in the sphered window coordinates defined by ``whitener``;
    trajectory holds g after each epoch.  max_g_norm_dev and
    max_w_asymmetry are running diagnostics of the invariants the recursion
    is supposed to keep (unit norm, exact symmetry).
    """

    g: np.ndarray
    trajectory: tuple
    W: np.ndarray
    whitener: Whitener
    window_length: int
    eigenvalue: float
    max_g_norm_dev: float
    max_w_asymmetry: float

    def outputs(self, U) -> np.ndarray:
        """Equalizer output sequence for a raw sensor stream."""
        windows = window_stack(U if isinstance(U, SignalMatrix) else SignalMatrix(U), self.window_length)
        return self.g @ self.whitener.apply(windows).data


def unimodal_equalizer(U, mu1: float, mu2: float, L: int, epochs: int = 1,
                       init: str = "fourth_order") -> UnimodalResult:
    """Blind equalization via the approximate-contrast eigenvector recursion.

    The sensor stream is stacked into depth-L windows and sphered; then, per
    window u:

        W <- W + [mu1 / (1 + mu1 ||u (x) u||^2)] (1 - u^T W u) u u^T
        g <- (g + mu2 W g) / ||g + mu2 W g||

    W estimates the matrix whose quadratic form approximates the normalized
    kurtosis contrast, and g climbs it like a power iteration.  With
    ``init="fourth_order"`` W starts from the fourth-order initialization:
    an extremal eigenmatrix of the cumulant unfolding, driven to a rank-one
    member of its (degenerate) eigenspace and scaled so the modulus target
    matches.  That vertex is an exact fixed point of the W recursion for
    unit-modulus window content, so the online updates hold it in place.
    ``init="zero"`` starts the recursion bare.
    """
    # mu2 = 0 is allowed: it freezes g and leaves only the W fit running
    if mu1 <= 0 or mu2 < 0:
        raise InvalidSpec("need mu1 > 0 and mu2 >= 0")
    if epochs < 1:
        raise InvalidSpec("epochs must be at least 1")
    if init not in ("fourth_order", "zero"):
        raise InvalidSpec(f"init must be 'fourth_order' or 'zero', got {init!r}")
    stream = U if isinstance(U, SignalMatrix) else SignalMatrix(U)
    windows = window_stack(stream, L)
    whitener, sphered = whiten(windows)
    X = sphered.data
    K, T = X.shape

    lam0 = float("nan")
    if init == "fourth_order":
        lam0, V = _cum_unfolding_power(X)
        tr = np.trace(V)
        if abs(tr) < 1e-9 * np.linalg.norm(V):
            W = V / np.linalg.norm(V)
        else:
            W = V / tr  # E[u^T W u] = tr(W) = 1 on sphered data
    else:
        W = np.zeros((K, K))

    g = np.zeros(K)
    g[0] = 1.0
    outer_buf = np.empty((K, K))
    max_norm_dev = 0.0
    max_asym = 0.0
    trajectory = []
    check_stride = 251  # symmetry is exact by construction; spot-check anyway
    step = 0
    for _ in range(epochs):
        for t in range(T):
            u = X[:, t]
            Wu = W @ u
            err = 1.0 - float(u @ Wu)
            nu4 = float(u @ u) ** 2
            gain = mu1 / (1.0 + mu1 * nu4)
            np.outer(u, u, out=outer_buf)
            outer_buf *= gain * err
            W += outer_buf
            g_plus = g + mu2 * (W @ g)
            norm = float(np.linalg.norm(g_plus))
            if norm < 1e-12:
                raise ZeroUpdate("equalizer vector vanished")
            g = g_plus / norm
            max_norm_dev = max(max_norm_dev, abs(float(np.linalg.norm(g)) - 1.0))
            if step % check_stride == 0:
                max_asym = max(max_asym, float(np.max(np.abs(W - W.T))))
            step += 1
        trajectory.append(g.copy())
        max_asym = max(max_asym, float(np.max(np.abs(W - W.T))))
    return UnimodalResult(
        g=g,
        trajectory=tuple(trajectory),
        W=W,
        whitener=whitener,
        window_length=L,
        eigenvalue=lam0,
        max_g_norm_dev=max_norm_dev,
        max_w_asymmetry=max_asym,
    )


@dataclass(frozen=True)
class DetCmResult:
    """Constant-modulus block solution.

    residual is the RMS of g' u u' g - 1 over the block; a large value
    flags that no constant-modulus output exists for this data (for
    instance, Gaussian input).
    """

    g: np.ndarray
    matrix: np.ndarray
    residual: float
    rank: int


def deterministic_cm(U, max_refinements: int = 200) -> DetCmResult:
    """Solve the constant-modulus equations on a data block.

    Builds P with rows (u (x) u)^T and solves P w = 1 in the least-squares
    sense, then extracts g from the dominant eigenpair of the symmetrized
    reshape of w, scaled so the output has unit modulus:
    g = sqrt(|eig|) v.

    Finite-alphabet inputs excite strictly fewer than N(N+1)/2 independent
    regressors (binary sources reach only 1 + N(N-1)/2), which leaves the
    least-squares solution set an affine family whose minimum-norm member
    sits between the separating vertices.  The Kronecker-square
    approximation is therefore refined in two stages: alternating
    projections between the solution family and the symmetric rank-one
    matrices walk toward a vertex, then a damped Gauss-Newton descent of
    the block modulus error sum((g'u)^2 - 1)^2 finishes the job (the
    Jacobian rows 2 y_t u_t' make each step one linear solve).  With a
    unique LS solution both stages are no-ops.  Raises RankDeficient below
    the binary-excitation rank 1 + N(N-1)/2.
    """
    X = _as_data(U)
    N, T = X.shape
    P = (X[:, None, :] * X[None, :, :]).reshape(N * N, T).T
    ones = np.ones(T)
    left, svals, right_t = np.linalg.svd(P, full_matrices=False)
    tol = max(P.shape) * np.finfo(float).eps * (svals[0] if svals.size else 0.0)
    rank = int(np.sum(svals > tol))
    min_rank = 1 + N * (N - 1) // 2
    if rank < min_rank:
        raise RankDeficient(f"regressor rank {rank} below identifiable minimum {min_rank}")
    # minimum-norm LS solution and the row-space projector
    inv_s = np.zeros_like(svals)
    inv_s[:rank] = 1.0 / svals[:rank]
    w0 = right_t.T @ (inv_s * (left.T @ ones))
    rowspace = right_t[:rank].T  # N^2 x rank, orthonormal columns

    w = w0
    for _ in range(50):
        W = w.reshape(N, N)
        W = (W + W.T) / 2.0
        eigvals, eigvecs = np.linalg.eigh(W)
        k = int(np.argmax(np.abs(eigvals)))
        R = eigvals[k] * np.outer(eigvecs[:, k], eigvecs[:, k])
        x = R.reshape(N * N)
        # project back onto the LS solution set: keep the row-space
        # component of w0, move freely in the null space
        w_new = x + rowspace @ (rowspace.T @ (w0 - x))
        if np.linalg.norm(w_new - w) < 1e-15 * max(1.0, np.linalg.norm(w)):
            w = w_new
            break
        w = w_new

    W = w.reshape(N, N)
    W = (W + W.T) / 2.0
    eigvals, eigvecs = np.linalg.eigh(W)
    k = int(np.argmax(np.abs(eigvals)))
    v = fix_signs(eigvecs[:, k][:, None])[:, 0]
    g = math.sqrt(abs(float(eigvals[k]))) * v

    damping = 1e-10
    y = g @ X
    errs = y * y - 1.0
    cost = float(errs @ errs)
    for _ in range(max_refinements):
        if cost < 1e-28:
            break
        jac = 2.0 * (y[None, :] * X)  # columns 2 y_t u_t
        gram = jac @ jac.T
        grad = jac @ errs
        accepted = False
        while damping < 1e12:
            step = np.linalg.solve(gram + damping * np.eye(N), grad)
            g_try = g - step
            y_try = g_try @ X
            errs_try = y_try * y_try - 1.0
            cost_try = float(errs_try @ errs_try)
            if cost_try < cost:
                g, y, errs, cost = g_try, y_try, errs_try, cost_try
                damping = max(damping * 0.1, 1e-12)
                accepted = True
                break
            damping *= 10.0
        if not accepted:
            break

    g = fix_signs(g[:, None])[:, 0]
    residual = float(np.linalg.norm((g @ X) ** 2 - 1.0) / math.sqrt(T))
    # report the quadratic form actually attained, kept inside the LS family
    w_final = np.outer(g, g).reshape(N * N)
    w_final = w_final + rowspace @ (rowspace.T @ (w0 - w_final))
    W = w_final.reshape(N, N)
    W = (W + W.T) / 2.0
    return DetCmResult(g=g, matrix=W, residual=residual, rank=rank)
