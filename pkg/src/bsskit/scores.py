"""Score functions: the per-channel nonlinearities driving the separators.

A score f is minus the log-derivative of the channel's density model, so a
closed-form log_phi exists whenever the density is explicit.  f and fprime
are pure; the kurtosis-tracking score mutates its running estimate only
through an explicit update() call, so gradient checks see a frozen function.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidSpec

SCORE_KINDS = ("cubic", "tanh", "sign_switching")


class ScoreFunction:
    """Interface: f(y), fprime(y), optional log_phi(y), update(y)."""

    kind = "base"
    has_log_phi = False

    def f(self, y):
        raise NotImplementedError

    def fprime(self, y):
        raise NotImplementedError

    def log_phi(self, y):
        raise InvalidSpec(f"score {self.kind!r} has no closed-form log-density")

    def update(self, y):
        """Feed data to state-tracking scores; a no-op for fixed ones."""


class CubicScore(ScoreFunction):
    """f(y) = y^3, the model density exp(-y^4/4) up to normalization."""

    kind = "cubic"
    has_log_phi = True

    def f(self, y):
        y = np.asarray(y, dtype=float)
        return y**3

    def fprime(self, y):
        y = np.asarray(y, dtype=float)
        return 3.0 * y * y

    def log_phi(self, y):
        y = np.asarray(y, dtype=float)
        return -0.25 * y**4


class TanhScore(ScoreFunction):
    """f(y) = tanh(y), the model density 1/cosh(y) up to normalization."""

    kind = "tanh"
    has_log_phi = True

    def f(self, y):
        return np.tanh(y)

    def fprime(self, y):
        t = np.tanh(y)
        return 1.0 - t * t

    def log_phi(self, y):
        # -log cosh(y), computed via |y| to avoid overflow for large y.
        y = np.asarray(y, dtype=float)
        return -(np.abs(y) + np.log1p(np.exp(-2.0 * np.abs(y))) - np.log(2.0))


class SignSwitchingScore(ScoreFunction):
    """f(y) = sign(c4_hat) * y^3 with an exponentially forgotten kurtosis.

    The sign selects between climbing and descending the fourth-moment
    contrast, which is how one-unit searches pick the right extremum per
    channel.  No closed-form density exists once the sign can flip.
    """

    kind = "sign_switching"
    has_log_phi = False

    def __init__(self, forgetting: float = 0.99):
        if not (0.0 < forgetting < 1.0):
            raise InvalidSpec(f"forgetting factor must lie in (0, 1), got {forgetting}")
        self.forgetting = forgetting
        self.m2 = 1.0
        self.m4 = 3.0  # gaussian start: estimated kurtosis 0, sign resolves to +1

    @property
    def kurtosis_sign(self) -> float:
        c4 = self.m4 / (self.m2 * self.m2) - 3.0
        return -1.0 if c4 < 0 else 1.0

    def update(self, y):
        y = np.asarray(y, dtype=float).ravel()
        lam = self.forgetting
        # Sequential exponential forgetting over the batch, evaluated in
        # closed form: weight lam^(T-1-t) * (1-lam) on sample t.
        T = y.size
        if T == 0:
            return
        w = (1.0 - lam) * lam ** np.arange(T - 1, -1, -1, dtype=float)
        self.m2 = lam**T * self.m2 + float(w @ (y * y))
        self.m4 = lam**T * self.m4 + float(w @ (y**4))

    def f(self, y):
        y = np.asarray(y, dtype=float)
        return self.kurtosis_sign * y**3

    def fprime(self, y):
        y = np.asarray(y, dtype=float)
        return self.kurtosis_sign * 3.0 * y * y


def make_score(kind: str, **kwargs) -> ScoreFunction:
    """Instantiate a score by name; each call returns independent state."""
    if kind == "cubic":
        return CubicScore()
    if kind == "tanh":
        return TanhScore()
    if kind == "sign_switching":
        return SignSwitchingScore(**kwargs)
    raise InvalidSpec(f"unknown score kind {kind!r}; choose from {SCORE_KINDS}")
