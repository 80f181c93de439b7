"""Temporal denoisers for privatized gradient streams.

Three filters share a common stepping interface:

* ``InnovationFilter`` -- smooths the residual nu_t = g_t - g~_{t-1} and
  integrates it, a tied-gain alpha-beta recursion (the production path).
* ``EmaFilter`` -- first-order exponential smoothing of the gradient state.
* ``AlphaBetaKalman`` -- the full time-varying constant-velocity Kalman
  filter with its Riccati covariance recursion (diagnostics only).

All filters start from zero state; coordinates are independent.
"""

from dataclasses import dataclass

import numpy as np

from fiberopt import _backend
from fiberopt.errors import ConvergenceFailure, DimensionMismatch, InvalidParameter


def _check_gain(value, name):
    if not 0.0 < value <= 1.0:
        raise InvalidParameter(f"{name} must be in (0,1], got {value}")


class InnovationFilter:
    """Second-order residual filter: r <- (1-w)r + w*nu, g~ <- g~ + r."""

    def __init__(self, dim: int, omega: float):
        _check_gain(omega, "omega")
        self.omega = omega
        self.g_tilde = np.zeros(dim)
        self.r = np.zeros(dim)

    @property
    def dim(self) -> int:
        return self.g_tilde.shape[0]

    def step(self, g: np.ndarray) -> np.ndarray:
        g = np.asarray(g, dtype=np.float64)
        if g.shape != self.g_tilde.shape:
            raise DimensionMismatch(f"expected shape {self.g_tilde.shape}, got {g.shape}")
        nu = g - self.g_tilde
        self.r = (1.0 - self.omega) * self.r + self.omega * nu
        self.g_tilde = self.g_tilde + self.r
        return self.g_tilde.copy()

    def process(self, g_seq: np.ndarray) -> np.ndarray:
        """Filter a whole (T, dim) block (hot path, runs the scan kernel)."""
        g_seq = np.ascontiguousarray(g_seq, dtype=np.float64)
        if g_seq.ndim != 2 or g_seq.shape[1] != self.dim:
            raise DimensionMismatch(f"expected (T, {self.dim}) block, got {g_seq.shape}")
        return _backend.innovation_scan(g_seq, self.omega, self.g_tilde, self.r)


class EmaFilter:
    """First-order smoothing g~ <- (1-k)g~ + k*g (DiSK's gradient-state filter)."""

    def __init__(self, dim: int, kappa: float):
        _check_gain(kappa, "kappa")
        self.kappa = kappa
        self.g_tilde = np.zeros(dim)

    @property
    def dim(self) -> int:
        return self.g_tilde.shape[0]

    def step(self, g: np.ndarray) -> np.ndarray:
        g = np.asarray(g, dtype=np.float64)
        if g.shape != self.g_tilde.shape:
            raise DimensionMismatch(f"expected shape {self.g_tilde.shape}, got {g.shape}")
        self.g_tilde = (1.0 - self.kappa) * self.g_tilde + self.kappa * g
        return self.g_tilde.copy()

    def process(self, g_seq: np.ndarray) -> np.ndarray:
        g_seq = np.ascontiguousarray(g_seq, dtype=np.float64)
        if g_seq.ndim != 2 or g_seq.shape[1] != self.dim:
            raise DimensionMismatch(f"expected (T, {self.dim}) block, got {g_seq.shape}")
        return _backend.ema_scan(g_seq, self.kappa, self.g_tilde)


@dataclass
class RiccatiState:
    """Posterior covariance entries of the constant-velocity Kalman filter."""

    p: float = 0.0
    c: float = 0.0
    qp: float = 0.0


class AlphaBetaKalman:
    """Scalar constant-velocity Kalman filter in alpha-beta form.

    Tracks level s and drift r per observation stream; the covariance
    follows the discrete Riccati recursion, so the gains are time-varying
    until they settle at their stationary values.
    """

    def __init__(self, sigma_s2: float, sigma_r2: float, sigma_w2: float):
        if sigma_w2 <= 0.0:
            raise InvalidParameter(f"sigma_w2 must be > 0, got {sigma_w2}")
        if sigma_s2 < 0.0 or sigma_r2 < 0.0:
            raise InvalidParameter("process noise variances must be >= 0")
        self.sigma_s2 = sigma_s2
        self.sigma_r2 = sigma_r2
        self.sigma_w2 = sigma_w2
        self.s_hat = 0.0
        self.r_hat = 0.0
        self.cov = RiccatiState()
        self.alpha = 0.0
        self.beta = 0.0

    def step(self, g: float):
        """One predict/correct cycle; returns (s_hat, alpha, beta)."""
        cov = self.cov
        # predict
        p_m = cov.p + 2.0 * cov.c + cov.qp + self.sigma_s2
        c_m = cov.c + cov.qp
        qp_m = cov.qp + self.sigma_r2
        s_pred = self.s_hat + self.r_hat
        # gains
        s_innov = p_m + self.sigma_w2
        self.alpha = p_m / s_innov
        self.beta = c_m / s_innov
        # correct
        e = g - s_pred
        self.s_hat = s_pred + self.alpha * e
        self.r_hat = self.r_hat + self.beta * e
        cov.p = (self.sigma_w2 / s_innov) * p_m
        cov.c = (self.sigma_w2 / s_innov) * c_m
        cov.qp = qp_m - c_m**2 / s_innov
        return self.s_hat, self.alpha, self.beta

    def covariance_matrix(self) -> np.ndarray:
        return np.array([[self.cov.p, self.cov.c], [self.cov.c, self.cov.qp]])


class AlphaBetaKalmanVector:
    """Coordinate-wise alpha-beta filter sharing one covariance recursion.

    The Riccati recursion depends only on the noise variances, so all
    coordinates see identical gains.
    """

    def __init__(self, dim: int, sigma_s2: float, sigma_r2: float, sigma_w2: float):
        self._gains = AlphaBetaKalman(sigma_s2, sigma_r2, sigma_w2)
        self.s_hat = np.zeros(dim)
        self.r_hat = np.zeros(dim)

    def step(self, g: np.ndarray):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != self.s_hat.shape:
            raise DimensionMismatch(f"expected shape {self.s_hat.shape}, got {g.shape}")
        _, alpha, beta = self._gains.step(0.0)
        s_pred = self.s_hat + self.r_hat
        e = g - s_pred
        self.s_hat = s_pred + alpha * e
        self.r_hat = self.r_hat + beta * e
        return self.s_hat.copy(), alpha, beta


def steady_state_gains(sigma_s2: float, sigma_r2: float, sigma_w2: float,
                       tol: float = 1e-12, max_iter: int = 10**6, cov0=None):
    """Stationary (alpha, beta) of the constant-velocity Riccati recursion.

    Iterates from the given PSD initialization (default zero covariance)
    until successive gains move by less than tol.
    """
    if sigma_w2 <= 0.0:
        raise InvalidParameter(f"sigma_w2 must be > 0, got {sigma_w2}")
    filt = AlphaBetaKalman(sigma_s2, sigma_r2, sigma_w2)
    if cov0 is not None:
        filt.cov = RiccatiState(*cov0)
    prev = (np.inf, np.inf)
    for _ in range(max_iter):
        filt.step(0.0)
        gains = (filt.alpha, filt.beta)
        if abs(gains[0] - prev[0]) < tol and abs(gains[1] - prev[1]) < tol:
            return gains
        prev = gains
    raise ConvergenceFailure("Riccati recursion did not converge")


def impulse_response(filt, n: int) -> np.ndarray:
    """Output of a freshly initialized filter fed a unit impulse then zeros."""
    x = np.zeros((n, 1))
    x[0, 0] = 1.0
    return filt.process(x)[:, 0]
