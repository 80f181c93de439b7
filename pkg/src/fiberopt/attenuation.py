"""DP-noise variance attenuation of stable linear filters.

The attenuation factor A is the squared L2 gain of the filter: the
fraction of i.i.d. input noise variance surviving at the output.  Four
independent routes are provided -- closed forms, a Lyapunov solve of the
state-space realization, the truncated impulse-response sum, and a
Monte-Carlo estimate -- so each can cross-check the others.
"""

from dataclasses import dataclass

import numpy as np

from fiberopt.errors import InstabilityError, InvalidParameter
from fiberopt.filters import EmaFilter, InnovationFilter


@dataclass(frozen=True)
class StateSpaceFilter:
    """Stable SISO state-space system z <- Mz + G*w, out = H*z."""

    M: np.ndarray
    G: np.ndarray
    H: np.ndarray

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.M, dtype=np.float64))
        n = M.shape[0]
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "G", np.asarray(self.G, dtype=np.float64).reshape(n))
        object.__setattr__(self, "H", np.asarray(self.H, dtype=np.float64).reshape(n))
        rho = spectral_radius(M)
        if rho >= 1.0 - 1e-8:
            raise InstabilityError(f"spectral radius {rho:.8f} not < 1")


@dataclass(frozen=True)
class StationaryCovariance:
    """Solution of Sigma = M Sigma M^T + sigma_w2 G G^T."""

    Sigma: np.ndarray


def spectral_radius(M: np.ndarray) -> float:
    # eigvals rather than power iteration: the filter state matrices have
    # complex eigenpairs, for which plain power iteration does not converge
    return float(np.max(np.abs(np.linalg.eigvals(np.atleast_2d(M)))))


def innovation_realization(omega: float) -> StateSpaceFilter:
    """State-space form of the innovation filter driven by its input noise."""
    if not 0.0 < omega <= 1.0:
        raise InvalidParameter(f"omega must be in (0,1], got {omega}")
    M = np.array([[1.0 - omega, 1.0 - omega], [-omega, 1.0 - omega]])
    G = omega * np.array([1.0, 1.0])
    H = np.array([1.0, 0.0])
    return StateSpaceFilter(M=M, G=G, H=H)


def ema_realization(kappa: float) -> StateSpaceFilter:
    if not 0.0 < kappa <= 1.0:
        raise InvalidParameter(f"kappa must be in (0,1], got {kappa}")
    return StateSpaceFilter(M=[[1.0 - kappa]], G=[kappa], H=[1.0])


def a_innovation(omega: float) -> float:
    """Closed-form attenuation (2-w)/(4-3w) of the innovation filter."""
    if not 0.0 < omega <= 1.0:
        raise InvalidParameter(f"omega must be in (0,1], got {omega}")
    return (2.0 - omega) / (4.0 - 3.0 * omega)


def a_state(kappa: float) -> float:
    """Closed-form attenuation k/(2-k) of the gradient-state EMA."""
    if not 0.0 < kappa <= 1.0:
        raise InvalidParameter(f"kappa must be in (0,1], got {kappa}")
    return kappa / (2.0 - kappa)


def lyapunov_solve(filt: StateSpaceFilter, sigma_w2: float,
                   tol: float = 1e-14, max_iter: int = 10**6) -> StationaryCovariance:
    """Stationary state covariance by fixed-point iteration from zero.

    Dimensions here are tiny (<= 4), so the plain iteration
    Sigma <- M Sigma M^T + Q converges geometrically at rate rho(M)^2.
    """
    M = filt.M
    Q = sigma_w2 * np.outer(filt.G, filt.G)
    Sigma = np.zeros_like(Q)
    for _ in range(max_iter):
        nxt = M @ Sigma @ M.T + Q
        if np.max(np.abs(nxt - Sigma)) < tol:
            return StationaryCovariance(Sigma=nxt)
        Sigma = nxt
    return StationaryCovariance(Sigma=Sigma)


def attenuation_state_space(filt: StateSpaceFilter, sigma_w2: float = 1.0) -> float:
    """A = H Sigma H^T / sigma_w2 with Sigma from the Lyapunov solve."""
    Sigma = lyapunov_solve(filt, sigma_w2).Sigma
    return float(filt.H @ Sigma @ filt.H) / sigma_w2


def attenuation_impulse(h: np.ndarray, tail_bound: float = 0.0):
    """Squared L2 gain from a truncated impulse response.

    Returns (A, tail_bound); the truncation error is at most tail_bound.
    """
    if tail_bound < 0.0:
        raise InvalidParameter("tail_bound must be >= 0")
    h = np.asarray(h, dtype=np.float64)
    return float(np.sum(h * h)), tail_bound


def adaptive_impulse(filt_factory, decay_rate: float, h_tol: float = 1e-12,
                     n_max: int = 10**5):
    """Impulse response truncated once |h_n| < h_tol, with a geometric tail bound.

    decay_rate bounds |h_{n+j}| <= |h_n| * decay_rate^j, giving tail sum
    h_n^2 * decay^2/(1 - decay^2).
    """
    from fiberopt.filters import impulse_response

    n = 64
    while True:
        h = impulse_response(filt_factory(), n)
        if abs(h[-1]) < h_tol or n >= n_max:
            break
        n *= 2
    if decay_rate < 1.0:
        tail = h[-1] ** 2 * decay_rate**2 / (1.0 - decay_rate**2)
    else:
        tail = np.inf
    return h, tail


def finite_time_variance(omega: float, t: int, sigma_w2: float) -> float:
    """Output variance of the innovation filter after t+1 noise inputs."""
    if t < 0:
        raise InvalidParameter(f"t must be >= 0, got {t}")
    return finite_time_variance_profile(omega, t, sigma_w2)[t]


def finite_time_variance_profile(omega: float, t_max: int, sigma_w2: float) -> np.ndarray:
    """Var(g~_t) for t = 0..t_max via the covariance recursion from zero state."""
    filt = innovation_realization(omega)
    Q = sigma_w2 * np.outer(filt.G, filt.G)
    Sigma = np.zeros((2, 2))
    out = np.empty(t_max + 1)
    for t in range(t_max + 1):
        Sigma = filt.M @ Sigma @ filt.M.T + Q
        out[t] = Sigma[0, 0]
    return out


def monte_carlo_attenuation(filt: StateSpaceFilter, sigma_w2: float, steps: int,
                            replicas: int, rng, burn_in: int | None = None):
    """Empirical attenuation from simulated noise-driven trajectories.

    Drives `replicas` independent copies of the filter with i.i.d.
    N(0, sigma_w2) input for `steps` steps, estimates the stationary
    output variance per replica after burn-in, and returns
    (a_hat, stderr) with the standard error taken across replicas.
    """
    if burn_in is None:
        burn_in = steps // 4
    if burn_in >= steps:
        raise InvalidParameter("burn_in must be smaller than steps")
    n = filt.M.shape[0]
    z = np.zeros((n, replicas))
    sq_sum = np.zeros(replicas)
    count = 0
    sigma_w = np.sqrt(sigma_w2)
    for t in range(steps):
        w = rng.normal(0.0, sigma_w, size=replicas)
        z = filt.M @ z + np.outer(filt.G, w)
        if t >= burn_in:
            out = filt.H @ z
            sq_sum += out * out
            count += 1
    per_replica = sq_sum / (count * sigma_w2)
    a_hat = float(per_replica.mean())
    stderr = float(per_replica.std(ddof=1) / np.sqrt(replicas))
    return a_hat, stderr


def monte_carlo_attenuation_scan(kind: str, gain: float, sigma_w2: float,
                                 steps: int, replicas: int, rng,
                                 burn_in: int | None = None):
    """Kernel-backed Monte-Carlo estimate for the two production filters.

    Same estimator as monte_carlo_attenuation but runs the compiled scan,
    treating replicas as filter coordinates.
    """
    if burn_in is None:
        burn_in = steps // 4
    if burn_in >= steps:
        raise InvalidParameter("burn_in must be smaller than steps")
    w = rng.normal(0.0, np.sqrt(sigma_w2), size=(steps, replicas))
    if kind == "innovation":
        filt = InnovationFilter(replicas, gain)
    elif kind == "ema":
        filt = EmaFilter(replicas, gain)
    else:
        raise InvalidParameter(f"unknown filter kind {kind!r}")
    out = filt.process(w)[burn_in:]
    per_replica = np.mean(out * out, axis=0) / sigma_w2
    a_hat = float(per_replica.mean())
    stderr = float(per_replica.std(ddof=1) / np.sqrt(replicas))
    return a_hat, stderr
