"""Renyi-DP accountant for the subsampled Gaussian mechanism.

Integer-order RDP of the subsampled Gaussian is computed exactly via the
binomial expansion; composition over steps is additive and conversion to
(epsilon, delta) takes the minimum over orders.  Fractional orders would
need the full analytical-moments machinery, so we restrict to integer
orders {2..64}; this yields a valid (slightly looser) epsilon upper
bound.  Fixed-size sampling without replacement is accounted with the
Poisson-subsampling formula, the common approximation in practice.  Both
deviations are reported in the output metadata of the CLI.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from fiberopt.errors import CalibrationFailure, InvalidOrder, InvalidParameter

DEFAULT_ORDERS = tuple(range(2, 65))

ACCOUNTANT_DEVIATIONS = (
    "integer RDP orders only (2..64); epsilon is a valid upper bound",
    "fixed-size sampling accounted with the Poisson-subsampling RDP formula",
)


@dataclass(frozen=True)
class AccountingParams:
    """Inputs of one accounting query."""

    sampling_rate: float
    steps: int
    noise_multiplier: float
    delta: float

    def __post_init__(self):
        if not 0.0 < self.sampling_rate <= 1.0:
            raise InvalidParameter(f"sampling_rate must be in (0,1], got {self.sampling_rate}")
        if self.steps < 1:
            raise InvalidParameter(f"steps must be >= 1, got {self.steps}")
        if self.noise_multiplier <= 0.0:
            raise InvalidParameter(f"noise_multiplier must be > 0, got {self.noise_multiplier}")
        if not 0.0 < self.delta < 1.0:
            raise InvalidParameter(f"delta must be in (0,1), got {self.delta}")


@dataclass(frozen=True)
class RdpCurve:
    """Per-step RDP evaluated on a list of orders."""

    orders: tuple
    epsilons: tuple

    def __post_init__(self):
        if any(a <= 1 for a in self.orders):
            raise InvalidParameter("all RDP orders must be > 1")
        if any(not np.isfinite(e) or e < 0 for e in self.epsilons):
            raise InvalidParameter("RDP values must be finite and nonnegative")


def default_delta(n: int) -> float:
    """Default privacy slack 1/N^1.1 for a dataset of N examples."""
    return 1.0 / n**1.1


def rdp_subsampled_gaussian(q: float, sigma: float, alpha: int) -> float:
    """Per-step integer-order RDP of the subsampled Gaussian mechanism.

    Evaluates (alpha-1)^-1 * log sum_{k=0..alpha} C(alpha,k) q^k (1-q)^(alpha-k)
    * exp(k(k-1)/(2 sigma^2)) with a log-sum-exp to stay finite at high orders.
    """
    if int(alpha) != alpha or alpha < 2:
        raise InvalidOrder(f"alpha must be an integer >= 2, got {alpha}")
    alpha = int(alpha)
    if sigma <= 0.0:
        raise InvalidParameter(f"sigma must be > 0, got {sigma}")
    if not 0.0 < q <= 1.0:
        raise InvalidParameter(f"q must be in (0,1], got {q}")
    if q == 1.0:
        return alpha / (2.0 * sigma**2)
    k = np.arange(alpha + 1)
    log_binom = gammaln(alpha + 1) - gammaln(k + 1) - gammaln(alpha - k + 1)
    log_terms = log_binom + k * np.log(q) + (alpha - k) * np.log1p(-q) + k * (k - 1) / (2.0 * sigma**2)
    # the k=0,1 terms alone sum to < 1, so the total is >= 1 and eps >= 0
    return max(logsumexp(log_terms) / (alpha - 1), 0.0)


def rdp_curve(q: float, sigma: float, orders=DEFAULT_ORDERS) -> RdpCurve:
    eps = tuple(rdp_subsampled_gaussian(q, sigma, a) for a in orders)
    return RdpCurve(orders=tuple(orders), epsilons=eps)


def compose_and_convert(params: AccountingParams, orders=DEFAULT_ORDERS):
    """Compose over steps and convert to epsilon at the given delta.

    Returns (epsilon, best_order): the minimum over orders of
    T * eps_rdp(alpha) + log(1/delta) / (alpha - 1).
    """
    if len(orders) == 0:
        raise InvalidParameter("order list must be nonempty")
    log_inv_delta = np.log(1.0 / params.delta)
    best_eps = np.inf
    best_order = None
    for a in orders:
        e = params.steps * rdp_subsampled_gaussian(params.sampling_rate, params.noise_multiplier, a)
        e += log_inv_delta / (a - 1)
        if e < best_eps:
            best_eps = e
            best_order = a
    return best_eps, best_order


SIGMA_MIN = 0.3
SIGMA_MAX = 100.0


def calibrate_noise(target_eps: float, delta: float, q: float, steps: int,
                    orders=DEFAULT_ORDERS, rtol: float = 1e-4) -> float:
    """Smallest noise multiplier meeting the target epsilon, by bisection.

    Guarantees compose_and_convert(result) <= target_eps; the returned
    sigma is within relative tolerance rtol of the boundary.
    """
    if target_eps <= 0.0:
        raise InvalidParameter(f"target_eps must be > 0, got {target_eps}")

    def eps_at(sigma):
        p = AccountingParams(sampling_rate=q, steps=steps, noise_multiplier=sigma, delta=delta)
        return compose_and_convert(p, orders)[0]

    if eps_at(SIGMA_MAX) > target_eps:
        raise CalibrationFailure(
            f"target eps={target_eps} unreachable with sigma <= {SIGMA_MAX}")
    if eps_at(SIGMA_MIN) <= target_eps:
        return SIGMA_MIN
    lo, hi = SIGMA_MIN, SIGMA_MAX
    while (hi - lo) / hi > rtol:
        mid = 0.5 * (lo + hi)
        if eps_at(mid) <= target_eps:
            hi = mid
        else:
            lo = mid
    return hi
