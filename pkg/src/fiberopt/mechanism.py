"""Per-example clipping, Gaussian privatization, and two-point observation."""

from dataclasses import dataclass

import numpy as np

from fiberopt.errors import BatchShapeError, ConstraintViolation, InvalidParameter


@dataclass(frozen=True)
class DpMechanismConfig:
    """Clip norm, batch size, and noise multiplier of the Gaussian mechanism."""

    clip_norm: float
    batch_size: int
    noise_multiplier: float

    def __post_init__(self):
        if self.clip_norm <= 0.0:
            raise InvalidParameter(f"clip_norm must be > 0, got {self.clip_norm}")
        if self.batch_size < 1:
            raise InvalidParameter(f"batch_size must be >= 1, got {self.batch_size}")
        if self.noise_multiplier < 0.0:
            raise InvalidParameter(f"noise_multiplier must be >= 0, got {self.noise_multiplier}")

    @property
    def sigma_w(self) -> float:
        """Per-coordinate noise std at the averaged gradient."""
        return self.noise_multiplier * self.clip_norm / self.batch_size


@dataclass(frozen=True)
class TwoPointConfig:
    """Lookahead geometry of the two-point gradient observation."""

    kappa: float
    gamma: float

    def __post_init__(self):
        if not 0.0 < self.kappa <= 1.0:
            raise InvalidParameter(f"kappa must be in (0,1], got {self.kappa}")
        if self.gamma <= 0.0:
            raise InvalidParameter(f"gamma must be > 0, got {self.gamma}")

    @property
    def mixing_weight(self) -> float:
        return two_point_weight(self)


def clip(u: np.ndarray, clip_norm: float) -> np.ndarray:
    """Scale u onto the L2 ball of radius clip_norm, preserving direction."""
    if clip_norm <= 0.0:
        raise InvalidParameter(f"clip_norm must be > 0, got {clip_norm}")
    u = np.asarray(u, dtype=np.float64)
    norm = np.linalg.norm(u)
    if norm <= clip_norm:
        return u.copy()
    return u * (clip_norm / norm)


def two_point_weight(cfg: TwoPointConfig) -> float:
    """Lookahead mixing weight a = (1-kappa)/(kappa*gamma).

    Rejects a > 1: a negative weight on the current gradient can inflate
    norms and interact badly with clipping, so only convex mixtures are
    allowed (gamma >= (1-kappa)/kappa).
    """
    a = (1.0 - cfg.kappa) / (cfg.kappa * cfg.gamma)
    if a > 1.0 + 1e-12:
        raise ConstraintViolation(
            f"mixing weight a={a:.6g} > 1; require gamma >= (1-kappa)/kappa")
    return min(a, 1.0)


def _privatize(per_example: np.ndarray, dp: DpMechanismConfig, rng) -> np.ndarray:
    if per_example.shape[0] != dp.batch_size:
        raise BatchShapeError(
            f"expected {dp.batch_size} per-example gradients, got {per_example.shape[0]}")
    clipped = np.stack([clip(u, dp.clip_norm) for u in per_example])
    g = clipped.mean(axis=0)
    if dp.sigma_w > 0.0:
        g = g + rng.normal(0.0, dp.sigma_w, size=g.shape)
    return g


def observe_single_point(grads, dp: DpMechanismConfig, rng) -> np.ndarray:
    """Clipped-mean gradient plus Gaussian noise (standard DP-SGD observation)."""
    return _privatize(np.asarray(grads, dtype=np.float64), dp, rng)


def observe_two_point(grads_at_theta, grads_at_lookahead, cfg: TwoPointConfig,
                      dp: DpMechanismConfig, rng) -> np.ndarray:
    """Privatized two-point gradient observation.

    Per example, mixes the lookahead and current gradients with weight a,
    then clips, averages, and adds Gaussian noise with std sigma_w.
    """
    g0 = np.asarray(grads_at_theta, dtype=np.float64)
    g1 = np.asarray(grads_at_lookahead, dtype=np.float64)
    if g0.shape != g1.shape:
        raise BatchShapeError(
            f"gradient lists must pair up: {g0.shape} vs {g1.shape}")
    a = two_point_weight(cfg)
    return _privatize(a * g1 + (1.0 - a) * g0, dp, rng)
