"""DP optimizer family over flat parameter vectors.

Step functions for DP-SGD, DP-AdamW, DiSK, DiSK-CORR, and FIBER, plus a
small training runner that wires them to a model, a dataset, and the
privatization mechanism.  All state lives in plain value objects; every
random draw comes from a counter-based stream keyed by (seed, step,
purpose), so paired replicas can share data order while drawing
independent noise.
"""

import json
from dataclasses import dataclass

import numpy as np

from fiberopt import mechanism, models
from fiberopt import rng as rngmod
from fiberopt.attenuation import a_innovation, a_state
from fiberopt.errors import DimensionMismatch, InvalidParameter
from fiberopt.filters import EmaFilter, InnovationFilter


@dataclass(frozen=True)
class AdamConfig:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    variance_floor: float = 1e-8

    def __post_init__(self):
        if self.lr < 0 or not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            raise InvalidParameter("invalid AdamW hyperparameters")
        if self.eps <= 0 or self.weight_decay < 0 or self.variance_floor < 0:
            raise InvalidParameter("invalid AdamW hyperparameters")


@dataclass
class OptimizerState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    d: np.ndarray | None = None
    filter: InnovationFilter | EmaFilter | None = None
    sigma_filt2: float = 0.0
    grad_evals: int = 0

    @classmethod
    def init(cls, dim: int, filter=None, sigma_filt2: float = 0.0):
        return cls(m=np.zeros(dim), v=np.zeros(dim), t=0, d=np.zeros(dim),
                   filter=filter, sigma_filt2=sigma_filt2)


def dp_sgd_step(theta: np.ndarray, g: np.ndarray, lr: float) -> np.ndarray:
    if theta.shape != g.shape:
        raise DimensionMismatch(f"theta {theta.shape} vs gradient {g.shape}")
    return theta - lr * g


def adamw_moments(state: OptimizerState, g: np.ndarray, cfg: AdamConfig):
    """Update (m, v) with one gradient and return the bias-corrected pair.

    The step counter starts at 0, so the corrections divide by
    (1 - beta^(t+1)); equivalent to the classic 1-based indexing.
    """
    state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * g
    state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * g * g
    m_hat = state.m / (1.0 - cfg.beta1 ** (state.t + 1))
    v_hat = state.v / (1.0 - cfg.beta2 ** (state.t + 1))
    state.t += 1
    return m_hat, v_hat


def correct_second_moment(v_hat: np.ndarray, attenuation: float,
                          sigma_w2: float, eps_v: float) -> np.ndarray:
    """Subtract the expected filtered DP noise variance, floored at eps_v."""
    if not 0.0 <= attenuation <= 1.0:
        raise InvalidParameter(f"attenuation must be in [0,1], got {attenuation}")
    return np.maximum(v_hat - attenuation * sigma_w2, eps_v)


def clamp_mass(v_bar: np.ndarray, m_hat: np.ndarray, eps_v: float) -> float:
    """Fraction of first-moment magnitude on floor-clamped coordinates."""
    total = np.sum(np.abs(m_hat))
    if total == 0.0:
        return 0.0
    clamped = v_bar <= eps_v
    return float(np.sum(np.abs(m_hat)[clamped]) / total)


def _adamw_update(state, theta, g_filtered, adam: AdamConfig, sigma_corr2: float):
    """Shared AdamW tail: moments, correction, decoupled decay, update."""
    m_hat, v_hat = adamw_moments(state, g_filtered, adam)
    v_bar = correct_second_moment(v_hat, 1.0 if sigma_corr2 > 0 else 0.0,
                                  sigma_corr2, adam.variance_floor)
    theta_next = (1.0 - adam.lr * adam.weight_decay) * theta \
        - adam.lr * m_hat / (np.sqrt(v_bar) + adam.eps)
    state.d = theta_next - theta
    return theta_next, m_hat, v_bar


def _two_point_observe(state, theta, batch_grad_fn, tp: mechanism.TwoPointConfig,
                       dp: mechanism.DpMechanismConfig, rng):
    grads0 = batch_grad_fn(theta)
    grads1 = batch_grad_fn(theta + tp.gamma * state.d)
    state.grad_evals += 2
    return mechanism.observe_two_point(grads0, grads1, tp, dp, rng)


def fiber_step(state: OptimizerState, theta, batch_grad_fn, adam: AdamConfig,
               tp: mechanism.TwoPointConfig, dp: mechanism.DpMechanismConfig,
               rng, correction: str = "filter"):
    """One FIBER step: two-point observation, innovation filtering, AdamW
    moments with filter-aware second-moment correction.

    correction: "filter" subtracts A(omega)*sigma_w^2, "full" subtracts
    sigma_w^2 (the bias correction that ignores attenuation), "none"
    disables the subtraction.
    """
    if not isinstance(state.filter, InnovationFilter):
        raise InvalidParameter("fiber_step requires an InnovationFilter state")
    g = _two_point_observe(state, theta, batch_grad_fn, tp, dp, rng)
    g_filt = state.filter.step(g)
    sigma_corr2 = _correction_variance(correction, state.sigma_filt2, dp.sigma_w**2)
    theta_next, _, _ = _adamw_update(state, theta, g_filt, adam, sigma_corr2)
    return theta_next


def disk_step(state: OptimizerState, theta, batch_grad_fn, adam: AdamConfig,
              tp: mechanism.TwoPointConfig, dp: mechanism.DpMechanismConfig,
              rng, correction: str = "none"):
    """One DiSK step: two-point observation, gradient-state EMA, AdamW.

    The EMA gain is the two-point kappa (single-gain coupling); DiSK-CORR
    is this step with correction="filter".
    """
    if not isinstance(state.filter, EmaFilter):
        raise InvalidParameter("disk_step requires an EmaFilter state")
    g = _two_point_observe(state, theta, batch_grad_fn, tp, dp, rng)
    g_filt = state.filter.step(g)
    sigma_corr2 = _correction_variance(correction, state.sigma_filt2, dp.sigma_w**2)
    theta_next, _, _ = _adamw_update(state, theta, g_filt, adam, sigma_corr2)
    return theta_next


def disk_corr_step(state, theta, batch_grad_fn, adam, tp, dp, rng):
    """DiSK with the filter-aware subtraction A_state(kappa)*sigma_w^2."""
    return disk_step(state, theta, batch_grad_fn, adam, tp, dp, rng,
                     correction="filter")


def dp_adamw_step(state: OptimizerState, theta, batch_grad_fn, adam: AdamConfig,
                  dp: mechanism.DpMechanismConfig, rng):
    """Plain DP-AdamW: single-point observation, no filter, no correction."""
    grads = batch_grad_fn(theta)
    state.grad_evals += 1
    g = mechanism.observe_single_point(grads, dp, rng)
    theta_next, _, _ = _adamw_update(state, theta, g, adam, 0.0)
    return theta_next


def _correction_variance(correction: str, sigma_filt2: float, sigma_w2: float) -> float:
    if correction == "filter":
        return sigma_filt2
    if correction == "full":
        return sigma_w2
    if correction == "none":
        return 0.0
    raise InvalidParameter(f"unknown correction mode {correction!r}")


# ---------------------------------------------------------------------------
# training runner


OPTIMIZERS = ("dp_sgd", "dp_adamw", "disk", "disk_corr", "fiber",
              "fiber_no_corr", "fiber_bc_corr")


@dataclass
class ExperimentRecord:
    """One diagnostic row per training step."""

    step: int
    loss: float
    clamp_mass: float
    grad_evals: int


@dataclass
class TrainingRun:
    theta: np.ndarray
    records: list
    state: OptimizerState

    @property
    def losses(self):
        return np.array([r.loss for r in self.records])


def init_optimizer_state(optimizer: str, dim: int, dp: mechanism.DpMechanismConfig,
                         tp: mechanism.TwoPointConfig | None,
                         omega: float) -> OptimizerState:
    sigma_w2 = dp.sigma_w**2
    if optimizer in ("fiber", "fiber_no_corr", "fiber_bc_corr"):
        return OptimizerState.init(dim, filter=InnovationFilter(dim, omega),
                                   sigma_filt2=a_innovation(omega) * sigma_w2)
    if optimizer in ("disk", "disk_corr"):
        return OptimizerState.init(dim, filter=EmaFilter(dim, tp.kappa),
                                   sigma_filt2=a_state(tp.kappa) * sigma_w2)
    if optimizer in ("dp_adamw", "dp_sgd"):
        return OptimizerState.init(dim)
    raise InvalidParameter(f"unknown optimizer {optimizer!r}")


def run_training(spec: "models.ModelSpec", dataset: "models.Dataset",
                 optimizer: str, steps: int, adam: AdamConfig,
                 dp: mechanism.DpMechanismConfig,
                 tp: mechanism.TwoPointConfig | None = None,
                 omega: float = 0.9, seed: int = 0,
                 theta0: np.ndarray | None = None,
                 noise_purpose: str = "noise",
                 record_hook=None) -> TrainingRun:
    """Run one optimizer on one model/dataset pair for a fixed step budget.

    The minibatch at step t is drawn from the (seed, t, "batch") stream and
    DP noise from (seed, t, noise_purpose); replicas that share seed and
    data order but use different noise purposes differ only in their noise.
    """
    if optimizer not in OPTIMIZERS:
        raise InvalidParameter(f"unknown optimizer {optimizer!r}")
    n = dataset.n_examples
    dim = spec.n_params
    theta = np.zeros(dim) if theta0 is None else np.asarray(theta0, dtype=np.float64).copy()
    state = init_optimizer_state(optimizer, dim, dp, tp, omega)
    records = []

    for t in range(steps):
        batch_rng = rngmod.stream(seed, t, "batch")
        idx = batch_rng.choice(n, size=min(dp.batch_size, n), replace=False)
        noise_rng = rngmod.stream(seed, t, noise_purpose)

        def batch_grad_fn(point, idx=idx):
            return models.per_example_gradients(spec, point, dataset, idx)

        g_filt = None
        if optimizer == "dp_sgd":
            grads = batch_grad_fn(theta)
            state.grad_evals += 1
            g = mechanism.observe_single_point(grads, dp, noise_rng)
            theta = dp_sgd_step(theta, g, adam.lr)
            cm = 0.0
        elif optimizer == "dp_adamw":
            grads = batch_grad_fn(theta)
            state.grad_evals += 1
            g = mechanism.observe_single_point(grads, dp, noise_rng)
            theta, _, _ = _adamw_update(state, theta, g, adam, 0.0)
            cm = 0.0
        else:
            corr = {"disk": "none", "disk_corr": "filter", "fiber": "filter",
                    "fiber_no_corr": "none", "fiber_bc_corr": "full"}[optimizer]
            g = _two_point_observe(state, theta, batch_grad_fn, tp, dp, noise_rng)
            g_filt = state.filter.step(g)
            sigma_corr2 = _correction_variance(corr, state.sigma_filt2, dp.sigma_w**2)
            theta, m_hat, v_bar = _adamw_update(state, theta, g_filt, adam, sigma_corr2)
            cm = clamp_mass(v_bar, m_hat, adam.variance_floor)

        loss = models.loss(spec, theta, dataset)
        records.append(ExperimentRecord(step=t, loss=loss, clamp_mass=cm,
                                        grad_evals=state.grad_evals))
        if record_hook is not None:
            record_hook(t, g, g_filt)
    return TrainingRun(theta=theta, records=records, state=state)


# ---------------------------------------------------------------------------
# checkpoint serialization


def state_to_json(state: OptimizerState) -> str:
    """Serialize optimizer state as flat JSON arrays with fixed field names."""
    if isinstance(state.filter, InnovationFilter):
        g_tilde, r = state.filter.g_tilde, state.filter.r
    elif isinstance(state.filter, EmaFilter):
        g_tilde, r = state.filter.g_tilde, np.zeros_like(state.filter.g_tilde)
    else:
        g_tilde = np.zeros_like(state.m)
        r = np.zeros_like(state.m)
    payload = {
        "m": state.m.tolist(),
        "v": state.v.tolist(),
        "t": state.t,
        "g_tilde": g_tilde.tolist(),
        "r": r.tolist(),
        "d": state.d.tolist(),
    }
    return json.dumps(payload)


def state_from_json(text: str, filter=None, sigma_filt2: float = 0.0) -> OptimizerState:
    payload = json.loads(text)
    state = OptimizerState(
        m=np.array(payload["m"]), v=np.array(payload["v"]), t=int(payload["t"]),
        d=np.array(payload["d"]), filter=filter, sigma_filt2=sigma_filt2)
    if isinstance(filter, InnovationFilter):
        filter.g_tilde = np.array(payload["g_tilde"])
        filter.r = np.array(payload["r"])
    elif isinstance(filter, EmaFilter):
        filter.g_tilde = np.array(payload["g_tilde"])
    return state
