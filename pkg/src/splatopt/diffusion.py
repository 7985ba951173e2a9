"""Diffusion schedules, DDIM inversion, and score-distillation gradients.

Everything here runs in pixel space: rendered images in [0, 1] are mapped
to latents in [-1, 1] (x = 2 img - 1), and returned gradients carry the
chain factor 2 back to image space.  Denoiser backends are duck-typed:
``predict_noise(latent: LatentState, prompt: PromptEmbedding)``.

Timestep convention: ``alphas_cumprod[t]`` is the product of (1 - beta_s)
for s < t, so index 0 is the clean image with alpha-bar exactly 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SplatoptError

OMEGA_CHOICES = ("constant", "one_minus_alpha", "zero")


@dataclass(frozen=True)
class DiffusionSchedule:
    """Beta schedule and its cumulative alpha-bar table."""

    betas: np.ndarray
    alphas_cumprod: np.ndarray

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        abar = np.asarray(self.alphas_cumprod, dtype=np.float64)
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alphas_cumprod", abar)
        if betas.ndim != 1 or abar.shape != betas.shape:
            raise ValueError("betas and alphas_cumprod must be equal-length vectors")
        if np.any(betas <= 0) or np.any(betas >= 1):
            raise ValueError("betas must lie strictly inside (0, 1)")
        if not np.array_equal(abar, _cumprod_alphas(betas)):
            if np.max(np.abs(abar - _cumprod_alphas(betas))) > 1e-12:
                raise ValueError("alphas_cumprod is inconsistent with betas")
        if np.any(np.diff(abar) >= 0):
            raise ValueError("alphas_cumprod must be strictly decreasing")

    @property
    def num_steps(self) -> int:
        return len(self.betas)

    def alpha_bar(self, t: int) -> float:
        if not (0 <= t < self.num_steps):
            raise ValueError(f"timestep {t} outside [0, {self.num_steps})")
        return float(self.alphas_cumprod[t])

    @staticmethod
    def linear(num_steps: int = 1000, beta_start: float = 1e-4, beta_end: float = 2e-2):
        betas = np.linspace(beta_start, beta_end, num_steps)
        return DiffusionSchedule(betas, _cumprod_alphas(betas))


def _cumprod_alphas(betas: np.ndarray) -> np.ndarray:
    # alpha_bar[t] = prod_{s < t} (1 - beta_s); index 0 is the empty product.
    out = np.empty_like(betas)
    out[0] = 1.0
    np.cumprod(1.0 - betas[:-1], out=out[1:])
    return out


@dataclass(frozen=True)
class LatentState:
    data: np.ndarray  # image-space latents are (H, W, C) here
    timestep: int

    def __post_init__(self):
        object.__setattr__(self, "data", np.asarray(self.data, dtype=np.float64))
        if not np.all(np.isfinite(self.data)):
            raise ValueError("latent contains non-finite values")
        if self.timestep < 0:
            raise ValueError(f"negative timestep {self.timestep}")


@dataclass(frozen=True)
class PromptEmbedding:
    tokens: np.ndarray  # (m, d)
    is_null: bool = False

    def __post_init__(self):
        tok = np.asarray(self.tokens, dtype=np.float64)
        object.__setattr__(self, "tokens", tok)
        if tok.ndim != 2:
            raise ValueError("tokens must be an (m, d) matrix")
        if not np.all(np.isfinite(tok)):
            raise ValueError("embedding contains non-finite values")

    @staticmethod
    def null(width: int = 64, tokens: int = 8) -> "PromptEmbedding":
        return PromptEmbedding(np.zeros((tokens, width)), is_null=True)


@dataclass(frozen=True)
class IsmConfig:
    t_range: tuple = (50, 950)
    delta: int = 80
    omega: str = "constant"
    guidance_scale: float = 7.5
    use_cfg: bool = True

    def __post_init__(self):
        t_min, t_max = (int(v) for v in self.t_range)
        object.__setattr__(self, "t_range", (t_min, t_max))
        if not (0 <= t_min < t_max):
            raise ValueError(f"need 0 <= t_min < t_max, got {self.t_range}")
        if self.delta < 1:
            raise ValueError("delta must be at least 1")
        if self.omega not in OMEGA_CHOICES:
            raise ValueError(f"omega must be one of {OMEGA_CHOICES}")


@dataclass(frozen=True)
class GuidanceGradient:
    """Image-space gradient of a score-distillation objective."""

    grad: np.ndarray  # (H, W, 3)
    timestep_used: int
    weight_used: float


def omega_weight(omega: str, t: int, schedule: DiffusionSchedule) -> float:
    if omega == "constant":
        return 1.0
    if omega == "one_minus_alpha":
        return 1.0 - schedule.alpha_bar(t)
    if omega == "zero":
        return 0.0
    raise ValueError(f"unknown omega {omega!r}")


def image_to_latent(image01: np.ndarray) -> np.ndarray:
    return 2.0 * np.asarray(image01, dtype=np.float64) - 1.0


LATENT_TO_IMAGE_CHAIN = 2.0  # d latent / d image


def forward_diffuse(
    x0: np.ndarray, t: int, noise: np.ndarray, schedule: DiffusionSchedule
) -> LatentState:
    """Closed-form marginal x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) noise."""
    x0 = np.asarray(x0, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if x0.shape != noise.shape:
        raise ValueError(f"x0 shape {x0.shape} != noise shape {noise.shape}")
    abar = schedule.alpha_bar(t)
    return LatentState(math.sqrt(abar) * x0 + math.sqrt(1.0 - abar) * noise, t)


def ddim_step(
    x: np.ndarray, eps: np.ndarray, from_t: int, to_t: int, schedule: DiffusionSchedule
) -> np.ndarray:
    """Deterministic DDIM transition in either direction.

    Reconstructs x0-hat from (x, eps) at ``from_t`` and re-noises it to
    ``to_t`` along the same predicted direction.
    """
    a_from = schedule.alpha_bar(from_t)
    a_to = schedule.alpha_bar(to_t)
    x0_hat = (x - math.sqrt(1.0 - a_from) * eps) / math.sqrt(a_from)
    return math.sqrt(a_to) * x0_hat + math.sqrt(1.0 - a_to) * eps


def ddim_invert(
    x0: np.ndarray,
    denoiser,
    null_prompt: PromptEmbedding,
    target_t: int,
    stride: int,
    schedule: DiffusionSchedule,
) -> list[LatentState]:
    """Deterministic inversion from the clean image up to ``target_t``.

    Returns the trajectory [x_0, x_stride, ..., x_target]; the final step
    is shortened when ``target_t`` is not a multiple of ``stride``.  The
    first hop leaves t = 0, where alpha-bar is exactly 1: x0-hat equals
    x_0 and no noise estimate exists yet, so the hop uses eps = 0 and
    backends are never queried at t = 0.
    """
    if not (0 <= target_t < schedule.num_steps):
        raise ValueError(f"target_t {target_t} outside the schedule")
    if stride < 1:
        raise ValueError("stride must be at least 1")
    x = np.asarray(x0, dtype=np.float64)
    trajectory = [LatentState(x, 0)]
    t = 0
    while t < target_t:
        t_next = min(t + stride, target_t)
        if t == 0:
            eps = np.zeros_like(x)
        else:
            eps = _predict(denoiser, x, t, null_prompt)
        x = ddim_step(x, eps, t, t_next, schedule)
        trajectory.append(LatentState(x, t_next))
        t = t_next
    return trajectory


def ddim_reconstruct(
    latent: LatentState,
    denoiser,
    null_prompt: PromptEmbedding,
    stride: int,
    schedule: DiffusionSchedule,
) -> np.ndarray:
    """Deterministic DDIM sampling from ``latent`` back down to t = 0."""
    x = latent.data
    t = latent.timestep
    while t > 0:
        t_next = max(t - stride, 0)
        eps = _predict(denoiser, x, t, null_prompt)
        x = ddim_step(x, eps, t, t_next, schedule)
        t = t_next
    return x


def _predict(denoiser, x: np.ndarray, t: int, prompt: PromptEmbedding) -> np.ndarray:
    try:
        eps = denoiser.predict_noise(LatentState(x, t), prompt)
    except SplatoptError:
        raise
    except Exception as exc:
        raise SplatoptError(f"denoiser failed at timestep {t}: {exc}") from exc
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != x.shape:
        raise SplatoptError(
            f"denoiser returned shape {eps.shape} at timestep {t}, expected {x.shape}"
        )
    return eps


def _guided_prediction(
    denoiser, x: np.ndarray, t: int, prompt: PromptEmbedding,
    null_prompt: PromptEmbedding, config: IsmConfig,
) -> np.ndarray:
    eps_cond = _predict(denoiser, x, t, prompt)
    if not config.use_cfg:
        return eps_cond
    eps_uncond = _predict(denoiser, x, t, null_prompt)
    return eps_uncond + config.guidance_scale * (eps_cond - eps_uncond)


def _sample_timestep(config: IsmConfig, schedule: DiffusionSchedule, rng, need_delta: bool):
    t_min, t_max = config.t_range
    if need_delta:
        # s = t - delta must stay a valid (>= 1) timestep.
        t_min = max(t_min, config.delta + 1)
    t_max = min(t_max, schedule.num_steps - 1)
    if t_min > t_max:
        raise SplatoptError(
            f"empty timestep range [{t_min}, {t_max}] for delta={config.delta}"
        )
    return int(rng.integers(t_min, t_max + 1))


def ism_pixel_gradient(
    image01: np.ndarray,
    denoiser,
    prompt: PromptEmbedding,
    config: IsmConfig,
    schedule: DiffusionSchedule,
    seed,
    null_prompt: PromptEmbedding | None = None,
) -> GuidanceGradient:
    """Interval score matching: compare the guided prediction at t with the
    unconditional prediction at s = t - delta along the inverted trajectory.

    ``seed`` may be an integer or a numpy Generator.
    """
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    if null_prompt is None:
        null_prompt = PromptEmbedding.null(width=prompt.tokens.shape[1])
    x0 = image_to_latent(image01)
    t = _sample_timestep(config, schedule, rng, need_delta=True)
    s = t - config.delta

    trajectory = ddim_invert(x0, denoiser, null_prompt, s, config.delta, schedule)
    x_s = trajectory[-1].data
    eps_s = _predict(denoiser, x_s, s, null_prompt)
    x_t = ddim_step(x_s, eps_s, s, t, schedule)

    eps_guided = _guided_prediction(denoiser, x_t, t, prompt, null_prompt, config)
    weight = omega_weight(config.omega, t, schedule)
    grad = weight * (eps_guided - eps_s) * LATENT_TO_IMAGE_CHAIN
    return GuidanceGradient(grad=grad, timestep_used=t, weight_used=weight)


def sds_pixel_gradient(
    image01: np.ndarray,
    denoiser,
    prompt: PromptEmbedding,
    config: IsmConfig,
    schedule: DiffusionSchedule,
    seed,
    null_prompt: PromptEmbedding | None = None,
) -> GuidanceGradient:
    """Score distillation sampling: guided prediction minus injected noise."""
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    if null_prompt is None:
        null_prompt = PromptEmbedding.null(width=prompt.tokens.shape[1])
    x0 = image_to_latent(image01)
    t = _sample_timestep(config, schedule, rng, need_delta=False)
    if t < 1:
        t = 1
    noise = rng.standard_normal(x0.shape)
    x_t = forward_diffuse(x0, t, noise, schedule)

    eps_guided = _guided_prediction(denoiser, x_t.data, t, prompt, null_prompt, config)
    weight = omega_weight(config.omega, t, schedule)
    grad = weight * (eps_guided - noise) * LATENT_TO_IMAGE_CHAIN
    return GuidanceGradient(grad=grad, timestep_used=t, weight_used=weight)
