"""Two-stage optimization: coarse score-guided shaping, then refiner-driven
appearance polishing with view-consistency guidance.

Stage 1 samples one camera per step from a progressively widening azimuth
window, renders, turns the guidance backend's pixel gradient into
parameter gradients through the rasterizer's backward pass, and runs
Adam with per-group learning rates.  Densify/prune fire on their
configured beat using positional gradient norms accumulated since the
last pass.

Stage 2 renders a ring of views per step, refines them, and optimizes
the Gaussians against lambda_recon * |render - refined|^2 plus
lambda_vc * stabilized view-consistency over consecutive pairs;
differentiable refiners additionally train the camera encoder at its
own learning rate.

Everything is driven by one seeded generator held in RunState, so runs
are bit-deterministic and checkpoints resume exactly.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .camera import Camera, default_intrinsics, sample_orbit_camera, turntable_azimuths
from .cloud import GaussianCloud, PointSet, densify_split, init_from_points, prune
from .config import densify_config
from .diffusion import DiffusionSchedule, IsmConfig, PromptEmbedding
from .errors import ConfigError, EmptyCloudError, NumericalError
from .guidance import (
    PhotometricGuidance,
    embed_text,
    photometric_guidance,
    remote_denoiser,
)
from .diffusion import ism_pixel_gradient, sds_pixel_gradient
from .io import load_point_ply, save_png, save_splat
from .optim import AdamOptimizer
from .protocol import procedural_pointcloud
from .refiner import (
    CameraEncoder,
    IdentityRefiner,
    MockRefiner,
    RemoteRefiner,
    build_conditioning,
    train_encoder_step,
)
from .renderer import RenderConfig, render, render_backward, render_batch
from .scene_coords import (
    render_scene_coordinates,
    view_consistency_loss,
)

PARAM_GROUPS = ("positions", "log_scales", "rotations", "opacity_logits", "colors")


@dataclass
class ViewSampler:
    """Orbit-camera sampling with progressive azimuth relaxation."""

    azimuth_start_range: float = 45.0
    azimuth_increment: float = 45.0
    relax_interval: int = 500
    elevation_min: float = -10.0
    elevation_max: float = 45.0
    radius: float = 4.0
    target: tuple = (0.0, 0.0, 0.0)

    def azimuth_half_range(self, iteration: int) -> float:
        widen = (iteration // self.relax_interval) * self.azimuth_increment
        return min(self.azimuth_start_range + widen, 180.0)

    def sample(self, rng, iteration: int, anchor: float, intrinsics, width, height,
               near, far) -> Camera:
        half = self.azimuth_half_range(iteration)
        azimuth = anchor + rng.uniform(-half, half)
        azimuth = (azimuth + 180.0) % 360.0 - 180.0
        elevation = rng.uniform(self.elevation_min, self.elevation_max)
        return sample_orbit_camera(
            azimuth, elevation, self.radius, self.target,
            intrinsics, width, height, near=near, far=far,
        )

    def ring(self, rng, count: int, intrinsics, width, height, near, far) -> list:
        base = rng.uniform(-180.0, 180.0)
        elevation = rng.uniform(self.elevation_min, self.elevation_max)
        cams = []
        for k in range(count):
            azimuth = (base + 360.0 * k / count + 180.0) % 360.0 - 180.0
            cams.append(
                sample_orbit_camera(azimuth, elevation, self.radius, self.target,
                                    intrinsics, width, height, near=near, far=far)
            )
        return cams


class IsmGuidance:
    """Adapter: interval-score-matching pixel gradients for the pipeline."""

    def __init__(self, denoiser, prompt: PromptEmbedding, config: IsmConfig,
                 schedule: DiffusionSchedule):
        self.denoiser = denoiser
        self.prompt = prompt
        self.config = config
        self.schedule = schedule

    def pixel_gradient(self, view, rng):
        return ism_pixel_gradient(
            view.rgb, self.denoiser, self.prompt, self.config, self.schedule, rng
        )


class SdsGuidance(IsmGuidance):
    def pixel_gradient(self, view, rng):
        return sds_pixel_gradient(
            view.rgb, self.denoiser, self.prompt, self.config, self.schedule, rng
        )


@dataclass
class RunState:
    cloud: GaussianCloud
    encoder: CameraEncoder
    optimizer: AdamOptimizer
    encoder_optimizer: AdamOptimizer
    rng: np.random.Generator
    iteration: int = 0
    azimuth_anchor: float = 0.0
    grad_accum: np.ndarray = field(default_factory=lambda: np.zeros(0))
    grad_count: int = 0
    metrics: list = field(default_factory=list)
    # Frozen coarse result whose renders feed the stage-2 refiner; chasing
    # refinements of the live render instead is an unstable feedback loop
    # (the enhancement re-amplifies its own output every step).
    stage2_anchor: GaussianCloud | None = None

    @staticmethod
    def fresh(cloud: GaussianCloud, seed: int, encoder_seed: int = 0) -> "RunState":
        rng = np.random.default_rng(seed)
        anchor = float(rng.uniform(-180.0, 180.0))
        return RunState(
            cloud=cloud,
            encoder=CameraEncoder.create(seed=encoder_seed),
            optimizer=AdamOptimizer(),
            encoder_optimizer=AdamOptimizer(),
            rng=rng,
            azimuth_anchor=anchor,
            grad_accum=np.zeros(cloud.count),
        )


def position_lr(settings: dict, iteration: int) -> float:
    """Exponential decay across stage 1; stays at the final value after."""
    opt = settings["optimizer"]
    total = max(settings["stage1"]["iters"], 1)
    frac = min(iteration / total, 1.0)
    return float(opt["lr_position"] * (opt["lr_position_final"] / opt["lr_position"]) ** frac)


def _apply_gradients(state: RunState, grads, settings: dict) -> None:
    lrs = {
        "positions": position_lr(settings, state.iteration),
        "log_scales": settings["optimizer"]["lr_scale"],
        "rotations": settings["optimizer"]["lr_rotation"],
        "opacity_logits": settings["optimizer"]["lr_opacity"],
        "colors": settings["optimizer"]["lr_color"],
    }
    cloud = state.cloud
    grad_arrays = {
        "positions": grads.d_positions,
        "log_scales": grads.d_log_scales,
        "rotations": grads.d_rotations,
        "opacity_logits": grads.d_opacity_logits,
        "colors": grads.d_colors,
    }
    for name in PARAM_GROUPS:
        updated = state.optimizer.step(name, getattr(cloud, name), grad_arrays[name], lrs[name])
        setattr(cloud, name, updated)
    cloud.normalize_rotations()
    np.clip(cloud.colors, 0.0, 1.0, out=cloud.colors)


def _check_finite(state: RunState) -> None:
    for name in PARAM_GROUPS:
        arr = getattr(state.cloud, name)
        if not np.all(np.isfinite(arr)):
            raise NumericalError(f"{name} became non-finite at iteration {state.iteration}")


def _resize_state(state: RunState, gather_index: np.ndarray, zero_rows=None) -> None:
    for name in PARAM_GROUPS:
        state.optimizer.remap(name, gather_index, zero_rows)
    state.grad_accum = state.grad_accum[gather_index].copy()
    if zero_rows is not None:
        state.grad_accum[zero_rows] = 0.0


def _densify_and_prune(state: RunState, settings: dict) -> None:
    cfg = densify_config(settings)
    it = state.iteration
    in_window = cfg.start_iter <= it <= min(cfg.end_iter, settings["stage1"]["iters"])
    if not in_window or it % cfg.interval != 0:
        return
    mean_norms = state.grad_accum / max(state.grad_count, 1)
    if state.cloud.count < settings["densify"]["max_gaussians"]:
        split = densify_split(state.cloud, mean_norms, cfg, it,
                              seed=int(state.rng.integers(2**32)))
        if split.cloud is not state.cloud:
            n_kept = int((~split.split_mask).sum())
            zero_rows = np.zeros(split.cloud.count, dtype=bool)
            zero_rows[n_kept:] = True  # children start with fresh moments
            _resize_state(state, split.parent_index, zero_rows)
            state.cloud = split.cloud
    pruned = prune(state.cloud, cfg)
    if pruned.cloud is not state.cloud:
        _resize_state(state, pruned.kept_index)
        state.cloud = pruned.cloud
    state.grad_accum = np.zeros(state.cloud.count)
    state.grad_count = 0


def _render_config(settings: dict) -> RenderConfig:
    r = settings["render"]
    return RenderConfig(
        tile_size=r["tile_size"],
        background=r["background"],
        alpha_cutoff=r["alpha_cutoff"],
        max_splats_per_tile=200_000,
    )


def _intrinsics(settings: dict):
    r = settings["render"]
    return default_intrinsics(r["width"], r["height"], r["fov_y_deg"])


def stage1_step(state: RunState, guidance, settings: dict,
                sampler: ViewSampler | None = None) -> dict:
    """One coarse-optimization step; returns the metric row."""
    if state.cloud.count == 0:
        raise EmptyCloudError("cannot optimize an empty cloud")
    if sampler is None:
        sampler = view_sampler(settings)
    r = settings["render"]
    rc = _render_config(settings)

    if isinstance(guidance, PhotometricGuidance) and guidance.cameras:
        cams = guidance.cameras
        camera = cams[int(state.rng.integers(len(cams)))]
    else:
        camera = sampler.sample(
            state.rng, state.iteration, state.azimuth_anchor,
            _intrinsics(settings), r["width"], r["height"], r["near"], r["far"],
        )

    view = render(state.cloud, camera, rc)
    grad = guidance.pixel_gradient(view, state.rng)
    grads = render_backward(state.cloud, camera, rc, grad.grad)

    norms = np.linalg.norm(grads.d_positions, axis=1)
    if state.grad_accum.shape[0] != state.cloud.count:
        state.grad_accum = np.zeros(state.cloud.count)
    state.grad_accum += norms
    state.grad_count += 1

    _apply_gradients(state, grads, settings)
    _check_finite(state)
    state.iteration += 1
    _densify_and_prune(state, settings)

    row = {
        "iteration": state.iteration,
        "stage": 1,
        "gaussians": state.cloud.count,
        "guidance_timestep": grad.timestep_used,
    }
    if isinstance(guidance, PhotometricGuidance):
        loss = guidance.loss(camera, view.rgb)
        mse = loss / (3.0 * r["width"] * r["height"])
        row["loss"] = loss
        row["psnr"] = float(10.0 * np.log10(1.0 / max(mse, 1e-12)))
    else:
        row["loss"] = float(np.abs(grad.grad).mean())
    state.metrics.append(row)
    return row


def stage2_step(state: RunState, refiner, settings: dict, denoiser=None,
                prompt: PromptEmbedding | None = None,
                sampler: ViewSampler | None = None) -> dict:
    """One refinement step: refined-view reconstruction + view consistency."""
    if state.cloud.count == 0:
        raise EmptyCloudError("cannot optimize an empty cloud")
    if sampler is None:
        sampler = view_sampler(settings)
    if prompt is None:
        prompt = embed_text(settings["run"]["prompt"])
    r = settings["render"]
    rc = _render_config(settings)
    n_views = settings["views"]["n_refine_views"]
    lam_recon = settings["stage2"]["lambda_recon"]
    lam_vc = settings["stage2"]["lambda_vc"]

    if state.stage2_anchor is None:
        state.stage2_anchor = state.cloud.copy()
        # Fresh moments at the stage boundary: stage-1 second moments are
        # statistics of a much larger-scale objective and would suppress
        # every stage-2 update by orders of magnitude.
        state.optimizer = AdamOptimizer()

    cams = sampler.ring(state.rng, n_views, _intrinsics(settings),
                        r["width"], r["height"], r["near"], r["far"])
    views = render_batch(state.cloud, cams, rc)
    maps = [render_scene_coordinates(v) for v in views]

    from .camera import extrinsic_vector
    from .refiner import encode_camera

    f_bars = [
        build_conditioning(prompt, encode_camera(state.encoder, extrinsic_vector(c.pose)))
        for c in cams
    ]
    coarse = render_batch(state.stage2_anchor, cams, rc)
    refined = refiner.refine(
        [v.rgb for v in coarse], f_bars,
        prompt_text=settings["run"]["prompt"],
        camera_vectors=[extrinsic_vector(c.pose) for c in cams],
    )

    # Per-pixel mean reconstruction keeps the term on the same footing as
    # the 1/(2WH)-normalized consistency loss.
    recon = 0.0
    grad_images = []
    px = float(r["width"] * r["height"])
    for v, ref in zip(views, refined):
        recon += float(((v.rgb - ref) ** 2).mean())
        grad_images.append(2.0 * lam_recon * (v.rgb - ref) / (3.0 * px))

    vc_total = 0.0
    vc_grad_images = [np.zeros_like(g) for g in grad_images]
    for i in range(len(views) - 1):
        vc, g_a, g_b = view_consistency_loss(
            views[i].rgb, views[i + 1].rgb, maps[i], maps[i + 1], variant="stabilized"
        )
        vc_total += vc
        vc_grad_images[i] += lam_vc * g_a
        vc_grad_images[i + 1] += lam_vc * g_b

    if settings["stage2"]["ism_in_stage2"] and denoiser is not None:
        ism_cfg = ism_config(settings)
        schedule = diffusion_schedule(settings)
        for i, v in enumerate(views):
            g = ism_pixel_gradient(v.rgb, denoiser, prompt, ism_cfg, schedule, state.rng)
            grad_images[i] += g.grad

    vc_groups = settings["stage2"]["vc_param_groups"]
    total_grads = None
    for cam, g_img, g_vc in zip(cams, grad_images, vc_grad_images):
        g = render_backward(state.cloud, cam, rc, g_img)
        if lam_vc > 0.0 and np.any(g_vc):
            # The sign-based consistency gradient can be restricted to the
            # color parameters: through opacity it has a runaway
            # transparency mode (shrinking the valid mask keeps lowering
            # the loss).
            g_vc_params = render_backward(state.cloud, cam, rc, g_vc)
            for group in PARAM_GROUPS:
                if vc_groups == "all" or group == "colors":
                    attr = f"d_{group}"
                    setattr(g, attr, getattr(g, attr) + getattr(g_vc_params, attr))
        if total_grads is None:
            total_grads = g
        else:
            total_grads.d_positions += g.d_positions
            total_grads.d_log_scales += g.d_log_scales
            total_grads.d_rotations += g.d_rotations
            total_grads.d_opacity_logits += g.d_opacity_logits
            total_grads.d_colors += g.d_colors

    _apply_gradients(state, total_grads, settings)
    _check_finite(state)

    encoder_loss = None
    if getattr(refiner, "differentiable", False):
        encoder_loss, _ = train_encoder_step(
            state.encoder, views, maps, refiner,
            settings["optimizer"]["lr_encoder"], prompt=prompt,
            optimizer=state.encoder_optimizer,
        )
    state.iteration += 1
    row = {
        "iteration": state.iteration,
        "stage": 2,
        "loss": recon,
        "vc_loss": vc_total,
        "encoder_loss": encoder_loss,
        "gaussians": state.cloud.count,
    }
    state.metrics.append(row)
    return row


def view_sampler(settings: dict) -> ViewSampler:
    v = settings["views"]
    return ViewSampler(
        azimuth_start_range=v["azimuth_start_range"],
        azimuth_increment=v["azimuth_increment"],
        relax_interval=v["relax_interval"],
        elevation_min=v["elevation_min"],
        elevation_max=v["elevation_max"],
        radius=v["radius"],
    )


def ism_config(settings: dict) -> IsmConfig:
    d = settings["diffusion"]
    return IsmConfig(
        t_range=(d["t_min"], d["t_max"]),
        delta=d["delta"],
        omega=d["omega"],
        guidance_scale=d["guidance_scale"],
        use_cfg=d["use_cfg"],
    )


def diffusion_schedule(settings: dict) -> DiffusionSchedule:
    d = settings["diffusion"]
    return DiffusionSchedule.linear(d["num_steps"], d["beta_start"], d["beta_end"])


def init_cloud_from_source(source: str, target_count: int, seed: int,
                           endpoint: str = "", timeout: float = 10.0) -> GaussianCloud:
    """Resolve an init source: ply:<path>, procedural name, or service."""
    if source.startswith("ply:"):
        points = load_point_ply(source[4:])
    elif source == "service":
        if not endpoint:
            raise ConfigError("init.source = service requires service.endpoint")
        client = remote_denoiser(endpoint, timeout=timeout)
        pts, cols = client.fetch_pointcloud("init", count=target_count)
        points = PointSet(pts, cols)
    else:
        pts, cols = procedural_pointcloud(source)
        points = PointSet(pts, cols)
    return init_from_points(points, target_count, seed=seed)


# ---------------------------------------------------------------------------
# Checkpointing


def save_checkpoint(state: RunState, path) -> None:
    """Atomic (write-temp, rename) checkpoint with full RNG/optimizer state."""
    payload = {
        "iteration": np.int64(state.iteration),
        "azimuth_anchor": np.float64(state.azimuth_anchor),
        "grad_accum": state.grad_accum,
        "grad_count": np.int64(state.grad_count),
        "rng_state": np.frombuffer(
            json.dumps(state.rng.bit_generator.state).encode(), dtype=np.uint8
        ),
        "metrics": np.frombuffer(json.dumps(state.metrics).encode(), dtype=np.uint8),
    }
    for name in PARAM_GROUPS:
        payload[f"cloud.{name}"] = getattr(state.cloud, name)
    if state.stage2_anchor is not None:
        for name in PARAM_GROUPS:
            payload[f"anchor.{name}"] = getattr(state.stage2_anchor, name)
    for name, arr in state.encoder.parameters().items():
        payload[f"encoder.{name}"] = arr
    for label, opt in (("opt", state.optimizer), ("enc_opt", state.encoder_optimizer)):
        sd = opt.state_dict()
        payload[f"{label}.meta"] = np.frombuffer(
            json.dumps({"t": sd["t"], "beta1": sd["beta1"], "beta2": sd["beta2"],
                        "eps": sd["eps"], "keys": sorted(sd["m"])}).encode(),
            dtype=np.uint8,
        )
        for key in sd["m"]:
            payload[f"{label}.m.{key}"] = sd["m"][key]
            payload[f"{label}.v.{key}"] = sd["v"][key]
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as f:
        np.savez(f, **payload)
    os.replace(tmp, path)


def load_checkpoint(path) -> RunState:
    with np.load(path) as data:
        cloud = GaussianCloud(*(data[f"cloud.{name}"] for name in PARAM_GROUPS))
        anchor = None
        if "anchor.positions" in data:
            anchor = GaussianCloud(*(data[f"anchor.{name}"] for name in PARAM_GROUPS))
        encoder = CameraEncoder(
            w1=data["encoder.w1"], b1=data["encoder.b1"],
            w2=data["encoder.w2"], b2=data["encoder.b2"],
        )
        optimizers = {}
        for label in ("opt", "enc_opt"):
            meta = json.loads(bytes(data[f"{label}.meta"]).decode())
            opt = AdamOptimizer(meta["beta1"], meta["beta2"], meta["eps"])
            opt.load_state_dict({
                "beta1": meta["beta1"], "beta2": meta["beta2"], "eps": meta["eps"],
                "t": meta["t"],
                "m": {k: data[f"{label}.m.{k}"] for k in meta["keys"]},
                "v": {k: data[f"{label}.v.{k}"] for k in meta["keys"]},
            })
            optimizers[label] = opt
        rng = np.random.default_rng()
        rng.bit_generator.state = json.loads(bytes(data["rng_state"]).decode())
        return RunState(
            cloud=cloud,
            encoder=encoder,
            optimizer=optimizers["opt"],
            encoder_optimizer=optimizers["enc_opt"],
            rng=rng,
            iteration=int(data["iteration"]),
            azimuth_anchor=float(data["azimuth_anchor"]),
            grad_accum=data["grad_accum"].copy(),
            grad_count=int(data["grad_count"]),
            metrics=json.loads(bytes(data["metrics"]).decode()),
            stage2_anchor=anchor,
        )


# ---------------------------------------------------------------------------
# Full run


def build_guidance(settings: dict, reference_views: dict | None = None,
                   reference_cameras: list | None = None, denoiser=None):
    """Construct the stage-1 guidance source from the configuration.

    For ism/sds modes a denoiser backend must be supplied (oracle fixture)
    or a service endpoint configured.
    """
    mode = settings["stage1"]["guidance"]
    prompt = embed_text(settings["run"]["prompt"])
    if mode == "photometric":
        if not reference_views or not reference_cameras:
            raise ConfigError("photometric guidance requires reference views and cameras")
        return photometric_guidance(reference_views, cameras=reference_cameras)
    if denoiser is None:
        endpoint = settings["service"]["endpoint"]
        if not endpoint:
            raise ConfigError(
                f"guidance mode {mode!r} needs a denoiser backend or service.endpoint"
            )
        denoiser = remote_denoiser(
            endpoint, prompt_text=settings["run"]["prompt"],
            timeout=settings["service"]["timeout"], retries=settings["service"]["retries"],
        )
    cls = IsmGuidance if mode == "ism" else SdsGuidance
    return cls(denoiser, prompt, ism_config(settings), diffusion_schedule(settings))


def build_refiner(settings: dict):
    mode = settings["stage2"]["refiner"]
    if mode == "identity":
        return IdentityRefiner()
    if mode == "mock":
        return MockRefiner(
            strength=settings["stage2"]["refiner_strength"],
            readout_scale=settings["stage2"]["refiner_readout"],
        )
    endpoint = settings["service"]["endpoint"]
    if not endpoint:
        raise ConfigError("stage2.refiner = remote requires service.endpoint")
    return RemoteRefiner(endpoint)


@dataclass
class RunReport:
    splat_path: str
    metrics_path: str
    iterations: int
    gaussians: int
    wall_seconds: float
    extra: dict = field(default_factory=dict)


def run(settings: dict, out_dir, guidance=None, refiner=None, denoiser=None,
        resume_from=None, turntable_frames: int = 8,
        checkpoint_name: str = "checkpoint.npz") -> RunReport:
    """Init -> stage 1 -> stage 2 -> artifacts (splat, renders, metrics).

    ``guidance``/``refiner`` default to what the configuration names; the
    metrics file contains only deterministic fields, timing goes into the
    report alone.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = time.monotonic()

    if resume_from is not None:
        state = load_checkpoint(resume_from)
    else:
        cloud = init_cloud_from_source(
            settings["init"]["source"], settings["init"]["target_count"],
            settings["run"]["seed"], endpoint=settings["service"]["endpoint"],
            timeout=settings["service"]["timeout"],
        )
        state = RunState.fresh(cloud, settings["run"]["seed"])

    if guidance is None and settings["stage1"]["iters"] > state.iteration:
        guidance = build_guidance(settings, denoiser=denoiser)
    if refiner is None:
        refiner = build_refiner(settings)

    sampler = view_sampler(settings)
    prompt = embed_text(settings["run"]["prompt"])
    ckpt_every = settings["run"]["checkpoint_interval"]
    ckpt_path = out / checkpoint_name
    s1 = settings["stage1"]["iters"]
    s2 = settings["stage2"]["iters"]

    while state.iteration < s1:
        stage1_step(state, guidance, settings, sampler)
        if state.iteration % ckpt_every == 0:
            save_checkpoint(state, ckpt_path)
    while state.iteration < s1 + s2:
        stage2_step(state, refiner, settings, denoiser=denoiser,
                    prompt=prompt, sampler=sampler)
        if state.iteration % ckpt_every == 0:
            save_checkpoint(state, ckpt_path)
    save_checkpoint(state, ckpt_path)

    splat_path = out / "final.splat"
    save_splat(state.cloud, splat_path)

    metrics_path = out / "metrics.jsonl"
    with open(metrics_path, "w", encoding="utf-8") as f:
        for row in state.metrics:
            f.write(json.dumps(row, sort_keys=True) + "\n")

    r = settings["render"]
    rc = _render_config(settings)
    frames_dir = out / "turntable"
    frames_dir.mkdir(exist_ok=True)
    for i, az in enumerate(turntable_azimuths(turntable_frames)):
        cam = sample_orbit_camera(
            float(az), 15.0, settings["views"]["radius"], (0, 0, 0),
            _intrinsics(settings), r["width"], r["height"], near=r["near"], far=r["far"],
        )
        save_png(render(state.cloud, cam, rc).rgb, frames_dir / f"frame_{i:03d}.png")

    report = RunReport(
        splat_path=str(splat_path),
        metrics_path=str(metrics_path),
        iterations=state.iteration,
        gaussians=state.cloud.count,
        wall_seconds=time.monotonic() - started,
    )
    with open(out / "report.json", "w", encoding="utf-8") as f:
        json.dump(
            {
                "iterations": report.iterations,
                "gaussians": report.gaussians,
                "wall_seconds": report.wall_seconds,
                "splat": report.splat_path,
            },
            f,
            indent=2,
        )
    return report
