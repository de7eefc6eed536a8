"""Pixel-space conditional DDPM at toy scale.

Targets are normalized disparity images mapped to [-1, 1]; the denoiser sees
the noisy target plus the sketch mask, partial depth and validity mask as
extra input channels.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import torch
from torch import nn

DEFAULT_T = 1000
DEFAULT_BETAS = (1e-4, 2e-2)


class TrainingFault(RuntimeError):
    pass


class SamplerFault(RuntimeError):
    pass


@dataclass(frozen=True)
class DiffusionSchedule:
    betas: np.ndarray  # index t-1 holds beta_t

    def __post_init__(self):
        b = np.asarray(self.betas, dtype=np.float64)
        if b.ndim != 1 or len(b) < 1:
            raise ValueError("need at least one timestep")
        if not ((b > 0).all() and (b < 1).all() and (np.diff(b) >= 0).all()):
            raise ValueError("betas must be non-decreasing in (0, 1)")
        object.__setattr__(self, "betas", b)

    @classmethod
    def linear(cls, T: int = DEFAULT_T, beta_start: float = DEFAULT_BETAS[0], beta_end: float = DEFAULT_BETAS[1]):
        return cls(np.linspace(beta_start, beta_end, T))

    @property
    def T(self) -> int:
        return len(self.betas)

    @property
    def alphas(self) -> np.ndarray:
        return 1.0 - self.betas

    @property
    def alpha_bar(self) -> np.ndarray:
        """Length T+1 with ``alpha_bar[0] = 1``."""
        return np.concatenate([[1.0], np.cumprod(self.alphas)])

    def beta(self, t: int) -> float:
        return float(self.betas[t - 1])


# --- conditioning ------------------------------------------------------------


def condition_tensor(x, p=None, m=None) -> np.ndarray:
    """Stack (sketch mask, partial depth, validity mask) as (3, H, W); p is zeroed where m = 0."""
    x = np.asarray(x, dtype=bool)
    m = np.zeros_like(x) if m is None else np.asarray(m, dtype=bool)
    if p is None:
        p = np.zeros(x.shape)
    p = np.where(m, np.nan_to_num(np.asarray(p, dtype=float)), 0.0)
    return np.stack([x.astype(float), p, m.astype(float)])


def to_latent(y: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return np.where(mask, 2.0 * np.nan_to_num(y) - 1.0, 0.0)


def from_latent(z: np.ndarray) -> np.ndarray:
    return np.clip((z + 1.0) / 2.0, 0.0, 1.0)


# --- denoiser ----------------------------------------------------------------


def timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64) / half)
    ang = t.to(torch.float64)[:, None] * freqs[None, :]
    return torch.cat([torch.sin(ang), torch.cos(ang)], dim=1)


class TinyDenoiser(nn.Module):
    """Three 3x3 convolutions plus a dense global pathway.

    The timestep embedding enters as a per-channel bias after the first layer.
    The global pathway reads the whole input (noisy image and condition); mixed with the timestep it
    scales and shifts the second layer's channels and adds a full-image term
    to the output. Locally identical regions (two outlines of the same shape)
    can only be told apart that way. A timestep-dependent skip scales the
    input straight into the output.
    """

    def __init__(self, size: int = 16, width: int = 32, temb_dim: int = 32, kernel: int = 3, dtype=torch.float32):
        super().__init__()
        self.size = size
        self.width = width
        self.temb_dim = temb_dim
        self.kernel = kernel
        pad = kernel // 2
        self.conv1 = nn.Conv2d(4, width, kernel, padding=pad, dtype=dtype)
        self.temb = nn.Linear(temb_dim, width, dtype=dtype)
        self.conv2 = nn.Conv2d(width, width, kernel, padding=pad, dtype=dtype)
        self.conv3 = nn.Conv2d(width, 1, kernel, padding=pad, dtype=dtype)
        self.glob = nn.Linear(4 * size * size, width, dtype=dtype)
        self.film = nn.Linear(width, 2 * width, dtype=dtype)
        self.head = nn.Linear(width, size * size, dtype=dtype)
        self.skip = nn.Linear(width, 1, dtype=dtype)
        self.act = nn.SiLU()

    def forward(self, z_t: torch.Tensor, t: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        dtype = self.conv1.weight.dtype
        z = z_t.to(dtype)
        n = z.shape[0]
        if z.shape[1:] != (self.size, self.size):
            raise ValueError(f"denoiser built for {self.size}x{self.size}, got {tuple(z.shape[1:])}")
        inp = torch.cat([z[:, None], c.to(dtype)], dim=1)
        e = self.temb(timestep_embedding(t, self.temb_dim).to(dtype))
        h = self.act(self.conv1(inp) + e[:, :, None, None])
        g = self.act(self.glob(inp.flatten(1)) + e)
        scale, shift = self.film(g).chunk(2, dim=1)
        h = self.act(self.conv2(h) * (1.0 + scale[:, :, None, None]) + shift[:, :, None, None])
        out = self.conv3(h)[:, 0] + self.head(g).view(n, self.size, self.size)
        return out + self.skip(e)[:, :, None] * z

    def config(self) -> dict:
        return {"size": self.size, "width": self.width, "temb_dim": self.temb_dim, "kernel": self.kernel}


def flat_parameters(model: nn.Module) -> np.ndarray:
    return torch.nn.utils.parameters_to_vector(model.parameters()).detach().cpu().double().numpy()


def set_flat_parameters(model: nn.Module, vec: np.ndarray) -> None:
    ref = next(model.parameters())
    torch.nn.utils.vector_to_parameters(torch.as_tensor(vec, dtype=ref.dtype), model.parameters())


def save_model(path, model: TinyDenoiser, schedule: DiffusionSchedule) -> tuple[Path, Path]:
    """Flat little-endian float64 vector plus a JSON header next to it."""
    path = Path(path)
    vec = flat_parameters(model)
    path.write_bytes(vec.astype("<f8").tobytes())
    header = {
        **model.config(),
        "n_params": int(vec.size),
        "dtype": "float64",
        "betas": [float(b) for b in schedule.betas],
    }
    head_path = path.with_suffix(".json")
    head_path.write_text(json.dumps(header, sort_keys=True), encoding="utf-8")
    return path, head_path


def load_model(path) -> tuple[TinyDenoiser, DiffusionSchedule]:
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    vec = np.frombuffer(path.read_bytes(), dtype="<f8").copy()
    if vec.size != header["n_params"]:
        raise ValueError(f"parameter count {vec.size} != header {header['n_params']}")
    model = TinyDenoiser(header["size"], header["width"], header["temb_dim"], header["kernel"])
    set_flat_parameters(model, vec)
    return model, DiffusionSchedule(np.asarray(header["betas"]))


# --- forward process and objective -------------------------------------------


def forward_noise(z0, t: int, schedule: DiffusionSchedule, seed: int):
    """Draw z_t ~ q(z_t | z_0); returns (z_t, eps) as numpy arrays."""
    if not 1 <= t <= schedule.T:
        raise ValueError(f"timestep {t} outside [1, {schedule.T}]")
    z0 = np.asarray(z0, dtype=float)
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal(z0.shape)
    ab = schedule.alpha_bar[t]
    return math.sqrt(ab) * z0 + math.sqrt(1.0 - ab) * eps, eps


Denoiser = Callable[[torch.Tensor, torch.Tensor, torch.Tensor], torch.Tensor]


def _loss_tensor(z0: torch.Tensor, c: torch.Tensor, model: Denoiser, schedule: DiffusionSchedule, gen: torch.Generator):
    B = z0.shape[0]
    t = torch.randint(1, schedule.T + 1, (B,), generator=gen)
    eps = torch.randn(z0.shape, generator=gen, dtype=torch.float64).to(z0.dtype)
    ab = torch.as_tensor(schedule.alpha_bar, dtype=z0.dtype)[t][:, None, None]
    z_t = ab.sqrt() * z0 + (1.0 - ab).sqrt() * eps
    pred = model(z_t, t, c)
    # E ||eps - eps_hat||^2: sum over pixels, mean over the batch
    return ((eps - pred) ** 2).sum(dim=(1, 2)).mean()


def ldm_loss(batch, model: Denoiser, schedule: DiffusionSchedule, seed: int) -> tuple[float, np.ndarray | None]:
    """Monte-Carlo noise-prediction loss and its gradient w.r.t. the model's parameters.

    ``batch`` is ``(z0, c)`` with shapes (B, H, W) and (B, 3, H, W). The gradient
    is None when ``model`` has no parameters.
    """
    z0, c = batch
    params = list(model.parameters()) if isinstance(model, nn.Module) else []
    dtype = params[0].dtype if params else torch.float64
    z0 = torch.as_tensor(np.asarray(z0), dtype=dtype)
    c = torch.as_tensor(np.asarray(c), dtype=dtype)
    gen = torch.Generator().manual_seed(int(seed))
    for p in params:
        p.grad = None
    loss = _loss_tensor(z0, c, model, schedule, gen)
    if not torch.isfinite(loss):
        raise TrainingFault(f"non-finite loss {loss.item()} (batch {tuple(z0.shape)})")
    if not params:
        return float(loss.item()), None
    loss.backward()
    grad = torch.cat([p.grad.reshape(-1) for p in params]).detach().double().numpy()
    return float(loss.item()), grad


@dataclass
class TrainResult:
    losses: list[float] = field(default_factory=list)


def train(
    model: TinyDenoiser,
    schedule: DiffusionSchedule,
    draw_batch: Callable[[np.random.Generator], tuple[np.ndarray, np.ndarray]],
    steps: int,
    lr: float,
    seed: int,
    momentum: float = 0.9,
    optimizer: str = "sgd",
    cosine: bool = False,
) -> TrainResult:
    """Fixed-step training on the per-pixel noise-prediction loss.

    ``optimizer`` is ``"sgd"`` (with momentum) or ``"adam"``; ``cosine`` anneals
    the step size to zero over the run.
    """
    if optimizer not in ("sgd", "adam"):
        raise ValueError(f"unknown optimizer {optimizer!r}")
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    gen = torch.Generator().manual_seed(int(seed))
    if optimizer == "adam":
        opt = torch.optim.Adam(model.parameters(), lr=lr)
    else:
        opt = torch.optim.SGD(model.parameters(), lr=lr, momentum=momentum)
    decay = torch.optim.lr_scheduler.CosineAnnealingLR(opt, steps) if cosine else None
    dtype = next(model.parameters()).dtype
    result = TrainResult()
    for step in range(steps):
        z0, c = draw_batch(rng)
        z0 = torch.as_tensor(z0, dtype=dtype)
        c = torch.as_tensor(c, dtype=dtype)
        loss = _loss_tensor(z0, c, model, schedule, gen) / (z0.shape[1] * z0.shape[2])
        if not torch.isfinite(loss):
            raise TrainingFault(f"non-finite loss at step {step}; last losses {result.losses[-5:]}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        if decay is not None:
            decay.step()
        result.losses.append(float(loss.item()))
    return result


# --- sampler -----------------------------------------------------------------


def _timesteps(T: int, steps: int | None) -> list[int]:
    if steps is None or steps >= T:
        return list(range(T, 0, -1))
    ts = np.unique(np.round(np.linspace(1, T, steps)).astype(int))[::-1]
    return [int(t) for t in ts]


@torch.no_grad()
def sample(
    c,
    model: Denoiser,
    schedule: DiffusionSchedule,
    seed: int,
    steps: int | None = None,
    n: int = 1,
    guidance: float = 1.0,
) -> np.ndarray:
    """Ancestral DDPM sampling from pure noise; returns (n, H, W) disparity in [0, 1].

    ``c`` is one (3, H, W) condition or a batch of n of them. With ``steps`` < T
    the chain runs on an evenly strided subset of timesteps. ``guidance`` != 1
    mixes in a second prediction with the partial-depth channels blanked:
    eps = eps_sketch + guidance * (eps_full - eps_sketch).
    """
    c = np.asarray(c, dtype=float)
    if c.ndim == 3:
        c = np.broadcast_to(c, (n,) + c.shape)
    n = c.shape[0]
    H, W = c.shape[2:]
    params = list(model.parameters()) if isinstance(model, nn.Module) else []
    dtype = params[0].dtype if params else torch.float64
    gen = torch.Generator().manual_seed(int(seed))
    ct = torch.as_tensor(np.array(c, dtype=float), dtype=dtype)
    c_sketch = ct.clone()
    c_sketch[:, 1:] = 0.0
    z = torch.randn((n, H, W), generator=gen, dtype=torch.float64).to(dtype)
    ab = schedule.alpha_bar
    ts = _timesteps(schedule.T, steps)
    for i, t in enumerate(ts):
        t_prev = ts[i + 1] if i + 1 < len(ts) else 0
        a_t, a_prev = ab[t], ab[t_prev]
        beta = 1.0 - a_t / a_prev
        tt = torch.full((n,), t, dtype=torch.long)
        eps = model(z, tt, ct)
        if guidance != 1.0:
            base = model(z, tt, c_sketch)
            eps = base + guidance * (eps - base)
        x0 = ((z - math.sqrt(1.0 - a_t) * eps) / math.sqrt(a_t)).clamp(-1.0, 1.0)
        if t_prev == 0:
            z = x0
        else:
            mean = (math.sqrt(a_prev) * beta / (1.0 - a_t)) * x0 + (
                math.sqrt(1.0 - beta) * (1.0 - a_prev) / (1.0 - a_t)
            ) * z
            var = beta * (1.0 - a_prev) / (1.0 - a_t)
            noise = torch.randn((n, H, W), generator=gen, dtype=torch.float64).to(dtype)
            z = mean + math.sqrt(var) * noise
        if not torch.isfinite(z).all():
            raise SamplerFault(f"non-finite sampler state at step t={t}")
    return from_latent(z.double().numpy())


# --- two-mode (Necker) experiment --------------------------------------------


def necker_fixture(size: int = 16, near: float = 0.85, far: float = 0.15):
    """Two overlapping square outlines joined at the corners.

    Returns (mask, y_a, y_b): in ``y_a`` the first square is near and the
    second far, ``y_b`` swaps them. Overlaps keep the nearer value.
    """
    s = size / 16.0

    def q(v):
        return int(round(v * s))

    mask = np.zeros((size, size), dtype=bool)
    ya = np.full((size, size), -np.inf)
    yb = np.full((size, size), -np.inf)

    def stroke(r0, c0, r1, c1, va0, va1):
        n = max(abs(r1 - r0), abs(c1 - c0)) + 1
        for i in range(n):
            f = i / (n - 1) if n > 1 else 0.0
            r = int(round(r0 + f * (r1 - r0)))
            cc = int(round(c0 + f * (c1 - c0)))
            va = va0 + f * (va1 - va0)
            mask[r, cc] = True
            ya[r, cc] = max(ya[r, cc], va)
            yb[r, cc] = max(yb[r, cc], 1.0 - va)

    a0, a1 = q(2), q(9)
    b0, b1 = q(6), q(13)
    for lo, hi, val in ((a0, a1, near), (b0, b1, far)):
        stroke(lo, lo, lo, hi, val, val)
        stroke(hi, lo, hi, hi, val, val)
        stroke(lo, lo, hi, lo, val, val)
        stroke(lo, hi, hi, hi, val, val)
    for (ra, ca), (rb, cb) in (
        ((a0, a0), (b0, b0)),
        ((a0, a1), (b0, b1)),
        ((a1, a0), (b1, b0)),
        ((a1, a1), (b1, b1)),
    ):
        stroke(ra, ca, rb, cb, near, far)
    ya = np.where(mask, ya, np.nan)
    yb = np.where(mask, yb, np.nan)
    return mask, ya, yb


def bfs_pixel_reveal(mask: np.ndarray, k: float, rng: np.random.Generator) -> np.ndarray:
    """Reveal a connected run of stroke pixels (8-neighbour BFS) covering >= k of the mask."""
    pix = np.argwhere(mask)
    total = len(pix)
    out = np.zeros_like(mask, dtype=bool)
    if k <= 0 or total == 0:
        return out
    need = math.ceil(k * total)
    H, W = mask.shape
    got = 0
    while got < need:
        remaining = np.argwhere(mask & ~out)
        start = tuple(remaining[rng.integers(len(remaining))])
        queue = deque([start])
        out[start] = True
        got += 1
        while queue and got < need:
            r, c = queue.popleft()
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    rr, cc = r + dr, c + dc
                    if 0 <= rr < H and 0 <= cc < W and mask[rr, cc] and not out[rr, cc]:
                        out[rr, cc] = True
                        got += 1
                        queue.append((rr, cc))
                        if got >= need:
                            break
                if got >= need:
                    break
    return out


@dataclass
class TwoModeConfig:
    size: int = 16
    T: int = DEFAULT_T
    width: int = 32
    diffusion_steps: int = 4000
    optimizer: str = "adam"
    cosine: bool = True
    regressor_steps: int = 1500
    batch: int = 32
    lr: float = 2e-3
    regressor_lr: float = 0.05
    n_samples: int = 100
    tau: float = 0.1
    anchor_coverage: float = 0.25
    partial_probability: float = 0.8
    anchor_guidance: float = 2.0
    degenerate: bool = False


@dataclass
class TwoModeReport:
    regressor_to_mean: float
    regressor_to_modes: tuple[float, float]
    mode_fraction: float
    mode_counts: dict
    mean_to_modes: float
    anchored_fraction_a: float
    sample_spread: float
    diffusion_losses: list[float] = field(repr=False, default_factory=list)
    regressor_losses: list[float] = field(repr=False, default_factory=list)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["diffusion_loss_tail"] = float(np.mean(self.diffusion_losses[-100:])) if self.diffusion_losses else None
        d["regressor_loss_tail"] = float(np.mean(self.regressor_losses[-100:])) if self.regressor_losses else None
        d.pop("diffusion_losses")
        d.pop("regressor_losses")
        return d


def _masked_mae(a: np.ndarray, b: np.ndarray, mask: np.ndarray) -> float:
    return float(np.abs(a[mask] - b[mask]).mean())


def train_two_mode(cfg: TwoModeConfig, seed: int):
    """Train the diffusion model on the two-mode fixture; returns (model, schedule, fixture, losses)."""
    mask, ya, yb = necker_fixture(cfg.size)
    if cfg.degenerate:
        yb = ya.copy()
    modes = np.stack([to_latent(ya, mask), to_latent(yb, mask)])
    vals = np.stack([np.nan_to_num(ya), np.nan_to_num(yb)])

    def draw(rng: np.random.Generator):
        # balanced: exactly half of each batch per mode
        which = np.arange(cfg.batch) % 2
        rng.shuffle(which)
        cs = []
        for w in which:
            if rng.random() < cfg.partial_probability:
                m = bfs_pixel_reveal(mask, rng.uniform(0.1, 0.9), rng)
                cs.append(condition_tensor(mask, vals[w], m))
            else:
                cs.append(condition_tensor(mask))
        return modes[which], np.stack(cs)

    torch.manual_seed(seed)
    model = TinyDenoiser(cfg.size, cfg.width)
    schedule = DiffusionSchedule.linear(cfg.T)
    res = train(model, schedule, draw, cfg.diffusion_steps, cfg.lr, seed, optimizer=cfg.optimizer, cosine=cfg.cosine)
    return model, schedule, (mask, ya, yb), res.losses


def train_regressor(mask, ya, yb, cfg: TwoModeConfig, seed: int):
    """Deterministic x -> y network fit by least squares on equally frequent modes."""
    torch.manual_seed(seed + 1)
    net = TinyDenoiser(cfg.size, cfg.width)
    opt = torch.optim.SGD(net.parameters(), lr=cfg.regressor_lr, momentum=0.9)
    c = torch.as_tensor(condition_tensor(mask), dtype=torch.float32)[None].repeat(cfg.batch, 1, 1, 1)
    targets = torch.as_tensor(np.stack([np.nan_to_num(ya), np.nan_to_num(yb)]), dtype=torch.float32)
    which = torch.arange(cfg.batch) % 2
    zeros = torch.zeros(cfg.batch, *mask.shape)
    t0 = torch.zeros(cfg.batch, dtype=torch.long)
    wmask = torch.as_tensor(mask, dtype=torch.float32)
    losses = []
    for _ in range(cfg.regressor_steps):
        pred = net(zeros, t0, c)
        loss = (((pred - targets[which]) ** 2) * wmask).sum() / (wmask.sum() * cfg.batch)
        if not torch.isfinite(loss):
            raise TrainingFault(f"regressor diverged; loss trace {losses[-5:]}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        losses.append(float(loss.item()))
    with torch.no_grad():
        out = net(zeros[:1], t0[:1], c[:1])[0].double().numpy()
    return out, losses


def nearest_mode(samples: np.ndarray, modes: list[np.ndarray], mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Index of the closest mode per sample and that masked MAE."""
    d = np.array([[_masked_mae(s, m, mask) for m in modes] for s in samples])
    return d.argmin(axis=1), d.min(axis=1)


def two_mode_experiment(seed: int, cfg: TwoModeConfig | None = None) -> TwoModeReport:
    """Deterministic regression vs diffusion sampling on a two-interpretation sketch."""
    cfg = cfg or TwoModeConfig()
    model, schedule, (mask, ya, yb), dlosses = train_two_mode(cfg, seed)
    if cfg.degenerate:
        yb = ya.copy()
    mean_img = (np.nan_to_num(ya) + np.nan_to_num(yb)) / 2.0
    reg, rlosses = train_regressor(mask, ya, yb, cfg, seed)

    free = sample(condition_tensor(mask), model, schedule, seed + 7, n=cfg.n_samples)
    which, dist = nearest_mode(free, [np.nan_to_num(ya), np.nan_to_num(yb)], mask)
    ok = dist <= cfg.tau

    rng = np.random.default_rng(seed + 11)
    anchored_c = []
    for _ in range(cfg.n_samples):
        m = bfs_pixel_reveal(mask, cfg.anchor_coverage, rng)
        anchored_c.append(condition_tensor(mask, np.nan_to_num(ya), m))
    anchored = sample(np.stack(anchored_c), model, schedule, seed + 13, guidance=cfg.anchor_guidance)
    awhich, adist = nearest_mode(anchored, [np.nan_to_num(ya), np.nan_to_num(yb)], mask)
    a_ok = (awhich == 0) & (adist <= cfg.tau)

    spread = float(np.mean([_masked_mae(free[i], free[i + 1], mask) for i in range(len(free) - 1)]))
    return TwoModeReport(
        regressor_to_mean=_masked_mae(reg, mean_img, mask),
        regressor_to_modes=(_masked_mae(reg, np.nan_to_num(ya), mask), _masked_mae(reg, np.nan_to_num(yb), mask)),
        mode_fraction=float(ok.mean()),
        mode_counts={"a": int(((which == 0) & ok).sum()), "b": int(((which == 1) & ok).sum()), "neither": int((~ok).sum())},
        mean_to_modes=_masked_mae(mean_img, np.nan_to_num(ya), mask),
        anchored_fraction_a=float(a_ok.mean()),
        sample_spread=spread,
        diffusion_losses=dlosses,
        regressor_losses=rlosses,
    )
