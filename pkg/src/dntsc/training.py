"""Rate-distortion objectives, learning-rate schedule and the trainer."""

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import checkpoint
from ._rounding import round_half_away
from .channel import ChannelSpec
from .exceptions import ConfigurationError, ParameterError, ShapeError, TrainingError
from .harness.metrics import ms_ssim, psnr

DISTORTIONS = ("mse", "ms-ssim")
LOG_COLUMNS = ("epoch", "loss", "distortion1", "distortion2", "rate_y1", "rate_y2", "rate_z_joint", "lr", "psnr_val")


@dataclass(frozen=True)
class LossWeights:
    """Distortion weights per user and the latent-rate multiplier (JSCC only)."""

    w1: float = 1.0
    w2: float = 1.0
    eta: float = 1.0
    distortion_kind: str = "mse"

    def __post_init__(self):
        if self.w1 < 0 or self.w2 < 0 or self.eta < 0:
            raise ParameterError("loss weights must be non-negative")
        if self.distortion_kind not in DISTORTIONS:
            raise ConfigurationError(f"distortion_kind must be one of {DISTORTIONS}")

    @classmethod
    def symmetric(cls, weight, eta=1.0, kind="mse"):
        return cls(weight, weight, eta, kind)


@dataclass(frozen=True)
class TrainConfig:
    pipeline: str = "ntsc"
    epochs: int = 300
    batch_size: int = 2
    lr_init: float = 1e-4
    lr_final: float = 1e-6
    seed: int = 0
    snr_db: float = 10.0
    weight: float = 64.0
    eta: float = 1.0
    distortion_kind: str = "mse"
    steps_per_epoch: int = 0
    checkpoint_every: int = 0
    grad_clip: float = 0.0
    prior_lr_scale: float = 10.0
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.pipeline not in ("ntsc", "ntscc"):
            raise ConfigurationError(f"unknown pipeline {self.pipeline!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs and batch_size must be >= 1")
        if self.lr_init <= 0 or self.lr_final <= 0 or self.prior_lr_scale <= 0:
            raise ConfigurationError("learning rates must be positive")

    @property
    def weights(self):
        return LossWeights.symmetric(self.weight, self.eta, self.distortion_kind)

    def to_dict(self):
        d = asdict(self)
        d.pop("extra")
        return d


def lr_schedule(t, N, lr_init=1e-4, lr_final=1e-6):
    """Cosine annealing from ``lr_init`` at t=0 to ``lr_final`` at t=N."""
    if N <= 0:
        raise ParameterError("N must be positive")
    if not 0 <= t <= N:
        raise ParameterError(f"t={t} outside [0, {N}]")
    return lr_final + 0.5 * (lr_init - lr_final) * (1.0 + math.cos(t * math.pi / N))


def distortion(x, x_hat, kind="mse"):
    """Batch-mean MSE or 1 - MS-SSIM on [0,1] pixels."""
    if x.shape != x_hat.shape:
        raise ShapeError(f"shape mismatch: {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    if kind == "mse":
        return ((x - x_hat) ** 2).mean()
    if kind == "ms-ssim":
        return 1.0 - ms_ssim(x, x_hat).mean()
    raise ConfigurationError(f"unknown distortion {kind!r}")


def _pixels(x):
    return x.shape[0] * x.shape[-2] * x.shape[-1]


def _assemble(out, x1, x2, weights, eta):
    """Loss terms in bits per pixel; the scalar is the ordered sum of the components."""
    npx = _pixels(x1)
    d1 = distortion(x1, out["x_hat1"], weights.distortion_kind)
    d2 = distortion(x2, out["x_hat2"], weights.distortion_kind)
    components = {
        "weighted_distortion1": weights.w1 * d1,
        "weighted_distortion2": weights.w2 * d2,
        "rate_y1": eta * out["bits_y1"].sum() / npx,
        "rate_y2": eta * out["bits_y2"].sum() / npx,
        "rate_z_joint": out["bits_z"].sum() / npx,
    }
    loss = sum(components.values())
    info = {"distortion1": d1.detach(), "distortion2": d2.detach()}
    _check_finite(loss, components)
    return loss, components, info


def _check_finite(loss, components):
    if not torch.isfinite(loss):
        snap = {k: float(v.detach()) if torch.is_tensor(v) else float(v) for k, v in components.items()}
        raise TrainingError(f"non-finite loss; components {snap}", snap)


def loss_ntsc(batch, model, generator=None, weights=LossWeights()):
    """Weighted distortions plus latent and joint hyperprior rates.

    Returns (scalar, components, info); ``components`` sums to the scalar.
    """
    x1, x2 = batch
    out = model(x1, x2, generator)
    return _assemble(out, x1, x2, weights, 1.0)


def loss_ntscc(batch, model, spec, generator=None, weights=LossWeights()):
    """JSCC objective; latent rate terms are scaled by ``weights.eta``."""
    x1, x2 = batch
    out = model(x1, x2, spec, generator)
    return _assemble(out, x1, x2, weights, weights.eta)


def _step_generator(seed, epoch, step):
    return torch.Generator().manual_seed(int(np.random.SeedSequence([seed, epoch, step]).generate_state(1)[0]))


def batches(n, batch_size, seed, epoch):
    """Seeded per-epoch shuffle; the last short batch is kept."""
    order = np.random.default_rng([seed, epoch]).permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


@torch.no_grad()
def validation_psnr(model, pairs, spec=None):
    """Mean PSNR over both users on quantized (or channel-simulated) reconstructions."""
    if pairs is None or len(pairs[0]) == 0:
        return float("nan")
    x1, x2 = pairs
    if spec is None:
        y1 = round_half_away(model.analysis(x1, 1))
        y2 = round_half_away(model.analysis(x2, 2))
        h1, h2, _ = model.reconstruct(y1, y2)
    else:
        h1, h2, _, _, _ = model.simulate(x1, x2, spec)
    vals = [psnr(a[i], b[i]) for a, b in ((x1, h1), (x2, h2)) for i in range(len(a))]
    return float(np.mean(vals))


def _optimizer_tensors(opt, model):
    names = {id(p): n for n, p in model.named_parameters()}
    out = {}
    for group in opt.param_groups:
        for p in group["params"]:
            st = opt.state.get(p)
            if not st:
                continue
            for key, val in st.items():
                out[f"optim/{names[id(p)]}/{key}"] = torch.as_tensor(val).clone()
    return out


def _restore_optimizer(opt, model, extras):
    params = dict(model.named_parameters())
    for key, val in extras.items():
        if not key.startswith("optim/"):
            continue
        _, name, slot = key.split("/")
        opt.state[params[name]][slot] = val.clone()


def _format_row(row):
    return {k: (repr(float(v)) if k != "epoch" else str(int(v))) for k, v in row.items()}


def write_log(rows, path=None):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=LOG_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(_format_row(r))
    if path is not None:
        Path(path).write_text(buf.getvalue())
    return buf.getvalue()


@dataclass
class TrainResult:
    model: torch.nn.Module
    log: list
    checkpoints: list


def train(config, model, train_pairs, val_pairs=None, out_dir=None, resume=None, stop_after=None):
    """Train ``model`` on pairs given as two (n, 3, H, W) tensors.

    Checkpoints (model, Adam state, log) go to ``out_dir`` every
    ``checkpoint_every`` epochs and at the end. ``resume`` continues from such
    a checkpoint and replays the uninterrupted run exactly. ``stop_after``
    halts after that many epochs in this call (used to test resumption).
    """
    x1_all, x2_all = train_pairs
    n = x1_all.shape[0]
    if n == 0:
        raise ConfigurationError("training set is empty")
    if (config.pipeline == "ntscc") != hasattr(model, "simulate"):
        raise ConfigurationError("pipeline does not match the model kind")
    spec = ChannelSpec(snr_db=config.snr_db, seed=config.seed) if config.pipeline == "ntscc" else None
    prior = list(model.hyper_prior.parameters())
    prior_ids = {id(p) for p in prior}
    rest = [p for p in model.parameters() if id(p) not in prior_ids]
    opt = torch.optim.Adam([{"params": rest, "scale": 1.0}, {"params": prior, "scale": config.prior_lr_scale}],
                           lr=config.lr_init)
    log, start = [], 0
    if resume is not None:
        tensors, _, meta = checkpoint.load(resume)
        own = model.state_dict()
        model.load_state_dict({k: tensors[k] for k in own})
        for p in model.parameters():
            opt.state[p] = {}
        _restore_optimizer(opt, model, tensors)
        log = [dict(r) for r in meta["log"]]
        start = int(meta["epoch"])
    weights = config.weights
    saved = []
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    epochs_run = 0
    for epoch in range(start, config.epochs):
        lr = lr_schedule(epoch, config.epochs, config.lr_init, config.lr_final)
        for g in opt.param_groups:
            g["lr"] = lr * g["scale"]
        model.train()
        sums = dict.fromkeys(("loss", "distortion1", "distortion2", "rate_y1", "rate_y2", "rate_z_joint"), 0.0)
        plan = batches(n, config.batch_size, config.seed, epoch)
        if config.steps_per_epoch:
            plan = plan[:config.steps_per_epoch]
        for step, idx in enumerate(plan):
            idx_t = torch.as_tensor(idx)
            batch = (x1_all[idx_t], x2_all[idx_t])
            gen = _step_generator(config.seed, epoch, step)
            opt.zero_grad(set_to_none=True)
            if spec is None:
                loss, comps, info = loss_ntsc(batch, model, gen, weights)
            else:
                loss, comps, info = loss_ntscc(batch, model, spec, gen, weights)
            loss.backward()
            bad = [nm for nm, p in model.named_parameters() if p.grad is not None and not torch.isfinite(p.grad).all()]
            if bad:
                snap = {k: float(v) for k, v in comps.items()}
                raise TrainingError(f"non-finite gradient in {bad[0]}", snap)
            if config.grad_clip:
                torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
            opt.step()
            sums["loss"] += float(loss.detach())
            sums["distortion1"] += float(info["distortion1"])
            sums["distortion2"] += float(info["distortion2"])
            for k in ("rate_y1", "rate_y2", "rate_z_joint"):
                sums[k] += float(comps[k].detach())
        model.eval()
        row = {"epoch": epoch + 1, **{k: v / len(plan) for k, v in sums.items()}, "lr": lr,
               "psnr_val": validation_psnr(model, val_pairs, spec)}
        log.append(row)
        epochs_run += 1
        done = epoch + 1
        last = done == config.epochs or (stop_after is not None and epochs_run >= stop_after)
        if out_dir is not None and (last or (config.checkpoint_every and done % config.checkpoint_every == 0)):
            path = out_dir / f"checkpoint_{done:04d}.dntx"
            model.save(path, {"epoch": done, "log": log, "train": config.to_dict()}, _optimizer_tensors(opt, model))
            saved.append(path)
            write_log(log, out_dir / "metrics.csv")
        if last:
            break
    model.eval()
    return TrainResult(model, log, saved)
