"""Loss, optimizer and the training loop."""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from caunet import checkpoint
from caunet.augment import apply_pipeline, profile
from caunet.augment.pipeline import PROFILES
from caunet.data.cityscapes import Sample
from caunet.errors import ConfigurationError, ContractError, DimensionError, DivergenceError
from caunet.metrics import confusion, metrics_from_counts
from caunet.network import CAUNet, NetworkConfig, build
from caunet.tensor import Function, Tensor, no_grad

BCE_CLAMP = 1e-7


# -- loss ---------------------------------------------------------------------------
class BCELoss(Function):
    def forward(self, p, y):
        self.y = y
        self.pc = np.clip(p, BCE_CLAMP, 1 - BCE_CLAMP)
        self.inside = (p >= BCE_CLAMP) & (p <= 1 - BCE_CLAMP)
        loss = -(y * np.log(self.pc) + (1 - y) * np.log1p(-self.pc))
        return np.asarray(loss.mean(), dtype=p.dtype)

    def backward(self, grad):
        pc, y = self.pc, self.y
        g = (pc - y) / (pc * (1 - pc)) / pc.size
        g = np.where(self.inside, g, 0.0) * grad
        return g.astype(pc.dtype), None


def bce_loss(pred: Tensor, truth) -> Tensor:
    """Mean binary cross-entropy; probabilities are clamped to [1e-7, 1 − 1e-7] before the log."""
    t = truth if isinstance(truth, Tensor) else Tensor(np.asarray(truth, dtype=pred.dtype))
    if t.shape != pred.shape:
        raise DimensionError(f"bce_loss: prediction {pred.shape} vs truth {t.shape}")
    return BCELoss.apply(pred, Tensor(t.data.astype(pred.dtype)))


# -- config -------------------------------------------------------------------------
@dataclass
class TrainConfig:
    lr_initial: float = 1e-3
    lr_late: float = 1e-4
    lr_switch_epoch: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 1e-5
    epochs: int = 300
    batch_size: int = 4
    profile: str = "none"
    seed: int = 0
    resolution: tuple[int, int] = (64, 64)  # (width, height)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    target_train_iou: float | None = None  # stop once the clean-train IoU reaches this
    checkpoint_every_best: bool = True

    def __post_init__(self):
        if isinstance(self.network, dict):
            self.network = NetworkConfig.from_dict(self.network)
        self.resolution = tuple(int(v) for v in self.resolution)
        positive = ("lr_initial", "lr_late", "lr_switch_epoch", "adam_eps", "epochs", "batch_size")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        if self.weight_decay < 0:
            raise ConfigurationError("weight_decay must be non-negative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigurationError("Adam betas must lie in [0, 1)")
        if self.lr_switch_epoch > self.epochs:
            raise ConfigurationError(f"lr_switch_epoch ({self.lr_switch_epoch}) exceeds epochs ({self.epochs})")
        if self.profile not in PROFILES:
            raise ConfigurationError(f"unknown augmentation profile {self.profile!r}")

    def lr_at(self, epoch: int) -> float:
        return self.lr_initial if epoch < self.lr_switch_epoch else self.lr_late

    def drop_prob_at(self, epoch: int) -> float:
        return self.network.dropblock_prob_at(epoch, self.epochs)

    def epoch_fraction(self, epoch: int) -> float:
        return epoch / (self.epochs - 1) if self.epochs > 1 else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["resolution"] = list(self.resolution)
        return d

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown TrainConfig keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


# -- optimizer ----------------------------------------------------------------------
@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(0, {k: np.zeros_like(p) for k, p in params.items()}, {k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState, hyper: TrainConfig,
              epoch: int) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update with L2 weight decay folded into the gradient."""
    if set(state.m) != set(params):
        raise ContractError("Adam state does not match the parameter set")
    t = state.step + 1
    lr = hyper.lr_at(epoch)
    b1, b2 = hyper.beta1, hyper.beta2
    c1, c2 = 1 - b1**t, 1 - b2**t
    new_p, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        if state.m[k].shape != p.shape:
            raise ContractError(f"Adam state shape mismatch for {k}")
        g = grads.get(k)
        g = np.zeros_like(p) if g is None else g
        g = g + hyper.weight_decay * p
        m = b1 * state.m[k] + (1 - b1) * g
        v = b2 * state.v[k] + (1 - b2) * g * g
        new_p[k] = (p - lr * (m / c1) / (np.sqrt(v / c2) + hyper.adam_eps)).astype(p.dtype)
        new_m[k], new_v[k] = m.astype(p.dtype), v.astype(p.dtype)
    return new_p, AdamState(t, new_m, new_v)


class Adam:
    """Stateful wrapper applying :func:`adam_step` to a network's tensors in place."""

    def __init__(self, net: CAUNet, hyper: TrainConfig):
        self.net, self.hyper = net, hyper
        self.state = AdamState.zeros_like({k: t.data for k, t in net.named_parameters().items()})

    def step(self, epoch: int) -> None:
        named = self.net.named_parameters()
        params = {k: t.data for k, t in named.items()}
        grads = {k: t.grad for k, t in named.items()}
        new, self.state = adam_step(params, grads, self.state, self.hyper, epoch)
        for k, t in named.items():
            t.data = new[k]


# -- data plumbing ------------------------------------------------------------------
def to_batch(samples: Sequence[Sample], dtype=np.float32) -> tuple[np.ndarray, np.ndarray]:
    """Images N×3×H×W scaled to [0, 1] and masks N×1×H×W."""
    x = np.stack([s.image for s in samples]).transpose(0, 3, 1, 2).astype(dtype) / dtype(255)
    y = np.stack([s.mask for s in samples])[:, None].astype(dtype)
    return x, y


def predict(net: CAUNet, samples: Sequence[Sample], batch_size: int = 8) -> np.ndarray:
    """Eval-mode probabilities, N×1×H×W."""
    out = []
    with no_grad():
        for i in range(0, len(samples), batch_size):
            x, _ = to_batch(samples[i:i + batch_size], net.dtype.type)
            out.append(net(Tensor(x), training=False).data)
    return np.concatenate(out) if out else np.zeros((0, 1, 0, 0))


def evaluate_split(net: CAUNet, samples: Sequence[Sample], threshold: float = 0.5) -> dict:
    prob = predict(net, samples)
    truth = np.stack([s.mask for s in samples])[:, None]
    report = metrics_from_counts(confusion(prob >= threshold, truth), threshold)
    p = np.clip(prob.astype(np.float64), BCE_CLAMP, 1 - BCE_CLAMP)
    loss = float(-(truth * np.log(p) + (1 - truth) * np.log1p(-p)).mean())
    return {"loss": loss, **{k: getattr(report, k) for k in ("accuracy", "jaccard", "dice", "specificity", "mcc",
                                                              "precision", "recall")}}


# -- run log ------------------------------------------------------------------------
RUNLOG_COLUMNS = ("epoch", "loss", "acc", "iou", "dice", "spec", "mcc", "val_acc", "val_iou", "val_dice", "val_spec",
                  "val_mcc", "val_loss", "lr", "drop_prob", "train_eval_loss")


@dataclass
class RunLog:
    config: dict
    rows: list[dict] = field(default_factory=list)
    wall_clock: list[float] = field(default_factory=list)  # seconds per epoch, kept out of the CSV
    best_epoch: int = -1
    best_val_iou: float = -math.inf
    stopped_early: bool = False

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(RUNLOG_COLUMNS)
            for r in self.rows:
                w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in RUNLOG_COLUMNS])

    def last(self) -> dict:
        return self.rows[-1]


def _row(epoch, loss, tr, va, lr, drop) -> dict:
    return {"epoch": epoch, "loss": loss, "acc": tr["accuracy"], "iou": tr["jaccard"], "dice": tr["dice"],
            "spec": tr["specificity"], "mcc": tr["mcc"], "val_acc": va["accuracy"], "val_iou": va["jaccard"],
            "val_dice": va["dice"], "val_spec": va["specificity"], "val_mcc": va["mcc"], "val_loss": va["loss"],
            "lr": lr, "drop_prob": drop, "train_eval_loss": tr["loss"]}


def _check_samples(samples: Sequence[Sample], multiple: int, name: str) -> None:
    if not samples:
        raise ContractError(f"{name} set is empty")
    shapes = {s.image.shape for s in samples}
    if len(shapes) != 1:
        raise DimensionError(f"{name} samples have differing shapes {sorted(shapes)}")
    h, w = samples[0].mask.shape
    if h % multiple or w % multiple:
        raise DimensionError(f"{name} resolution {w}x{h} is not a multiple of {multiple}")


def train(config: TrainConfig, train_samples: Sequence[Sample], val_samples: Sequence[Sample],
          net: CAUNet | None = None, out_dir: str | Path | None = None, log=None) -> tuple[CAUNet, RunLog]:
    """Train with per-epoch evaluation on the clean train set and on the validation set.

    Everything random is keyed on ``config.seed``: initialisation, shuffling,
    augmentation streams and DropBlock masks.
    """
    train_samples, val_samples = list(train_samples), list(val_samples)
    net = net or build(config.network, config.seed)
    _check_samples(train_samples, net.config.multiple, "train")
    _check_samples(val_samples, net.config.multiple, "val")
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        config.to_json(out / "config.json")
    aug = profile(config.profile, config.seed)
    opt = Adam(net, config)
    runlog = RunLog(config.to_dict())
    last_good = {k: v.copy() for k, v in net.state_dict().items()}
    n = len(train_samples)
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        order = np.random.default_rng(np.random.SeedSequence([config.seed, epoch, 1])).permutation(n)
        drop_rng = np.random.default_rng(np.random.SeedSequence([config.seed, epoch, 2]))
        drop = config.drop_prob_at(epoch)
        losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            batch = [apply_pipeline(aug, train_samples[i], int(i), epoch) for i in idx]
            x, y = to_batch(batch, net.dtype.type)
            net.zero_grad()
            loss = bce_loss(net(Tensor(x), training=True, rng=drop_rng, drop_prob=drop), y)
            value = float(loss.item())
            if not math.isfinite(value):
                net.load_state_dict(last_good)
                path = None
                if out is not None:
                    path = out / "last_good.ckpt"
                    checkpoint.save(path, net, epoch - 1)
                runlog.write_csv(out / "runlog.csv") if out is not None else None
                raise DivergenceError(f"loss became {value} at epoch {epoch}; restored last good state"
                                      + (f" ({path})" if path else ""))
            loss.backward()
            opt.step(epoch)
            losses.append(value * len(idx))
        tr = evaluate_split(net, train_samples)
        va = evaluate_split(net, val_samples)
        row = _row(epoch, sum(losses) / n, tr, va, config.lr_at(epoch), drop)
        runlog.rows.append(row)
        last_good = {k: v.copy() for k, v in net.state_dict().items()}
        if va["jaccard"] > runlog.best_val_iou:
            runlog.best_val_iou, runlog.best_epoch = va["jaccard"], epoch
            if out is not None and config.checkpoint_every_best:
                checkpoint.save(out / "best.ckpt", net, epoch, {"val_iou": va["jaccard"], "train_iou": tr["jaccard"]})
        runlog.wall_clock.append(time.perf_counter() - t0)
        if log is not None:
            log(row)
        if config.target_train_iou is not None and tr["jaccard"] >= config.target_train_iou:
            runlog.stopped_early = True
            break
    if out is not None:
        runlog.write_csv(out / "runlog.csv")
        checkpoint.save(out / "final.ckpt", net, runlog.rows[-1]["epoch"], {"train_iou": runlog.rows[-1]["iou"]})
        (out / "timing.json").write_text(json.dumps({"epoch_seconds": runlog.wall_clock}, indent=1))
    return net, runlog
