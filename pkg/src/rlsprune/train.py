"""End-to-end training driver: train, conditionally prune, repeat.

The schedule follows the multi-shot rule: after the basic training epochs a
prune round runs at an epoch boundary whenever the current loss has dropped
below the value recorded at the previous round (sentinel, initially 1e5).
"""

from dataclasses import dataclass, field, asdict

import numpy as np

from . import checkpoint, data, network, pruning, rls
from .errors import ConfigError

LOSS_SENTINEL_INIT = 1e5


@dataclass
class TrainConfig:
    batch_size: int = 128
    lam: float = 1.0
    k: float = 0.1
    alpha: float = 0.5
    eta: object = 1.0           # scalar broadcast or per-layer list
    delta: float = 1.0
    eps_h: float = 1e-8
    xi: float = 0.4
    q: int = 30                 # basic training epochs before the first prune
    epochs: int = 200
    seed: int = 0
    optimizer: str = "rls"      # 'rls' | 'momentum'
    momentum_lr: float = 0.1
    momentum_beta: float = 0.9
    momentum_weight_decay: float = 1e-4
    num_classes: int = 10
    prune_on_epoch_mean: bool = False  # use trailing-epoch mean loss as the trigger
    eval_batch_size: int = 512

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1 or self.q < 0:
            raise ConfigError("batch size and epochs must be >= 1, q >= 0")
        if not 0.0 < self.xi < 1.0:
            raise ConfigError(f"pruning ratio must be in (0,1), got {self.xi}")
        if self.optimizer not in ("rls", "momentum"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        # range checks for the RLS hyperparameters
        rls.RlsHyperParams(lam=self.lam, k=self.k, alpha=self.alpha,
                           eta=self.eta, delta=self.delta, eps_h=self.eps_h)


@dataclass
class EpochMetrics:
    epoch: int                  # 1-based
    loss: float                 # mean training loss of the epoch
    precision: float            # test precision in percent
    prune_event: int
    nodes_pct: list
    weights_pct: list


@dataclass
class RunMetrics:
    layer_names: list
    original_units: list
    original_weights: list
    epochs: list = field(default_factory=list)
    sentinel: float = LOSS_SENTINEL_INIT


@dataclass
class TrainResult:
    network: network.Network
    metrics: RunMetrics
    report: pruning.PruneReport


def _input_mask(net):
    if net.input_mask is None:
        return None
    first = net.topologies[net.learnable_indices()[0]]
    kind = "channel" if first.kind == network.CONV else "feature"
    return data.InputMask(indices=net.input_mask, kind=kind)


def _prepare_batch(x, net, mask):
    first = net.topologies[net.learnable_indices()[0]]
    if first.kind == network.FC:
        x = x.reshape(x.shape[0], -1)

    if mask is not None:
        x = data.apply_input_mask(x, mask)
    return x


def evaluate(net, dataset, mask=None, batch_size=512, num_classes=10):
    """(precision %, mean MSE loss) over a dataset; argmax ties -> smallest class."""
    correct = 0
    sq_err = 0.0
    n = dataset.size
    for start in range(0, n, batch_size):
        xb = dataset.images[start : start + batch_size]
        yb = dataset.labels[start : start + batch_size]
        x = _prepare_batch(xb, net, mask)
        out = net.forward(x).output
        correct += int(np.sum(out.argmax(axis=1) == yb))
        diff = out - data.one_hot(yb, num_classes)
        sq_err += float(np.sum(diff * diff))
    return 100.0 * correct / n, sq_err / (2.0 * n)


def train(config: TrainConfig, topologies, train_set, test_set,
          input_shape=None, resume=None, checkpoint_at=None, checkpoint_path=None):
    """Run the full training/pruning loop and collect per-epoch metrics.

    resume: path to a checkpoint to continue from (topologies argument is then
    ignored). checkpoint_at: set of 1-based epoch numbers after which to save
    to checkpoint_path (the final epoch is always saved if a path is given).
    """
    if resume is not None:
        net, _, start_epoch, sentinel = checkpoint.load_checkpoint(resume)
    else:
        net = network.Network(topologies, seed=config.seed, input_shape=input_shape)
        start_epoch, sentinel = 0, LOSS_SENTINEL_INIT

    if config.optimizer == "rls":
        opt = rls.RlsOptimizer(rls.RlsHyperParams(
            lam=config.lam, k=config.k, alpha=config.alpha, eta=config.eta,
            delta=config.delta, eps_h=config.eps_h))
        if resume is None:
            opt.attach(net)
    else:
        opt = rls.MomentumOptimizer(config.momentum_lr, config.momentum_beta,
                                    config.momentum_weight_decay)

    metrics = RunMetrics(layer_names=net.layer_names(),
                         original_units=list(net.original_unit_counts),
                         original_weights=list(net.original_weight_counts),
                         sentinel=sentinel)
    report = pruning.PruneReport()
    steps_per_epoch = train_set.size // config.batch_size
    t = start_epoch * steps_per_epoch
    checkpoint_at = set(checkpoint_at or ())

    for epoch in range(start_epoch, config.epochs):
        mask = _input_mask(net)
        losses = []
        for xb, yb in data.minibatches(train_set, config.batch_size,
                                       config.seed, epoch, config.num_classes):
            x = _prepare_batch(xb, net, mask)
            trace = net.forward(x)
            j = network.mse_loss(trace.output, yb)
            grads = net.backward(trace, yb)
            opt.step(net, trace, grads)
            losses.append(j)
            t += 1

        epoch_mean = float(np.mean(losses))
        prune_flag = 0
        if config.optimizer == "rls" and (epoch + 1) > config.q:
            trigger = epoch_mean if config.prune_on_epoch_mean else losses[-1]
            if trigger < sentinel:
                sentinel = trigger
                removed = pruning.prune_round(net, config.xi)
                if removed:
                    prune_flag = 1
                    nodes_tot, weights_tot = pruning.totals(net)
                    report.events.append(pruning.PruneEvent(
                        step=t, epoch=epoch + 1, loss=trigger, removed=removed,
                        retained_nodes_pct=nodes_tot,
                        retained_weights_pct=weights_tot))
                mask = _input_mask(net)

        precision, _ = evaluate(net, test_set, mask,
                                config.eval_batch_size, config.num_classes)
        nodes_pct, weights_pct = pruning.retained_percentages(net)
        metrics.epochs.append(EpochMetrics(
            epoch=epoch + 1, loss=epoch_mean, precision=precision,
            prune_event=prune_flag, nodes_pct=nodes_pct, weights_pct=weights_pct))
        metrics.sentinel = sentinel

        if checkpoint_path is not None and (
            epoch + 1 in checkpoint_at or epoch + 1 == config.epochs
        ):
            checkpoint.save_checkpoint(checkpoint_path, net, asdict(config),
                                       epoch + 1, sentinel)

    return TrainResult(network=net, metrics=metrics, report=report)
