"""Decomposition of a fused image into infrared and visible components.

A small convolutional net (shared three-layer encoder, one decoder head
per modality, ~10 KB of parameters) is trained to invert fusion:
given only the fused image it reconstructs both sources.  Training
minimises the summed reconstruction MSE against the true sources with
Adam.  Inference is pure and deterministic.
"""

from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from sklearn.base import BaseEstimator

from . import serialize
from .errors import DimensionMismatchError, EmptyDatasetError, \
    NonFiniteLossError, TooSmallError
from .image import load_gray, save_pgm
from .validation import check_image

__all__ = ["FusionDecomposer", "load_components", "save_components",
           "augment_for_zero_suppression", "PROBE_FUSION_OPS", "PROBE_MAGIC"]

PROBE_MAGIC = "IPRB"

# single-core box; single-threaded torch also keeps training and
# inference bit-reproducible regardless of the surrounding worker count
torch.set_num_threads(1)

_CONV = dict(kernel_size=3, padding=1, padding_mode="replicate")


class _ProbeNet(nn.Module):
    def __init__(self):
        super().__init__()
        self.enc1 = nn.Conv2d(1, 8, **_CONV)
        self.enc2 = nn.Conv2d(8, 8, **_CONV)
        self.enc3 = nn.Conv2d(8, 8, **_CONV)
        self.ir1 = nn.Conv2d(8, 8, **_CONV)
        self.ir2 = nn.Conv2d(8, 1, **_CONV)
        self.vis1 = nn.Conv2d(8, 8, **_CONV)
        self.vis2 = nn.Conv2d(8, 1, **_CONV)

    def forward(self, x):
        z = F.relu(self.enc1(x))
        z = F.relu(self.enc2(z))
        z = F.relu(self.enc3(z))
        ir = torch.sigmoid(self.ir2(F.relu(self.ir1(z))))
        vis = torch.sigmoid(self.vis2(F.relu(self.vis1(z))))
        return ir, vis


_PARAM_ORDER = ("enc1", "enc2", "enc3", "ir1", "ir2", "vis1", "vis2")


def _param_tensors(net):
    out = []
    for name in _PARAM_ORDER:
        layer = getattr(net, name)
        out.append(layer.weight.detach().numpy())
        out.append(layer.bias.detach().numpy())
    return out


def _param_shapes():
    net = _ProbeNet()
    return [t.shape for t in _param_tensors(net)]


class FusionDecomposer(BaseEstimator):
    """Estimator splitting a fused image into (ir, vis) components.

    fit() trains on (ir, vis, fused) triples; transform() maps a fused
    image to its decomposed pair.  Deterministic under ``seed``.
    """

    def __init__(self, learning_rate=1e-3, batch_size=8, epochs=40, seed=0):
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed

    # -- construction -----------------------------------------------------

    def _init_net(self):
        torch.manual_seed(self.seed)
        self.net_ = _ProbeNet()
        self.net_.eval()
        return self

    def _ensure_net(self):
        if not hasattr(self, "net_"):
            self._init_net()

    # -- training ---------------------------------------------------------

    def fit(self, triples, y=None):
        """Train on a sequence of (ir, vis, fused) image triples.

        Intended for 50+ triples of identical shape; fused may come
        from any fusion operator over (ir, vis).
        """
        if self.learning_rate < 0 or self.batch_size < 1:
            raise ValueError("learning_rate must be >= 0, batch_size >= 1")
        data = [tuple(check_image(im) for im in t) for t in triples]
        if not data:
            raise EmptyDatasetError("decomposer training needs triples")
        shape = data[0][0].shape
        for t in data:
            for im in t:
                if im.shape != shape:
                    raise DimensionMismatchError(
                        "all training triples must share one shape")
        ir_t = torch.tensor(np.stack([t[0] for t in data])[:, None],
                            dtype=torch.float32)
        vis_t = torch.tensor(np.stack([t[1] for t in data])[:, None],
                             dtype=torch.float32)
        fus_t = torch.tensor(np.stack([t[2] for t in data])[:, None],
                             dtype=torch.float32)

        self._init_net()
        self.net_.train()
        opt = torch.optim.Adam(self.net_.parameters(), lr=self.learning_rate,
                               betas=(0.9, 0.999), eps=1e-8)
        rng = np.random.default_rng(self.seed)
        n = len(data)
        self.loss_curve_ = []
        for epoch in range(self.epochs):
            order = rng.permutation(n)
            total = 0.0
            for start in range(0, n, self.batch_size):
                idx = order[start:start + self.batch_size].copy()
                fused = fus_t[idx]
                ir_hat, vis_hat = self.net_(fused)
                loss = F.mse_loss(ir_hat, ir_t[idx]) \
                    + F.mse_loss(vis_hat, vis_t[idx])
                if not torch.isfinite(loss):
                    raise NonFiniteLossError(
                        f"decomposer loss became non-finite at epoch {epoch}")
                opt.zero_grad()
                loss.backward()
                opt.step()
                total += float(loss.detach()) * len(idx)
            self.loss_curve_.append(total / n)
        self.net_.eval()
        self.final_loss_ = self.loss_curve_[-1] if self.loss_curve_ else None
        return self

    # -- inference --------------------------------------------------------

    def transform(self, fused):
        """Decompose one fused image into its (ir, vis) component pair."""
        self._ensure_net()
        arr = check_image(fused, "fused")
        if min(arr.shape) < 8:
            raise TooSmallError("decompose needs at least 8x8 pixels")
        with torch.no_grad():
            x = torch.tensor(arr[None, None], dtype=torch.float32)
            ir_hat, vis_hat = self.net_(x)
        return (ir_hat[0, 0].numpy().astype(np.float64),
                vis_hat[0, 0].numpy().astype(np.float64))

    # -- persistence --------------------------------------------------------

    def save(self, path):
        self._ensure_net()
        serialize.write_params(path, PROBE_MAGIC, _param_tensors(self.net_))

    @classmethod
    def load(cls, path, **params):
        est = cls(**params)
        est._init_net()
        arrays = serialize.read_params(path, PROBE_MAGIC, _param_shapes())
        it = iter(arrays)
        with torch.no_grad():
            for name in _PARAM_ORDER:
                layer = getattr(est.net_, name)
                layer.weight.copy_(torch.from_numpy(next(it)))
                layer.bias.copy_(torch.from_numpy(next(it)))
        return est

    @property
    def n_parameters(self):
        self._ensure_net()
        return sum(p.numel() for p in self.net_.parameters())


PROBE_FUSION_OPS = ("average", "max", "laplacian")


def augment_for_zero_suppression(triples, dark_gamma=0.15, dark_every=3,
                                 zero_fraction=0.15):
    """Extend probe training triples with darkened and all-zero copies.

    Uniform intensity scaling commutes with the averaging/max/blend
    fusion operators, so scaled triples remain valid fusion examples.
    The dark tail of the data distribution is what teaches the decoder
    heads to stay silent on empty input.
    """
    triples = list(triples)
    if not triples:
        return triples
    out = list(triples)
    for i, (ir, vis, fused) in enumerate(triples):
        if i % dark_every == 0:
            out.append((dark_gamma * ir, dark_gamma * vis,
                        dark_gamma * fused))
    zero = np.zeros_like(np.asarray(triples[0][0], dtype=np.float64))
    out.extend([(zero, zero, zero)] * max(1, int(len(triples)
                                                 * zero_fraction)))
    return out


def save_components(directory, scene_id, method_id, pair):
    """Write a decomposed pair as ``<scene>_<method>_{ir,vis}.pgm``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ir_hat, vis_hat = pair
    save_pgm(directory / f"{scene_id}_{method_id}_ir.pgm", ir_hat)
    save_pgm(directory / f"{scene_id}_{method_id}_vis.pgm", vis_hat)


def load_components(directory, scene_id, method_id, expected_shape=None):
    """Read back an externally produced decomposition pair."""
    directory = Path(directory)
    ir_path = directory / f"{scene_id}_{method_id}_ir.pgm"
    vis_path = directory / f"{scene_id}_{method_id}_vis.pgm"
    ir_hat = load_gray(ir_path)
    vis_hat = load_gray(vis_path)
    if expected_shape is not None:
        for name, arr in (("ir", ir_hat), ("vis", vis_hat)):
            if arr.shape != tuple(expected_shape):
                raise DimensionMismatchError(
                    f"{name} component shape {arr.shape} does not match the "
                    f"fused image {tuple(expected_shape)}")
    return ir_hat, vis_hat
