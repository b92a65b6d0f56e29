"""Learned multi-metric surrogate.

Three small trainable branches sit on top of a fixed 12-channel
analytic filter bank: one branch per modality regresses all
full-reference metric scores for a (source, candidate) image pair in
one forward pass, and an environment branch predicts the scene
difficulty weight from the visible image.  Training is contrastive:
positive pairs are (source, decomposed component of the fused result),
negative pairs are (source, same-modality image of an unrelated
scene), both supervised by the classical metrics as oracle.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from scipy.ndimage import correlate, uniform_filter
from sklearn.base import BaseEstimator

from . import metrics as metrics_mod
from . import serialize
from .environment import AdjustedScore, adjusted_score
from .errors import DegenerateInputWarning, DimensionMismatchError, \
    EmptyDatasetError, NonFiniteLossError
from .image import binomial_blur, laplacian, sobel
from .validation import check_image, check_min_size, check_same_shape

__all__ = [
    "FEATURE_CHANNELS",
    "SceneSample",
    "features",
    "SurrogateEvaluator",
    "prepare_training_data",
    "SURROGATE_MAGIC",
]

SURROGATE_MAGIC = "EVNT"
FEATURE_CHANNELS = 12

torch.set_num_threads(1)

_CONV = dict(kernel_size=3, padding=1, padding_mode="replicate")


# ---------------------------------------------------------------------------
# fixed feature bank

def _gabor_kernel(theta_deg, size=9, wavelength=4.0, sigma=2.0, gamma=0.5):
    half = size // 2
    y, x = np.mgrid[-half:half + 1, -half:half + 1].astype(np.float64)
    t = np.deg2rad(theta_deg)
    xr = x * np.cos(t) + y * np.sin(t)
    yr = -x * np.sin(t) + y * np.cos(t)
    k = np.exp(-(xr ** 2 + (gamma * yr) ** 2) / (2.0 * sigma ** 2)) \
        * np.cos(2.0 * np.pi * xr / wavelength)
    return k - k.mean()        # zero DC: constant input -> zero response


_GABORS = [_gabor_kernel(t) for t in (0.0, 45.0, 90.0, 135.0)]
GABOR_ORIENTATIONS = (0.0, 45.0, 90.0, 135.0)


def _upsample_nearest(arr, shape):
    h, w = shape
    ry = np.minimum((np.arange(h) * arr.shape[0]) // h, arr.shape[0] - 1)
    rx = np.minimum((np.arange(w) * arr.shape[1]) // w, arr.shape[1] - 1)
    return arr[np.ix_(ry, rx)]


def features(img):
    """Fixed 12-channel feature stack (float32, channels x H x W).

    Channels: intensity, two blurred/decimated pyramid levels
    (upsampled back by nearest neighbour), Sobel gx and gy, Laplacian,
    four oriented Gabor responses, local 5x5 mean and local 5x5
    standard deviation.
    """
    arr = check_image(img, "features input")
    check_min_size(arr, 16, 16, "features")
    shape = arr.shape
    g = sobel(arr)
    pyr2 = binomial_blur(arr)[::2, ::2]
    pyr3 = binomial_blur(pyr2)[::2, ::2]
    lmean = uniform_filter(arr, size=5, mode="nearest")
    lsq = uniform_filter(arr * arr, size=5, mode="nearest")
    lstd = np.sqrt(np.maximum(lsq - lmean * lmean, 0.0))
    chans = [
        arr,
        _upsample_nearest(pyr2, shape),
        _upsample_nearest(pyr3, shape),
        g.gx,
        g.gy,
        laplacian(arr),
        *(correlate(arr, k, mode="nearest") for k in _GABORS),
        lmean,
        lstd,
    ]
    return np.stack(chans).astype(np.float32)


# ---------------------------------------------------------------------------
# trainable branches

class _PairBranch(nn.Module):
    """Regresses N metric scores from two concatenated feature stacks."""

    def __init__(self, n_out):
        super().__init__()
        self.conv1 = nn.Conv2d(2 * FEATURE_CHANNELS, 16, **_CONV)
        self.conv2 = nn.Conv2d(16, 16, **_CONV)
        self.head = nn.Linear(32, n_out)

    def forward(self, x):
        z = F.relu(self.conv2(F.relu(self.conv1(x))))
        mean = z.mean(dim=(2, 3))
        std = torch.sqrt(torch.clamp(
            (z * z).mean(dim=(2, 3)) - mean * mean, min=1e-12))
        return self.head(torch.cat([mean, std], dim=1))


class _EnvBranch(nn.Module):
    def __init__(self):
        super().__init__()
        self.conv = nn.Conv2d(FEATURE_CHANNELS, 8, **_CONV)
        self.head = nn.Linear(16, 1)

    def forward(self, x):
        z = F.relu(self.conv(x))
        mean = z.mean(dim=(2, 3))
        std = torch.sqrt(torch.clamp(
            (z * z).mean(dim=(2, 3)) - mean * mean, min=1e-12))
        return torch.sigmoid(self.head(torch.cat([mean, std], dim=1)))[:, 0]


@dataclass
class SceneSample:
    """One training scene: sources, their decomposed components taken
    from some fused result, and the environment target."""

    scene_id: str
    ir: np.ndarray
    vis: np.ndarray
    ir_hat: np.ndarray
    vis_hat: np.ndarray
    env_target: float


def _resize(arr, size):
    h, w = size
    if arr.shape == (h, w):
        return np.asarray(arr, dtype=np.float64)
    t = torch.tensor(np.asarray(arr, dtype=np.float64)[None, None],
                     dtype=torch.float32)
    out = F.adaptive_avg_pool2d(t, (h, w))[0, 0].numpy()
    return np.clip(out.astype(np.float64), 0.0, 1.0)


class SurrogateEvaluator(BaseEstimator):
    """One-pass predictor of all full-reference metric scores.

    fit() consumes SceneSample records; predict_adjusted() runs the
    complete pipeline (decompose, per-modality score prediction,
    environment weighting) on a fusion triple.
    """

    def __init__(self, learning_rate=1e-3, batch_size=8, epochs=45, seed=0,
                 metric_heads=metrics_mod.FULL_REFERENCE_METRICS):
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed
        self.metric_heads = tuple(metric_heads)

    # -- construction -------------------------------------------------------

    def _init_nets(self):
        torch.manual_seed(self.seed)
        n = len(self.metric_heads)
        self.branch_ir_ = _PairBranch(n)
        self.branch_vis_ = _PairBranch(n)
        self.env_ = _EnvBranch()
        for net in self._nets():
            net.eval()
        if not hasattr(self, "train_size_"):
            self.train_size_ = None
        self.head_mean_ = None
        self.head_std_ = None
        return self

    def _nets(self):
        return (self.branch_ir_, self.branch_vis_, self.env_)

    def _ensure_nets(self):
        if not hasattr(self, "branch_ir_"):
            self._init_nets()

    def named_parameter_tensors(self):
        self._ensure_nets()
        for prefix, net in zip(("ir", "vis", "env"), self._nets()):
            for name, p in net.named_parameters():
                yield f"{prefix}.{name}", p

    # -- loss ---------------------------------------------------------------

    def _branch_for(self, modality):
        return {"ir": self.branch_ir_, "vis": self.branch_vis_}[modality]

    def _head_affine(self):
        """Per-head (mean, std) used to condition the regression targets.

        The heads live on very different native scales (PSNR in tens of
        dB, the rest near [0, 1]); training on standardised targets
        keeps one head from dominating the shared trunk.  Identity
        until fit() estimates the statistics.
        """
        if not hasattr(self, "head_mean_") or self.head_mean_ is None:
            n = len(self.metric_heads)
            return np.zeros(n), np.ones(n)
        return self.head_mean_, self.head_std_

    def _loss_parts(self, metric_batches, env_inputs, env_targets):
        """metric_batches: {(modality, kind): (inputs, targets) tensors};
        targets are native-scale and standardised here."""
        zero = torch.zeros((), dtype=env_inputs.dtype)
        parts = {"ir": zero.clone(), "vis": zero.clone()}
        mean, std = self._head_affine()
        for (modality, _kind), (inp, tgt) in sorted(metric_batches.items()):
            pred = self._branch_for(modality)(inp)
            t = (tgt - torch.as_tensor(mean, dtype=tgt.dtype)) \
                / torch.as_tensor(std, dtype=tgt.dtype)
            parts[modality] = parts[modality] + F.mse_loss(pred, t)
        if env_targets.numel():
            l_env = F.mse_loss(self.env_(env_inputs), env_targets)
        else:
            l_env = zero.clone()
        total = parts["ir"] + parts["vis"] + l_env
        return total, parts["ir"], parts["vis"], l_env

    def loss_total(self, metric_samples, env_samples):
        """Total contrastive loss and its gradients for explicit samples.

        metric_samples: (modality, anchor, candidate, kind, targets)
        tuples of images and per-head oracle scores.  env_samples:
        (vis image, env target) pairs.  Returns (value, grads) with
        grads keyed like named_parameter_tensors().
        """
        self._ensure_nets()
        if not metric_samples and not env_samples:
            raise EmptyDatasetError("loss_total needs at least one sample")
        dtype = next(self.branch_ir_.parameters()).dtype
        batches = {}
        for modality, anchor, candidate, kind, targets in metric_samples:
            stack = np.concatenate([features(anchor), features(candidate)])
            key = (modality, kind)
            batches.setdefault(key, ([], []))
            batches[key][0].append(stack)
            batches[key][1].append(np.asarray(targets, dtype=np.float64))
        tensor_batches = {
            key: (torch.tensor(np.stack(inps), dtype=dtype),
                  torch.tensor(np.stack(tgts), dtype=dtype))
            for key, (inps, tgts) in batches.items()
        }
        env_inp = torch.tensor(
            np.stack([features(v) for v, _ in env_samples]), dtype=dtype) \
            if env_samples else torch.zeros((0, FEATURE_CHANNELS, 16, 16),
                                            dtype=dtype)
        env_tgt = torch.tensor([t for _, t in env_samples], dtype=dtype)
        for net in self._nets():
            net.zero_grad(set_to_none=True)
        total, *_ = self._loss_parts(tensor_batches, env_inp, env_tgt)
        if not torch.isfinite(total):
            raise NonFiniteLossError("surrogate loss is non-finite")
        total.backward()
        grads = {name: (p.grad.detach().numpy().copy() if p.grad is not None
                        else np.zeros(p.shape))
                 for name, p in self.named_parameter_tensors()}
        return float(total.detach()), grads

    # -- training -----------------------------------------------------------

    def fit(self, samples, y=None):
        """Train all three branches on SceneSample records."""
        if self.learning_rate < 0 or self.batch_size < 1:
            raise ValueError("learning_rate must be >= 0, batch_size >= 1")
        samples = list(samples)
        if not samples:
            raise EmptyDatasetError("surrogate training needs scenes")
        shape = samples[0].ir.shape
        for s in samples:
            for im in (s.ir, s.vis, s.ir_hat, s.vis_hat):
                if im.shape != shape:
                    raise DimensionMismatchError(
                        "all training scenes must share one image shape")
        n = len(samples)
        self._init_nets()
        self.train_size_ = shape
        rng = np.random.default_rng(self.seed)

        # fixed feature bank: precompute every stack once
        src = {"ir": [features(s.ir) for s in samples],
               "vis": [features(s.vis) for s in samples]}
        hat = {"ir": [features(s.ir_hat) for s in samples],
               "vis": [features(s.vis_hat) for s in samples]}
        env_inputs = torch.tensor(np.stack(src["vis"]), dtype=torch.float32)
        env_targets = torch.tensor([s.env_target for s in samples],
                                   dtype=torch.float32)

        heads = self.metric_heads
        oracle_cache = {}

        def oracle(modality, img_a, img_b, key):
            if key not in oracle_cache:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", DegenerateInputWarning)
                    oracle_cache[key] = np.array(
                        [metrics_mod.pairwise_score(m, img_a, img_b)
                         for m in heads], dtype=np.float64)
            return oracle_cache[key]

        pos_targets = {
            mod: np.stack([
                oracle(mod, getattr(s, mod), getattr(s, f"{mod}_hat"),
                       ("pos", mod, i))
                for i, s in enumerate(samples)])
            for mod in ("ir", "vis")
        }

        def draw_partners():
            if n < 2:
                return np.zeros(n, dtype=int)
            return np.array([rng.choice([j for j in range(n) if j != i])
                             for i in range(n)])

        def neg_targets_for(partners):
            return {
                mod: np.stack([
                    oracle(mod, getattr(samples[i], mod),
                           getattr(samples[int(partners[i])], mod),
                           ("neg", mod, i, int(partners[i])))
                    for i in range(n)])
                for mod in ("ir", "vis")
            }

        # head conditioning statistics from the positive pairs plus the
        # first epoch's negatives
        first_partners = draw_partners()
        first_neg = neg_targets_for(first_partners)
        pool = np.concatenate([pos_targets["ir"], pos_targets["vis"],
                               first_neg["ir"], first_neg["vis"]])
        # quantise to float32 so in-memory predictions match the
        # serialised artifact bit for bit
        self.head_mean_ = pool.mean(axis=0).astype(np.float32) \
                              .astype(np.float64)
        self.head_std_ = np.maximum(pool.std(axis=0), 1e-6) \
                           .astype(np.float32).astype(np.float64)

        params = [p for net in self._nets() for p in net.parameters()]
        opt = torch.optim.Adam(params, lr=self.learning_rate,
                               betas=(0.9, 0.999), eps=1e-8)
        for net in self._nets():
            net.train()
        self.loss_curve_ = []
        for epoch in range(self.epochs):
            partners = first_partners if epoch == 0 else draw_partners()
            neg_targets = first_neg if epoch == 0 \
                else neg_targets_for(partners)
            order = rng.permutation(n)
            sums = np.zeros(4)
            seen = 0
            for start in range(0, n, self.batch_size):
                idx = order[start:start + self.batch_size]
                batches = {}
                for mod in ("ir", "vis"):
                    pos_in = np.stack([
                        np.concatenate([src[mod][i], hat[mod][i]])
                        for i in idx])
                    neg_in = np.stack([
                        np.concatenate([src[mod][i],
                                        src[mod][int(partners[i])]])
                        for i in idx])
                    batches[(mod, "positive")] = (
                        torch.tensor(pos_in),
                        torch.tensor(pos_targets[mod][idx],
                                     dtype=torch.float32))
                    batches[(mod, "negative")] = (
                        torch.tensor(neg_in),
                        torch.tensor(neg_targets[mod][idx],
                                     dtype=torch.float32))
                total, l_ir, l_vis, l_env = self._loss_parts(
                    batches, env_inputs[idx], env_targets[idx])
                if not torch.isfinite(total):
                    raise NonFiniteLossError(
                        f"surrogate loss non-finite at epoch {epoch}")
                opt.zero_grad()
                total.backward()
                opt.step()
                k = len(idx)
                sums += k * np.array([float(total.detach()),
                                      float(l_ir.detach()),
                                      float(l_vis.detach()),
                                      float(l_env.detach())])
                seen += k
            self.loss_curve_.append(tuple(sums / seen))
        for net in self._nets():
            net.eval()
        return self

    # -- inference ------------------------------------------------------------

    def _predict_stacked(self, modality, anchor_stack, candidate_stack):
        branch = self._branch_for(modality)
        dtype = next(branch.parameters()).dtype
        x = torch.tensor(
            np.concatenate([anchor_stack, candidate_stack])[None], dtype=dtype)
        with torch.no_grad():
            out = branch(x)[0].numpy().astype(np.float64)
        mean, std = self._head_affine()
        return out * std + mean

    def predict_pair(self, modality, anchor, candidate):
        """Raw per-head predictions for one (anchor, candidate) pair."""
        self._ensure_nets()
        a = check_image(anchor, "anchor")
        c = check_image(candidate, "candidate")
        check_same_shape(a, c, "anchor", "candidate")
        return self._predict_stacked(modality, features(a), features(c))

    def predict_env(self, vis):
        """Environment weight prediction in (0, 1) from the visible image."""
        self._ensure_nets()
        stack = features(vis)
        dtype = next(self.env_.parameters()).dtype
        with torch.no_grad():
            out = self.env_(torch.tensor(stack[None], dtype=dtype))
        return float(out[0])

    def predict_adjusted(self, triple, decomposer, env_override=None):
        """Full one-pass pipeline for a fusion triple.

        The fused image is decomposed and everything is evaluated at
        the surrogate's training resolution; returns a mapping from
        metric name to AdjustedScore.
        """
        self._ensure_nets()
        if self.train_size_ is None:
            raise ValueError("surrogate is untrained; fit() or load() first")
        ir, vis, fused = triple.validate()
        size = self.train_size_
        fused_w = _resize(fused, size)
        ir_w = _resize(ir, size)
        vis_w = _resize(vis, size)
        ir_hat, vis_hat = decomposer.transform(fused_w)
        vis_stack = features(vis_w)
        q_ir = self._predict_stacked("ir", features(ir_w), features(ir_hat))
        q_vis = self._predict_stacked("vis", vis_stack, features(vis_hat))
        if env_override is None:
            dtype = next(self.env_.parameters()).dtype
            with torch.no_grad():
                env = float(self.env_(
                    torch.tensor(vis_stack[None], dtype=dtype))[0])
        else:
            env = float(env_override)
        return {
            m: adjusted_score(m, q_ir[k], q_vis[k], env)
            for k, m in enumerate(self.metric_heads)
        }

    # -- persistence ----------------------------------------------------------

    def _param_arrays(self):
        meta = np.array([len(self.metric_heads),
                         self.train_size_[0] if self.train_size_ else 0,
                         self.train_size_[1] if self.train_size_ else 0],
                        dtype=np.float32)
        mean, std = self._head_affine()
        return [meta, mean.astype(np.float32), std.astype(np.float32)] \
            + [p.detach().numpy() for _, p in self.named_parameter_tensors()]

    def save(self, path):
        self._ensure_nets()
        serialize.write_params(path, SURROGATE_MAGIC, self._param_arrays())

    @classmethod
    def load(cls, path, **params):
        magic, _version, count = serialize.read_header(path)
        est = cls(**params)
        est._init_nets()
        shapes = [a.shape for a in est._param_arrays()]
        arrays = serialize.read_params(path, SURROGATE_MAGIC, shapes)
        meta = arrays[0]
        if int(meta[0]) != len(est.metric_heads):
            raise DimensionMismatchError(
                f"artifact predicts {int(meta[0])} heads, evaluator is "
                f"configured for {len(est.metric_heads)}")
        est.train_size_ = (int(meta[1]), int(meta[2]))
        est.head_mean_ = arrays[1].astype(np.float64)
        est.head_std_ = arrays[2].astype(np.float64)
        with torch.no_grad():
            for (name, p), arr in zip(est.named_parameter_tensors(),
                                      arrays[3:]):
                p.copy_(torch.from_numpy(arr))
        return est


def prepare_training_data(root, decomposer, seed=0, env_source="file",
                          method_pool=None):
    """Build SceneSample records from a dataset directory.

    One fused method is drawn per scene (seeded) from ``method_pool``;
    its decomposition under ``decomposer`` provides the positive-pair
    candidates.  Environment targets come from the dataset's label file
    or from the image heuristic, min-max normalised over the run.
    """
    from .dataset import label_path, load_triple, scan_dataset
    from .environment import env_heuristic, normalize_labels, read_label_file

    scenes, methods = scan_dataset(root)
    pool = list(method_pool) if method_pool is not None else list(methods)
    rng = np.random.default_rng(seed)
    picks = {scene: pool[int(rng.integers(len(pool)))] for scene in scenes}

    triples = {scene: load_triple(root, scene, picks[scene])
               for scene in scenes}
    if env_source == "file":
        raw = read_label_file(label_path(root))
        by_id = {r[0]: r for r in raw}
        missing = [s for s in scenes if s not in by_id]
        if missing:
            raise EmptyDatasetError(
                f"label file lacks scenes, e.g. {missing[0]}")
        raw = [by_id[s] for s in scenes]
    elif env_source == "heuristic":
        raw = [(s,) + env_heuristic(triples[s].vis) for s in scenes]
    else:
        raise ValueError(f"unknown env source {env_source!r}")
    labels = {lab.scene_id: lab for lab in normalize_labels(raw)}

    out = []
    for scene in scenes:
        t = triples[scene]
        ir_hat, vis_hat = decomposer.transform(t.fused)
        out.append(SceneSample(
            scene_id=scene, ir=t.ir, vis=t.vis,
            ir_hat=ir_hat, vis_hat=vis_hat,
            env_target=labels[scene].env))
    return out
