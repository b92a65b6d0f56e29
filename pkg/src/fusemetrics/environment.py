"""Environment-aware score adjustment.

Scene difficulty is summarised by two attributes, illumination and
obscuration, each min-max normalised onto [0, 0.5] over the dataset at
hand; their sum is the environment weight env in [0, 1].  The adjusted
score of a decomposed fusion result is

    q_star = q_ir + q_vis - env * (q_vis - q_ir)

so visible-dominant imbalance is penalised more under difficult
conditions.  Labels are ingested from a JSON file; a deterministic
image heuristic provides raw scores when no label file exists.
"""

import json
import warnings
from dataclasses import dataclass

import numpy as np

from . import metrics as metrics_mod
from .errors import DegenerateInputWarning, EnvOutOfRangeError
from .image import sobel
from .validation import check_image

__all__ = [
    "EnvLabel",
    "AdjustedScore",
    "normalize_labels",
    "env_heuristic",
    "adjusted_score",
    "adjusted_all",
    "read_label_file",
]

# heuristic: mean Sobel magnitudes of typical textured daytime scenes sit
# well below this, keeping their obscuration raw score under ~0.3
HEURISTIC_GRADIENT_SCALE = 0.15


@dataclass(frozen=True)
class EnvLabel:
    scene_id: str
    s_ill_raw: float
    s_obs_raw: float
    s_ill_norm: float
    s_obs_norm: float

    @property
    def env(self):
        return self.s_ill_norm + self.s_obs_norm


@dataclass(frozen=True)
class AdjustedScore:
    """Environment-adjusted result for one metric on one triple."""

    metric: str
    q_ir: float
    q_vis: float
    delta: float
    env: float
    q_star: float


def _minmax_half(values):
    arr = np.asarray(values, dtype=np.float64)
    lo, hi = float(arr.min()), float(arr.max())
    if hi <= lo:
        warnings.warn(
            "degenerate label range: all raw values equal, normalising "
            "to the 0.25 midpoint", DegenerateInputWarning, stacklevel=3)
        return np.full(arr.shape, 0.25)
    return 0.5 * (arr - lo) / (hi - lo)


def normalize_labels(raw):
    """Min-max normalise raw (scene_id, s_ill, s_obs) records.

    Each attribute is mapped onto [0, 0.5] over the whole input; a
    degenerate (constant) attribute maps to 0.25 everywhere with a
    warning.
    """
    raw = list(raw)
    if not raw:
        return []
    ids = [r[0] for r in raw]
    ill = _minmax_half([r[1] for r in raw])
    obs = _minmax_half([r[2] for r in raw])
    return [
        EnvLabel(scene_id=i, s_ill_raw=float(r[1]), s_obs_raw=float(r[2]),
                 s_ill_norm=float(a), s_obs_norm=float(b))
        for i, r, a, b in zip(ids, raw, ill, obs)
    ]


def env_heuristic(vis):
    """Deterministic raw attribute scores from the visible image alone.

    Illumination raw score is 1 - mean intensity (dark scenes score
    high); obscuration is 1 minus the clamped mean gradient magnitude
    relative to HEURISTIC_GRADIENT_SCALE (flat scenes score high).
    """
    arr = check_image(vis, "env_heuristic input")
    s_ill = 1.0 - float(arr.mean())
    grad = float(sobel(arr).magnitude.mean()) if min(arr.shape) >= 3 else 0.0
    s_obs = 1.0 - min(max(grad / HEURISTIC_GRADIENT_SCALE, 0.0), 1.0)
    return s_ill, s_obs


def adjusted_score(metric, q_ir, q_vis, env):
    """Combine the two modality scores under an environment weight."""
    if not 0.0 <= env <= 1.0:
        raise EnvOutOfRangeError(f"env must be in [0, 1], got {env}")
    delta = q_vis - q_ir
    return AdjustedScore(metric=metric, q_ir=float(q_ir), q_vis=float(q_vis),
                         delta=float(delta), env=float(env),
                         q_star=float(q_ir + q_vis - env * delta))


def adjusted_all(triple, pair, env, metrics=metrics_mod.FULL_REFERENCE_METRICS):
    """Adjusted scores for every full-reference metric on one triple.

    ``pair`` is the (ir_hat, vis_hat) decomposition of the fused image;
    q_ir and q_vis are the pairwise scores of each component against
    its source.
    """
    ir_hat, vis_hat = pair
    out = {}
    for metric in metrics:
        if metric not in metrics_mod.FULL_REFERENCE_METRICS:
            raise ValueError(f"{metric!r} is not a full-reference metric")
        q_ir = metrics_mod.pairwise_score(metric, triple.ir, ir_hat)
        q_vis = metrics_mod.pairwise_score(metric, triple.vis, vis_hat)
        out[metric] = adjusted_score(metric, q_ir, q_vis, env)
    return out


def read_label_file(path):
    """Load the environment label JSON: a list of objects with keys
    scene_id, s_ill, s_obs (raw scales arbitrary)."""
    with open(path) as fh:
        records = json.load(fh)
    return [(r["scene_id"], float(r["s_ill"]), float(r["s_obs"]))
            for r in records]
