"""Deterministic synthetic IR/visible scenes and pseudo fusion methods.

Desk-scale stand-in for real fusion benchmarks: integer-seeded PCG64
streams make every scene and every fused variant bit-reproducible from
its spec.  The sixteen pseudo methods span a quality range on purpose;
the noise-graded subfamily carries a defensible a-priori ranking used
by consistency sanity checks.
"""

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .errors import TooSmallError
from .image import save_pgm
from .validation import check_image, check_same_shape

__all__ = [
    "SceneSpec",
    "FUSION_METHODS",
    "NOISE_GRADED_METHODS",
    "gen_pair",
    "gen_fusions",
    "write_dataset",
]

FUSION_METHODS = (
    "average", "max", "laplacian",
    "wavg_ir10", "wavg_ir30", "wavg_ir70", "wavg_ir90",
    "noisy02", "noisy05", "noisy10",
    "blur1", "blur2",
    "ir_only", "vis_only",
    "contrast_crush", "blocky",
)

# quality ordered best -> worst by construction (noise sigma grading)
NOISE_GRADED_METHODS = ("average", "noisy02", "noisy05", "noisy10")


@dataclass(frozen=True)
class SceneSpec:
    seed: int
    size: tuple = (64, 64)          # (width, height)
    regime: str = "day"             # day | night
    n_targets: int = 3
    texture_scale: float = 1.0


def _smooth(arr, passes):
    from .image import binomial_blur as _blur5
    for _ in range(passes):
        arr = _blur5(arr)
    return arr


def gen_pair(spec, return_centers=False):
    """Generate the (ir, vis) image pair for a scene spec.

    IR: dark background with hot Gaussian blobs (centre intensity
    > 0.8 by construction) and mild clipped noise.  VIS: band-limited
    texture plus an illumination ramp; the night regime scales VIS by
    0.25 and adds sensor noise.  With ``return_centers`` the nearest
    pixel of each blob centre is appended to the result.
    """
    w, h = spec.size
    if w < 32 or h < 32:
        raise TooSmallError("gen_pair needs at least 32x32")
    if spec.regime not in ("day", "night"):
        raise ValueError(f"unknown regime {spec.regime!r}")
    rng = np.random.default_rng(np.random.PCG64(spec.seed))

    yy, xx = np.mgrid[0:h, 0:w]

    # infrared: cool background + warm blobs
    bg = 0.06 + 0.04 * _smooth(rng.random((h, w)), 2)
    ir = bg.copy()
    centers = []
    for _ in range(spec.n_targets):
        cy = rng.uniform(0.15 * h, 0.85 * h)
        cx = rng.uniform(0.15 * w, 0.85 * w)
        r = rng.uniform(2.5, max(3.0, min(h, w) / 10.0))
        amp = rng.uniform(0.80, 0.92)
        ir += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * r * r))
        centers.append((int(round(cy)), int(round(cx))))
    ir += 0.008 * np.clip(rng.standard_normal((h, w)), -2.0, 2.0)
    ir = np.clip(ir, 0.0, 1.0)

    # visible: multi-scale texture + illumination gradient
    tex = _smooth(rng.random((h, w)), 1) + 0.5 * _smooth(rng.random((h, w)), 3)
    tex = (tex - tex.min()) / max(tex.max() - tex.min(), 1e-12)
    ramp = 0.5 * (xx / max(w - 1, 1) + yy / max(h - 1, 1))
    vis = 0.30 + 0.40 * spec.texture_scale * (tex - 0.5) + 0.35 * ramp
    vis = np.clip(vis, 0.0, 1.0)
    if spec.regime == "night":
        vis = 0.25 * vis + 0.02 * np.clip(rng.standard_normal((h, w)), -2, 2)
        vis = np.clip(vis, 0.0, 1.0)
    if return_centers:
        return ir, vis, centers
    return ir, vis


def _laplacian_blend(ir, vis):
    # 3-level blend: max-abs detail selection over a binomial pyramid,
    # averaged base level
    def down(a):
        return _smooth(a, 1)[::2, ::2]

    def up(a, shape):
        out = np.repeat(np.repeat(a, 2, axis=0), 2, axis=1)[:shape[0], :shape[1]]
        return _smooth(out, 1)

    pyr = []
    a, b = ir, vis
    for _ in range(2):
        la, lb = down(a), down(b)
        da = a - up(la, a.shape)
        db = b - up(lb, b.shape)
        pyr.append(np.where(np.abs(da) >= np.abs(db), da, db))
        a, b = la, lb
    out = 0.5 * (a + b)
    for detail in reversed(pyr):
        out = up(out, detail.shape) + detail
    return np.clip(out, 0.0, 1.0)


def gen_fusions(ir, vis, seed=0):
    """Produce the sixteen named pseudo fusion results for one pair."""
    ir = check_image(ir, "ir")
    vis = check_image(vis, "vis")
    check_same_shape(ir, vis)
    rng = np.random.default_rng(np.random.PCG64(seed))
    h, w = ir.shape
    avg = 0.5 * (ir + vis)

    def noisy(sigma):
        n = sigma * np.clip(rng.standard_normal((h, w)), -3.0, 3.0)
        return np.clip(avg + n, 0.0, 1.0)

    def blocky():
        out = avg.copy()
        bs = 16
        for y in range(0, h, bs):
            for x in range(0, w, bs):
                out[y:y + bs, x:x + bs] += rng.uniform(-0.08, 0.08)
        return np.clip(out, 0.0, 1.0)

    fused = {
        "average": avg,
        "max": np.maximum(ir, vis),
        "laplacian": _laplacian_blend(ir, vis),
        "wavg_ir10": np.clip(0.1 * ir + 0.9 * vis, 0.0, 1.0),
        "wavg_ir30": np.clip(0.3 * ir + 0.7 * vis, 0.0, 1.0),
        "wavg_ir70": np.clip(0.7 * ir + 0.3 * vis, 0.0, 1.0),
        "wavg_ir90": np.clip(0.9 * ir + 0.1 * vis, 0.0, 1.0),
        "noisy02": noisy(0.02),
        "noisy05": noisy(0.05),
        "noisy10": noisy(0.10),
        "blur1": np.clip(_smooth(avg, 1), 0.0, 1.0),
        "blur2": np.clip(_smooth(avg, 3), 0.0, 1.0),
        "ir_only": ir,
        "vis_only": vis,
        "contrast_crush": np.clip(0.5 + 0.25 * (avg - avg.mean()), 0.0, 1.0),
        "blocky": blocky(),
    }
    assert tuple(fused) == FUSION_METHODS
    return fused


def write_dataset(root, n_scenes, size=(64, 64), base_seed=0,
                  night_fraction=0.4):
    """Write the directory layout the CLI consumes.

    ir/<scene>.pgm, vis/<scene>.pgm, fused/<method>/<scene>.pgm,
    env_labels.json (heuristic raw scores per scene) and manifest.json
    (the scene specs, for byte-level regeneration).
    """
    from .environment import env_heuristic

    root = Path(root)
    (root / "ir").mkdir(parents=True, exist_ok=True)
    (root / "vis").mkdir(parents=True, exist_ok=True)
    for m in FUSION_METHODS:
        (root / "fused" / m).mkdir(parents=True, exist_ok=True)

    labels = []
    manifest = []
    for i in range(n_scenes):
        regime = "night" if (i % 100) < night_fraction * 100 else "day"
        spec = SceneSpec(seed=base_seed + i, size=size, regime=regime)
        scene_id = f"scene{i:04d}"
        ir, vis = gen_pair(spec)
        save_pgm(root / "ir" / f"{scene_id}.pgm", ir)
        save_pgm(root / "vis" / f"{scene_id}.pgm", vis)
        for method, img in gen_fusions(ir, vis, seed=spec.seed).items():
            save_pgm(root / "fused" / method / f"{scene_id}.pgm", img)
        s_ill, s_obs = env_heuristic(vis)
        labels.append({"scene_id": scene_id, "s_ill": s_ill, "s_obs": s_obs})
        manifest.append({"scene_id": scene_id, **asdict(spec)})

    with open(root / "env_labels.json", "w") as fh:
        json.dump(labels, fh, indent=1)
    with open(root / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1)
    return [m["scene_id"] for m in manifest]
