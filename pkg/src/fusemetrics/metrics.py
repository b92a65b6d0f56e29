"""Classical fusion quality metrics.

Eight full-reference metrics (VIF, QABF, SSIM, CC, PSNR and the three
feature-mutual-information variants) plus four reference-free ones
(EN, SD, EI, SF).  All constants are stated for the [0, 1] intensity
domain.  Degenerate (constant) inputs yield a flagged 0.0 rather than
NaN so batch runs never abort.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from . import image as img_ops
from .errors import AllDegenerateError, DegenerateInputWarning, \
    FusemetricsError, TooSmallError
from .validation import check_image, check_min_size, check_same_shape

__all__ = [
    "FULL_REFERENCE_METRICS",
    "REFERENCE_FREE_METRICS",
    "ALL_METRICS",
    "VanillaWeights",
    "FusionTriple",
    "psnr",
    "cc",
    "ssim",
    "vif",
    "qabf",
    "qabf_pairwise",
    "fmi",
    "en",
    "sd",
    "ei",
    "sf",
    "pairwise_score",
    "vanilla_fusion_score",
    "eval_all",
]

FULL_REFERENCE_METRICS = (
    "VIF", "QABF", "SSIM", "CC", "PSNR", "FMI_P", "FMI_DCT", "FMI_W")
REFERENCE_FREE_METRICS = ("EN", "SD", "EI", "SF")
ALL_METRICS = FULL_REFERENCE_METRICS + REFERENCE_FREE_METRICS

PSNR_CAP_DB = 100.0


@dataclass(frozen=True)
class VanillaWeights:
    """Modality weights of the weighted-average score form."""

    w_ir: float = 1.0
    w_vis: float = 1.0

    def __post_init__(self):
        if self.w_ir < 0 or self.w_vis < 0:
            raise ValueError("weights must be non-negative")
        if self.w_ir == 0 and self.w_vis == 0:
            raise ValueError("weights must not both be zero")


@dataclass
class FusionTriple:
    """One evaluation unit: the two source images and a fused result."""

    ir: np.ndarray
    vis: np.ndarray
    fused: np.ndarray
    method_id: str = ""
    scene_id: str = ""

    def validate(self):
        ir = check_image(self.ir, "ir")
        vis = check_image(self.vis, "vis")
        fused = check_image(self.fused, "fused")
        check_same_shape(ir, vis, "ir", "vis")
        check_same_shape(ir, fused, "ir", "fused")
        return ir, vis, fused


def _degenerate(metric, reason):
    warnings.warn(f"{metric}: {reason}; reporting 0.0",
                  DegenerateInputWarning, stacklevel=3)
    return 0.0


# ---------------------------------------------------------------------------
# pixel statistics

def psnr(a, b):
    """Peak signal-to-noise ratio in dB on the [0, 1] domain.

    Identical inputs (zero MSE) return the 100 dB cap.
    """
    a = check_image(a, "psnr a")
    b = check_image(b, "psnr b")
    check_same_shape(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return float(10.0 * np.log10(1.0 / mse))


def cc(a, b):
    """Pearson correlation of the flattened pixels.

    Constant input on either side is degenerate: warns and returns 0.0.
    """
    a = check_image(a, "cc a")
    b = check_image(b, "cc b")
    check_same_shape(a, b)
    am = a - a.mean()
    bm = b - b.mean()
    va = float((am * am).sum())
    vb = float((bm * bm).sum())
    if va == 0.0 or vb == 0.0:
        return _degenerate("cc", "constant input")
    return float((am * bm).sum() / np.sqrt(va * vb))


# ---------------------------------------------------------------------------
# SSIM

SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def _gauss_kernel1d(radius, sigma):
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()

_SSIM_K = _gauss_kernel1d(5, 1.5)


def _sep_filter(arr, k):
    return correlate1d(correlate1d(arr, k, axis=0, mode="nearest"),
                       k, axis=1, mode="nearest")


def ssim(a, b):
    """Mean SSIM with the 11x11 sigma=1.5 Gaussian window.

    Averaged over all positions where the window fits entirely inside
    the image.
    """
    a = check_image(a, "ssim a")
    b = check_image(b, "ssim b")
    check_same_shape(a, b)
    check_min_size(a, 11, 11, "ssim")
    mu1 = _sep_filter(a, _SSIM_K)
    mu2 = _sep_filter(b, _SSIM_K)
    s11 = _sep_filter(a * a, _SSIM_K) - mu1 * mu1
    s22 = _sep_filter(b * b, _SSIM_K) - mu2 * mu2
    s12 = _sep_filter(a * b, _SSIM_K) - mu1 * mu2
    num = (2.0 * mu1 * mu2 + SSIM_C1) * (2.0 * s12 + SSIM_C2)
    den = (mu1 * mu1 + mu2 * mu2 + SSIM_C1) * (s11 + s22 + SSIM_C2)
    # interior == exact windowed statistics regardless of border mode
    return float((num / den)[5:-5, 5:-5].mean())


# ---------------------------------------------------------------------------
# VIF (pixel-domain, multiscale)

VIF_SIGMA_N_SQ = 2.0 / 255.0 ** 2   # visual noise variance restated for [0,1]
VIF_EPS = 1e-12
_VIF_K = _gauss_kernel1d(4, 1.8)    # 9-tap window, sd = 9/5


def _vif_scale_terms(ref, dist):
    r = 4  # window radius; statistics only where the window fits
    mu1 = _sep_filter(ref, _VIF_K)[r:-r, r:-r]
    mu2 = _sep_filter(dist, _VIF_K)[r:-r, r:-r]
    s1 = _sep_filter(ref * ref, _VIF_K)[r:-r, r:-r] - mu1 * mu1
    s2 = _sep_filter(dist * dist, _VIF_K)[r:-r, r:-r] - mu2 * mu2
    s12 = _sep_filter(ref * dist, _VIF_K)[r:-r, r:-r] - mu1 * mu2
    s1 = np.maximum(s1, 0.0)
    s2 = np.maximum(s2, 0.0)

    g = s12 / (s1 + VIF_EPS)
    sv = s2 - g * s12
    small1 = s1 < VIF_EPS
    g[small1] = 0.0
    sv[small1] = s2[small1]
    s1 = np.where(small1, 0.0, s1)
    small2 = s2 < VIF_EPS
    g[small2] = 0.0
    sv[small2] = 0.0
    neg = g < 0.0
    sv[neg] = s2[neg]
    g[neg] = 0.0
    sv = np.maximum(sv, VIF_EPS)

    num = float(np.log10(1.0 + g * g * s1 / (sv + VIF_SIGMA_N_SQ)).sum())
    den = float(np.log10(1.0 + s1 / VIF_SIGMA_N_SQ).sum())
    return num, den


def vif(ref, dist):
    """Pixel-domain multiscale visual information fidelity.

    Up to four dyadic scales (as many as the image admits), 9x9
    Gaussian local statistics per scale; scales smaller than the window
    contribute nothing.
    """
    ref = check_image(ref, "vif ref")
    dist = check_image(dist, "vif dist")
    check_same_shape(ref, dist)
    if min(ref.shape) < 9:
        raise TooSmallError("vif needs at least 9x9 pixels")
    scales = 1
    while scales < 4 and min(ref.shape) / 2 ** scales >= 8:
        scales += 1
    pyr_r = img_ops.gaussian_pyramid(ref, scales)
    pyr_d = img_ops.gaussian_pyramid(dist, scales)
    num = den = 0.0
    for pr, pd in zip(pyr_r, pyr_d):
        if min(pr.shape) < 9:
            continue
        n, d = _vif_scale_terms(pr, pd)
        num += n
        den += d
    if den == 0.0:
        return _degenerate("vif", "no information in reference")
    return num / den


# ---------------------------------------------------------------------------
# QABF (gradient-transfer score)

QABF_GAMMA_G = 0.9994
QABF_KAPPA_G = -15.0
QABF_SIGMA_G = 0.5
QABF_GAMMA_A = 0.9879
QABF_KAPPA_A = -22.0
QABF_SIGMA_A = 0.8


def _edge_response(arr):
    # inputs are already validated by the caller; inline Sobel avoids a
    # second full-array validation pass per image
    p = np.pad(arr, 1, mode="edge")
    sm_v = p[:-2] + 2.0 * p[1:-1] + p[2:]
    gx = sm_v[:, 2:] - sm_v[:, :-2]
    sm_h = p[:, :-2] + 2.0 * p[:, 1:-1] + p[:, 2:]
    gy = sm_h[2:] - sm_h[:-2]
    mag = np.sqrt(gx * gx + gy * gy)
    with np.errstate(divide="ignore", invalid="ignore"):
        orient = np.arctan(gy / gx)
    orient = np.where(gx == 0.0, np.pi / 2.0, orient)
    return mag, orient


def _qabf_map(g_src, a_src, g_f, a_f):
    mx = np.maximum(g_src, g_f)
    mn = np.minimum(g_src, g_f)
    gsf = np.divide(mn, mx, out=np.zeros_like(mx), where=mx > 0.0)
    asf = 1.0 - np.abs(a_src - a_f) / (np.pi / 2.0)
    qg = QABF_GAMMA_G / (1.0 + np.exp(QABF_KAPPA_G * (gsf - QABF_SIGMA_G)))
    qa = QABF_GAMMA_A / (1.0 + np.exp(QABF_KAPPA_A * (asf - QABF_SIGMA_A)))
    return qg * qa


def qabf(ir, vis, fused):
    """Two-source gradient preservation score (edge strength weighted)."""
    ir = check_image(ir, "qabf ir")
    vis = check_image(vis, "qabf vis")
    fused = check_image(fused, "qabf fused")
    check_same_shape(ir, vis)
    check_same_shape(ir, fused)
    check_min_size(ir, 3, 3, "qabf")
    g_a, a_a = _edge_response(ir)
    g_b, a_b = _edge_response(vis)
    g_f, a_f = _edge_response(fused)
    weight = float(g_a.sum() + g_b.sum())
    if weight == 0.0:
        return _degenerate("qabf", "all-flat sources")
    num = float((_qabf_map(g_a, a_a, g_f, a_f) * g_a).sum()
                + (_qabf_map(g_b, a_b, g_f, a_f) * g_b).sum())
    return num / weight


def qabf_pairwise(src, comp):
    """Single-source QABF: how well ``comp`` preserves ``src``'s edges."""
    src = check_image(src, "qabf src")
    comp = check_image(comp, "qabf comp")
    check_same_shape(src, comp)
    check_min_size(src, 3, 3, "qabf_pairwise")
    g_s, a_s = _edge_response(src)
    g_c, a_c = _edge_response(comp)
    weight = float(g_s.sum())
    if weight == 0.0:
        return _degenerate("qabf_pairwise", "flat source")
    return float((_qabf_map(g_s, a_s, g_c, a_c) * g_s).sum()) / weight


# ---------------------------------------------------------------------------
# feature mutual information

FMI_WINDOW = 8          # window side, stride equals the side (tiling)
FMI_BINS = 8            # per-axis bins -> 64-cell joint histogram


def _fmi_feature(arr, feature):
    if feature == "pixel":
        return arr
    h, w = arr.shape
    if feature == "dct":
        coeffs = img_ops.block_dct8(arr)
        nbr, nbc = coeffs.shape[:2]
        flat = np.abs(coeffs).transpose(0, 2, 1, 3).reshape(nbr * 8, nbc * 8)
        return flat[:h, :w]
    if feature == "wavelet":
        ll, lh, hl, hh = img_ops.haar_dwt1(arr)
        detail = img_ops.haar_idwt1(np.zeros_like(ll), lh, hl, hh)
        return np.abs(detail)[:h, :w]
    raise ValueError(f"unknown fmi feature {feature!r}")


def _quantize_window(w):
    lo = w.min()
    hi = w.max()
    if hi <= lo:
        return None
    scaled = (w - lo) * (FMI_BINS / (hi - lo))
    return np.minimum(scaled.astype(np.int64), FMI_BINS - 1)


def _entropy_bits(p):
    nz = p[p > 0.0]
    return float(-(nz * np.log2(nz)).sum()) + 0.0 if nz.size else 0.0


def fmi(a, b, feature="pixel"):
    """Normalised feature mutual information, mean over 8x8 tiles.

    Features: raw pixels, per-block DCT coefficient magnitudes, or the
    wavelet detail magnitudes (level-1 Haar, approximation removed).
    Each tile is min-max quantised to 8 levels per image and scored as
    2*MI/(Ha+Hb) from the 64-cell joint histogram; tiles with
    Ha+Hb == 0 are skipped.
    """
    a = check_image(a, "fmi a")
    b = check_image(b, "fmi b")
    check_same_shape(a, b)
    fa = _fmi_feature(a, feature)
    fb = _fmi_feature(b, feature)
    h, w = fa.shape
    step = FMI_WINDOW
    n_pix = step * step
    total = 0.0
    n_used = 0
    for y in range(0, h - step + 1, step):
        for x in range(0, w - step + 1, step):
            wa = fa[y:y + step, x:x + step].ravel()
            wb = fb[y:y + step, x:x + step].ravel()
            ia = _quantize_window(wa)
            ib = _quantize_window(wb)
            if ia is None and ib is None:
                continue
            if ia is None:
                ia = np.zeros(n_pix, dtype=np.int64)
            if ib is None:
                ib = np.zeros(n_pix, dtype=np.int64)
            joint = np.bincount(ia * FMI_BINS + ib,
                                minlength=FMI_BINS * FMI_BINS) / n_pix
            joint2 = joint.reshape(FMI_BINS, FMI_BINS)
            ha = _entropy_bits(joint2.sum(axis=1))
            hb = _entropy_bits(joint2.sum(axis=0))
            if ha + hb == 0.0:
                continue
            hab = _entropy_bits(joint)
            total += 2.0 * (ha + hb - hab) / (ha + hb)
            n_used += 1
    if n_used == 0:
        raise AllDegenerateError("fmi: every analysis window was constant")
    return total / n_used


# ---------------------------------------------------------------------------
# reference-free metrics

def en(img):
    """Shannon entropy (bits) of the 256-bin intensity histogram."""
    counts = img_ops.histogram256(img)
    p = counts / counts.sum()
    return _entropy_bits(p)


def sd(img):
    """Population standard deviation of the intensities."""
    return float(check_image(img, "sd input").std())


def ei(img):
    """Edge intensity: mean Sobel gradient magnitude."""
    return float(img_ops.sobel(img).magnitude.mean())


def sf(img):
    """Spatial frequency: RMS of first differences, combined per axis."""
    arr = check_image(img, "sf input")
    dh = arr[:, 1:] - arr[:, :-1]
    dv = arr[1:, :] - arr[:-1, :]
    rf = float(np.mean(dh * dh)) if dh.size else 0.0
    cf = float(np.mean(dv * dv)) if dv.size else 0.0
    return float(np.sqrt(rf + cf))


_REFERENCE_FREE_FNS = {"EN": en, "SD": sd, "EI": ei, "SF": sf}


# ---------------------------------------------------------------------------
# composition

def pairwise_score(metric, source, candidate):
    """Full-reference metric between a source image and a candidate.

    For the asymmetric metrics the source side acts as the reference:
    VIF treats ``source`` as the pristine signal and QABF weights by
    the source's edges.
    """
    if metric == "VIF":
        return vif(source, candidate)
    if metric == "QABF":
        return qabf_pairwise(source, candidate)
    if metric == "SSIM":
        return ssim(source, candidate)
    if metric == "CC":
        return cc(source, candidate)
    if metric == "PSNR":
        return psnr(source, candidate)
    if metric == "FMI_P":
        return fmi(source, candidate, "pixel")
    if metric == "FMI_DCT":
        return fmi(source, candidate, "dct")
    if metric == "FMI_W":
        return fmi(source, candidate, "wavelet")
    raise ValueError(f"{metric!r} is not a full-reference metric")


def vanilla_fusion_score(triple, metric, weights=VanillaWeights()):
    """Weighted-average score w_ir*Q(ir, fused) + w_vis*Q(vis, fused).

    QABF uses its native two-source form and ignores the weights.
    """
    ir, vis, fused = triple.validate()
    if metric not in FULL_REFERENCE_METRICS:
        raise ValueError(f"{metric!r} is not a full-reference metric")
    if metric == "QABF":
        return qabf(ir, vis, fused)
    return weights.w_ir * pairwise_score(metric, ir, fused) \
        + weights.w_vis * pairwise_score(metric, vis, fused)


def eval_all(triple, weights=VanillaWeights(), metrics=ALL_METRICS):
    """Evaluate a metric subset on one triple; failures are recorded as
    missing entries rather than aborting the batch."""
    out = {}
    for metric in metrics:
        try:
            if metric in _REFERENCE_FREE_FNS:
                out[metric] = _REFERENCE_FREE_FNS[metric](triple.fused)
            else:
                out[metric] = vanilla_fusion_score(triple, metric, weights)
        except FusemetricsError:
            pass
    return out
