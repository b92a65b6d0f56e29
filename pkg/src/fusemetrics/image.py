"""Image container conventions and shared signal-processing transforms.

A grayscale image is a 2-D float64 numpy array with values in [0, 1]
(8-bit pixel k loads as k/255).  Every transform here is pure and
deterministic; the border policy is edge replication throughout.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import FormatError, TooSmallError
from .validation import check_image, check_min_size

__all__ = [
    "GradientField",
    "load_gray",
    "save_pgm",
    "sobel",
    "laplacian",
    "block_dct8",
    "block_idct8",
    "haar_dwt1",
    "haar_idwt1",
    "gaussian_pyramid",
    "binomial_blur",
    "histogram256",
    "BINOMIAL5",
]

# 5-tap binomial low-pass used by the pyramid (and anything else that
# needs a cheap Gaussian approximation).
BINOMIAL5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0

_LUMA = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class GradientField:
    """Sobel responses plus derived magnitude/orientation rasters.

    ``orientation`` is atan(gy/gx) in (-pi/2, pi/2], with gx == 0 mapped
    to pi/2.
    """

    gx: np.ndarray
    gy: np.ndarray
    magnitude: np.ndarray
    orientation: np.ndarray


def load_gray(path):
    """Load an 8-bit PGM or PNG file as a [0, 1] grayscale array.

    Color inputs are reduced with the 0.299/0.587/0.114 luma weights
    before normalisation.  16-bit rasters are rejected.
    """
    path = Path(path)
    try:
        with Image.open(path) as im:
            if im.mode == "L":
                arr = np.asarray(im, dtype=np.float64)
            elif im.mode in ("P", "RGB", "RGBA"):
                rgb = np.asarray(im.convert("RGB"), dtype=np.float64)
                arr = _LUMA[0] * rgb[..., 0] + _LUMA[1] * rgb[..., 1] \
                    + _LUMA[2] * rgb[..., 2]
            else:
                raise FormatError(
                    f"{path}: unsupported image mode {im.mode!r} "
                    "(only 8-bit grayscale/RGB PGM and PNG are read)")
    except UnidentifiedImageError as exc:
        raise FormatError(f"{path}: not a PGM or PNG file") from exc
    return arr / 255.0


def save_pgm(path, img):
    """Write a [0, 1] image as binary 8-bit PGM (P5)."""
    arr = check_image(img, "save_pgm input")
    data = np.round(arr * 255.0).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def _pad_edge(img, k):
    return np.pad(img, k, mode="edge")


def sobel(img):
    """3x3 Sobel gradients with edge-replicated borders."""
    arr = check_image(img, "sobel input")
    check_min_size(arr, 3, 3, "sobel")
    p = _pad_edge(arr, 1)
    # Separable form: smooth [1,2,1] across one axis, difference [-1,0,1]
    # along the other.
    sm_v = p[:-2] + 2.0 * p[1:-1] + p[2:]
    gx = sm_v[:, 2:] - sm_v[:, :-2]
    sm_h = p[:, :-2] + 2.0 * p[:, 1:-1] + p[:, 2:]
    gy = sm_h[2:] - sm_h[:-2]
    mag = np.sqrt(gx * gx + gy * gy)
    with np.errstate(divide="ignore", invalid="ignore"):
        orient = np.arctan(gy / gx)
    orient = np.where(gx == 0.0, np.pi / 2.0, orient)
    return GradientField(gx=gx, gy=gy, magnitude=mag, orientation=orient)


def laplacian(img):
    """4-neighbour Laplacian with edge-replicated borders."""
    arr = check_image(img, "laplacian input")
    check_min_size(arr, 3, 3, "laplacian")
    p = _pad_edge(arr, 1)
    return p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:] \
        - 4.0 * arr


def _dct_matrix(n=8):
    k = np.arange(n)
    basis = np.cos(np.pi * (2.0 * k[None, :] + 1.0) * k[:, None] / (2.0 * n))
    basis *= np.sqrt(2.0 / n)
    basis[0, :] = np.sqrt(1.0 / n)
    return basis


_DCT8 = _dct_matrix(8)


def block_dct8(img):
    """Orthonormal type-II 2-D DCT over non-overlapping 8x8 blocks.

    Right/bottom partial blocks are zero-padded.  Returns an array of
    shape (n_block_rows, n_block_cols, 8, 8).
    """
    arr = check_image(img, "block_dct8 input")
    h, w = arr.shape
    nbr, nbc = -(-h // 8), -(-w // 8)
    padded = np.zeros((nbr * 8, nbc * 8))
    padded[:h, :w] = arr
    blocks = padded.reshape(nbr, 8, nbc, 8).transpose(0, 2, 1, 3)
    return np.einsum("ij,rcjk,lk->rcil", _DCT8, blocks, _DCT8)


def block_idct8(coeffs):
    """Inverse of :func:`block_dct8`; returns the zero-padded raster."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    blocks = np.einsum("ji,rcjk,kl->rcil", _DCT8, coeffs, _DCT8)
    nbr, nbc = blocks.shape[:2]
    return blocks.transpose(0, 2, 1, 3).reshape(nbr * 8, nbc * 8)


def _even_extend(arr):
    h, w = arr.shape
    if h % 2:
        arr = np.vstack([arr, arr[-1:]])
    if w % 2:
        arr = np.hstack([arr, arr[:, -1:]])
    return arr


def haar_dwt1(img):
    """Single-level orthonormal 2-D Haar analysis.

    Odd dimensions are edge-extended first, so every subband has shape
    (ceil(h/2), ceil(w/2)).  With the orthonormal scaling a constant
    image of value v yields LL == 2v (energy preserving); detail
    subbands of a constant image are zero.  Returns (LL, LH, HL, HH)
    where LH carries horizontal detail (difference across columns) and
    HL vertical detail.
    """
    arr = _even_extend(check_image(img, "haar_dwt1 input"))
    a = arr[0::2, 0::2]
    b = arr[0::2, 1::2]
    c = arr[1::2, 0::2]
    d = arr[1::2, 1::2]
    ll = (a + b + c + d) / 2.0
    lh = (a - b + c - d) / 2.0
    hl = (a + b - c - d) / 2.0
    hh = (a - b - c + d) / 2.0
    return ll, lh, hl, hh


def haar_idwt1(ll, lh, hl, hh):
    """Perfect reconstruction from the four orthonormal Haar subbands."""
    ll, lh, hl, hh = (np.asarray(s, dtype=np.float64)
                      for s in (ll, lh, hl, hh))
    h2, w2 = ll.shape
    out = np.empty((h2 * 2, w2 * 2))
    out[0::2, 0::2] = (ll + lh + hl + hh) / 2.0
    out[0::2, 1::2] = (ll - lh + hl - hh) / 2.0
    out[1::2, 0::2] = (ll + lh - hl - hh) / 2.0
    out[1::2, 1::2] = (ll - lh - hl + hh) / 2.0
    return out


def binomial_blur(arr):
    """One pass of the separable 5-tap binomial kernel, edge replicated."""
    p = np.pad(arr, 2, mode="edge")
    t = (p[:, :-4] + 4.0 * p[:, 1:-3] + 6.0 * p[:, 2:-2]
         + 4.0 * p[:, 3:-1] + p[:, 4:]) / 16.0
    return (t[:-4] + 4.0 * t[1:-3] + 6.0 * t[2:-2]
            + 4.0 * t[3:-1] + t[4:]) / 16.0


def gaussian_pyramid(img, levels):
    """Blur-and-decimate pyramid; level 0 is the input itself.

    Each further level applies the 5-tap binomial kernel (edge
    replication) and keeps every second row/column.
    """
    arr = check_image(img, "gaussian_pyramid input")
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if min(arr.shape) / 2 ** (levels - 1) < 8:
        raise TooSmallError(
            f"gaussian_pyramid: {arr.shape} too small for {levels} levels")
    out = [arr]
    for _ in range(levels - 1):
        out.append(binomial_blur(out[-1])[::2, ::2])
    return out


def histogram256(img):
    """256-bin intensity histogram; bin(v) = min(floor(256 v), 255)."""
    arr = check_image(img, "histogram256 input")
    idx = np.minimum((arr * 256.0).astype(np.int64), 255)
    counts = np.bincount(idx.ravel(), minlength=256)
    return counts
