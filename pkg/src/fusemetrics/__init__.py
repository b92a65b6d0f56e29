"""Fusion quality evaluation toolkit.

Classical infrared/visible fusion metrics as fast kernels, a trainable
decomposer that splits a fused image back into modality components, an
environment-adjusted scoring rule on top of the decomposition, a
one-pass learned surrogate for all full-reference metrics, and a
rank-consistency protocol for judging metric reliability.

The trainable pieces (FusionDecomposer, SurrogateEvaluator) live in
fusemetrics.decompose and fusemetrics.surrogate; importing them pulls
in torch, so they are not re-exported here.
"""

from .consistency import ConsistencyParams, MCReport, ScoreTable, mc, \
    mc_report, rank, read_score_table
from .environment import AdjustedScore, EnvLabel, adjusted_all, \
    adjusted_score, env_heuristic, normalize_labels, read_label_file
from .image import GradientField, block_dct8, block_idct8, \
    gaussian_pyramid, haar_dwt1, haar_idwt1, histogram256, load_gray, \
    save_pgm, sobel
from .metrics import ALL_METRICS, FULL_REFERENCE_METRICS, \
    REFERENCE_FREE_METRICS, FusionTriple, VanillaWeights, cc, ei, en, \
    eval_all, fmi, pairwise_score, psnr, qabf, qabf_pairwise, sd, sf, \
    ssim, vanilla_fusion_score, vif
from .synth import FUSION_METHODS, NOISE_GRADED_METHODS, SceneSpec, \
    gen_fusions, gen_pair, write_dataset

__version__ = "0.1.0"

__all__ = [
    "ALL_METRICS", "FULL_REFERENCE_METRICS", "REFERENCE_FREE_METRICS",
    "AdjustedScore", "ConsistencyParams", "EnvLabel", "FusionTriple",
    "FUSION_METHODS", "GradientField", "MCReport", "NOISE_GRADED_METHODS",
    "SceneSpec", "ScoreTable", "VanillaWeights",
    "adjusted_all", "adjusted_score", "block_dct8", "block_idct8", "cc",
    "ei", "en", "env_heuristic", "eval_all", "fmi", "gaussian_pyramid",
    "gen_fusions", "gen_pair", "haar_dwt1", "haar_idwt1", "histogram256",
    "load_gray", "mc", "mc_report", "normalize_labels", "pairwise_score",
    "psnr", "qabf", "qabf_pairwise", "rank", "read_label_file",
    "read_score_table", "save_pgm", "sd", "sf", "sobel", "ssim",
    "vanilla_fusion_score", "vif", "write_dataset",
]
