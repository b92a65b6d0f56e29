"""Dataset directory layout.

A dataset root holds ``ir/<scene>.pgm``, ``vis/<scene>.pgm``,
``fused/<method>/<scene>.pgm`` and optionally ``env_labels.json``.
Scene and method identifiers are directory/file names; everything is
scanned in sorted order so downstream processing is deterministic.
"""

from pathlib import Path

from .errors import LayoutError
from .image import load_gray
from .metrics import FusionTriple

__all__ = ["scan_dataset", "load_triple", "iter_triples", "label_path"]


def scan_dataset(root):
    """Return (scene_ids, method_ids) for a dataset directory.

    Raises LayoutError when the layout is malformed or inconsistent.
    """
    root = Path(root)
    ir_dir, vis_dir, fused_dir = root / "ir", root / "vis", root / "fused"
    for d in (ir_dir, vis_dir, fused_dir):
        if not d.is_dir():
            raise LayoutError(f"missing dataset directory: {d}")
    scenes = sorted(p.stem for p in ir_dir.glob("*.pgm"))
    if not scenes:
        raise LayoutError(f"no scenes found under {ir_dir}")
    vis_scenes = sorted(p.stem for p in vis_dir.glob("*.pgm"))
    if vis_scenes != scenes:
        raise LayoutError("ir/ and vis/ scene sets differ")
    methods = sorted(p.name for p in fused_dir.iterdir() if p.is_dir())
    if not methods:
        raise LayoutError(f"no fusion method directories under {fused_dir}")
    for m in methods:
        have = sorted(p.stem for p in (fused_dir / m).glob("*.pgm"))
        if have != scenes:
            raise LayoutError(
                f"fused/{m} scene set does not match ir/ scene set")
    return scenes, methods


def load_triple(root, scene_id, method_id):
    root = Path(root)
    return FusionTriple(
        ir=load_gray(root / "ir" / f"{scene_id}.pgm"),
        vis=load_gray(root / "vis" / f"{scene_id}.pgm"),
        fused=load_gray(root / "fused" / method_id / f"{scene_id}.pgm"),
        method_id=method_id,
        scene_id=scene_id,
    )


def iter_triples(root, scenes=None, methods=None):
    all_scenes, all_methods = scan_dataset(root)
    for scene in scenes if scenes is not None else all_scenes:
        for method in methods if methods is not None else all_methods:
            yield load_triple(root, scene, method)


def label_path(root):
    return Path(root) / "env_labels.json"
