"""Metric consistency: rank agreement against third-party references.

For L methods ranked 1..L by a metric and by a reference column, the
per-method discrepancy |R_m - R_ref| is weighted by
0.5 * (alpha**R_m + beta**R_ref) so disagreement about top-ranked
methods costs more, and the consistency score is

    mc = exp(-s * sum_i W_i * |R_m_i - R_ref_i|)

which is 1 exactly when the rankings agree and decays towards 0 as
they diverge.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import LengthMismatchError, NonFiniteScoreError, \
    NotAPermutationError, TooFewMethodsError, UnknownColumnError

__all__ = [
    "ConsistencyParams",
    "ScoreTable",
    "MCCell",
    "MCReport",
    "rank",
    "mc",
    "mc_report",
    "read_score_table",
]

DEFAULT_ALPHA = 0.9
DEFAULT_BETA = 0.9
DEFAULT_S = 0.0125


@dataclass(frozen=True)
class ConsistencyParams:
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA
    s: float = DEFAULT_S

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0 and 0.0 < self.beta < 1.0):
            raise ValueError("alpha and beta must lie strictly inside (0, 1)")
        if self.s <= 0.0:
            raise ValueError("s must be positive")


@dataclass
class ScoreTable:
    """Per-method scores, one column per metric or reference."""

    methods: list
    scores: dict                 # column id -> list of floats (len L)
    kinds: dict                  # column id -> "metric" | "reference"
    higher_is_better: dict       # column id -> bool

    def column(self, name):
        if name not in self.scores:
            raise UnknownColumnError(f"no column named {name!r}")
        return self.scores[name]

    def columns_of_kind(self, kind):
        return [c for c in self.scores if self.kinds.get(c) == kind]


def rank(scores, method_ids=None, higher_is_better=True):
    """1-based ranks; best score gets rank 1.

    Ties break by ascending method id, which keeps ranks a proper
    permutation.  Returns (ranks, had_ties).
    """
    vals = [float(v) for v in scores]
    n = len(vals)
    if n < 2:
        raise TooFewMethodsError("ranking needs at least two methods")
    if not all(np.isfinite(vals)):
        raise NonFiniteScoreError("scores contain non-finite values")
    if method_ids is None:
        method_ids = list(range(n))
    order = sorted(range(n),
                   key=lambda i: (-vals[i] if higher_is_better else vals[i],
                                  method_ids[i]))
    ranks = [0] * n
    for pos, i in enumerate(order):
        ranks[i] = pos + 1
    had_ties = len(set(vals)) < n
    return ranks, had_ties


def _check_permutation(ranks, name):
    if sorted(ranks) != list(range(1, len(ranks) + 1)):
        raise NotAPermutationError(f"{name} is not a permutation of 1..L")


@dataclass
class MCCell:
    """One metric-vs-reference consistency value with its breakdown."""

    metric_col: str
    reference_col: str
    value: float
    delta_r: list = field(default_factory=list)
    weights: list = field(default_factory=list)
    ranks_metric: list = field(default_factory=list)
    ranks_reference: list = field(default_factory=list)


def mc(ranks_m, ranks_ref, params=ConsistencyParams()):
    """Consistency of two rank permutations; returns (value, breakdown).

    The breakdown holds per-method (delta_r, weight) pairs from which
    the value is recomputable as exp(-s * sum(w * dr)).
    """
    ranks_m = [int(r) for r in ranks_m]
    ranks_ref = [int(r) for r in ranks_ref]
    if len(ranks_m) != len(ranks_ref):
        raise LengthMismatchError(
            f"rank lengths differ: {len(ranks_m)} vs {len(ranks_ref)}")
    if len(ranks_m) < 2:
        raise TooFewMethodsError("mc needs at least two methods")
    _check_permutation(ranks_m, "metric ranking")
    _check_permutation(ranks_ref, "reference ranking")
    delta_r = [abs(m - r) for m, r in zip(ranks_m, ranks_ref)]
    weights = [0.5 * (params.alpha ** m + params.beta ** r)
               for m, r in zip(ranks_m, ranks_ref)]
    total = sum(w * d for w, d in zip(weights, delta_r))
    value = float(np.exp(-params.s * total))
    return value, list(zip(delta_r, weights))


@dataclass
class MCReport:
    params: ConsistencyParams
    methods: list
    cells: list                  # list of MCCell

    def matrix(self):
        metric_cols = sorted({c.metric_col for c in self.cells})
        ref_cols = sorted({c.reference_col for c in self.cells})
        lut = {(c.metric_col, c.reference_col): c.value for c in self.cells}
        return metric_cols, ref_cols, lut

    def write(self, out_dir):
        """Emit matrix CSV, per-method breakdown CSV and a meta JSON."""
        from pathlib import Path
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        metric_cols, ref_cols, lut = self.matrix()
        with open(out_dir / "mc_matrix.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["metric"] + ref_cols)
            for m in metric_cols:
                w.writerow([m] + [repr(lut[(m, r)]) for r in ref_cols])
        with open(out_dir / "mc_breakdown.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["metric", "reference", "method", "rank_metric",
                        "rank_reference", "delta_r", "weight"])
            for c in self.cells:
                for i, method in enumerate(self.methods):
                    w.writerow([c.metric_col, c.reference_col, method,
                                c.ranks_metric[i], c.ranks_reference[i],
                                c.delta_r[i], repr(c.weights[i])])
        with open(out_dir / "mc_meta.json", "w") as fh:
            json.dump({"alpha": self.params.alpha, "beta": self.params.beta,
                       "s": self.params.s, "methods": self.methods}, fh,
                      indent=1)

    def pretty(self):
        metric_cols, ref_cols, lut = self.matrix()
        width = max([len(m) for m in metric_cols] + [6])
        lines = [" " * width + "  " + "  ".join(f"{r:>10s}" for r in ref_cols)]
        for m in metric_cols:
            row = "  ".join(f"{lut[(m, r)]:>10.4f}" for r in ref_cols)
            lines.append(f"{m:<{width}s}  {row}")
        return "\n".join(lines)


def regenerate_matrix_csv(breakdown_csv, meta_json, out_path):
    """Rebuild the matrix CSV from the breakdown file alone.

    Byte-identical to the original matrix emitted by MCReport.write.
    """
    with open(meta_json) as fh:
        meta = json.load(fh)
    sums = {}
    with open(breakdown_csv, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["metric"], row["reference"])
            sums.setdefault(key, 0.0)
            sums[key] += float(row["weight"]) * float(row["delta_r"])
    metric_cols = sorted({k[0] for k in sums})
    ref_cols = sorted({k[1] for k in sums})
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric"] + ref_cols)
        for m in metric_cols:
            w.writerow([m] + [repr(float(np.exp(-meta["s"] * sums[(m, r)])))
                              for r in ref_cols])


def mc_report(table, metric_cols=None, reference_cols=None,
              params=ConsistencyParams()):
    """Cross product of metric x reference consistency cells."""
    if metric_cols is None:
        metric_cols = table.columns_of_kind("metric")
    if reference_cols is None:
        reference_cols = table.columns_of_kind("reference")
    for col in list(metric_cols) + list(reference_cols):
        table.column(col)
    cells = []
    ranks_cache = {
        col: rank(table.scores[col], table.methods,
                  table.higher_is_better.get(col, True))[0]
        for col in set(metric_cols) | set(reference_cols)
    }
    for mcol in metric_cols:
        for rcol in reference_cols:
            value, breakdown = mc(ranks_cache[mcol], ranks_cache[rcol], params)
            cells.append(MCCell(
                metric_col=mcol, reference_col=rcol, value=value,
                delta_r=[d for d, _ in breakdown],
                weights=[w for _, w in breakdown],
                ranks_metric=ranks_cache[mcol],
                ranks_reference=ranks_cache[rcol]))
    return MCReport(params=params, methods=list(table.methods), cells=cells)


def read_score_table(csv_path, sidecar_path):
    """Ingest a score CSV (header ``method,<col>,...``) plus its sidecar.

    The sidecar JSON maps column name -> {"kind": "metric"|"reference",
    "higher_is_better": bool}.
    """
    with open(sidecar_path) as fh:
        sidecar = json.load(fh)
    methods = []
    scores = {}
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise NonFiniteScoreError(f"{csv_path}: empty score table")
        if not header or header[0] != "method":
            raise UnknownColumnError(
                f"{csv_path}:1: first column must be 'method'")
        cols = header[1:]
        for c in cols:
            scores[c] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(cols) + 1:
                raise LengthMismatchError(
                    f"{csv_path}:{lineno}: expected {len(cols) + 1} fields, "
                    f"got {len(row)}")
            methods.append(row[0])
            for c, v in zip(cols, row[1:]):
                try:
                    scores[c].append(float(v))
                except ValueError:
                    raise NonFiniteScoreError(
                        f"{csv_path}:{lineno}: bad score {v!r} in column {c}")
    kinds = {}
    hib = {}
    for c in cols:
        info = sidecar.get(c)
        if info is None:
            raise UnknownColumnError(
                f"sidecar {sidecar_path} missing entry for column {c!r}")
        kinds[c] = info["kind"]
        hib[c] = bool(info.get("higher_is_better", True))
    return ScoreTable(methods=methods, scores=scores, kinds=kinds,
                      higher_is_better=hib)
