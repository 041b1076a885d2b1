"""
Experiment orchestration and reporting: scheme-by-scheme matching grids,
detection-count tables grouped by bits per pixel, ROC curves, and skip-rate
summaries.

Tables and curves are emitted as structured text plus plot-ready coordinate
lines; nothing here draws.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import BlockPrnuError, ConfigError, EmptyInput
from .matching import DEFAULT_THRESHOLD, MatchReport, PceConfig, pce
from .noise import DenoiseConfig, Picture
from .prnu import Fingerprint, estimate_fingerprint
from .trace import TraceFile, bits_per_pixel, skipped_block_rate
from .weighting import ALL_SCHEMES, SchemeConfig

BPP_GROUP_EDGES = (0.024, 0.052, 0.084, 0.172)


@dataclass
class GridVideo:
    """One test video: decoded pictures, trace, and who filmed it."""
    video_id: str
    camera_id: str
    pictures: list[Picture]
    trace: TraceFile


@dataclass
class ExperimentGrid:
    """Videos x schemes matrix of match outcomes."""
    video_ids: list[str]
    schemes: list[str]
    bpp: dict[str, float]
    cells: dict[tuple[str, str], object]   # MatchReport or BlockPrnuError
    notes: list[str] = field(default_factory=list)


def run_grid(videos: Sequence[GridVideo],
             scheme_configs: Sequence[SchemeConfig],
             references: dict[str, Fingerprint],
             denoise_config: DenoiseConfig = DenoiseConfig(),
             pce_config: PceConfig = PceConfig(),
             threshold: float = DEFAULT_THRESHOLD,
             workers: int = 1) -> ExperimentGrid:
    """Estimate and match every video under every scheme.

    A failing cell stores its error and the rest of the grid proceeds.
    """
    schemes = [c.scheme for c in scheme_configs]
    if len(set(schemes)) != len(schemes):
        raise ConfigError("duplicate schemes in grid")
    grid = ExperimentGrid(video_ids=[v.video_id for v in videos],
                          schemes=schemes,
                          bpp={v.video_id: bits_per_pixel(v.trace) for v in videos},
                          cells={})
    if "loop_filter_only" in schemes:
        grid.notes.append("loop_filter_only duplicates conventional masks: "
                          "the simulator codec has no in-loop filter")
    for video in videos:
        frame_maps = video.trace.frames()
        for config in scheme_configs:
            key = (video.video_id, config.scheme)
            try:
                fp = estimate_fingerprint(video.pictures, frame_maps, config,
                                          denoise_config=denoise_config,
                                          workers=workers)
                grid.cells[key] = pce(fp, references[video.camera_id],
                                      pce_config, threshold)
            except BlockPrnuError as exc:
                grid.cells[key] = exc
    return grid


def scheme_mean_pce(grid: ExperimentGrid,
                    video_ids: Sequence[str] | None = None) -> dict[str, float]:
    """Mean PCE per scheme over (optionally a subset of) grid videos."""
    ids = list(video_ids) if video_ids is not None else grid.video_ids
    out = {}
    for scheme in grid.schemes:
        values = [grid.cells[(vid, scheme)].pce for vid in ids
                  if isinstance(grid.cells.get((vid, scheme)), MatchReport)]
        if not values:
            raise EmptyInput(f"no successful cells for scheme {scheme}")
        out[scheme] = float(np.mean(values))
    return out


def improvement_ratios(mean_pces: dict[str, float],
                       baseline: str = "conventional") -> dict[str, float]:
    if baseline not in mean_pces:
        raise ConfigError(f"baseline {baseline} not in grid")
    base = mean_pces[baseline]
    if base <= 0:
        raise EmptyInput("baseline mean PCE is not positive")
    return {s: v / base for s, v in mean_pces.items()}


def format_ratio(x: float) -> str:
    """Ratios are reported at 3 significant digits."""
    return f"{x:.3g}"


# ---------------------------------------------------------------------------
# detection-count table
# ---------------------------------------------------------------------------

@dataclass
class ThresholdTable:
    group_labels: list[str]
    schemes: list[str]
    counts: np.ndarray          # (groups, schemes) int
    populations: np.ndarray     # (groups,) int
    notes: list[str] = field(default_factory=list)

    @property
    def totals(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def total_population(self) -> int:
        return int(self.populations.sum())

    def to_text(self) -> str:
        width = max(12, max(len(s) for s in self.schemes) + 2)
        head = "group".ljust(10) + "".join(s.rjust(width) for s in self.schemes) \
            + "population".rjust(12)
        lines = [head]
        for i, label in enumerate(self.group_labels):
            row = label.ljust(10)
            row += "".join(str(int(c)).rjust(width) for c in self.counts[i])
            row += str(int(self.populations[i])).rjust(12)
            lines.append(row)
        total_row = "total".ljust(10)
        total_row += "".join(str(int(c)).rjust(width) for c in self.totals)
        total_row += str(self.total_population).rjust(12)
        lines.append(total_row)
        lines.extend(f"# {n}" for n in self.notes)
        return "\n".join(lines) + "\n"


def group_labels_for_edges(edges: Sequence[float]) -> list[str]:
    labels = [f"<{e:g}" for e in edges]
    labels.append(f">{edges[-1]:g}")
    return labels


def threshold_table(grid: ExperimentGrid,
                    group_edges: Sequence[float] = BPP_GROUP_EDGES,
                    threshold: float = DEFAULT_THRESHOLD) -> ThresholdTable:
    """Count videos with PCE above threshold, per bpp group and scheme.

    Error cells count as missed detections. Videos land in the first group
    whose upper edge exceeds their bits-per-pixel; the last group is open.
    """
    edges = np.asarray(group_edges, dtype=np.float64)
    n_groups = edges.size + 1
    counts = np.zeros((n_groups, len(grid.schemes)), dtype=np.int64)
    populations = np.zeros(n_groups, dtype=np.int64)
    for vid in grid.video_ids:
        g = int(np.searchsorted(edges, grid.bpp[vid], side="right"))
        populations[g] += 1
        for j, scheme in enumerate(grid.schemes):
            cell = grid.cells.get((vid, scheme))
            if isinstance(cell, MatchReport) and cell.pce > threshold:
                counts[g, j] += 1
    return ThresholdTable(group_labels=group_labels_for_edges(edges),
                          schemes=list(grid.schemes), counts=counts,
                          populations=populations, notes=list(grid.notes))


# ---------------------------------------------------------------------------
# ROC
# ---------------------------------------------------------------------------

@dataclass
class RocCurve:
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float

    def to_coords(self) -> str:
        """Plot-ready lines: fpr tpr, one point per threshold."""
        return "\n".join(f"{float(f)!r} {float(t)!r}"
                         for f, t in zip(self.fpr, self.tpr)) + "\n"


def roc(matching: Sequence[float], non_matching: Sequence[float]) -> RocCurve:
    """Detection-vs-false-alarm curve over every observed PCE threshold.

    Endpoints (0,0) and (1,1) are always present. AUC is the trapezoid area;
    tied values across both sets trace the diagonal and score 0.5.
    """
    match = np.asarray(matching, dtype=np.float64)
    non = np.asarray(non_matching, dtype=np.float64)
    if match.size == 0 or non.size == 0:
        raise EmptyInput("roc needs both matching and non-matching scores")
    distinct = np.unique(np.concatenate([match, non]))[::-1]
    thresholds = np.concatenate([[np.inf], distinct, [-np.inf]])
    tpr = np.array([(match > t).mean() for t in thresholds])
    fpr = np.array([(non > t).mean() for t in thresholds])
    auc = float(np.trapezoid(tpr, fpr))
    return RocCurve(thresholds=thresholds, fpr=fpr, tpr=tpr, auc=auc)


# ---------------------------------------------------------------------------
# skip-rate summaries
# ---------------------------------------------------------------------------

def sbr_summary(traces_by_group: dict[str, Sequence[TraceFile]]) -> list[str]:
    """Box-plot numbers (min, quartiles, max) of skip rate per bitrate group.

    Returns text rows: label,min,q1,median,q3,max.
    """
    rows = []
    for label in traces_by_group:
        values = [skipped_block_rate(tf.frames()) for tf in traces_by_group[label]]
        if not values:
            raise EmptyInput(f"group {label} has no traces")
        q = np.percentile(values, [0, 25, 50, 75, 100])
        rows.append(f"{label}," + ",".join(repr(float(v)) for v in q))
    return rows
