"""Retrieval quality evaluation for cell classifiers and the bounds baseline.

The central object is a threshold sweep: for each probability cutoff the
classifier retrieves every vocabulary cell whose predicted probability
reaches the cutoff, and we measure recall, precision, and retrieval cost
over a window of evaluation searches. The bounds baseline is evaluated
once (it has no cutoff): its predicted rectangle is expanded to the
retrieval-level covering and scored with the same definitions.

Metric definitions
------------------
recall
    Fraction of evaluation searches whose booked cell is retrieved.
    Searches whose booked cell is outside the classifier vocabulary can
    never be retrieved by the classifier and count as misses.
precision_dest
    Destination-aggregated precision. For one destination, the predicted
    set is the union of retrieved cells over its searches and the truth
    set is the union of booked cells over the same searches; precision is
    the fraction of predicted cells that appear in the truth set (zero
    when nothing is predicted). The reported number is the unweighted
    mean over destinations.
precision_event
    Per-search precision: the booked cell indicator divided by the number
    of retrieved cells (zero when nothing is retrieved), averaged over
    searches.
mean_cells
    Mean number of retrieved cells per search.
mean_retrieved
    Mean number of active listings retrieved per search after the guest
    capacity filter, counted through the listing index postings.
dest_weighted_recall
    Mean over destinations of the per-destination recall; a secondary
    view that weights rarely searched destinations equally.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .baseline import BoundsModel, bounds_to_cellset, destination_coords
from .datagen import MAX_CAPACITY, World
from .errors import ConfigError, DataError
from .features import SHARDS, EncodedBatch
from .index import ListingIndex
from .model import ShardModel

LAMBDA_GRID = np.logspace(-5.0, -1.0, 40)

# Operating thresholds chosen on the full-scale configuration, recorded
# for reference next to sweep output. They are not asserted anywhere:
# reduced-scale runs land on different operating points.
FULL_SCALE_REFERENCE_LAMBDAS = {"EU": 0.0005, "AMER": 0.00075, "OTHER": 0.000625}

SWEEP_CSV_COLUMNS = (
    "shard",
    "lambda",
    "recall",
    "precision_dest",
    "precision_event",
    "mean_cells",
    "mean_retrieved",
)

REPORT_MAGIC = "cellsearch-report"
REPORT_VERSION = 1


def _fmt(x) -> str:
    return format(float(x), ".9g")


@dataclass(frozen=True)
class MetricPoint:
    """Scalar retrieval metrics at one operating point."""

    recall: float
    precision_dest: float
    precision_event: float
    mean_cells: float
    mean_retrieved: float
    dest_weighted_recall: float


METRIC_FIELDS = tuple(MetricPoint.__dataclass_fields__)


def compare_points(a: MetricPoint, b: MetricPoint) -> dict:
    """Metric-wise differences a - b; comparing a point to itself is all zero."""

    return {name: getattr(a, name) - getattr(b, name) for name in METRIC_FIELDS}


@dataclass
class SweepResult:
    """Per-shard metrics over a grid of probability cutoffs."""

    shard: str
    lambdas: np.ndarray
    recall: np.ndarray
    precision_dest: np.ndarray
    precision_event: np.ndarray
    mean_cells: np.ndarray
    mean_retrieved: np.ndarray
    dest_weighted_recall: np.ndarray
    dest_ids: np.ndarray
    dest_precisions: np.ndarray  # (n_dests, n_lambdas)
    booked_probs: np.ndarray  # (n_events,) probability of the booked cell, -1 if OOV
    n_events: int
    n_classes: int
    oov_events: int

    def point(self, j: int) -> MetricPoint:
        return MetricPoint(
            recall=float(self.recall[j]),
            precision_dest=float(self.precision_dest[j]),
            precision_event=float(self.precision_event[j]),
            mean_cells=float(self.mean_cells[j]),
            mean_retrieved=float(self.mean_retrieved[j]),
            dest_weighted_recall=float(self.dest_weighted_recall[j]),
        )


def booked_cell_probs(model: ShardModel, batch: EncodedBatch, chunk_size: int = 512) -> np.ndarray:
    """Predicted probability of each search's booked cell, -1.0 where OOV."""

    n = len(batch)
    if n == 0:
        raise DataError("cannot evaluate an empty batch")
    y = model.vocab.lookup_array(batch.booked_cells)
    out = np.full(n, -1.0)
    for lo in range(0, n, chunk_size):
        hi = min(lo + chunk_size, n)
        probs = model.predict_probs(batch.take(slice(lo, hi)))
        rows = np.arange(hi - lo)
        yc = y[lo:hi]
        ok = yc >= 0
        picked = probs[rows, np.where(ok, yc, 0)].astype(np.float64)
        out[lo:hi] = np.where(ok, picked, -1.0)
    return out


def _check_lambdas(lambdas) -> np.ndarray:
    lam = np.asarray(lambdas, dtype=np.float64)
    if lam.ndim != 1 or lam.size == 0:
        raise ConfigError("lambda grid must be a non-empty 1-d array")
    if not np.all(lam > 0.0):
        raise ConfigError("cutoffs must be strictly positive")
    if not np.all(np.diff(lam) > 0.0) and lam.size > 1:
        raise ConfigError("lambda grid must be strictly increasing")
    return lam


def sweep_shard(
    model: ShardModel,
    batch: EncodedBatch,
    index: ListingIndex,
    lambdas=None,
    chunk_size: int = 512,
) -> SweepResult:
    """Evaluate one shard's classifier over a grid of probability cutoffs.

    Retrieval at cutoff lam keeps every vocabulary cell with predicted
    probability >= lam. Listing counts come from the index postings with
    the per-search guest capacity filter applied, which matches what
    retrieve_cells would return because postings partition the active
    listings by cell.
    """

    lam = _check_lambdas(LAMBDA_GRID if lambdas is None else lambdas)
    n = len(batch)
    if n == 0:
        raise DataError("cannot sweep an empty batch")
    if batch.shard != model.shard:
        raise DataError(f"batch shard {batch.shard!r} does not match model shard {model.shard!r}")
    n_lam = lam.size
    k = len(model.vocab)

    y = model.vocab.lookup_array(batch.booked_cells)
    dest_ids = np.unique(batch.dest_ids)
    dest_row = {int(d): i for i, d in enumerate(dest_ids)}
    didx = np.array([dest_row[int(d)] for d in batch.dest_ids], dtype=np.int64)
    n_dests = dest_ids.size

    # Listings passing the capacity filter per (cell, guest count).
    npass = index.capacity_count_table(model.vocab.classes, MAX_CAPACITY)
    npass_by_guests = np.ascontiguousarray(npass.T, dtype=np.float64)  # (g+1, k)

    booked_probs = np.full(n, -1.0)
    cell_counts = np.zeros((n, n_lam))
    listing_counts = np.zeros((n, n_lam))
    max_prob = np.zeros((n_dests, k), dtype=np.float64)

    for lo in range(0, n, chunk_size):
        hi = min(lo + chunk_size, n)
        rows = np.arange(hi - lo)
        probs = model.predict_probs(batch.take(slice(lo, hi))).astype(np.float64)
        yc = y[lo:hi]
        ok = yc >= 0
        booked_probs[lo:hi] = np.where(ok, probs[rows, np.where(ok, yc, 0)], -1.0)

        # bins[r, c] counts grid cutoffs <= probs[r, c]; a cell is retrieved
        # at cutoff j exactly when bins > j, so suffix sums over the bin
        # histogram give retrieved-cell and retrieved-listing counts for the
        # whole grid in two bincounts.
        bins = np.searchsorted(lam, probs, side="right")
        flat = bins + (np.arange(hi - lo) * (n_lam + 1))[:, None]
        hist = np.bincount(flat.ravel(), minlength=(hi - lo) * (n_lam + 1))
        hist = hist.reshape(hi - lo, n_lam + 1)
        suffix = np.cumsum(hist[:, ::-1], axis=1)[:, ::-1]
        cell_counts[lo:hi] = suffix[:, 1:]

        guests = np.minimum(batch.num_guests[lo:hi], MAX_CAPACITY)
        weights = npass_by_guests[guests]  # (chunk, k)
        whist = np.bincount(flat.ravel(), weights=weights.ravel(), minlength=(hi - lo) * (n_lam + 1))
        whist = whist.reshape(hi - lo, n_lam + 1)
        wsuffix = np.cumsum(whist[:, ::-1], axis=1)[:, ::-1]
        listing_counts[lo:hi] = wsuffix[:, 1:]

        for d in np.unique(didx[lo:hi]):
            group = probs[didx[lo:hi] == d]
            max_prob[d] = np.maximum(max_prob[d], group.max(axis=0))

    hits = booked_probs[:, None] >= lam[None, :]  # (n, n_lam)
    recall = hits.mean(axis=0)
    precision_event = np.where(cell_counts > 0, hits / np.maximum(cell_counts, 1), 0.0).mean(axis=0)
    mean_cells = cell_counts.mean(axis=0)
    mean_retrieved = listing_counts.mean(axis=0)

    dest_events = np.bincount(didx, minlength=n_dests).astype(np.float64)
    dest_hits = np.zeros((n_dests, n_lam))
    np.add.at(dest_hits, didx, hits.astype(np.float64))
    dest_weighted_recall = (dest_hits / dest_events[:, None]).mean(axis=0)

    dest_precisions = np.zeros((n_dests, n_lam))
    for d in range(n_dests):
        truth = np.unique(y[(didx == d) & (y >= 0)])
        row_sorted = np.sort(max_prob[d])
        pred_sizes = k - np.searchsorted(row_sorted, lam, side="left")
        truth_sorted = np.sort(max_prob[d, truth])
        inter = truth_sorted.size - np.searchsorted(truth_sorted, lam, side="left")
        dest_precisions[d] = np.where(pred_sizes > 0, inter / np.maximum(pred_sizes, 1), 0.0)
    precision_dest = dest_precisions.mean(axis=0)

    return SweepResult(
        shard=batch.shard,
        lambdas=lam,
        recall=recall,
        precision_dest=precision_dest,
        precision_event=precision_event,
        mean_cells=mean_cells,
        mean_retrieved=mean_retrieved,
        dest_weighted_recall=dest_weighted_recall,
        dest_ids=dest_ids,
        dest_precisions=dest_precisions,
        booked_probs=booked_probs,
        n_events=n,
        n_classes=k,
        oov_events=int((y < 0).sum()),
    )


def match_recall_threshold(lambdas, recalls, target: float):
    """Largest grid cutoff whose recall reaches the target.

    Returns (cutoff, warned). When no grid point reaches the target the
    smallest cutoff is returned with warned=True; that is the closest the
    grid can get because recall is non-increasing in the cutoff.
    """

    lam = np.asarray(lambdas, dtype=np.float64)
    rec = np.asarray(recalls, dtype=np.float64)
    if lam.shape != rec.shape or lam.ndim != 1 or lam.size == 0:
        raise ConfigError("lambdas and recalls must be matching non-empty 1-d arrays")
    ok = np.flatnonzero(rec >= target)
    if ok.size == 0:
        return float(lam[0]), True
    return float(lam[ok.max()]), False


def quantile_threshold(booked_probs, target: float):
    """Exact cutoff whose recall is the smallest achievable value >= target.

    With n searches, recall values are multiples of 1/n; taking the
    ceil(target * n)-th largest booked-cell probability as the cutoff
    retrieves exactly the searches at or above it, so the achieved recall
    exceeds the target by less than 1/n plus any mass tied at the cutoff.
    Searches whose booked cell is out of vocabulary carry a sentinel of
    -1.0 and are unreachable; if the target demands them the cutoff falls
    back to the smallest reachable probability and warned=True.
    """

    probs = np.asarray(booked_probs, dtype=np.float64)
    if probs.ndim != 1 or probs.size == 0:
        raise DataError("need at least one search to choose a cutoff")
    if not 0.0 < target <= 1.0:
        raise ConfigError(f"target recall must be in (0, 1], got {target}")
    n = probs.size
    m = math.ceil(target * n)
    desc = np.sort(probs)[::-1]
    lam = float(desc[m - 1])
    if lam > 0.0:
        return lam, False
    reachable = desc[desc > 0.0]
    if reachable.size == 0:
        raise DataError("no search's booked cell is in the vocabulary")
    return float(reachable[-1]), True


@dataclass
class BaselineEval:
    """Bounds-baseline metrics for one shard."""

    shard: str
    point: MetricPoint
    dest_ids: np.ndarray
    dest_precisions: np.ndarray
    dest_recalls: np.ndarray
    n_events: int


def evaluate_baseline(
    bmodel: BoundsModel,
    batch: EncodedBatch,
    destinations,
    index: ListingIndex,
    cover_cap: int = 200_000,
) -> BaselineEval:
    """Score the bounds baseline on one shard's evaluation searches.

    Each search's predicted rectangle is expanded to its retrieval-level
    covering; the covering is the exact set of retrieval cells touching
    the rectangle, so membership of the booked cell in it decides recall.
    Retrieved listings are counted directly from the listing store with
    the point-in-rectangle test and the guest capacity filter, matching
    retrieve_rect. Coverings are cached per distinct rectangle (exact
    float key) because searches for one destination often repeat feature
    combinations.
    """

    n = len(batch)
    if n == 0:
        raise DataError("cannot evaluate an empty batch")
    coords = destination_coords(batch, destinations)
    rects = bmodel.predict_bounds(batch, coords)
    booked = batch.booked_cells
    guests = batch.num_guests

    hits = np.zeros(n, dtype=bool)
    cells_per_event = np.zeros(n)
    retrieved_per_event = np.zeros(n)

    dest_ids = np.unique(batch.dest_ids)
    dest_precisions = np.zeros(dest_ids.size)
    dest_recalls = np.zeros(dest_ids.size)

    lats, lngs = index.lats, index.lngs
    caps, active = index.capacities, index.active

    cache: dict = {}
    for di, d in enumerate(dest_ids):
        rows = np.flatnonzero(batch.dest_ids == d)
        truth = np.unique(booked[rows])
        seen_keys = []
        for r in rows:
            rect = rects[r]
            key = (rect.lat_lo, rect.lat_hi, rect.lng_lo, rect.lng_hi)
            covering = cache.get(key)
            if covering is None:
                covering = bounds_to_cellset(rect, cap=cover_cap)
                cache[key] = covering
            if not seen_keys or seen_keys[-1] != key:
                seen_keys.append(key)
            pos = np.searchsorted(covering, booked[r])
            hits[r] = pos < covering.size and covering[pos] == booked[r]
            cells_per_event[r] = covering.size
            inside = rect.contains(lats, lngs) & active & (caps >= guests[r])
            retrieved_per_event[r] = inside.sum()
        parts = [cache[key] for key in dict.fromkeys(seen_keys)]
        union = np.unique(np.concatenate(parts)) if parts else np.empty(0, np.uint64)
        inter = int(np.isin(truth, union).sum())
        dest_precisions[di] = inter / union.size if union.size else 0.0
        dest_recalls[di] = hits[rows].mean()

    pos_mask = cells_per_event > 0
    precision_event = float(
        np.where(pos_mask, hits / np.maximum(cells_per_event, 1), 0.0).mean()
    )
    point = MetricPoint(
        recall=float(hits.mean()),
        precision_dest=float(dest_precisions.mean()),
        precision_event=precision_event,
        mean_cells=float(cells_per_event.mean()),
        mean_retrieved=float(retrieved_per_event.mean()),
        dest_weighted_recall=float(dest_recalls.mean()),
    )
    return BaselineEval(
        shard=batch.shard,
        point=point,
        dest_ids=dest_ids,
        dest_precisions=dest_precisions,
        dest_recalls=dest_recalls,
        n_events=n,
    )


@dataclass
class GapStats:
    """Retrieval pressure on the engineered zero-booking band.

    Totals count retrieved listings that belong to the band, summed over
    the gap destination's evaluation searches, under the classifier at
    its matched cutoff and under the baseline rectangles.
    """

    dest_id: int
    shard: str
    n_events: int
    cell_retrieved_total: float
    rect_retrieved_total: float
    cell_mean_retrieved: float
    rect_mean_retrieved: float


@dataclass
class ShardComparison:
    shard: str
    n_events: int
    n_classes: int
    oov_events: int
    baseline: MetricPoint
    matched_lambda: float
    match_warning: bool
    cell: MetricPoint
    delta_recall: float


@dataclass
class CompareResult:
    shards: list
    pooled_cell_precision_dest: float
    pooled_baseline_precision_dest: float
    n_destinations: int
    gap: GapStats
    reference_lambdas: dict = field(default_factory=dict)


def gap_statistics(
    models: dict,
    bmodel: BoundsModel,
    batches: dict,
    world: World,
    matched_lambdas: dict,
    chunk_size: int = 512,
) -> GapStats:
    """Count retrieved band listings for the gap destination's searches."""

    gap = world.gap
    by_id = {l.listing_id: l for l in world.listings}
    gap_listings = [by_id[i] for i in gap.listing_ids]
    dest = next(d for d in world.destinations if d.dest_id == gap.dest_id)
    shard = dest.continent

    empty = GapStats(gap.dest_id, shard, 0, 0.0, 0.0, 0.0, 0.0)
    if shard not in batches or shard not in models or shard not in matched_lambdas:
        return empty
    batch = batches[shard]
    rows = np.flatnonzero(batch.dest_ids == gap.dest_id)
    if rows.size == 0:
        return empty
    gb = batch.take(rows)
    model = models[shard]
    lam = float(matched_lambdas[shard])

    gap_index = ListingIndex.build(gap_listings)
    gap_npass = gap_index.capacity_count_table(model.vocab.classes, MAX_CAPACITY)
    npass_by_guests = np.ascontiguousarray(gap_npass.T, dtype=np.float64)

    cell_total = 0.0
    n = len(gb)
    for lo in range(0, n, chunk_size):
        hi = min(lo + chunk_size, n)
        probs = model.predict_probs(gb.take(slice(lo, hi))).astype(np.float64)
        sel = probs >= lam
        guests = np.minimum(gb.num_guests[lo:hi], MAX_CAPACITY)
        cell_total += float((sel * npass_by_guests[guests]).sum())

    glat = np.array([l.lat for l in gap_listings])
    glng = np.array([l.lng for l in gap_listings])
    gcap = np.array([l.capacity for l in gap_listings])
    gact = np.array([l.active for l in gap_listings], dtype=bool)
    coords = destination_coords(gb, world.destinations)
    rects = bmodel.predict_bounds(gb, coords)
    rect_total = 0.0
    for r, rect in enumerate(rects):
        inside = rect.contains(glat, glng) & gact & (gcap >= gb.num_guests[r])
        rect_total += float(inside.sum())

    return GapStats(
        dest_id=gap.dest_id,
        shard=shard,
        n_events=n,
        cell_retrieved_total=cell_total,
        rect_retrieved_total=rect_total,
        cell_mean_retrieved=cell_total / n,
        rect_mean_retrieved=rect_total / n,
    )


def run_compare(
    models: dict,
    bmodel: BoundsModel,
    batches: dict,
    world: World,
    index: ListingIndex,
    chunk_size: int = 512,
) -> CompareResult:
    """Compare the classifiers against the bounds baseline at matched recall.

    Per shard, the baseline's achieved recall becomes the target and the
    classifier's cutoff is chosen by exact quantile over booked-cell
    probabilities, so the recall difference is bounded by one event plus
    ties at the cutoff. Precision is then compared destination-aggregated,
    pooled over every destination of every shard.
    """

    shards = [s for s in SHARDS if s in models and s in batches]
    if not shards:
        raise DataError("no shard has both a model and evaluation events")

    comparisons = []
    matched = {}
    cell_dest_prec = []
    base_dest_prec = []
    for shard in shards:
        batch = batches[shard]
        model = models[shard]
        base = evaluate_baseline(bmodel, batch, world.destinations, index)
        probs = booked_cell_probs(model, batch, chunk_size)
        lam, warned = quantile_threshold(probs, base.point.recall)
        sweep = sweep_shard(model, batch, index, lambdas=np.array([lam]), chunk_size=chunk_size)
        cell_point = sweep.point(0)
        comparisons.append(
            ShardComparison(
                shard=shard,
                n_events=len(batch),
                n_classes=sweep.n_classes,
                oov_events=sweep.oov_events,
                baseline=base.point,
                matched_lambda=lam,
                match_warning=warned,
                cell=cell_point,
                delta_recall=cell_point.recall - base.point.recall,
            )
        )
        matched[shard] = lam
        cell_dest_prec.append(sweep.dest_precisions[:, 0])
        base_dest_prec.append(base.dest_precisions)

    pooled_cell = float(np.concatenate(cell_dest_prec).mean())
    pooled_base = float(np.concatenate(base_dest_prec).mean())
    gap = gap_statistics(models, bmodel, batches, world, matched, chunk_size)
    return CompareResult(
        shards=comparisons,
        pooled_cell_precision_dest=pooled_cell,
        pooled_baseline_precision_dest=pooled_base,
        n_destinations=sum(p.size for p in cell_dest_prec),
        gap=gap,
        reference_lambdas=dict(FULL_SCALE_REFERENCE_LAMBDAS),
    )


def sweep_rows(result: SweepResult) -> list:
    """CSV data rows for one sweep, shared verbatim by the chart metadata."""

    rows = []
    for j in range(result.lambdas.size):
        rows.append(
            ",".join(
                (
                    result.shard,
                    _fmt(result.lambdas[j]),
                    _fmt(result.recall[j]),
                    _fmt(result.precision_dest[j]),
                    _fmt(result.precision_event[j]),
                    _fmt(result.mean_cells[j]),
                    _fmt(result.mean_retrieved[j]),
                )
            )
        )
    return rows


def sweep_csv_text(results) -> str:
    lines = [",".join(SWEEP_CSV_COLUMNS)]
    for result in results:
        lines.extend(sweep_rows(result))
    return "\n".join(lines) + "\n"


def write_sweep_csv(path, results) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(sweep_csv_text(results))


def _point_lines(prefix: str, point: MetricPoint) -> list:
    return [f"{prefix}_{name} {_fmt(getattr(point, name))}" for name in METRIC_FIELDS]


def format_report(result: CompareResult) -> str:
    """Plain-text comparison report; line-oriented, no timestamps."""

    lines = [f"{REPORT_MAGIC} {REPORT_VERSION}"]
    for shard in SHARDS:
        if shard in result.reference_lambdas:
            lines.append(f"reference_lambda {shard} {_fmt(result.reference_lambdas[shard])}")
    for comp in result.shards:
        lines.append("")
        lines.append(f"[shard {comp.shard}]")
        lines.append(f"n_events {comp.n_events}")
        lines.append(f"n_classes {comp.n_classes}")
        lines.append(f"oov_events {comp.oov_events}")
        lines.append(f"matched_lambda {_fmt(comp.matched_lambda)}")
        lines.append(f"match_warning {int(comp.match_warning)}")
        lines.append(f"delta_recall {_fmt(comp.delta_recall)}")
        lines.extend(_point_lines("cell", comp.cell))
        lines.extend(_point_lines("baseline", comp.baseline))
    lines.append("")
    lines.append("[pooled]")
    lines.append(f"n_destinations {result.n_destinations}")
    lines.append(f"cell_precision_dest {_fmt(result.pooled_cell_precision_dest)}")
    lines.append(f"baseline_precision_dest {_fmt(result.pooled_baseline_precision_dest)}")
    gap = result.gap
    lines.append("")
    lines.append("[gap]")
    lines.append(f"dest_id {gap.dest_id}")
    lines.append(f"shard {gap.shard}")
    lines.append(f"n_events {gap.n_events}")
    lines.append(f"cell_retrieved_total {_fmt(gap.cell_retrieved_total)}")
    lines.append(f"rect_retrieved_total {_fmt(gap.rect_retrieved_total)}")
    lines.append(f"cell_mean_retrieved {_fmt(gap.cell_mean_retrieved)}")
    lines.append(f"rect_mean_retrieved {_fmt(gap.rect_mean_retrieved)}")
    return "\n".join(lines) + "\n"


def write_report(path, result: CompareResult) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_report(result))
