"""Command line pipeline: gen, train, sweep, compare, retrieve, selfcheck.

Every command reads one JSON config (all keys defaulted) plus dotted
``--set`` overrides, and works inside the configured workdir:

    workdir/data/           dataset TSVs and manifest (gen)
    workdir/pipeline.json   feature pipeline (train)
    workdir/vocab_*.txt     per-shard label vocabularies (train)
    workdir/model_*.ckpt    per-shard classifiers (train)
    workdir/baseline.ckpt   bounds baseline (train)
    workdir/postings.idx    listing index postings (train)
    workdir/sweep.csv       threshold sweep table (sweep)
    workdir/sweep_*.svg     per-shard sweep charts (sweep)
    workdir/report.txt      matched-recall comparison report (compare)

Exit codes: 0 success, 2 configuration error, 3 data/artifact error,
4 numeric failure, 5 capacity cap exceeded, 1 anything else.
"""

import argparse
import os
import sys
import tempfile

import numpy as np

from . import config as cfg
from .baseline import BoundsModel, bounds_to_cellset, destination_coords, offset_targets
from .checkpoint import load_baseline, load_model, save_baseline, save_checkpoint, save_model, load_checkpoint
from .datagen import (
    GenConfig,
    generate_dataset,
    generate_world,
    load_dataset,
    read_destinations,
    read_events,
    read_listings,
    write_dataset,
)
from .errors import (
    CapacityError,
    CellSearchError,
    ConfigError,
    DataError,
    InvalidCellError,
    NumericError,
)
from .evaluation import run_compare, sweep_shard, write_report, write_sweep_csv
from .features import SHARDS, encode_events, fit_pipeline, load_pipeline, merge_batches, save_pipeline
from .index import ListingIndex, load_index, save_index
from .labels import build_vocab, load_vocab, save_vocab
from .model import ShardModel
from .svg import write_sweep_svg


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cellsearch",
        description="location retrieval pipeline: grid cells, classifiers, bounds baseline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; defaults apply when omitted")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="dotted config override, e.g. data.seed=3 or train.hidden=[64,32]",
        )
        p.add_argument(
            "--full-scale",
            action="store_true",
            help="shorthand for --set full_scale=true",
        )

    common(sub.add_parser("gen", help="generate the synthetic marketplace dataset"))
    common(sub.add_parser("train", help="fit pipeline, shard classifiers, baseline, and index"))
    common(sub.add_parser("sweep", help="sweep probability cutoffs and write CSV + charts"))
    common(sub.add_parser("compare", help="compare classifiers to the baseline at matched recall"))
    retrieve = sub.add_parser("retrieve", help="retrieve cells and listings for one eval search")
    common(retrieve)
    retrieve.add_argument("--event", type=int, required=True, help="search id from the eval window")
    retrieve.add_argument("--cutoff", type=float, help="probability cutoff (classifier mode)")
    retrieve.add_argument("--rect", action="store_true", help="use the bounds baseline instead")
    retrieve.add_argument("--limit", type=int, default=10, help="max cells/listings to print")
    common(sub.add_parser("selfcheck", help="run fast internal consistency checks"))
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    overrides = list(args.overrides)
    if args.full_scale:
        overrides.append("full_scale=true")
    try:
        run = cfg.load_run_config(args.config, overrides)
        handler = _COMMANDS[args.command]
        return handler(run, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, InvalidCellError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return 5
    except CellSearchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def cmd_gen(run: cfg.RunConfig, args) -> int:
    world, train_events, eval_events = generate_dataset(run.data)
    write_dataset(run.data_dir, run.data, world, train_events, eval_events)
    print(f"wrote dataset under {run.data_dir}")
    print(
        f"destinations {len(world.destinations)} listings {len(world.listings)} "
        f"train_events {len(train_events)} eval_events {len(eval_events)}"
    )
    print(f"gap destination {world.gap.dest_id} with {len(world.gap.listing_ids)} band listings")
    return 0


def cmd_train(run: cfg.RunConfig, args) -> int:
    world, train_events, _ = load_dataset(run.require_data())
    pipeline = fit_pipeline(train_events, world.destinations)
    os.makedirs(run.workdir, exist_ok=True)
    save_pipeline(run.path(cfg.PIPELINE_FILE), pipeline)
    print(f"wrote {run.path(cfg.PIPELINE_FILE)}")

    batches = encode_events(train_events, world.destinations, pipeline)
    for shard in SHARDS:
        batch = batches[shard]
        vocab = build_vocab(shard, batch.booked_cells)
        save_vocab(run.path(cfg.vocab_file(shard)), vocab)
        model = ShardModel.build(run.train, pipeline, vocab)
        log = model.fit(batch)
        save_model(run.path(cfg.model_file(shard)), model)
        best = log[model.best_epoch]
        print(
            f"shard {shard}: events {len(batch)} classes {len(vocab)} "
            f"epochs {len(log)} best_val_ce {best['val_ce']:.6f}"
        )

    merged = merge_batches([batches[s] for s in SHARDS])
    coords = destination_coords(merged, world.destinations)
    bmodel = BoundsModel.build(run.bounds, pipeline)
    blog = bmodel.fit(merged, offset_targets(merged, coords))
    save_baseline(run.path(cfg.BASELINE_FILE), bmodel)
    bbest = blog[bmodel.best_epoch]
    print(f"baseline: epochs {len(blog)} best_val_loss {bbest['val_loss']:.6f}")

    index = ListingIndex.build(world.listings)
    save_index(run.path(cfg.INDEX_FILE), index, cfg.LISTINGS_REF)
    print(f"indexed {index.n_active} active listings across {index.posting_cells.size} cells")
    return 0


def _load_stack(run: cfg.RunConfig):
    world, _, eval_events = load_dataset(run.require_data())
    pipeline = load_pipeline(run.require(cfg.PIPELINE_FILE))
    models = {}
    for shard in SHARDS:
        vocab = load_vocab(run.require(cfg.vocab_file(shard)), shard)
        models[shard] = load_model(run.require(cfg.model_file(shard)), vocab)
    bmodel = load_baseline(run.require(cfg.BASELINE_FILE))
    index, _ = load_index(run.require(cfg.INDEX_FILE), world.listings)
    eval_batches = encode_events(eval_events, world.destinations, pipeline)
    return world, pipeline, models, bmodel, index, eval_batches


def cmd_sweep(run: cfg.RunConfig, args) -> int:
    world, pipeline, models, bmodel, index, eval_batches = _load_stack(run)
    results = []
    for shard in SHARDS:
        batch = eval_batches[shard]
        if len(batch) == 0:
            print(f"shard {shard}: no eval events, skipped")
            continue
        result = sweep_shard(models[shard], batch, index, chunk_size=run.chunk_size)
        results.append(result)
        svg_path = run.path(cfg.sweep_svg_file(shard))
        write_sweep_svg(svg_path, result)
        print(
            f"shard {shard}: events {result.n_events} oov {result.oov_events} "
            f"recall {result.recall[0]:.4f}..{result.recall[-1]:.4f} -> {svg_path}"
        )
    if not results:
        raise DataError("no shard had evaluation events to sweep")
    csv_path = run.path(cfg.SWEEP_CSV_FILE)
    write_sweep_csv(csv_path, results)
    print(f"wrote {csv_path}")
    return 0


def cmd_compare(run: cfg.RunConfig, args) -> int:
    world, pipeline, models, bmodel, index, eval_batches = _load_stack(run)
    batches = {s: b for s, b in eval_batches.items() if len(b) > 0}
    result = run_compare(models, bmodel, batches, world, index, run.chunk_size)
    for comp in result.shards:
        flag = " (target unreachable)" if comp.match_warning else ""
        print(
            f"shard {comp.shard}: baseline_recall {comp.baseline.recall:.4f} "
            f"matched_lambda {comp.matched_lambda:.6g} delta_recall {comp.delta_recall:+.4f}{flag}"
        )
        print(
            f"  precision_dest cell {comp.cell.precision_dest:.4f} "
            f"baseline {comp.baseline.precision_dest:.4f}; mean_retrieved "
            f"cell {comp.cell.mean_retrieved:.1f} baseline {comp.baseline.mean_retrieved:.1f}"
        )
    print(
        f"pooled precision_dest: cell {result.pooled_cell_precision_dest:.4f} "
        f"baseline {result.pooled_baseline_precision_dest:.4f}"
    )
    gap = result.gap
    print(
        f"gap band (dest {gap.dest_id}, shard {gap.shard}, {gap.n_events} events): "
        f"cell retrieved {gap.cell_retrieved_total:.0f} rect retrieved {gap.rect_retrieved_total:.0f}"
    )
    report_path = run.path(cfg.REPORT_FILE)
    write_report(report_path, result)
    print(f"wrote {report_path}")
    return 0


def cmd_retrieve(run: cfg.RunConfig, args) -> int:
    if not args.rect:
        if args.cutoff is None:
            raise ConfigError("--cutoff is required unless --rect is given")
        if not 0.0 < args.cutoff <= 1.0:
            raise ConfigError(f"--cutoff must be in (0, 1], got {args.cutoff}")
    data_dir = run.require_data()
    destinations = read_destinations(os.path.join(data_dir, "destinations.tsv"))
    listings = read_listings(os.path.join(data_dir, "listings.tsv"))
    eval_events = read_events(os.path.join(data_dir, "eval_events.tsv"))
    event = next((e for e in eval_events if e.search_id == args.event), None)
    if event is None:
        raise DataError(f"search id {args.event} is not in the eval window")
    pipeline = load_pipeline(run.require(cfg.PIPELINE_FILE))
    index, _ = load_index(run.require(cfg.INDEX_FILE), listings)
    batches = encode_events([event], destinations, pipeline)
    shard, batch = next((s, b) for s, b in batches.items() if len(b) == 1)
    guests = int(event.num_guests)
    print(f"event {event.search_id} shard {shard} dest {event.dest_id} guests {guests}")

    limit = max(args.limit, 0)
    if args.rect:
        bmodel = load_baseline(run.require(cfg.BASELINE_FILE))
        rect = bmodel.predict_bounds(batch, destination_coords(batch, destinations))[0]
        print(
            f"rect {rect.lat_lo:.6f} {rect.lat_hi:.6f} {rect.lng_lo:.6f} {rect.lng_hi:.6f}"
        )
        covering = bounds_to_cellset(rect)
        print(f"cells {covering.size}")
        for cell in covering[:limit]:
            print(f"cell {int(cell):016x}")
        ids = index.retrieve_rect(rect, guests)
    else:
        vocab = load_vocab(run.require(cfg.vocab_file(shard)), shard)
        model = load_model(run.require(cfg.model_file(shard)), vocab)
        probs = model.predict_probs(batch)[0].astype(np.float64)
        sel = np.flatnonzero(probs >= args.cutoff)
        order = sel[np.argsort(-probs[sel], kind="stable")]
        print(f"cells {order.size}")
        for k in order[:limit]:
            print(f"cell {vocab.cell_of(int(k)):016x} {probs[k]:.9g}")
        ids = index.retrieve_cells(vocab.classes[sel], guests)
    print(f"listings {ids.size}")
    for i in ids[:limit]:
        print(f"listing {int(i)}")
    return 0


def _check_cell_counts():
    from .s2geom.cellid import all_cells_at_level, num_cells_at_level

    for level in range(4):
        cells = all_cells_at_level(level)
        if cells.size != num_cells_at_level(level) or np.unique(cells).size != cells.size:
            return f"level {level}: {cells.size} cells"
    return None


def _check_point_round_trip():
    from .s2geom.cellid import cell_centers_vec, cells_from_latlng_vec

    rng = np.random.default_rng(0)
    lat = rng.uniform(-89.9, 89.9, 500)
    lng = rng.uniform(-180.0, 180.0, 500)
    for level in (4, 11):
        cells = cells_from_latlng_vec(lat, lng, level)
        clat, clng = cell_centers_vec(cells, level)
        again = cells_from_latlng_vec(clat, clng, level)
        if not np.array_equal(cells, again):
            return f"level {level}: center re-encode changed {int((cells != again).sum())} cells"
    return None


def _check_hilbert_adjacency():
    from .s2geom import hilbert

    for level in (1, 3, 5):
        for orientation in range(4):
            pos = np.arange(4**level)
            i, j = hilbert.position_to_xy_vec(level, pos, orientation)
            step = np.abs(np.diff(i)) + np.abs(np.diff(j))
            if not np.all(step == 1):
                return f"level {level} orientation {orientation}: broken step"
    return None


def _check_covering():
    from .s2geom.cellid import CellId, cells_from_latlng_vec
    from .s2geom.region import GeoRect, cover_rect_raw, rect_intersects_cell

    rng = np.random.default_rng(1)
    rects = [
        GeoRect(40.0, 41.0, -74.5, -73.5),
        GeoRect(-1.0, 1.0, 179.5, -179.5),
        GeoRect(59.0, 59.4, 17.8, 18.4),
    ]
    for rect in rects:
        covering = cover_rect_raw(rect, 8)
        members = set(int(c) for c in covering)
        for cell in covering[:64]:
            if not rect_intersects_cell(rect, CellId(int(cell))):
                return f"covering cell {int(cell):016x} does not touch {rect}"
        lat = rng.uniform(rect.lat_lo, rect.lat_hi, 400)
        if rect.lng_lo <= rect.lng_hi:
            lng = rng.uniform(rect.lng_lo, rect.lng_hi, 400)
        else:
            span = (180.0 - rect.lng_lo) + (rect.lng_hi + 180.0)
            raw = rng.uniform(0.0, span, 400)
            lng = np.where(
                raw < 180.0 - rect.lng_lo, rect.lng_lo + raw, raw - (180.0 - rect.lng_lo) - 180.0
            )
        cells = cells_from_latlng_vec(lat, lng, 8)
        missing = [c for c in cells if int(c) not in members]
        if missing:
            return f"{len(missing)} in-rect points fall outside the covering of {rect}"
    return None


def _check_gradients():
    from .nn import TrunkSpec, gradient_rel_errors, init_trunk, numerical_gradient, trunk_backward, trunk_forward

    rng = np.random.default_rng(2)
    spec = TrunkSpec(("a",), (5,), 3, 2, (6, 4))
    params = init_trunk(rng, spec, np.float64)
    cat = rng.integers(0, 5, (8, 1))
    cont = rng.normal(size=(8, 2))
    target = rng.normal(size=(8, spec.output_dim))

    def loss_fn():
        h, _ = trunk_forward(params, spec, cat, cont)
        return 0.5 * float(((h - target) ** 2).sum())

    h, cache = trunk_forward(params, spec, cat, cont)
    grads = {name: np.zeros_like(p) for name, p in params.items()}
    trunk_backward(params, spec, cache, h - target, grads)
    numeric = numerical_gradient(loss_fn, params)
    errs = gradient_rel_errors(grads, numeric)
    worst = max(errs.values())
    if worst >= 1e-4:
        return f"worst relative error {worst:.3g}"
    return None


def _check_sampled_softmax():
    from .model import full_loss_and_grads, sampled_loss_and_grads
    from .nn import TrunkSpec, init_trunk

    rng = np.random.default_rng(3)
    spec = TrunkSpec(("a",), (4,), 2, 1, (5,))
    n_classes = 6
    params = init_trunk(rng, spec, np.float64)
    params["out_w"] = rng.normal(size=(spec.output_dim, n_classes))
    params["out_b"] = rng.normal(size=n_classes)
    cat = rng.integers(0, 4, (4, 1))
    cont = rng.normal(size=(4, 1))
    targets = np.full(4, 2)
    negatives = np.array([k for k in range(n_classes) if k != 2])
    s_loss, s_grads, _ = sampled_loss_and_grads(params, spec, cat, cont, targets, negatives)
    f_loss, f_grads, _ = full_loss_and_grads(params, spec, cat, cont, targets)
    if abs(s_loss - f_loss) > 1e-9:
        return f"loss gap {abs(s_loss - f_loss):.3g}"
    for name in s_grads:
        if np.abs(s_grads[name] - f_grads[name]).max() > 1e-9:
            return f"gradient gap in {name}"
    return None


def _check_checkpoint():
    tensors = {
        "alpha": np.arange(6, dtype=np.float32).reshape(2, 3),
        "beta": np.linspace(-1, 1, 5).astype(np.float32),
    }
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "t.ckpt")
        save_checkpoint(path, "cell_classifier", {"x": 1}, tensors)
        kind, conf, loaded = load_checkpoint(path)
    if kind != "cell_classifier" or conf != {"x": 1}:
        return "header mismatch"
    for name, t in tensors.items():
        if not np.array_equal(loaded[name], t):
            return f"tensor {name} changed"
    return None


def _check_index():
    world = generate_world(GenConfig(seed=3, n_destinations=3, n_listings=800, n_train_events=10, n_eval_events=5))
    index = ListingIndex.build(world.listings)
    cells = index.posting_cells[:20]
    got = index.retrieve_cells(cells, num_guests=2)
    mask = np.isin(index.cells, cells) & (index.capacities >= 2) & index.active
    want = np.sort(index.listing_ids[mask])
    if not np.array_equal(got, want):
        return "postings disagree with the linear scan"
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "p.idx")
        save_index(path, index, "listings.tsv")
        again, ref = load_index(path, world.listings)
    if ref != "listings.tsv" or not np.array_equal(again.posting_ids, index.posting_ids):
        return "round trip changed postings"
    return None


SELF_CHECKS = (
    ("cell_counts", _check_cell_counts),
    ("point_round_trip", _check_point_round_trip),
    ("hilbert_adjacency", _check_hilbert_adjacency),
    ("rect_covering", _check_covering),
    ("trunk_gradients", _check_gradients),
    ("sampled_softmax", _check_sampled_softmax),
    ("checkpoint_round_trip", _check_checkpoint),
    ("listing_index", _check_index),
)


def cmd_selfcheck(run: cfg.RunConfig, args) -> int:
    failures = 0
    for name, check in SELF_CHECKS:
        try:
            problem = check()
        except Exception as exc:  # a failing check must not abort the rest
            problem = f"{type(exc).__name__}: {exc}"
        if problem is None:
            print(f"[ok] {name}")
        else:
            failures += 1
            print(f"[FAIL] {name}: {problem}")
    return 0 if failures == 0 else 1


_COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "sweep": cmd_sweep,
    "compare": cmd_compare,
    "retrieve": cmd_retrieve,
    "selfcheck": cmd_selfcheck,
}


if __name__ == "__main__":
    raise SystemExit(main())
