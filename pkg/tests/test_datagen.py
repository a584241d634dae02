"""Generator tests: determinism, invariants of the engineered world, and
record-file round trips."""

import os

import numpy as np
import pytest

from cellsearch.datagen import (
    BOOKING_CUTOFF_SPREADS,
    GenConfig,
    generate_dataset,
    generate_search_log,
    generate_world,
    km_distance,
    load_dataset,
    read_destinations,
    read_events,
    read_listings,
    write_dataset,
)
from cellsearch.errors import ConfigError
from cellsearch.s2geom import cell_from_latlng

from conftest import SMALL


def test_counts_exact(small_dataset):
    world, train, ev = small_dataset
    assert len(world.listings) == SMALL.n_listings
    assert len(world.destinations) == SMALL.n_destinations
    assert len(train) == SMALL.n_train_events
    assert len(ev) == SMALL.n_eval_events
    ids = [l.listing_id for l in world.listings]
    assert ids == list(range(1, SMALL.n_listings + 1))


def test_event_ids_disjoint_and_ordered(small_dataset):
    _, train, ev = small_dataset
    assert [e.search_id for e in train] == list(range(len(train)))
    assert [e.search_id for e in ev] == list(
        range(len(train), len(train) + len(ev))
    )


def test_booked_cell_matches_listing(small_dataset):
    world, train, ev = small_dataset
    by_id = {l.listing_id: l for l in world.listings}
    for e in (train + ev)[::37]:
        l = by_id[e.booked_listing_id]
        assert e.booked_cell == int(cell_from_latlng(l.lat, l.lng, 11))


def test_bookings_pass_retrieval_filters(small_dataset):
    world, train, ev = small_dataset
    by_id = {l.listing_id: l for l in world.listings}
    for e in train + ev:
        l = by_id[e.booked_listing_id]
        assert l.active
        assert l.capacity >= e.num_guests


def test_gap_band_has_listings_but_no_bookings(small_dataset):
    world, train, ev = small_dataset
    assert len(world.gap.listing_ids) >= 50
    gap_ids = set(world.gap.listing_ids)
    assert all(e.booked_listing_id not in gap_ids for e in train + ev)
    # Gap listings really sit inside the band rect.
    by_id = {l.listing_id: l for l in world.listings}
    for lid in world.gap.listing_ids:
        l = by_id[lid]
        assert world.gap.rect.contains(l.lat, l.lng)


def test_non_outlier_bookings_near_cluster(small_dataset):
    world, train, _ = small_dataset
    by_id = {l.listing_id: l for l in world.listings}
    for e in train[:2000]:
        if e.is_outlier:
            continue
        dest = world.destinations[e.dest_id]
        l = by_id[e.booked_listing_id]
        d = min(
            float(km_distance(c.lat, c.lng, l.lat, l.lng))
            for c in dest.clusters
        )
        limit = max(BOOKING_CUTOFF_SPREADS * c.spread_km for c in dest.clusters)
        assert d <= limit + 1e-6


def test_outlier_fraction_close_to_rate():
    cfg = GenConfig(
        seed=3,
        n_destinations=6,
        n_listings=1800,
        n_train_events=100_000,
        n_eval_events=100,
    )
    world = generate_world(cfg)
    rng = np.random.default_rng(cfg.seed + 1)
    events = generate_search_log(world, 100_000, 0, rng)
    frac = sum(e.is_outlier for e in events) / len(events)
    assert abs(frac - cfg.outlier_rate) < 0.005


def test_every_positive_continent_present(small_dataset):
    world, _, _ = small_dataset
    assert {d.continent for d in world.destinations} == {"EU", "AMER", "OTHER"}


def test_degenerate_continent_mix():
    cfg = GenConfig(
        seed=5,
        n_destinations=4,
        n_listings=1000,
        n_train_events=10,
        n_eval_events=10,
        continent_mix=(1.0, 0.0, 0.0),
    )
    world = generate_world(cfg)
    assert all(d.continent == "EU" for d in world.destinations)
    assert world.gap.dest_id == -1  # no AMER destination to engineer


def test_multi_cluster_mixture_share():
    # Non-primary booking share for the engineered destination should be
    # close to pan_discovery_rate * secondary weight.
    cfg = GenConfig(
        seed=13,
        n_destinations=6,
        n_listings=2000,
        n_train_events=60_000,
        n_eval_events=100,
    )
    world = generate_world(cfg)
    rng = np.random.default_rng(99)
    events = generate_search_log(world, 60_000, 0, rng)
    dest = world.destinations[world.gap.dest_id]
    b = dest.clusters[1]
    by_id = {l.listing_id: l for l in world.listings}
    n = n_b = 0
    for e in events:
        if e.dest_id != dest.dest_id or e.is_outlier:
            continue
        n += 1
        l = by_id[e.booked_listing_id]
        if float(km_distance(b.lat, b.lng, l.lat, l.lng)) < 15.0:
            n_b += 1
    expect = cfg.pan_discovery_rate * b.weight
    assert n > 500
    assert abs(n_b / n - expect) < 0.03


def test_byte_identical_reruns(tmp_path):
    d1 = tmp_path / "a"
    d2 = tmp_path / "b"
    for d in (d1, d2):
        world, train, ev = generate_dataset(SMALL)
        write_dataset(str(d), SMALL, world, train, ev)
    for name in sorted(os.listdir(d1)):
        b1 = (d1 / name).read_bytes()
        b2 = (d2 / name).read_bytes()
        assert b1 == b2, name


def test_round_trip_files(tmp_path, small_dataset):
    world, train, ev = small_dataset
    write_dataset(str(tmp_path), SMALL, world, train, ev)
    assert read_listings(tmp_path / "listings.tsv") == world.listings
    assert read_destinations(tmp_path / "destinations.tsv") == world.destinations
    assert read_events(tmp_path / "train_events.tsv") == train
    w2, t2, e2 = load_dataset(str(tmp_path))
    assert w2.listings == world.listings
    assert w2.destinations == world.destinations
    assert w2.gap == world.gap
    assert t2 == train and e2 == ev
    np.testing.assert_array_equal(w2.listing_cells, world.listing_cells)


def test_config_validation():
    with pytest.raises(ConfigError):
        GenConfig(n_destinations=2)
    with pytest.raises(ConfigError):
        GenConfig(n_destinations=10, n_listings=100)
    with pytest.raises(ConfigError):
        GenConfig(outlier_rate=0.7)
    with pytest.raises(ConfigError):
        GenConfig(pan_discovery_rate=1.5)
    with pytest.raises(ConfigError):
        GenConfig(continent_mix=(0, 0, 0))
