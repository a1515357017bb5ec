import itertools
from fractions import Fraction

import numpy as np
import pytest

from utils.errors import ConfigError, EmptyBagError, EmptyMaskError, FormatError, InputError, RangeError, SizeError
from wsipipe import (
    AugmentParams,
    HandcraftedExtractor,
    SlideEmbeddings,
    SlideMeta,
    TileRef,
    TissueMask,
    apply_augmentation,
    augment,
    build_extractor,
    child_tiles,
    cluster_sample,
    color_artifact_filter,
    extract_features,
    histogram,
    import_embeddings,
    kmeans,
    luma,
    morph_close,
    otsu_threshold,
    pad_tile,
    sample_level5,
    store_read,
    store_write,
    thumb_to_tile,
    thumb_to_tiles,
    tile_footprint,
    tissue_fraction_gate,
)
from wsipipe.features import resolve_extractor


# -- masking ------------------------------------------------------------------

def _otsu_oracle(hist):
    total = sum(hist)
    mean_all = Fraction(sum(i * c for i, c in enumerate(hist)), total)
    best_t, best = 0, Fraction(0)
    w0 = s0 = 0
    for t in range(256):
        w0 += hist[t]
        s0 += t * hist[t]
        w1 = total - w0
        if w0 == 0 or w1 == 0:
            continue
        mu0 = Fraction(s0, w0)
        mu1 = (mean_all * total - s0) / w1
        var = Fraction(w0 * w1, total * total) * (mu0 - mu1) ** 2
        if var > best:
            best_t, best = t, var
    return best_t


def test_otsu_degenerate_and_tied_histograms():
    hist = np.zeros(256, dtype=int)
    hist[77] = 500
    assert otsu_threshold(hist) == 0
    hist = np.zeros(256, dtype=int)
    hist[10] = hist[200] = 50
    assert otsu_threshold(hist) == 10


def test_otsu_rejects_bad_histograms():
    with pytest.raises(InputError):
        otsu_threshold(np.zeros(256, dtype=int))
    with pytest.raises(InputError):
        otsu_threshold(np.ones(128, dtype=int))


def test_otsu_matches_exhaustive_search():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        lo = rng.normal(rng.uniform(20, 120), rng.uniform(3, 25), size=int(rng.integers(1, 60)))
        hi = rng.normal(rng.uniform(140, 240), rng.uniform(3, 25), size=int(rng.integers(1, 60)))
        values = np.clip(np.rint(np.r_[lo, hi]), 0, 255).astype(np.uint8)
        hist = histogram(values).tolist()
        assert otsu_threshold(hist) == _otsu_oracle(hist)


def test_luma_is_integer_weighted():
    rgb = np.array([[[255, 255, 255], [255, 0, 0], [0, 0, 0]]], dtype=np.uint8)
    assert luma(rgb).tolist() == [[255, 76, 0]]


def test_morph_close_examples():
    empty = TissueMask.from_bits(np.zeros((6, 6), dtype=bool))
    assert morph_close(empty).count == 0
    block = np.zeros((7, 7), dtype=bool)
    block[2:5, 2:5] = True
    block[3, 3] = False
    assert morph_close(TissueMask.from_bits(block)).bits[3, 3]


def test_morph_close_is_extensive_and_idempotent():
    rng = np.random.default_rng(3)
    for _ in range(50):
        m = TissueMask.from_bits(rng.random((int(rng.integers(3, 20)), int(rng.integers(3, 20)))) < 0.4)
        once = morph_close(m)
        assert np.all(once.bits[m.bits])
        np.testing.assert_array_equal(morph_close(once).bits, once.bits)


def test_color_filter_removes_annotation_pixels():
    rgb = np.full((1, 11, 3), 128, dtype=np.uint8)
    rgb[0, 10] = (0, 255, 0)
    mask = TissueMask.from_bits(np.ones((1, 11), dtype=bool))
    mean = rgb[0].astype(float).mean(axis=0)
    d = np.linalg.norm(rgb[0, 10] - mean) / 2
    kept = color_artifact_filter(mask, rgb, d)
    assert kept.bits[0, :10].all()
    assert not kept.bits[0, 10]


def test_color_filter_edge_cases():
    rgb = np.full((2, 2, 3), 90, dtype=np.uint8)
    mask = TissueMask.from_bits(np.ones((2, 2), dtype=bool))
    assert color_artifact_filter(mask, rgb, 0.0).count == 4
    with pytest.raises(EmptyMaskError):
        color_artifact_filter(TissueMask.from_bits(np.zeros((2, 2), dtype=bool)), rgb, 10.0)


# -- tiling -------------------------------------------------------------------

def test_slide_meta_checks_the_pyramid():
    meta = SlideMeta("s", 1, 0.5, [(1024, 1024), (512, 512), (256, 256), (128, 128), (64, 64), (32, 32)],
                     ["20x", "10x", "5x", "thumb", "thumb", "thumb"])
    assert meta.thumbnail_index == 4
    assert meta.dims_of("10x") == (512, 512)
    with pytest.raises(InputError):
        SlideMeta("s", 0, 0.5, [(1024, 1024), (300, 300)])
    with pytest.raises(InputError):
        SlideMeta("s", 0, 0.5, [(64, 64)], ["thumb"]).level_index("5x")


def test_thumb_to_tiles_examples():
    assert thumb_to_tile(0, 0, (100, 100), (1600, 1600), "5x").coord == (5, 0, 0)
    assert thumb_to_tile(50, 50, (100, 100), (1600, 1600), "5x").coord == (5, 1, 1)
    tiles = thumb_to_tiles([(1, 1), (2, 2)], (100, 100), (1600, 1600), "5x")
    assert len(tiles) == 1
    with pytest.raises(RangeError):
        thumb_to_tiles([(100, 0)], (100, 100), (1600, 1600), "5x")


def test_footprints_partition_the_thumbnail():
    thumb, level, ts = (37, 23), (1000, 700), 128
    covered = np.zeros((23, 37), dtype=int)
    for col in range(8):
        for row in range(6):
            x0, y0, x1, y1 = tile_footprint(col, row, thumb, level, ts)
            covered[y0:y1, x0:x1] += 1
            for x in range(x0, x1):
                for y in range(y0, y1):
                    tile = thumb_to_tile(x, y, thumb, level, "5x", ts)
                    assert (tile.col, tile.row) == (col, row)
    assert np.all(covered == 1)


def test_tile_centres_land_next_to_tissue():
    rng = np.random.default_rng(1)
    pixels = rng.integers(0, 64, size=(40, 2))
    for tile in thumb_to_tiles(pixels, (64, 64), (256, 256), "5x", tile_size=8):
        cx = (tile.col * 8 + 4) * 64 / 256
        cy = (tile.row * 8 + 4) * 64 / 256
        assert np.min(np.max(np.abs(pixels - [cx, cy]), axis=1)) <= 1


def test_child_tiles():
    parent = TileRef.at("5x", 0, 0, (2048, 2048))
    assert sorted(c.coord for c in child_tiles(parent, (4096, 4096), "10x")) == [
        (10, 0, 0), (10, 0, 1), (10, 1, 0), (10, 1, 1)]
    parent = TileRef.at("5x", 3, 5, (2048, 4096))
    assert sorted((c.col, c.row) for c in child_tiles(parent, (4096, 8192), "10x")) == [
        (6, 10), (6, 11), (7, 10), (7, 11)]
    edge = TileRef.at("5x", 2, 0, (1280, 256))
    assert [(c.col, c.row) for c in child_tiles(edge, (2560, 512), "10x")] == [(4, 0)]


def test_pad_tile():
    full = np.zeros((512, 512, 3), dtype=np.uint8)
    np.testing.assert_array_equal(pad_tile(full), full)
    narrow = np.zeros((512, 300, 3), dtype=np.uint8)
    padded = pad_tile(narrow, background=(240, 230, 220))
    assert padded.shape == (512, 512, 3)
    assert np.all(padded[:, 300:] == [240, 230, 220])
    assert np.all(padded[:, :300] == 0)
    one = pad_tile(np.zeros((1, 1, 3), dtype=np.uint8))
    assert (one.sum(axis=2) == 0).sum() == 1
    with pytest.raises(SizeError):
        pad_tile(np.zeros((513, 10, 3), dtype=np.uint8))


def test_tissue_fraction_gate():
    background = np.full((16, 16, 3), 250, dtype=np.uint8)
    tissue = np.full((16, 16, 3), 100, dtype=np.uint8)
    assert not tissue_fraction_gate(background, 200, 0.01)
    assert tissue_fraction_gate(tissue, 200, 1.0)
    assert tissue_fraction_gate(background, 200, 0.0)


# -- sampling -----------------------------------------------------------------

def _grid_tiles(n, level="5x"):
    return [TileRef.at(level, i % 40, i // 40, (40 * 512, 40 * 512)) for i in range(n)]


def test_sample_level5():
    tiles = _grid_tiles(100)
    assert sample_level5(tiles, limit=100) == sorted(tiles)
    picked = sample_level5(tiles, frac=0.6, limit=50, seed=3)
    assert len(picked) == 60
    assert len(set(picked)) == 60
    assert picked == sample_level5(tiles, frac=0.6, limit=50, seed=3)
    with pytest.raises(RangeError):
        sample_level5(tiles, frac=0.0)


def _wcss(points, labels):
    return sum(((points[labels == j] - points[labels == j].mean(axis=0)) ** 2).sum()
               for j in np.unique(labels))


def test_kmeans_trivial_cases(rng):
    pts = rng.standard_normal((5, 2))
    res = kmeans(pts, 5, seed=0)
    assert res.wcss(pts) == pytest.approx(0.0, abs=1e-12)
    one = kmeans(pts, 1, seed=0)
    np.testing.assert_allclose(one.centroids[0], pts.mean(axis=0), atol=1e-12)
    with pytest.raises(ConfigError):
        kmeans(pts, 6)


def test_kmeans_groups_separated_pairs():
    pts = np.array([[0.0, 0.0], [0.1, 0.0], [10.0, 10.0], [10.0, 10.1]])
    labels = kmeans(pts, 2, seed=0).assignments
    assert labels[0] == labels[1] != labels[2] == labels[3]


def test_kmeans_reaches_the_exhaustive_optimum():
    rng = np.random.default_rng(7)
    hits, trials = 0, 100
    for trial in range(trials):
        n = int(rng.integers(3, 9))
        shift = rng.uniform(1.0, 3.0)
        pts = rng.standard_normal((n, 2)) + np.where(np.arange(n)[:, None] % 2 == 0, shift, -shift)
        best = min(_wcss(pts, np.array(bits)) for bits in itertools.product([0, 1], repeat=n)
                   if 0 < sum(bits) < n)
        res = kmeans(pts, 2, seed=trial)
        if abs(res.wcss(pts) - best) < 1e-9:
            hits += 1
        else:
            # still a Lloyd fixpoint
            d = ((pts[:, None, :] - res.centroids[None]) ** 2).sum(axis=2)
            assert np.all(d[np.arange(n), res.assignments] <= d.min(axis=1) + 1e-12)
            for j in range(2):
                np.testing.assert_allclose(res.centroids[j], pts[res.assignments == j].mean(axis=0), atol=1e-12)
    assert hits >= 95


def test_kmeans_restarts_never_do_worse(rng):
    for seed in range(20):
        pts = rng.standard_normal((30, 3))
        single = kmeans(pts, 4, seed=seed, n_init=1)
        several = kmeans(pts, 4, seed=seed, n_init=10)
        assert several.wcss(pts) <= single.wcss(pts) + 1e-12
        assert several.converged
    with pytest.raises(ConfigError):
        kmeans(pts, 2, n_init=0)


def test_kmeans_handles_duplicate_points():
    pts = np.array([[1.0, 1.0]] * 4 + [[5.0, 5.0]])
    res = kmeans(pts, 3, seed=0)
    assert res.wcss(pts) == pytest.approx(0.0, abs=1e-12)


def test_cluster_sample_caps_each_cluster():
    tiles = _grid_tiles(105)
    labels = np.r_[np.zeros(5, dtype=int), np.ones(100, dtype=int)]
    sample = cluster_sample(tiles, labels, n_per_cluster=20, seed=1)
    assert len(sample.selected) == 25
    assert set(tiles[:5]) <= set(sample.selected)
    assert sample.selected == cluster_sample(tiles, labels, n_per_cluster=20, seed=1).selected
    assert sample.children == []


def test_cluster_sample_descends_to_children():
    tiles = _grid_tiles(4)
    sample = cluster_sample(tiles, [0, 0, 1, 1], n_per_cluster=20, child_dims=(80 * 512, 80 * 512),
                            child_level="10x")
    assert len(sample.children) == 16
    assert all(c.level == "10x" for c in sample.children)


# -- augmentation -------------------------------------------------------------

def test_identity_augmentation():
    tile = np.random.default_rng(0).integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
    np.testing.assert_array_equal(apply_augmentation(tile, AugmentParams()), tile)


def test_four_quarter_turns_are_identity():
    tile = np.random.default_rng(1).integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
    out = tile
    for _ in range(4):
        out = apply_augmentation(out, AugmentParams(rotation=1))
    np.testing.assert_array_equal(out, tile)


def test_augment_is_seeded():
    tile = np.random.default_rng(2).integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
    a = augment(tile, seed=9)
    b = augment(tile, seed=9)
    assert len(a) == 2
    for x, y in zip(a, b):
        assert x.shape == tile.shape and x.dtype == np.uint8
        np.testing.assert_array_equal(x, y)


def test_hed_perturbation_changes_colours():
    tile = np.full((8, 8, 3), (200, 120, 180), dtype=np.uint8)
    out = apply_augmentation(tile, AugmentParams(hed_scale=(0.3, -0.3, 0.0)))
    assert not np.array_equal(out, tile)


# -- features -----------------------------------------------------------------

def test_handcrafted_features():
    tile = np.random.default_rng(4).integers(0, 256, size=(512, 512, 3), dtype=np.uint8)
    v = extract_features(tile)
    assert v.shape == (1024,)
    np.testing.assert_array_equal(v, extract_features(tile))
    other = tile.copy()
    other[100, 100, 0] ^= 0xFF
    assert not np.array_equal(v, extract_features(other))
    with pytest.raises(SizeError):
        extract_features(tile[:256])


def test_histogram_bins_bright_pixels():
    ext = HandcraftedExtractor(tile_size=32, embed_dim=16)
    desc = ext.descriptor(np.full((32, 32, 3), 200, dtype=np.uint8))
    bin_of_200 = 200 * ext.hist_bins // 256
    for c in range(3):
        hist = desc[c * ext.hist_bins:(c + 1) * ext.hist_bins]
        assert hist[bin_of_200] == pytest.approx(1.0)
        assert hist.sum() == pytest.approx(1.0)
    white = ext.descriptor(np.full((32, 32, 3), 255, dtype=np.uint8))
    assert white[ext.hist_bins - 1] == pytest.approx(1.0)


def test_extractor_resolution():
    assert resolve_extractor("handcrafted") is HandcraftedExtractor
    assert resolve_extractor("wsipipe.features:HandcraftedExtractor") is HandcraftedExtractor
    with pytest.raises(ConfigError):
        resolve_extractor("resnet")
    with pytest.raises(ConfigError):
        resolve_extractor("collections:OrderedDict")
    with pytest.raises(ConfigError):
        resolve_extractor("no_such_module:Thing")
    small = build_extractor("handcrafted", tile_size=32, embed_dim=16)
    assert small.extract(np.zeros((32, 32, 3), dtype=np.uint8)).shape == (16,)
    with pytest.raises(ConfigError):
        HandcraftedExtractor(tile_size=30)


# -- store --------------------------------------------------------------------

def _record(rng, slide_id, t, dim=1024):
    return SlideEmbeddings.build(slide_id, int(rng.integers(2)), rng.standard_normal((t, dim)),
                                 rng.integers(0, 50, size=(t, 3)), rng.integers(0, 3, size=t))


def test_store_round_trip_is_bit_exact(tmp_path, rng):
    records = [_record(rng, f"slide-{i}", int(rng.integers(1, 20)), dim=32) for i in range(4)]
    path = store_write(records, tmp_path / "e.mile")
    back = store_read(path)
    assert [r.slide_id for r in back] == [r.slide_id for r in records]
    for a, b in zip(back, records):
        assert a.label == b.label
        assert a.embeddings.tobytes() == b.embeddings.tobytes()
        np.testing.assert_array_equal(a.coords, b.coords)
        np.testing.assert_array_equal(a.aug_flags, b.aug_flags)


def test_store_rejects_bad_records(tmp_path):
    with pytest.raises(EmptyBagError):
        SlideEmbeddings.build("s", 0, np.zeros((0, 4)), np.zeros((0, 3)))
    with pytest.raises(FormatError):
        SlideEmbeddings.build("s", 0, np.zeros((3, 4)), np.zeros((2, 3)))


def test_store_detects_version_and_truncation(tmp_path, rng):
    path = store_write([_record(rng, "s", 3, dim=8)], tmp_path / "e.mile")
    data = bytearray(path.read_bytes())
    bad_version = tmp_path / "v.mile"
    data_v = bytearray(data)
    data_v[4] = 99
    bad_version.write_bytes(bytes(data_v))
    with pytest.raises(FormatError):
        store_read(bad_version)
    truncated = tmp_path / "t.mile"
    truncated.write_bytes(bytes(data[:-5]))
    with pytest.raises(FormatError):
        store_read(truncated)


def test_store_rejects_undecodable_slide_id(tmp_path, rng):
    path = store_write([_record(rng, "s", 3, dim=8)], tmp_path / "e.mile")
    data = bytearray(path.read_bytes())
    # header (13) + block length (4) + id length (2)
    assert data[19] == ord("s")
    data[19] = 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(FormatError):
        store_read(path)


def test_store_rejects_oversized_slide_id(tmp_path, rng):
    rec = _record(rng, "x" * 70_000, 2, dim=8)
    with pytest.raises(FormatError):
        store_write([rec], tmp_path / "e.mile")
    assert not (tmp_path / "e.mile").exists()


def test_store_is_far_smaller_than_raw_tiles(tmp_path, rng):
    records = [_record(rng, f"s{i}", 50) for i in range(4)]
    path = store_write(records, tmp_path / "e.mile")
    raw = 4 * 50 * 512 * 512 * 3
    assert raw / path.stat().st_size >= 90


def test_import_embeddings(tmp_path, rng):
    path = import_embeddings(tmp_path / "ext.mile", "ext-1", 1, rng.standard_normal((5, 1024)),
                             [(5, i, 0) for i in range(5)])
    (rec,) = store_read(path)
    assert rec.slide_id == "ext-1" and rec.tile_count == 5
    assert rec.aug_flags.tolist() == [0] * 5
