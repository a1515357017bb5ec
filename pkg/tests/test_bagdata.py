import numpy as np
import pandas as pd
import pytest

from bagdata import (
    Bag,
    bag_label_oracle,
    balance_classes,
    generate_planted,
    generate_synthetic,
    kfold,
    labels_of,
    load_bags,
    save_bags,
    split_train_test,
)
from utils.errors import ConfigError, DataError, DegenerateDatasetError, EmptyBagError, FormatError


def test_bag_label_oracle():
    assert bag_label_oracle([0, 0, 0]) == 0
    assert bag_label_oracle([0, 1, 0]) == 1
    with pytest.raises(EmptyBagError):
        bag_label_oracle([])
    with pytest.raises(DataError):
        bag_label_oracle([0, 2])


def test_bag_rejects_contradicting_label():
    with pytest.raises(DataError):
        Bag(instances=np.zeros((2, 3)), label=1, instance_labels=[0, 0])
    flipped = Bag(instances=np.zeros((2, 3)), label=1, instance_labels=[0, 0], label_flipped=True)
    assert flipped.label == 1


def test_bag_originals_drop_augmented_rows():
    bag = Bag(instances=np.arange(12.0).reshape(6, 2), label=0,
              tile_coords=[(5, 0, 0)] * 3 + [(5, 1, 0)] * 3, aug_flags=[0, 1, 2, 0, 1, 2])
    orig = bag.originals()
    assert len(orig) == 2
    assert orig.tile_coords == [(5, 0, 0), (5, 1, 0)]
    np.testing.assert_array_equal(orig.instances, [[0.0, 1.0], [6.0, 7.0]])


def test_synthetic_bags_follow_the_mil_assumption():
    bags = generate_synthetic({"num_bags": 40, "n_range": (5, 9), "embed_dim": 4, "seed": 2})
    assert len(bags) == 40
    assert labels_of(bags).sum() == 20
    for bag in bags:
        assert 5 <= len(bag) <= 9
        assert bag.embed_dim == 4
        assert bag.label == bag_label_oracle(bag.instance_labels)


def test_synthetic_is_seeded():
    a = generate_synthetic({"num_bags": 10, "embed_dim": 3, "seed": 8})
    b = generate_synthetic({"num_bags": 10, "embed_dim": 3, "seed": 8})
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.instances, y.instances)


def test_label_noise_flips_and_marks_bags():
    bags = generate_synthetic({"num_bags": 10, "n_range": (3, 5), "embed_dim": 2, "label_noise": 1.0, "seed": 0})
    assert all(b.label_flipped for b in bags)
    assert all(b.label != bag_label_oracle(b.instance_labels) for b in bags)


def test_synthetic_config_errors_are_config_errors():
    with pytest.raises(ConfigError):
        generate_synthetic({"num_bags": 10, "n_range": (9, 3)})


def test_planted_positives_fill_one_square():
    bags = generate_planted({"num_bags": 6, "grid": 6, "region": 2, "embed_dim": 3, "seed": 1})
    for bag in bags:
        assert len(bag.tile_coords) == 36
        positives = [c for c, y in zip(bag.tile_coords, bag.instance_labels) if y]
        if bag.label == 0:
            assert positives == []
            continue
        cols = {c[1] for c in positives}
        rows = {c[2] for c in positives}
        assert len(positives) == 4
        assert max(cols) - min(cols) == 1 and max(rows) - min(rows) == 1


def test_split_is_stratified_disjoint_and_seeded(small_bags):
    split = split_train_test(small_bags, 0.2, seed=5, k=3)
    train_ids = {b.source_id for b in split.train}
    test_ids = {b.source_id for b in split.test}
    assert not train_ids & test_ids
    assert len(train_ids | test_ids) == len(small_bags)
    assert labels_of(split.test).sum() == 3
    assert len(split.test) == 6
    again = split_train_test(small_bags, 0.2, seed=5, k=3)
    assert [b.source_id for b in again.test] == [b.source_id for b in split.test]
    fit, val = split.fold_bags(0)
    assert len(fit) + len(val) == len(split.train)


def test_split_needs_enough_bags(small_bags):
    with pytest.raises(DegenerateDatasetError):
        split_train_test(small_bags[:4])
    with pytest.raises(ConfigError):
        split_train_test(small_bags, test_frac=1.0)


def test_kfold_partitions_with_balanced_classes(small_bags):
    folds = kfold(small_bags, k=4, seed=0)
    merged = np.sort(np.concatenate(folds))
    np.testing.assert_array_equal(merged, np.arange(len(small_bags)))
    labels = labels_of(small_bags)
    ratio = labels.mean()
    for fold in folds:
        assert abs(labels[fold].sum() - ratio * len(fold)) <= 1
    with pytest.raises(ConfigError):
        kfold(small_bags, k=1)
    with pytest.raises(ConfigError):
        kfold(small_bags[:3], k=4)


def test_balance_classes_downsamples_majority(small_bags):
    lopsided = [b for b in small_bags if b.label == 1][:4] + [b for b in small_bags if b.label == 0]
    balanced = balance_classes(lopsided, seed=0)
    assert labels_of(balanced).tolist().count(0) == 4
    assert labels_of(balanced).tolist().count(1) == 4


def test_bags_round_trip_through_store_and_manifest(tmp_path):
    bags = generate_planted({"num_bags": 4, "grid": 3, "region": 1, "embed_dim": 5, "seed": 0})
    manifest = save_bags(bags, tmp_path)
    loaded = load_bags(manifest)
    assert [b.source_id for b in loaded] == [b.source_id for b in bags]
    for a, b in zip(loaded, bags):
        assert a.label == b.label
        assert a.tile_coords == b.tile_coords
        np.testing.assert_array_equal(a.instances, b.instances)


def test_load_bags_without_augmentations(tmp_path):
    bag = Bag(instances=np.ones((3, 2)), label=1, source_id="s1", tile_coords=[(5, 0, 0)] * 3, aug_flags=[0, 1, 2])
    manifest = save_bags([bag], tmp_path)
    assert len(load_bags(manifest)[0]) == 3
    assert len(load_bags(manifest, include_augmented=False)[0]) == 1


def test_manifest_naming_an_unknown_bag(tmp_path):
    bags = generate_planted({"num_bags": 2, "grid": 2, "region": 1, "embed_dim": 2})
    manifest = save_bags(bags, tmp_path)
    df = pd.read_csv(manifest)
    df.loc[0, "source_id"] = "missing"
    df.to_csv(manifest, index=False)
    with pytest.raises(FormatError):
        load_bags(manifest)
