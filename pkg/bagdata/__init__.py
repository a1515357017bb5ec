from .bags import Bag, bag_label_oracle, labels_of
from .manifest import bag_from_record, load_bags, save_bags
from .splits import DatasetSplit, balance_classes, kfold, split_train_test
from .synthetic import PlantedConfig, SyntheticConfig, generate_planted, generate_synthetic
