"""
Dataset manifests: ``source_id,label,store_path`` rows pointing at embedding
stores. One store may hold many slides; the manifest decides which of them
form the dataset and with which bag label.
"""
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np

from utils.errors import FormatError
from utils.logging_config import get_logger
from utils.metadata import BagRecord, read_records, write_records
from wsipipe.store import SlideEmbeddings, store_read, store_write

from .bags import Bag

log = get_logger(__name__)


def bag_from_record(record: SlideEmbeddings, label: int, include_augmented: bool = True) -> Bag:
    bag = Bag(
        instances=record.embeddings,
        label=label,
        source_id=record.slide_id,
        tile_coords=[tuple(c) for c in record.coords.tolist()],
        aug_flags=record.aug_flags,
    )
    return bag if include_augmented else bag.originals()


def load_bags(manifest: Path, include_augmented: bool = True) -> List[Bag]:
    """Bags listed in a dataset manifest, in manifest order."""
    rows = read_records(Path(manifest), BagRecord)
    stores: Dict[Path, Dict[str, SlideEmbeddings]] = {}
    bags = []
    for row in rows:
        if row.store_path not in stores:
            stores[row.store_path] = {r.slide_id: r for r in store_read(row.store_path)}
        record = stores[row.store_path].get(row.source_id)
        if record is None:
            raise FormatError(f"{manifest}: {row.source_id} not found in {row.store_path}")
        if record.label != row.label:
            log.warning("%s: manifest label %d overrides stored label %d", row.source_id, row.label, record.label)
        bags.append(bag_from_record(record, row.label, include_augmented))
    log.info("Loaded %d bags from %s", len(bags), manifest)
    return bags


def save_bags(bags: Sequence[Bag], out_dir: Path, store_name: str = "bags.mile") -> Path:
    """Write feature-space bags as one store plus ``bags.csv``; returns the manifest path."""
    out_dir = Path(out_dir)
    records = []
    for bag in bags:
        coords = bag.tile_coords or [(0, i, 0) for i in range(len(bag))]
        records.append(SlideEmbeddings.build(bag.source_id, bag.label, bag.instances,
                                             np.asarray(coords), bag.aug_flags))
    store_write(records, out_dir / store_name)
    manifest = write_records(
        [BagRecord(source_id=b.source_id, label=b.label, store_path=Path(store_name)) for b in bags],
        out_dir / "bags.csv",
    )
    log.info("Wrote %d bags to %s", len(bags), manifest)
    return manifest
