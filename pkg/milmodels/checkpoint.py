"""
Model checkpoints as ``.npz`` containers.

Layout: ``architecture`` (str), ``embed_dim``, ``attention_dim`` (int),
``classifier_hidden`` (int vector, possibly empty) and one float64 array per
parameter under ``param/<name>``. Arrays are stored verbatim, so a load after
a save reproduces every parameter bit for bit.
"""
from pathlib import Path

import numpy as np

from utils.errors import FormatError
from utils.logging_config import get_logger

from .models import MODEL_REGISTRY, BaseMILModel, build_model

log = get_logger(__name__)


def save_checkpoint(model: BaseMILModel, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {f"param/{name}": p.value for name, p in model.named_parameters().items()}
    with open(path, "wb") as fh:
        np.savez(
            fh,
            architecture=np.array(model.architecture),
            embed_dim=np.array(model.embed_dim),
            attention_dim=np.array(model.attention_dim),
            classifier_hidden=np.array(model.classifier_hidden, dtype=np.int64),
            **arrays,
        )
    log.info("Checkpoint %s written to %s", model.architecture, path)
    return path


def load_checkpoint(path: Path) -> BaseMILModel:
    try:
        with np.load(Path(path), allow_pickle=False) as data:
            architecture = str(data["architecture"])
            if architecture not in MODEL_REGISTRY:
                raise FormatError(f"{path}: unknown architecture '{architecture}'")
            model = build_model(
                architecture,
                int(data["embed_dim"]),
                int(data["attention_dim"]),
                tuple(int(w) for w in data["classifier_hidden"]),
            )
            for name, p in model.named_parameters().items():
                key = f"param/{name}"
                if key not in data.files:
                    raise FormatError(f"{path}: missing parameter {name}")
                p.assign(data[key])
    except (OSError, KeyError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"cannot read checkpoint {path}: {exc}") from exc
    return model
