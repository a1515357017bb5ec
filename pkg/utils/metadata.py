"""
Row records of the two plain-text manifests.

``SlideRecord`` is one row of the slide manifest (``slide_id,label,path,mpp``)
that drives preprocessing; ``BagRecord`` is one row of the dataset manifest
(``source_id,label,store_path``) that drives training. Both are validated
through pydantic so that a malformed CSV fails on the offending row.
"""
from pathlib import Path
from typing import Iterable, List, Type, TypeVar

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, constr

from utils.errors import FormatError

RecordT = TypeVar("RecordT", bound=BaseModel)


class SlideRecord(BaseModel):
    model_config = ConfigDict(from_attributes=True)

    slide_id: constr(min_length=1)
    label: int = Field(ge=0, le=1)
    path: Path
    mpp: float = Field(gt=0)


class BagRecord(BaseModel):
    model_config = ConfigDict(from_attributes=True)

    source_id: constr(min_length=1)
    label: int = Field(ge=0, le=1)
    store_path: Path


def write_records(records: Iterable[BaseModel], path: Path) -> Path:
    rows = [r.model_dump(mode="json") for r in records]
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows).to_csv(path, index=False)
    return path


def read_records(path: Path, model: Type[RecordT]) -> List[RecordT]:
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise FormatError(f"cannot read manifest {path}: {exc}") from exc
    missing = set(model.model_fields) - set(df.columns)
    if missing:
        raise FormatError(f"{path}: missing columns {sorted(missing)}")
    records = []
    for i, row in enumerate(df.to_dict(orient="records")):
        try:
            rec = model(**{k: row[k] for k in model.model_fields})
        except ValidationError as exc:
            raise FormatError(f"{path}: row {i + 1}: {exc}") from exc
        # relative paths resolve against the manifest's directory
        for name, value in rec.model_dump().items():
            if isinstance(value, Path) and not value.is_absolute():
                setattr(rec, name, path.parent / value)
        records.append(rec)
    return records
