"""
CSV ingestion and export for datasets

Format: a header row, feature columns f1..fd, then a final `label` column in {0, 1};
comma separator, decimal point, UTF-8. Floats are written with 17 significant digits
and read back with round-trip parsing, so write-then-read is lossless.
"""

import os
from typing import List

import numpy as np
import pandas as pd

from backend.errors import InputError
from backend.knn import Dataset

LABEL_COLUMN = "label"


def feature_columns(dimension: int) -> List[str]:
    return [f"f{j}" for j in range(1, dimension + 1)]


def read_dataset_csv(path: str) -> Dataset:
    if not os.path.exists(path):
        raise InputError(f"input file not found: {path}")
    try:
        df = pd.read_csv(path, encoding="utf-8", float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise InputError(f"could not parse {path}: {e}") from e

    if LABEL_COLUMN not in df.columns:
        raise InputError(f"{path}: missing '{LABEL_COLUMN}' column")
    if df.columns[-1] != LABEL_COLUMN:
        raise InputError(f"{path}: '{LABEL_COLUMN}' must be the last column")
    expected = feature_columns(len(df.columns) - 1)
    if list(df.columns[:-1]) != expected:
        raise InputError(f"{path}: feature columns must be {expected}, got {list(df.columns[:-1])}")
    if df.isna().any().any():
        raise InputError(f"{path}: empty cells")

    try:
        features = df[expected].to_numpy(dtype=float)
    except ValueError as e:
        raise InputError(f"{path}: non-numeric feature value ({e})") from e
    labels = df[LABEL_COLUMN].to_numpy()
    if not np.all(np.isin(labels, (0, 1))):
        raise InputError(f"{path}: labels must be 0 or 1")
    return Dataset(features, labels.astype(int))


def write_dataset_csv(dataset: Dataset, path: str) -> None:
    columns = feature_columns(dataset.dimension)
    df = pd.DataFrame(dataset.features, columns=columns)
    df[LABEL_COLUMN] = dataset.labels.astype(int)
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    df.to_csv(path, index=False, encoding="utf-8", float_format="%.17g")
