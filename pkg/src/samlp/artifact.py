"""Serialized model bundle (``.samlp``): gzip-compressed JSON.

The gzip header carries no timestamp or file name, so identical artifacts are
byte-identical on disk.
"""
from __future__ import annotations

import gzip
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import SchemaMismatchError
from .features import FEATURE_NAMES, SCHEMA_HASH
from .lasso import SelectionResult
from .models import TrainedClassifier

ARTIFACT_FORMAT = 1
ARTIFACT_SUFFIX = ".samlp"


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def write_gz(path: str | Path, text: str) -> None:
    with open(path, "wb") as raw:
        with gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0) as gz:
            gz.write(text.encode("utf-8"))


@dataclass
class ModelArtifact:
    classifier: TrainedClassifier
    selection: SelectionResult
    threshold: float
    master_seed: int
    feature_names: tuple[str, ...] = FEATURE_NAMES
    schema_hash: str = SCHEMA_HASH
    metadata: dict = field(default_factory=dict)

    @property
    def selected_idx(self) -> list[int]:
        return self.selection.selected_idx

    @property
    def selected_features(self) -> list[str]:
        return self.selection.selected_features

    def check_schema(self, schema_hash: str) -> None:
        if schema_hash != self.schema_hash:
            raise SchemaMismatchError(
                f"data schema {schema_hash[:12]} does not match artifact schema {self.schema_hash[:12]}")

    def scores(self, X) -> np.ndarray:
        """Scores for rows carrying the full feature schema."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise SchemaMismatchError(f"expected {len(self.feature_names)} feature columns, got {X.shape}")
        return self.classifier.predict_scores(X[:, self.selected_idx])

    def predict(self, X) -> np.ndarray:
        return (self.scores(X) >= self.threshold).astype(np.int64)

    def to_dict(self) -> dict:
        return {
            "format": ARTIFACT_FORMAT,
            "feature_names": list(self.feature_names),
            "schema_hash": self.schema_hash,
            "selection": self.selection.to_dict(),
            "classifier": self.classifier.to_dict(),
            "threshold": self.threshold,
            "master_seed": self.master_seed,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelArtifact":
        if d.get("format") != ARTIFACT_FORMAT:
            raise SchemaMismatchError(f"unsupported artifact format {d.get('format')!r}")
        return cls(
            classifier=TrainedClassifier.from_dict(d["classifier"]),
            selection=SelectionResult.from_dict(d["selection"]),
            threshold=d["threshold"],
            master_seed=d["master_seed"],
            feature_names=tuple(d["feature_names"]),
            schema_hash=d["schema_hash"],
            metadata=d.get("metadata", {}),
        )

    def dumps(self) -> str:
        return dumps(self.to_dict())

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode("utf-8")).hexdigest()

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        write_gz(path, self.dumps())
        return path

    @classmethod
    def load(cls, path: str | Path) -> "ModelArtifact":
        try:
            with gzip.open(path, "rt", encoding="utf-8") as fh:
                data = json.load(fh)
        except FileNotFoundError:
            raise
        except (OSError, EOFError, json.JSONDecodeError) as exc:
            raise SchemaMismatchError(f"{path} is not a readable artifact: {exc}") from None
        return cls.from_dict(data)
