"""The 49 profile features computed from a normalized user record.

Column order is fixed by ``data/feature_order_v1.txt``; models record the
SHA-256 of that file so a matrix built with a different order is rejected.
"""
from __future__ import annotations

import csv
import hashlib
import math
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import InvalidAgeError, SchemaError, SchemaMismatchError
from .profiles import LabeledDataset, UserProfile, format_timestamp

SECONDS_PER_DAY = 86400.0
MIN_AGE_DAYS = 1.0 / SECONDS_PER_DAY
ENTROPY_BASE = 2
FEATURE_ORDER_VERSION = 1


def _read_order() -> tuple[str, tuple[str, ...]]:
    text = resources.files("samlp").joinpath(f"data/feature_order_v{FEATURE_ORDER_VERSION}.txt").read_text("utf-8")
    names = tuple(line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#"))
    return text, names


_ORDER_TEXT, FEATURE_NAMES = _read_order()
SCHEMA_HASH = hashlib.sha256(_ORDER_TEXT.encode("utf-8")).hexdigest()
N_FEATURES = len(FEATURE_NAMES)
assert N_FEATURES == 49

BOOLEAN_FEATURES = frozenset({"protected", "verified", "has_location", "has_profile_image", "has_profile_url"})


def schema_hash(names) -> str:
    """Hash of an arbitrary ordered name list, matching SCHEMA_HASH for the canonical order."""
    names = tuple(names)
    if names == FEATURE_NAMES:
        return SCHEMA_HASH
    return hashlib.sha256("\n".join(names).encode("utf-8")).hexdigest()


def account_age_days(created_at: datetime, collection_date: datetime) -> float:
    seconds = (collection_date - created_at).total_seconds()
    if seconds < 0:
        raise InvalidAgeError(f"collection date {collection_date} precedes creation {created_at}")
    return max(seconds / SECONDS_PER_DAY, MIN_AGE_DAYS)


def ratio_by_age(value: float, age_days: float) -> float:
    if not age_days > 0:
        raise InvalidAgeError(f"age must be positive, got {age_days}")
    return value / age_days


def jaccard_similarity(a: str, b: str) -> float:
    """Jaccard index of the character sets of two strings; two empty strings give 1."""
    sa, sb = set(a), set(b)
    union = sa | sb
    if not union:
        return 1.0
    return len(sa & sb) / len(union)


def shannon_entropy(text: str) -> float:
    """Base-2 entropy of the character frequency distribution of ``text``."""
    n = len(text)
    if n == 0:
        return 0.0
    h = -sum((c / n) * math.log2(c / n) for c in Counter(text).values())
    return max(h, 0.0)


def char_class(ch: str) -> str:
    cat = unicodedata.category(ch)
    if cat == "Lu":
        return "upper"
    if cat == "Ll":
        return "lower"
    if cat == "Nd":
        return "digits"
    return "special"


def char_class_stats(text: str) -> dict[str, float]:
    counts = Counter(char_class(ch) for ch in text)
    n = len(text)
    out: dict[str, float] = {}
    for cls in ("upper", "lower", "digits", "special"):
        out[f"{cls}_len"] = counts.get(cls, 0)
    for cls in ("upper", "lower", "digits", "special"):
        out[f"{cls}_pcnt"] = 100.0 * counts.get(cls, 0) / n if n else 0.0
    return out


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    schema: tuple[str, ...] = FEATURE_NAMES

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.schema, self.values.tolist()))


def extract_features(profile: UserProfile, collection_date: datetime) -> FeatureVector:
    age = account_age_days(profile.created_at, collection_date)
    f: dict[str, float] = {
        "name_len": len(profile.name),
        "screen_name_len": len(profile.screen_name),
        "description_len": len(profile.description),
        "listed": profile.listed_count,
        "statuses": profile.statuses_count,
        "followers": profile.followers_count,
        "following": profile.following_count,
        "description_urls": profile.description_entities.urls,
        "description_mentions": profile.description_entities.mentions,
        "description_hashtags": profile.description_entities.hashtags,
        "total_urls": profile.total_urls,
        "protected": float(profile.protected),
        "verified": float(profile.verified),
        "screen_name_sim": jaccard_similarity(profile.screen_name, profile.name),
        # 0/0 and x/0 are both mapped to 0 to keep the feature bounded
        "foll_friends": profile.followers_count / profile.following_count if profile.following_count else 0.0,
        "age": age,
        "listed_by_age": ratio_by_age(profile.listed_count, age),
        "statuses_by_age": ratio_by_age(profile.statuses_count, age),
        "followers_by_age": ratio_by_age(profile.followers_count, age),
        "following_by_age": ratio_by_age(profile.following_count, age),
        "name_entropy": shannon_entropy(profile.name),
        "screen_name_entropy": shannon_entropy(profile.screen_name),
        "has_location": float(profile.has_location),
        "has_profile_image": float(not profile.has_default_profile_image),
        "has_profile_url": float(profile.has_profile_url),
    }
    for prefix, text in (("name", profile.name), ("screen_name", profile.screen_name),
                         ("description", profile.description)):
        for key, value in char_class_stats(text).items():
            f[f"{prefix}_{key}"] = value
    values = np.array([f[name] for name in FEATURE_NAMES], dtype=np.float64)
    if not np.all(np.isfinite(values)):
        bad = [n for n, v in zip(FEATURE_NAMES, values) if not np.isfinite(v)]
        raise SchemaError(f"user {profile.user_id}: non-finite features {bad}")
    return FeatureVector(values)


@dataclass
class FeatureMatrix:
    X: np.ndarray
    y: np.ndarray
    user_ids: list[str]
    dataset_name: str = "dataset"
    schema: tuple[str, ...] = FEATURE_NAMES
    collection_date: str | None = None
    origin: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2 or self.X.shape[1] != len(self.schema):
            raise SchemaError(f"matrix has shape {self.X.shape}, schema has {len(self.schema)} columns")
        if len(self.y) != self.X.shape[0] or len(self.user_ids) != self.X.shape[0]:
            raise SchemaError("row count differs between features, labels and user ids")
        if not self.origin:
            self.origin = [self.dataset_name] * len(self.y)

    def __len__(self) -> int:
        return len(self.y)

    @property
    def schema_hash(self) -> str:
        return schema_hash(self.schema)

    def class_counts(self) -> dict[int, int]:
        return {0: int(np.sum(self.y == 0)), 1: int(np.sum(self.y == 1))}

    def subset(self, idx) -> "FeatureMatrix":
        idx = np.asarray(idx, dtype=np.int64)
        return FeatureMatrix(self.X[idx], self.y[idx], [self.user_ids[i] for i in idx], self.dataset_name,
                             self.schema, self.collection_date, [self.origin[i] for i in idx])


def build_matrix(dataset: LabeledDataset) -> FeatureMatrix:
    """Feature matrix with rows ordered by ``user_id``."""
    if len(dataset) == 0:
        raise SchemaError(f"{dataset.dataset_name}: empty dataset")
    order = sorted(range(len(dataset)), key=lambda i: dataset.profiles[i].user_id)
    rows, labels, ids = [], [], []
    for i in order:
        p = dataset.profiles[i]
        try:
            rows.append(extract_features(p, dataset.collection_date).values)
        except InvalidAgeError as exc:
            raise InvalidAgeError(f"user {p.user_id}: {exc}") from None
        labels.append(dataset.labels[i])
        ids.append(p.user_id)
    return FeatureMatrix(np.vstack(rows), np.array(labels), ids, dataset.dataset_name,
                         collection_date=format_timestamp(dataset.collection_date))


def concat_matrices(matrices: list[FeatureMatrix], name: str = "combined") -> FeatureMatrix:
    if not matrices:
        raise SchemaError("nothing to concatenate")
    schema = matrices[0].schema
    for m in matrices[1:]:
        if m.schema != schema:
            raise SchemaMismatchError(f"{m.dataset_name} has a different feature schema")
    origin = [o for m in matrices for o in m.origin]
    return FeatureMatrix(np.vstack([m.X for m in matrices]), np.concatenate([m.y for m in matrices]),
                         [u for m in matrices for u in m.user_ids], name, schema, None, origin)


def write_features_csv(matrix: FeatureMatrix, path: str | Path) -> None:
    """Write ``schema + label + user_id`` columns; floats use ``repr`` so they round-trip."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([*matrix.schema, "label", "user_id"])
        for row, label, uid in zip(matrix.X, matrix.y, matrix.user_ids):
            w.writerow([repr(float(v)) for v in row] + [int(label), uid])


def read_features_csv(path: str | Path, dataset_name: str | None = None) -> FeatureMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[-2:] != ["label", "user_id"]:
            raise SchemaError(f"{path}: expected trailing columns label,user_id")
        schema = tuple(header[:-2])
        if schema != FEATURE_NAMES:
            raise SchemaMismatchError(f"{path}: feature columns do not match the canonical order")
        rows, labels, ids = [], [], []
        for rec in reader:
            if not rec:
                continue
            rows.append([float(v) for v in rec[:-2]])
            labels.append(int(rec[-2]))
            ids.append(rec[-1])
    if not rows:
        raise SchemaError(f"{path}: no rows")
    return FeatureMatrix(np.array(rows), np.array(labels), ids, dataset_name or Path(path).stem, schema)
