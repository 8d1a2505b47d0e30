"""Parsing of Twitter user objects (API v1.1 and v2) into one normalized record.

Only previously collected user objects are handled; nothing here talks to the
network.
"""
from __future__ import annotations

import csv
import json
import logging
import re
from collections import Counter
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from .errors import DuplicateLabelError, EmptyDatasetError, LabelError, ParseError, SchemaError

log = logging.getLogger(__name__)

V1_TIME_FORMAT = "%a %b %d %H:%M:%S %z %Y"
DEFAULT_IMAGE_MARKER = "default_profile"
_URL_RE = re.compile(r"https?://", re.IGNORECASE)
_LABELS = {"human": 0, "0": 0, "bot": 1, "1": 1}


@dataclass(frozen=True)
class DescriptionEntities:
    urls: int = 0
    mentions: int = 0
    hashtags: int = 0


@dataclass(frozen=True)
class UserProfile:
    user_id: str
    screen_name: str
    created_at: datetime
    name: str = ""
    description: str = ""
    followers_count: int = 0
    following_count: int = 0
    statuses_count: int = 0
    listed_count: int = 0
    protected: bool = False
    verified: bool = False
    has_location: bool = False
    has_profile_url: bool = False
    has_default_profile_image: bool = False
    description_entities: DescriptionEntities = field(default_factory=DescriptionEntities)

    def __post_init__(self):
        for name in ("followers_count", "following_count", "statuses_count", "listed_count"):
            if getattr(self, name) < 0:
                raise SchemaError(f"user {self.user_id}: {name} is negative")
        ents = self.description_entities
        if min(ents.urls, ents.mentions, ents.hashtags) < 0:
            raise SchemaError(f"user {self.user_id}: negative entity count")
        if self.created_at.tzinfo is None:
            raise SchemaError(f"user {self.user_id}: created_at must be timezone-aware")

    @property
    def total_urls(self) -> int:
        return int(self.has_profile_url) + self.description_entities.urls

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["created_at"] = format_timestamp(self.created_at)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "UserProfile":
        d = dict(d)
        d["created_at"] = parse_timestamp(d["created_at"])
        d["description_entities"] = DescriptionEntities(**d.get("description_entities", {}))
        return cls(**d)


@dataclass
class LoadStats:
    n_records: int = 0
    n_labels: int = 0
    dropped_unlabeled: int = 0
    unmatched_labels: int = 0
    versions: dict[str, int] = field(default_factory=dict)
    missing_fields: dict[str, int] = field(default_factory=dict)


@dataclass
class LabeledDataset:
    profiles: list[UserProfile]
    labels: list[int]
    collection_date: datetime
    dataset_name: str = "dataset"
    stats: LoadStats = field(default_factory=LoadStats)

    def __post_init__(self):
        if len(self.profiles) != len(self.labels):
            raise SchemaError("profiles and labels differ in length")
        ids = [p.user_id for p in self.profiles]
        if len(set(ids)) != len(ids):
            raise SchemaError(f"{self.dataset_name}: duplicate user_id")

    def __len__(self) -> int:
        return len(self.profiles)

    def class_counts(self) -> dict[int, int]:
        c = Counter(self.labels)
        return {0: c.get(0, 0), 1: c.get(1, 0)}


def format_timestamp(ts: datetime) -> str:
    ts = ts.astimezone(timezone.utc)
    spec = "microseconds" if ts.microsecond else "seconds"
    return ts.isoformat(timespec=spec).replace("+00:00", "Z")


def parse_timestamp(value: Any) -> datetime:
    """Parse a v1.1 (``Wed Oct 10 20:19:24 +0000 2018``) or ISO-8601 timestamp to aware UTC."""
    if isinstance(value, datetime):
        ts = value
    elif isinstance(value, str):
        text = value.strip()
        try:
            ts = datetime.strptime(text, V1_TIME_FORMAT)
        except ValueError:
            try:
                ts = datetime.fromisoformat(text.replace("Z", "+00:00"))
            except ValueError:
                raise SchemaError(f"unparseable timestamp {value!r}") from None
    else:
        raise SchemaError(f"unparseable timestamp {value!r}")
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def _load_object(json_text: str | dict) -> dict:
    if isinstance(json_text, dict):
        return json_text
    try:
        obj = json.loads(json_text)
    except (json.JSONDecodeError, TypeError) as exc:
        raise ParseError(f"malformed JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ParseError("user object must be a JSON object")
    return obj


def _count(obj: dict, key: str, missing: list[str]) -> int:
    value = obj.get(key)
    if value is None:
        missing.append(key)
        return 0
    try:
        n = int(value)
    except (TypeError, ValueError):
        raise SchemaError(f"{key} is not an integer: {value!r}") from None
    if n < 0:
        raise SchemaError(f"{key} is negative: {n}")
    return n


def _flag(obj: dict, key: str, missing: list[str]) -> bool:
    if obj.get(key) is None:
        missing.append(key)
        return False
    return bool(obj[key])


def _text(obj: dict, key: str) -> str:
    value = obj.get(key)
    return "" if value is None else str(value)


def _entities(desc_entities: dict | None, description: str, mention_key: str) -> DescriptionEntities:
    if not isinstance(desc_entities, dict):
        # no entity block at all: fall back to scanning the text for links
        return DescriptionEntities(urls=len(_URL_RE.findall(description)))
    return DescriptionEntities(
        urls=len(desc_entities.get("urls") or []),
        mentions=len(desc_entities.get(mention_key) or []),
        hashtags=len(desc_entities.get("hashtags") or []),
    )


def _identity(obj: dict, name_key: str) -> tuple[str, str]:
    uid = obj.get("id_str") or obj.get("id")
    if uid is None or uid == "":
        raise SchemaError("user object has no id")
    screen_name = obj.get(name_key)
    if not screen_name:
        raise SchemaError(f"user {uid} has no {name_key}")
    return str(uid), str(screen_name)


def _check_created(uid: str, created_at: Any, collection_date: datetime | None) -> datetime:
    if created_at is None:
        raise SchemaError(f"user {uid} has no created_at")
    ts = parse_timestamp(created_at)
    if collection_date is not None and ts > collection_date:
        raise SchemaError(f"user {uid} created_at {format_timestamp(ts)} is after the collection date")
    return ts


def _v1(obj: dict, collection_date: datetime | None) -> tuple[UserProfile, list[str]]:
    missing: list[str] = []
    uid, screen_name = _identity(obj, "screen_name")
    description = _text(obj, "description")
    ents = (obj.get("entities") or {}).get("description")
    profile = UserProfile(
        user_id=uid,
        screen_name=screen_name,
        created_at=_check_created(uid, obj.get("created_at"), collection_date),
        name=_text(obj, "name"),
        description=description,
        followers_count=_count(obj, "followers_count", missing),
        following_count=_count(obj, "friends_count", missing),
        statuses_count=_count(obj, "statuses_count", missing),
        listed_count=_count(obj, "listed_count", missing),
        protected=_flag(obj, "protected", missing),
        verified=_flag(obj, "verified", missing),
        has_location=bool(_text(obj, "location").strip()),
        has_profile_url=bool(obj.get("url")),
        has_default_profile_image=bool(obj.get("default_profile_image", False)),
        description_entities=_entities(ents, description, "user_mentions"),
    )
    return profile, missing


def _v2(obj: dict, collection_date: datetime | None) -> tuple[UserProfile, list[str]]:
    missing: list[str] = []
    uid, screen_name = _identity(obj, "username")
    description = _text(obj, "description")
    metrics = obj.get("public_metrics")
    if not isinstance(metrics, dict):
        missing.append("public_metrics")
        metrics = {}
    entities = obj.get("entities") or {}
    url_block = entities.get("url")
    has_url = bool(url_block and url_block.get("urls")) or bool(obj.get("url"))
    profile = UserProfile(
        user_id=uid,
        screen_name=screen_name,
        created_at=_check_created(uid, obj.get("created_at"), collection_date),
        name=_text(obj, "name"),
        description=description,
        followers_count=_count(metrics, "followers_count", missing),
        following_count=_count(metrics, "following_count", missing),
        statuses_count=_count(metrics, "tweet_count", missing),
        listed_count=_count(metrics, "listed_count", missing),
        protected=_flag(obj, "protected", missing),
        verified=_flag(obj, "verified", missing),
        has_location=bool(_text(obj, "location").strip()),
        has_profile_url=has_url,
        has_default_profile_image=DEFAULT_IMAGE_MARKER in _text(obj, "profile_image_url"),
        description_entities=_entities(entities.get("description"), description, "mentions"),
    )
    return profile, missing


def parse_user_v1(json_text: str | dict, collection_date: datetime | None = None) -> UserProfile:
    """Normalize a v1.1 user object (``friends_count``, ``default_profile_image`` ...)."""
    return _v1(_load_object(json_text), collection_date)[0]


def parse_user_v2(json_text: str | dict, collection_date: datetime | None = None) -> UserProfile:
    """Normalize a v2 user object (``public_metrics`` nesting, ISO ``created_at``)."""
    return _v2(_load_object(json_text), collection_date)[0]


def detect_version(obj: dict) -> str:
    if "public_metrics" in obj or "username" in obj:
        return "v2"
    return "v1"


def parse_user(json_text: str | dict, api_version: str = "auto",
               collection_date: datetime | None = None) -> tuple[UserProfile, list[str]]:
    """Parse one record, returning the profile and the optional fields that were missing."""
    obj = _load_object(json_text)
    version = detect_version(obj) if api_version == "auto" else api_version
    if version == "v1":
        return _v1(obj, collection_date)
    if version == "v2":
        return _v2(obj, collection_date)
    raise ValueError(f"unknown api version {api_version!r}")


def parse_label(raw: str) -> int:
    key = raw.strip().lower()
    if key not in _LABELS:
        raise LabelError(f"label {raw!r} is not one of human/bot/0/1")
    return _LABELS[key]


def read_labels(labels_path: str | Path) -> dict[str, int]:
    labels: dict[str, int] = {}
    with open(labels_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames[:2]] != ["user_id", "label"]:
            raise SchemaError(f"{labels_path}: header must be 'user_id,label'")
        for row in reader:
            uid = row["user_id"].strip()
            if uid in labels:
                raise DuplicateLabelError(f"{labels_path}: duplicate user_id {uid}")
            labels[uid] = parse_label(row["label"] or "")
    return labels


def read_records(records_path: str | Path, api_version: str = "auto",
                 collection_date: datetime | None = None,
                 stats: LoadStats | None = None) -> list[UserProfile]:
    """Parse a JSON-Lines file of user objects. Blank lines are skipped."""
    stats = stats if stats is not None else LoadStats()
    missing = Counter(stats.missing_fields)
    versions = Counter(stats.versions)
    profiles = []
    seen = set()
    with open(records_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = _load_object(line)
                version = detect_version(obj) if api_version == "auto" else api_version
                profile, miss = parse_user(obj, version, collection_date)
            except (ParseError, SchemaError) as exc:
                raise type(exc)(f"{records_path}:{lineno}: {exc}") from None
            if profile.user_id in seen:
                raise SchemaError(f"{records_path}:{lineno}: duplicate user_id {profile.user_id}")
            seen.add(profile.user_id)
            versions[version] += 1
            missing.update(miss)
            profiles.append(profile)
    stats.n_records = len(profiles)
    stats.versions = dict(sorted(versions.items()))
    stats.missing_fields = dict(sorted(missing.items()))
    return profiles


def load_dataset(records_path: str | Path, labels_path: str | Path, collection_date: datetime | str,
                 dataset_name: str | None = None, api_version: str = "auto") -> LabeledDataset:
    """Inner-join user objects with their labels.

    Records without a label are dropped and counted in ``stats.dropped_unlabeled``.
    The result is sorted by ``user_id`` so it does not depend on line order.
    """
    collection_date = parse_timestamp(collection_date)
    labels = read_labels(labels_path)
    stats = LoadStats(n_labels=len(labels))
    profiles = read_records(records_path, api_version, collection_date, stats)
    kept = sorted((p for p in profiles if p.user_id in labels), key=lambda p: p.user_id)
    stats.dropped_unlabeled = len(profiles) - len(kept)
    stats.unmatched_labels = len(labels) - len(kept)
    if stats.dropped_unlabeled:
        log.warning("%s: dropped %d records without labels", records_path, stats.dropped_unlabeled)
    if not kept:
        raise EmptyDatasetError(f"no labeled records after joining {records_path} with {labels_path}")
    for key, n in stats.missing_fields.items():
        log.info("%s: field %s missing in %d records", records_path, key, n)
    name = dataset_name or Path(records_path).stem
    return LabeledDataset(kept, [labels[p.user_id] for p in kept], collection_date, name, stats)
