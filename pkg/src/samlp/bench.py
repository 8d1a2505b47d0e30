"""Benchmark protocols: per-dataset and combined-dataset training, plus a synthetic corpus.

The synthetic generator emits real user objects which go through the normal
parser and feature extractor, so the benchmark exercises the whole stack.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from datetime import timedelta
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from . import seeding
from .artifact import dumps
from .config import PipelineConfig
from .errors import InputError, SamlpError
from .features import FeatureMatrix, build_matrix, concat_matrices
from .metrics import confusion, f1_at, precision_recall_f1
from .profiles import (DescriptionEntities, LabeledDataset, LoadStats, UserProfile, format_timestamp,
                       load_dataset, parse_timestamp)
from .split import SplitIndices, stratified_holdout
from .tuner import optimize_threshold, run_pipeline

log = logging.getLogger(__name__)

V1_TIME = "%a %b %d %H:%M:%S +0000 %Y"
_ALPHA = np.array(list("abcdefghijklmnopqrstuvwxyz"))


@dataclass(frozen=True)
class ClassParams:
    """Per-class distribution parameters; rates are log10 of counts per day."""
    age_days: tuple[float, float]
    log_statuses_rate: tuple[float, float]
    log_followers_rate: tuple[float, float]
    log_following_ratio: tuple[float, float]
    p_default_image: float
    p_location: float
    p_url: float
    p_verified: float
    p_protected: float
    digit_suffix: int


HUMAN = ClassParams((800.0, 5000.0), (0.3, 0.5), (-0.5, 0.5), (0.2, 0.4), 0.05, 0.7, 0.3, 0.05, 0.1, 2)
BOT = ClassParams((1.0, 700.0), (1.5, 0.5), (0.5, 0.5), (0.6, 0.5), 0.4, 0.3, 0.5, 0.0, 0.0, 8)


@dataclass(frozen=True)
class SyntheticSpec:
    n_datasets: int = 9
    n_rows: int = 1000
    bot_ratio: float = 0.5
    overlap: float = 0.0
    seed: int = 0
    collection_date: str = "2023-01-01T00:00:00Z"
    dataset_shift: float = 0.3
    human: ClassParams = HUMAN
    bot: ClassParams = BOT

    def __post_init__(self):
        if self.n_datasets < 1 or self.n_rows < 4:
            raise InputError("need at least one dataset of at least 4 rows")
        if not 0 < self.bot_ratio < 1:
            raise InputError("bot_ratio must be in (0, 1)")
        if not 0 <= self.overlap <= 1:
            raise InputError("overlap must be in [0, 1]")

    def class_params(self, label: int) -> ClassParams:
        """Class parameters after applying ``overlap``.

        At overlap 0 every bot is younger than every human (700 < 800 days);
        at overlap 1 both age ranges span the same interval.
        """
        p = self.bot if label else self.human
        lo, hi = self.bot.age_days[0], self.human.age_days[1]
        if label:
            age = (p.age_days[0], p.age_days[1] + self.overlap * (hi - p.age_days[1]))
        else:
            age = (p.age_days[0] - self.overlap * (p.age_days[0] - lo), p.age_days[1])
        return ClassParams(age, *list(asdict(p).values())[1:])

    def names(self) -> list[str]:
        return [f"synth_{d + 1:02d}" for d in range(self.n_datasets)]


def _word(rng, lo=3, hi=9) -> str:
    return "".join(rng.choice(_ALPHA, size=int(rng.integers(lo, hi))))


def _description(rng) -> tuple[str, DescriptionEntities]:
    parts = [_word(rng) for _ in range(int(rng.integers(0, 8)))]
    n_url, n_men, n_tag = (int(v) for v in rng.binomial(1, [0.3, 0.3, 0.3]))
    parts += ["https://t.co/" + _word(rng, 6, 10)] * n_url
    parts += ["@" + _word(rng)] * n_men
    parts += ["#" + _word(rng).capitalize()] * n_tag
    if parts and rng.random() < 0.5:
        parts[0] = parts[0].capitalize()
    return " ".join(parts), DescriptionEntities(n_url, n_men, n_tag)


def _profile(rng, uid: str, label: int, p: ClassParams, shift: np.ndarray, collected) -> UserProfile:
    age = float(rng.uniform(*p.age_days))
    created = collected - timedelta(seconds=int(age * 86400))
    statuses = int(round(10 ** rng.normal(p.log_statuses_rate[0] + shift[0], p.log_statuses_rate[1]) * age))
    followers = int(round(10 ** rng.normal(p.log_followers_rate[0] + shift[1], p.log_followers_rate[1]) * age))
    following = int(round(followers * 10 ** rng.normal(*p.log_following_ratio)))
    listed = int(rng.poisson(followers * (0.01 if label == 0 else 0.001)))
    first, last = _word(rng).capitalize(), _word(rng).capitalize()
    digits = "".join(str(d) for d in rng.integers(0, 10, size=int(rng.integers(0, p.digit_suffix + 1))))
    description, ents = _description(rng)
    return UserProfile(
        user_id=uid,
        screen_name=(first[:1] + last).lower()[: 15 - len(digits)] + digits,
        created_at=created,
        name=f"{first} {last}",
        description=description,
        followers_count=followers,
        following_count=following,
        statuses_count=statuses,
        listed_count=listed,
        protected=bool(rng.random() < p.p_protected),
        verified=bool(rng.random() < p.p_verified),
        has_location=bool(rng.random() < p.p_location),
        has_profile_url=bool(rng.random() < p.p_url),
        has_default_profile_image=bool(rng.random() < p.p_default_image),
        description_entities=ents,
    )


def synthetic_profiles(spec: SyntheticSpec) -> list[LabeledDataset]:
    """Labeled profile sets, one per dataset; user ids are unique across datasets."""
    collected = parse_timestamp(spec.collection_date)
    out = []
    for d, name in enumerate(spec.names()):
        rng = np.random.default_rng(seeding.sub_seed(spec.seed, seeding.SYNTHETIC, d))
        n_bots = int(round(spec.bot_ratio * spec.n_rows))
        labels = rng.permutation(np.r_[np.ones(n_bots, dtype=np.int64), np.zeros(spec.n_rows - n_bots, dtype=np.int64)])
        shift = rng.normal(0.0, spec.dataset_shift, size=2)
        profiles = [_profile(rng, f"{d + 1}{i:07d}", int(lab), spec.class_params(int(lab)), shift, collected)
                    for i, lab in enumerate(labels)]
        out.append(LabeledDataset(profiles, [int(v) for v in labels], collected, name,
                                  LoadStats(n_records=len(profiles), n_labels=len(profiles))))
    return out


def generate_synthetic(spec: SyntheticSpec) -> list[FeatureMatrix]:
    return [build_matrix(ds) for ds in synthetic_profiles(spec)]


def _entity_lists(p: UserProfile, mention_key: str) -> dict:
    e = p.description_entities
    return {"urls": [{"url": "https://t.co/x"}] * e.urls,
            mention_key: [{"screen_name": "x"}] * e.mentions,
            "hashtags": [{"text": "x"}] * e.hashtags}


def to_user_object(p: UserProfile, api_version: str = "v1") -> dict:
    """Serialize a profile back into a v1.1 or v2 user object."""
    if api_version == "v1":
        return {
            "id_str": p.user_id, "screen_name": p.screen_name, "name": p.name, "description": p.description,
            "created_at": p.created_at.strftime(V1_TIME),
            "followers_count": p.followers_count, "friends_count": p.following_count,
            "statuses_count": p.statuses_count, "listed_count": p.listed_count,
            "protected": p.protected, "verified": p.verified,
            "location": "Somewhere" if p.has_location else "",
            "url": "https://t.co/home" if p.has_profile_url else None,
            "default_profile_image": p.has_default_profile_image,
            "entities": {"description": _entity_lists(p, "user_mentions")},
        }
    if api_version == "v2":
        image = "default_profile_images/default_profile_normal.png" if p.has_default_profile_image else "abc.jpg"
        ents = {"description": _entity_lists(p, "mentions")}
        if p.has_profile_url:
            ents["url"] = {"urls": [{"url": "https://t.co/home"}]}
        return {
            "id": p.user_id, "username": p.screen_name, "name": p.name, "description": p.description,
            "created_at": format_timestamp(p.created_at).replace("Z", ".000Z"),
            "public_metrics": {"followers_count": p.followers_count, "following_count": p.following_count,
                               "tweet_count": p.statuses_count, "listed_count": p.listed_count},
            "protected": p.protected, "verified": p.verified,
            "location": "Somewhere" if p.has_location else None,
            "url": "https://t.co/home" if p.has_profile_url else "",
            "profile_image_url": "https://pbs.twimg.com/" + image,
            "entities": ents,
        }
    raise InputError(f"unknown api version {api_version!r}")


def write_corpus(datasets: list[LabeledDataset], out_dir: str | Path, api_version: str = "v1") -> Path:
    """Write ``<dir>/<name>/records.jsonl``, ``labels.csv`` and ``meta.json`` per dataset."""
    out_dir = Path(out_dir)
    for ds in datasets:
        d = out_dir / ds.dataset_name
        d.mkdir(parents=True, exist_ok=True)
        with open(d / "records.jsonl", "w", encoding="utf-8") as fh:
            for p in ds.profiles:
                fh.write(json.dumps(to_user_object(p, api_version), sort_keys=True) + "\n")
        with open(d / "labels.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["user_id", "label"])
            for p, lab in zip(ds.profiles, ds.labels):
                w.writerow([p.user_id, "bot" if lab else "human"])
        (d / "meta.json").write_text(dumps({"collection_date": format_timestamp(ds.collection_date)}) + "\n",
                                     encoding="utf-8")
    return out_dir


def load_corpus(corpus_dir: str | Path, api_version: str = "auto") -> list[LabeledDataset]:
    """Every sub-directory holding records.jsonl, labels.csv and meta.json, in name order."""
    corpus_dir = Path(corpus_dir)
    if not corpus_dir.is_dir():
        raise FileNotFoundError(f"corpus directory {corpus_dir} not found")
    out = []
    for d in sorted(p for p in corpus_dir.iterdir() if p.is_dir()):
        if not (d / "records.jsonl").exists():
            continue
        try:
            meta = json.loads((d / "meta.json").read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"{d}/meta.json unreadable: {exc}") from None
        out.append(load_dataset(d / "records.jsonl", d / "labels.csv", meta["collection_date"], d.name, api_version))
    if not out:
        raise InputError(f"no datasets found under {corpus_dir}")
    return out


@dataclass
class BenchmarkReport:
    scenario: str
    seed: int
    per_dataset: dict[str, float | None]
    average: float | None
    total: float | None = None
    failed: dict[str, str] = field(default_factory=dict)
    seeds: dict[str, int] = field(default_factory=dict)
    details: dict[str, dict] = field(default_factory=dict)
    pipeline_config: dict = field(default_factory=dict)
    runtime_s: float | None = None

    @property
    def complete(self) -> bool:
        return not self.failed

    def to_dict(self) -> dict:
        """Deterministic content; wall-clock runtime is kept out on purpose."""
        return {
            "scenario": self.scenario, "seed": self.seed, "complete": self.complete,
            "per_dataset_f1": self.per_dataset, "average_f1": self.average,
            "average_convention": "unweighted mean of per-dataset F1 (failed datasets excluded)",
            "total_f1": self.total, "failed": self.failed, "seeds": self.seeds,
            "details": self.details, "pipeline_config": self.pipeline_config,
        }

    def to_json(self) -> str:
        return dumps(self.to_dict())

    def table(self) -> str:
        rows = [(name, "failed" if f is None else f"{f:.4f}") for name, f in self.per_dataset.items()]
        rows.append(("Average", "n/a" if self.average is None else f"{self.average:.4f}"))
        if self.scenario == "combined":
            rows.append(("Total", "n/a" if self.total is None else f"{self.total:.4f}"))
        w = max(len("Dataset"), *(len(r[0]) for r in rows))
        lines = [f"{'Dataset':<{w}}  {'F1':>8}", "-" * (w + 10)]
        lines += [f"{a:<{w}}  {b:>8}" for a, b in rows]
        if not self.complete:
            lines.append("(incomplete: failed datasets excluded from Average)")
        return "\n".join(lines)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["dataset", "f1"])
            for name, f in self.per_dataset.items():
                w.writerow([name, "" if f is None else repr(f)])
            w.writerow(["Average", "" if self.average is None else repr(self.average)])
            if self.scenario == "combined":
                w.writerow(["Total", "" if self.total is None else repr(self.total)])

    def save(self, out_dir: str | Path, stem: str | None = None) -> dict[str, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        stem = stem or f"bench_{self.scenario}"
        paths = {"json": out_dir / f"{stem}.json", "txt": out_dir / f"{stem}.txt", "csv": out_dir / f"{stem}.csv"}
        paths["json"].write_text(self.to_json() + "\n", encoding="utf-8")
        paths["txt"].write_text(self.table() + "\n", encoding="utf-8")
        self.to_csv(paths["csv"])
        return paths


def dataset_seed(seed: int, name: str) -> int:
    return seeding.sub_seed(seed, seeding.DATASET, seeding.name_counter(name))


def _mean(values) -> float | None:
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def _by_name(datasets: list[FeatureMatrix]) -> list[FeatureMatrix]:
    names = [m.dataset_name for m in datasets]
    if len(set(names)) != len(names):
        raise InputError("dataset names must be unique")
    return sorted(datasets, key=lambda m: m.dataset_name)


def _run_one(matrix: FeatureMatrix, config: PipelineConfig, seed: int):
    try:
        result = run_pipeline(matrix, config, seed=seed, jobs=1)
    except SamlpError as exc:
        return None, f"{type(exc).__name__}: {exc}"
    r = result.report
    return {"f1": r.test_f1, "precision": r.test_precision, "recall": r.test_recall, "threshold": r.threshold,
            "winner": r.winner["family"], "cv_f1": r.winner["mean_f1"], "test_confusion": r.test_confusion,
            "selected_features": r.selection["selected_features"]}, None


def scenario_per_dataset(datasets: list[FeatureMatrix], config: PipelineConfig | None = None,
                         seed: int | None = None, jobs: int | None = None) -> BenchmarkReport:
    """Train and test on each dataset separately."""
    config = config or PipelineConfig()
    seed = config.seed if seed is None else seed
    jobs = config.jobs if jobs is None else jobs
    datasets = _by_name(datasets)
    if not datasets:
        raise InputError("need at least one dataset")
    seeds = {m.dataset_name: dataset_seed(seed, m.dataset_name) for m in datasets}
    if jobs == 1:
        results = [_run_one(m, config, seeds[m.dataset_name]) for m in datasets]
    else:
        results = Parallel(n_jobs=jobs)(delayed(_run_one)(m, config, seeds[m.dataset_name]) for m in datasets)
    per, details, failed = {}, {}, {}
    for m, (info, err) in zip(datasets, results):
        if err is not None:
            log.warning("%s failed: %s", m.dataset_name, err)
            failed[m.dataset_name] = err
            per[m.dataset_name] = None
        else:
            per[m.dataset_name] = info["f1"]
            details[m.dataset_name] = info
    return BenchmarkReport("per-dataset", seed, per, _mean(per.values()), None, failed, seeds, details,
                           {**config.to_dict(), "jobs": None})


def combined_split(datasets: list[FeatureMatrix], config: PipelineConfig, seed: int
                   ) -> tuple[FeatureMatrix, SplitIndices, dict[str, int]]:
    """Concatenate datasets (in name order) and split each one with its own sub-seed."""
    datasets = _by_name(datasets)
    seeds = {m.dataset_name: dataset_seed(seed, m.dataset_name) for m in datasets}
    train, test = [], []
    offset = 0
    for m in datasets:
        s = stratified_holdout(m.y, config.holdout_ratio, seeds[m.dataset_name])
        train.append(s.train_idx + offset)
        test.append(s.test_idx + offset)
        offset += len(m)
    split = SplitIndices(np.concatenate(train), np.concatenate(test), seed, config.holdout_ratio)
    return concat_matrices(datasets), split, seeds


def scenario_combined(datasets: list[FeatureMatrix], config: PipelineConfig | None = None,
                      seed: int | None = None, jobs: int | None = None) -> BenchmarkReport:
    """Train once on the union of training portions; test per dataset and on the union."""
    config = config or PipelineConfig()
    seed = config.seed if seed is None else seed
    if len(datasets) < 2:
        raise InputError("the combined scenario needs at least two datasets")
    matrix, split, seeds = combined_split(datasets, config, seed)
    result = run_pipeline(matrix, config, seed=seed, split=split, jobs=jobs)
    r = result.report
    origin = np.array(matrix.origin)[r.test_idx]
    pred = r.test_scores >= r.threshold
    per, details = {}, {}
    for name in sorted(set(matrix.origin)):
        mask = origin == name
        c = confusion(r.test_labels[mask], pred[mask])
        p, rec, f1 = precision_recall_f1(c)
        per[name] = f1
        details[name] = {"f1": f1, "precision": p, "recall": rec, "test_confusion": c.to_dict()}
    details["Total"] = {"f1": r.test_f1, "precision": r.test_precision, "recall": r.test_recall,
                        "threshold": r.threshold, "winner": r.winner["family"], "cv_f1": r.winner["mean_f1"],
                        "test_confusion": r.test_confusion, "selected_features": r.selection["selected_features"]}
    return BenchmarkReport("combined", seed, per, _mean(per.values()), r.test_f1, {}, seeds, details,
                           {**config.to_dict(), "jobs": None})


def random_scorer_f1(y_train, y_test, seed: int = 0, n_draws: int = 200) -> float:
    """Expected test F1 of uniformly random scores pushed through the threshold protocol.

    Each draw tunes a threshold on random training scores and applies it to
    random test scores, mirroring what the pipeline does with a model that has
    learned nothing.
    """
    rng = np.random.default_rng(seed)
    y_train, y_test = np.asarray(y_train), np.asarray(y_test)
    out = []
    for _ in range(n_draws):
        thr = optimize_threshold(rng.random(len(y_train)), y_train)
        out.append(f1_at(rng.random(len(y_test)), y_test, thr))
    return float(np.mean(out))


def permutation_check(matrix: FeatureMatrix, config: PipelineConfig | None = None, seed: int = 0,
                      jobs: int | None = None) -> dict:
    """Run the pipeline on shuffled labels and compare to the random-scorer oracle."""
    config = config or PipelineConfig()
    rng = np.random.default_rng(seeding.sub_seed(seed, seeding.SYNTHETIC, 999))
    shuffled = FeatureMatrix(matrix.X, rng.permutation(matrix.y), matrix.user_ids, matrix.dataset_name,
                             matrix.schema, matrix.collection_date, matrix.origin)
    result = run_pipeline(shuffled, config, seed=seed, jobs=jobs)
    r = result.report
    train_mask = np.ones(len(shuffled), dtype=bool)
    train_mask[r.test_idx] = False
    oracle = random_scorer_f1(shuffled.y[train_mask], r.test_labels, seed)
    return {"test_f1": r.test_f1, "random_scorer_f1": oracle, "gap": abs(r.test_f1 - oracle)}
