import json
from datetime import datetime, timezone

import pytest
from hypothesis import given, settings, strategies as st

from samlp.errors import (DuplicateLabelError, EmptyDatasetError, LabelError, ParseError, SchemaError)
from samlp.profiles import (UserProfile, detect_version, format_timestamp, load_dataset, parse_label,
                            parse_timestamp, parse_user, parse_user_v1, parse_user_v2, read_labels)

COLLECTED = datetime(2020, 5, 5, tzinfo=timezone.utc)


def test_v1_golden_fields(golden_v1):
    p = parse_user_v1(golden_v1, COLLECTED)
    assert p.user_id == "4242" and p.screen_name == "ab12"
    assert (p.followers_count, p.following_count, p.statuses_count, p.listed_count) == (300, 150, 1000, 5)
    assert p.verified and not p.protected and p.has_location and p.has_profile_url
    assert not p.has_default_profile_image
    assert p.created_at == datetime(2020, 1, 1, tzinfo=timezone.utc)
    assert (p.description_entities.urls, p.description_entities.mentions, p.description_entities.hashtags) == (1, 1, 1)
    assert p.total_urls == 2


def test_v1_and_v2_normalize_identically(golden_v1, golden_v2):
    assert parse_user_v1(golden_v1, COLLECTED) == parse_user_v2(golden_v2, COLLECTED)


def test_detect_version(golden_v1, golden_v2):
    assert detect_version(json.loads(golden_v1)) == "v1"
    assert detect_version(json.loads(golden_v2)) == "v2"
    p1, _ = parse_user(golden_v1)
    p2, _ = parse_user(golden_v2)
    assert p1 == p2


def test_missing_counts_default_to_zero_and_are_reported(golden_v1):
    obj = json.loads(golden_v1)
    del obj["listed_count"]
    p, missing = parse_user(obj, "v1")
    assert p.listed_count == 0 and missing == ["listed_count"]


def test_malformed_json_raises_parse_error():
    with pytest.raises(ParseError):
        parse_user("{not json", "v1")


def test_negative_count_raises(golden_v1):
    obj = json.loads(golden_v1)
    obj["followers_count"] = -3
    with pytest.raises(SchemaError):
        parse_user(obj, "v1")


def test_created_after_collection_rejected(golden_v1):
    with pytest.raises(SchemaError):
        parse_user_v1(golden_v1, datetime(2019, 1, 1, tzinfo=timezone.utc))


def test_urls_fall_back_to_text_scan_without_entities(golden_v1):
    obj = json.loads(golden_v1)
    del obj["entities"]
    p = parse_user_v1(obj)
    assert p.description_entities.urls == 1
    assert p.description_entities.mentions == 0


def test_v2_default_image_marker(golden_v2):
    obj = json.loads(golden_v2)
    obj["profile_image_url"] = "https://abs.twimg.com/sticky/default_profile_images/default_profile_normal.png"
    assert parse_user_v2(obj).has_default_profile_image


@pytest.mark.parametrize("raw,label", [("bot", 1), ("Human", 0), ("1", 1), (" 0 ", 0), ("BOT", 1)])
def test_parse_label(raw, label):
    assert parse_label(raw) == label


def test_parse_label_rejects_unknown():
    with pytest.raises(LabelError):
        parse_label("cyborg")


def test_timestamps_round_trip():
    ts = parse_timestamp("Wed Oct 10 20:19:24 +0000 2018")
    assert format_timestamp(ts) == "2018-10-10T20:19:24Z"
    assert parse_timestamp(format_timestamp(ts)) == ts
    with pytest.raises(SchemaError):
        parse_timestamp("yesterday")


def _write(tmp_path, records, labels):
    r = tmp_path / "records.jsonl"
    r.write_text("\n".join(json.dumps(o) for o in records) + "\n")
    lab = tmp_path / "labels.csv"
    lab.write_text("user_id,label\n" + "".join(f"{u},{v}\n" for u, v in labels))
    return r, lab


def _user(uid, name="x"):
    return {"id_str": uid, "screen_name": name, "created_at": "Wed Jan 01 00:00:00 +0000 2020",
            "followers_count": 1, "friends_count": 1, "statuses_count": 1, "listed_count": 0,
            "protected": False, "verified": False}


def test_load_dataset_inner_join_sorted(tmp_path):
    r, lab = _write(tmp_path, [_user("3"), _user("1"), _user("2")], [("1", "bot"), ("3", "human"), ("9", "bot")])
    ds = load_dataset(r, lab, "2020-05-05T00:00:00Z")
    assert [p.user_id for p in ds.profiles] == ["1", "3"]
    assert ds.labels == [1, 0]
    assert ds.stats.dropped_unlabeled == 1 and ds.stats.unmatched_labels == 1


def test_load_dataset_empty_join(tmp_path):
    r, lab = _write(tmp_path, [_user("1")], [("2", "bot")])
    with pytest.raises(EmptyDatasetError):
        load_dataset(r, lab, "2020-05-05T00:00:00Z")


def test_duplicate_labels_rejected(tmp_path):
    _, lab = _write(tmp_path, [], [("1", "bot"), ("1", "human")])
    with pytest.raises(DuplicateLabelError):
        read_labels(lab)


def test_duplicate_records_rejected(tmp_path):
    r, lab = _write(tmp_path, [_user("1"), _user("1")], [("1", "bot")])
    with pytest.raises(SchemaError):
        load_dataset(r, lab, "2020-05-05T00:00:00Z")


def test_line_order_does_not_matter(tmp_path):
    users = [_user(str(i), f"n{i}") for i in range(6)]
    labels = [(str(i), i % 2) for i in range(6)]
    a, lab = _write(tmp_path, users, labels)
    sub = tmp_path / "b"
    sub.mkdir()
    b, lab2 = _write(sub, users[::-1], labels)
    assert load_dataset(a, lab, "2020-05-05").profiles == load_dataset(b, lab2, "2020-05-05").profiles


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**9), st.integers(0, 10**9), st.booleans(), st.text(max_size=30))
def test_profile_dict_round_trip(followers, statuses, verified, desc):
    p = UserProfile("1", "abc", datetime(2015, 3, 1, tzinfo=timezone.utc), "N", desc, followers, 3, statuses,
                    0, False, verified)
    assert UserProfile.from_dict(p.to_dict()) == p
