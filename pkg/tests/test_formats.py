"""On-disk formats: binary dumps, CSV twins, and monitor files."""

import json

import numpy as np
import pytest

from boxmon import (
    BuildConfig,
    ClusterConfig,
    FeatureSet,
    InvariantViolationError,
    Label,
    SchemaError,
    build_registry,
    load_registry,
    read_bamf,
    read_csv,
    read_features,
    registry_to_json_bytes,
    save_registry,
    write_bamf,
    write_csv,
)
from boxmon.formats import sha256_file


def random_features(seed=0, m=40, n=5, classes=("car", "person")):
    rng = np.random.default_rng(seed)
    values = (rng.normal(size=(m, n)) * rng.uniform(1e-4, 1e3)).astype(np.float32)
    keys = [classes[i % len(classes)] for i in range(m)]
    labels = rng.integers(0, 3, size=m).astype(np.uint8)
    scores = rng.uniform(0, 1, size=m).astype(np.float32)
    return FeatureSet("FC2Relu", values, keys, labels, scores)


class TestBamfRoundTrip:
    def test_values_survive_bit_exactly(self, tmp_path):
        features = random_features()
        path = tmp_path / "dump.bamf"
        write_bamf(features, path)
        back = read_bamf(path)
        assert back.layer_tag == features.layer_tag
        assert back.class_keys == features.class_keys
        assert np.array_equal(back.labels, features.labels)
        assert back.scores.tobytes() == features.scores.tobytes()
        assert back.values.tobytes() == features.values.tobytes()

    def test_empty_dump_round_trips(self, tmp_path):
        features = FeatureSet(
            "tag",
            np.empty((0, 3), dtype=np.float32),
            [],
            np.empty(0, dtype=np.uint8),
            np.empty(0, dtype=np.float32),
        )
        path = tmp_path / "empty.bamf"
        write_bamf(features, path)
        back = read_bamf(path)
        assert len(back) == 0
        assert back.dimension == 3

    def test_write_is_deterministic(self, tmp_path):
        features = random_features(seed=3)
        p1, p2 = tmp_path / "a.bamf", tmp_path / "b.bamf"
        write_bamf(features, p1)
        write_bamf(features, p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestBamfValidation:
    def write(self, tmp_path, features=None):
        path = tmp_path / "dump.bamf"
        write_bamf(features or random_features(), path)
        return path

    def test_bad_magic(self, tmp_path):
        path = self.write(tmp_path)
        raw = bytearray(path.read_bytes())
        raw[:4] = b"NOPE"
        path.write_bytes(raw)
        with pytest.raises(SchemaError, match="magic"):
            read_bamf(path)

    def test_bad_version(self, tmp_path):
        path = self.write(tmp_path)
        raw = bytearray(path.read_bytes())
        raw[4:6] = (99).to_bytes(2, "little")
        path.write_bytes(raw)
        with pytest.raises(SchemaError, match="version"):
            read_bamf(path)

    def test_truncated_records(self, tmp_path):
        path = self.write(tmp_path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-3])
        with pytest.raises(SchemaError, match="truncated"):
            read_bamf(path)

    def test_trailing_garbage(self, tmp_path):
        path = self.write(tmp_path)
        path.write_bytes(path.read_bytes() + b"x")
        with pytest.raises(SchemaError, match="trailing"):
            read_bamf(path)

    def test_record_count_must_match_payload(self, tmp_path):
        path = self.write(tmp_path)
        raw = bytearray(path.read_bytes())
        # header record_count lives at offset 10, little-endian u64
        count = int.from_bytes(raw[10:18], "little")
        raw[10:18] = (count + 1).to_bytes(8, "little")
        path.write_bytes(raw)
        with pytest.raises(SchemaError, match="truncated"):
            read_bamf(path)

    def test_out_of_range_label_byte(self, tmp_path):
        features = random_features(m=1, classes=("c",))
        path = self.write(tmp_path, features)
        raw = bytearray(path.read_bytes())
        # label byte of the single record: header + tag + key prefix + key
        offset = 18 + 2 + len("FC2Relu") + 2 + 1
        raw[offset] = 7
        path.write_bytes(raw)
        with pytest.raises(SchemaError, match="validation"):
            read_bamf(path)


class TestCsv:
    def test_round_trip_is_value_identical(self, tmp_path):
        features = random_features(seed=5)
        path = tmp_path / "dump.csv"
        write_csv(features, path)
        back = read_csv(path)
        assert back.layer_tag == features.layer_tag
        assert back.class_keys == features.class_keys
        assert np.array_equal(back.labels, features.labels)
        assert back.scores.tobytes() == features.scores.tobytes()
        assert back.values.tobytes() == features.values.tobytes()

    def test_csv_and_bamf_build_identical_monitors(self, tmp_path):
        features = random_features(seed=6, m=60)
        bamf, csvp = tmp_path / "d.bamf", tmp_path / "d.csv"
        write_bamf(features, bamf)
        write_csv(features, csvp)
        cfg = BuildConfig(
            cluster=ClusterConfig(density=20, seed=9), include_unlabeled=True
        )
        reg_a = build_registry(read_features(bamf), cfg, source_digest="sha256:x")
        reg_b = build_registry(read_features(csvp), cfg, source_digest="sha256:x")
        assert registry_to_json_bytes(reg_a) == registry_to_json_bytes(reg_b)

    def test_rejects_wrong_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c,f0\n")
        with pytest.raises(SchemaError, match="header"):
            read_csv(path)

    def test_rejects_unknown_label(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("class_key,label,score,f0\ncar,MYSTERY,0.5,1.0\n")
        with pytest.raises(SchemaError, match="label"):
            read_csv(path)

    def test_rejects_ragged_rows(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("class_key,label,score,f0,f1\ncar,ID,0.5,1.0\n")
        with pytest.raises(SchemaError, match="fields"):
            read_csv(path)

    def test_quoted_class_keys(self, tmp_path):
        features = FeatureSet(
            "t",
            np.ones((1, 2), dtype=np.float32),
            ['weird,"key'],
            np.zeros(1, dtype=np.uint8),
            np.ones(1, dtype=np.float32),
        )
        path = tmp_path / "quoted.csv"
        write_csv(features, path)
        assert read_csv(path).class_keys == ('weird,"key',)


class TestMonitorFile:
    @pytest.fixture()
    def registry(self):
        return build_registry(
            random_features(seed=7, m=50),
            BuildConfig(
                cluster=ClusterConfig(density=10, seed=4), include_unlabeled=True
            ),
        )

    def test_round_trip_preserves_every_verdict(self, tmp_path, registry):
        path = tmp_path / "monitor.json"
        save_registry(registry, path)
        back = load_registry(path)
        rng = np.random.default_rng(8)
        for _ in range(100):
            z = rng.normal(size=registry.dimension) * 3
            key = ("car", "person", "zebra")[int(rng.integers(3))]
            assert back.verdict(z, key) == registry.verdict(z, key)

    def test_round_trip_is_bit_exact_on_bounds(self, tmp_path, registry):
        path = tmp_path / "monitor.json"
        save_registry(registry, path)
        back = load_registry(path)
        for key, mon in registry.monitors.items():
            assert back.monitors[key].lower.tobytes() == mon.lower.tobytes()
            assert back.monitors[key].upper.tobytes() == mon.upper.tobytes()

    def test_serialization_is_deterministic(self, registry):
        assert registry_to_json_bytes(registry) == registry_to_json_bytes(registry)

    def test_identical_builds_serialize_identically(self):
        features = random_features(seed=9)
        cfg = BuildConfig(
            cluster=ClusterConfig(density=10, seed=2), include_unlabeled=True
        )
        a = build_registry(features, cfg)
        b = build_registry(features, cfg)
        assert registry_to_json_bytes(a) == registry_to_json_bytes(b)

    def test_lower_above_upper_is_an_invariant_violation(self, tmp_path, registry):
        path = tmp_path / "monitor.json"
        save_registry(registry, path)
        doc = json.loads(path.read_text())
        doc["classes"]["car"]["lower"][0][0] = 1e12
        path.write_text(json.dumps(doc))
        with pytest.raises(InvariantViolationError):
            load_registry(path)

    def test_wrong_format_marker(self, tmp_path, registry):
        path = tmp_path / "monitor.json"
        save_registry(registry, path)
        doc = json.loads(path.read_text())
        doc["format"] = "something-else"
        path.write_text(json.dumps(doc))
        with pytest.raises(SchemaError, match="format"):
            load_registry(path)

    def test_wrong_schema_version(self, tmp_path, registry):
        path = tmp_path / "monitor.json"
        save_registry(registry, path)
        doc = json.loads(path.read_text())
        doc["schema_version"] = 999
        path.write_text(json.dumps(doc))
        with pytest.raises(SchemaError, match="schema_version"):
            load_registry(path)

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "monitor.json"
        path.write_text("{not json")
        with pytest.raises(SchemaError, match="JSON"):
            load_registry(path)

    def test_duplicate_class_keys_rejected(self, tmp_path, registry):
        path = tmp_path / "monitor.json"
        save_registry(registry, path)
        text = path.read_text()
        # duplicate the whole classes object keys by naming person twice
        text = text.replace('"person"', '"car"', 1)
        path.write_text(text)
        with pytest.raises((InvariantViolationError, SchemaError)):
            load_registry(path)

    def test_dimension_drift_rejected(self, tmp_path, registry):
        path = tmp_path / "monitor.json"
        save_registry(registry, path)
        doc = json.loads(path.read_text())
        doc["dimension"] = registry.dimension + 1
        path.write_text(json.dumps(doc))
        with pytest.raises(InvariantViolationError):
            load_registry(path)


class TestHelpers:
    def test_read_features_sniffs_binary_then_csv(self, tmp_path):
        features = random_features(seed=12, m=8)
        b, c = tmp_path / "x.bamf", tmp_path / "x.csv"
        write_bamf(features, b)
        write_csv(features, c)
        assert read_features(b).values.tobytes() == features.values.tobytes()
        assert read_features(c).values.tobytes() == features.values.tobytes()

    def test_sha256_file_matches_known_digest(self, tmp_path):
        path = tmp_path / "f"
        path.write_bytes(b"abc")
        assert sha256_file(path) == (
            "sha256:ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        )

    def test_content_digest_changes_with_payload(self):
        a = random_features(seed=1)
        b = random_features(seed=2)
        assert a.content_digest() != b.content_digest()
        assert a.content_digest() == random_features(seed=1).content_digest()
