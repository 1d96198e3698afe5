import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_profile
from phytopulse import (
    CHANNELS,
    Dataset,
    DatasetFormatError,
    PulseProfile,
    generate_dataset,
    load_dataset,
    save_dataset,
)
from conftest import small_synth_spec


def write_lines(path, records):
    with path.open("w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r) + "\n")


def record(profile_id="p0", label="a", values=(1.0,), **overrides):
    channels = {c: list(values) for c in CHANNELS}
    channels.update(overrides.pop("channels", {}))
    rec = {"id": profile_id, "label": label, "sampling_step": 0.5, "channels": channels}
    rec.update(overrides)
    return rec


class TestProfileInvariants:
    def test_all_channels_required(self):
        channels = {c: [1.0] for c in CHANNELS if c != "FLO_LS"}
        with pytest.raises(ValueError, match="FLO_LS"):
            PulseProfile(id="x", label=None, channels=channels)

    def test_equal_lengths_required(self):
        with pytest.raises(ValueError, match="unequal"):
            make_profile([1.0, 2.0], channels={"FWS": [1.0]})

    def test_finite_required(self):
        with pytest.raises(ValueError, match="non-finite"):
            make_profile([1.0, float("nan")])

    def test_empty_channel_rejected(self):
        with pytest.raises(ValueError):
            make_profile([])

    def test_unknown_channel_rejected(self):
        channels = {c: [1.0] for c in CHANNELS}
        channels["XYZ"] = [1.0]
        with pytest.raises(ValueError, match="XYZ"):
            PulseProfile(id="x", label=None, channels=channels)

    def test_stacked_layout(self):
        p = make_profile([1.0, 2.0], channels={"FWS": [5.0, 6.0]})
        stacked = p.stacked()
        assert stacked.shape == (2, 8)
        assert stacked[0, 0] == 5.0 and stacked[1, 0] == 6.0
        assert stacked[0, 1] == 1.0

    def test_channels_read_only(self):
        p = make_profile([1.0, 2.0])
        with pytest.raises(ValueError):
            p.channels["FWS"][0] = 9.0


class TestDatasetInvariants:
    def test_duplicate_ids_rejected(self):
        a = make_profile([1.0], profile_id="same")
        b = make_profile([2.0], profile_id="same")
        with pytest.raises(ValueError, match="duplicate"):
            Dataset.from_profiles([a, b])

    def test_label_must_be_in_label_set(self):
        a = make_profile([1.0], profile_id="a", label="x")
        with pytest.raises(ValueError, match="label"):
            Dataset(profiles=(a,), label_set=("y",))

    def test_label_set_first_appearance_order(self):
        profiles = [
            make_profile([1.0], profile_id="a", label="beta"),
            make_profile([1.0], profile_id="b", label="alpha"),
            make_profile([1.0], profile_id="c", label="beta"),
        ]
        assert Dataset.from_profiles(profiles).label_set == ("beta", "alpha")

    def test_index_of_unknown_id(self):
        ds = Dataset.from_profiles([make_profile([1.0], profile_id="a")])
        with pytest.raises(ValueError, match="unknown"):
            ds.index_of("nope")


class TestLoad:
    def test_minimal_record(self, tmp_path):
        path = tmp_path / "one.jsonl"
        write_lines(path, [record()])
        ds = load_dataset(path)
        assert len(ds) == 1
        assert ds.profiles[0].length == 1
        assert ds.profiles[0].channels["FWS"][0] == 1.0

    def test_missing_channel_names_channel_and_line(self, tmp_path):
        rec = record()
        del rec["channels"]["FLO_LS"]
        path = tmp_path / "bad.jsonl"
        write_lines(path, [record(profile_id="ok"), rec])
        with pytest.raises(DatasetFormatError, match=r"line 2.*FLO_LS"):
            load_dataset(path)

    def test_malformed_json_reports_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps(record()) + "\n{not json\n", encoding="utf-8")
        with pytest.raises(DatasetFormatError, match="line 2"):
            load_dataset(path)

    def test_duplicate_id_reports_line(self, tmp_path):
        path = tmp_path / "dup.jsonl"
        write_lines(path, [record(profile_id="x"), record(profile_id="x")])
        with pytest.raises(DatasetFormatError, match=r"line 2.*duplicate"):
            load_dataset(path)

    def test_unequal_lengths_rejected(self, tmp_path):
        rec = record(values=[1.0, 2.0])
        rec["channels"]["SWS_HS"] = [1.0]
        path = tmp_path / "bad.jsonl"
        write_lines(path, [rec])
        with pytest.raises(DatasetFormatError, match="unequal"):
            load_dataset(path)

    def test_order_preserved_and_balanced_labels(self, tmp_path):
        records = [
            record(profile_id=f"{label}-{i}", label=label)
            for label in ("s1", "s2", "s3", "s4", "s5", "s6", "s7")
            for i in range(100)
        ]
        path = tmp_path / "seven.jsonl"
        write_lines(path, records)
        ds = load_dataset(path)
        assert len(ds) == 700
        assert len(ds.label_set) == 7
        assert ds.ids()[:2] == ("s1-0", "s1-1")


class TestRoundTrip:
    def test_minimal_round_trip(self, tmp_path):
        ds = Dataset.from_profiles([make_profile([1.0], profile_id="only", label="a")])
        path = tmp_path / "ds.jsonl"
        save_dataset(ds, path)
        assert load_dataset(path) == ds

    def test_700_profile_round_trip(self, tmp_path):
        ds = generate_dataset(small_synth_spec(n_species=7, cells=100, seed=11))
        assert len(ds) == 700
        path = tmp_path / "ds.jsonl"
        save_dataset(ds, path)
        assert load_dataset(path) == ds

    def test_unwritable_path_raises(self, tmp_path):
        ds = Dataset.from_profiles([make_profile([1.0])])
        with pytest.raises(OSError):
            save_dataset(ds, tmp_path / "missing_dir" / "ds.jsonl")

    @settings(max_examples=25, deadline=None)
    @given(st.data())
    def test_round_trip_property(self, tmp_path_factory, data):
        n = data.draw(st.integers(1, 4))
        length = data.draw(st.integers(1, 6))
        values = st.floats(
            min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False, width=64
        )
        profiles = []
        for i in range(n):
            channels = {
                c: data.draw(st.lists(values, min_size=length, max_size=length))
                for c in CHANNELS
            }
            profiles.append(
                PulseProfile(
                    id=f"p{i}",
                    label=data.draw(st.sampled_from(["a", "b", None])),
                    channels=channels,
                    sampling_step=0.5,
                )
            )
        ds = Dataset.from_profiles(profiles)
        path = tmp_path_factory.mktemp("rt") / "ds.jsonl"
        save_dataset(ds, path)
        assert load_dataset(path) == ds
