import json
import time

import numpy as np
import pytest

from gafsim.telemetry import (
    RollingSeries,
    StepRecord,
    read_records,
    rolling_mean,
    summarize,
    write_records,
)

from conftest import N_PROPERTY_CASES


def make_records(n, rng=None, k=2):
    rng = rng or np.random.default_rng(0)
    records = []
    for t in range(1, n + 1):
        skipped = bool(rng.integers(4) == 0)
        records.append(
            StepRecord(
                step=t,
                train_loss=float(rng.uniform(0, 3)),
                cos_distances=[float(rng.uniform(0, 2)) for _ in range(k - 1)],
                accepted_count=1 if skipped else k,
                skipped=skipped,
                lr=0.01,
                train_acc=float(rng.uniform(0, 1)) if t % 10 == 0 else None,
                val_acc=float(rng.uniform(0, 1)) if t % 10 == 0 else None,
            )
        )
    return records


class TestRollingMean:
    def test_window_one_identity(self):
        vals = [3.0, 1.0, 4.0, 1.5]
        assert rolling_mean(vals, 1) == vals

    def test_constant_series(self):
        assert rolling_mean([2.0] * 10, 4) == [2.0] * 10

    def test_hand_example(self):
        assert rolling_mean([0, 1, 0, 1], 2) == [0.0, 0.5, 0.5, 0.5]

    def test_warmup_starts_at_first_value(self):
        out = rolling_mean([10.0, 0.0, 0.0], 3)
        assert out[0] == 10.0

    def test_rejects_bad_window(self):
        with pytest.raises(ValueError, match="window"):
            rolling_mean([1.0], 0)

    def test_empty(self):
        assert rolling_mean([], 5) == []


class TestRollingSeries:
    def test_appends_track_function(self):
        series = RollingSeries(window=3)
        series.extend([1.0, 2.0, 3.0, 4.0])
        assert series.rolling == rolling_mean([1.0, 2.0, 3.0, 4.0], 3)
        series.append(5.0)
        assert series.rolling[-1] == pytest.approx(4.0)


class TestSerialization:
    def test_round_trip(self, tmp_path):
        records = make_records(50)
        path = tmp_path / "records.jsonl"
        write_records(records, path)
        assert read_records(path) == records

    def test_empty_records(self, tmp_path):
        path = tmp_path / "records.jsonl"
        write_records([], path)
        assert path.read_text() == ""
        csv_lines = path.with_suffix(".csv").read_text().splitlines()
        assert len(csv_lines) == 1 and csv_lines[0].startswith("step,")

    def test_byte_reproducible(self, tmp_path):
        records = make_records(30)
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_records(records, p1)
        write_records(records, p2)
        assert p1.read_bytes() == p2.read_bytes()
        assert p1.with_suffix(".csv").read_bytes() == p2.with_suffix(".csv").read_bytes()

    def test_schema_fields(self, tmp_path):
        path = tmp_path / "records.jsonl"
        write_records(make_records(3), path)
        obj = json.loads(path.read_text().splitlines()[0])
        assert list(obj) == [
            "step", "train_loss", "cos_distances", "accepted_count",
            "skipped", "lr", "train_acc", "val_acc",
        ]
        assert isinstance(obj["cos_distances"], list)

    def test_write_failure_names_path(self, tmp_path):
        with pytest.raises(OSError, match="no/such"):
            write_records([], tmp_path / "no" / "such" / "records.jsonl")

    def test_large_write_is_quick(self, tmp_path):
        records = make_records(100_000)
        start = time.monotonic()
        write_records(records, tmp_path / "big.jsonl")
        assert time.monotonic() - start < 5.0


class TestSummarize:
    def test_single_record(self):
        rec = StepRecord(step=1, train_loss=1.0, val_acc=0.5)
        summary = summarize([rec])
        assert summary["final_val_acc"] == summary["best_val_acc"] == 0.5

    def test_all_skipped(self):
        records = [
            StepRecord(step=t, train_loss=1.0, skipped=True, accepted_count=1)
            for t in range(1, 5)
        ]
        assert summarize(records)["skip_fraction"] == 1.0

    def test_hand_computed_summary(self):
        # 8 records; val accs 0.3 then 0.6 then final 0.5; steps 7-8 are the
        # last quartile with distances {0.8, 1.2} -> mean 1.0; 2 skips of 8
        records = [
            StepRecord(step=1, train_loss=1.0, cos_distances=[0.1], val_acc=0.3),
            StepRecord(step=2, train_loss=1.0, cos_distances=[0.2]),
            StepRecord(step=3, train_loss=1.0, cos_distances=[0.3], skipped=True),
            StepRecord(step=4, train_loss=1.0, cos_distances=[0.4], val_acc=0.6),
            StepRecord(step=5, train_loss=1.0, cos_distances=[0.5]),
            StepRecord(step=6, train_loss=1.0, cos_distances=[0.6], skipped=True),
            StepRecord(step=7, train_loss=1.0, cos_distances=[0.8]),
            StepRecord(step=8, train_loss=1.0, cos_distances=[1.2], val_acc=0.5),
        ]
        summary = summarize(records)
        assert summary["final_val_acc"] == 0.5
        assert summary["best_val_acc"] == 0.6
        assert summary["skip_fraction"] == 0.25
        assert summary["mean_cos_distance_last_quartile"] == pytest.approx(1.0)

    def test_empty_errors(self):
        with pytest.raises(ValueError, match="empty"):
            summarize([])


@pytest.mark.properties
class TestProperties:
    def test_rolling_matches_naive_window_mean(self, rng):
        for _ in range(N_PROPERTY_CASES):
            n = int(rng.integers(1, 120))
            window = int(rng.integers(1, 20))
            vals = rng.normal(size=n)
            out = rolling_mean(vals, window)
            for i in range(n):
                lo = max(0, i - window + 1)
                assert out[i] == pytest.approx(float(np.mean(vals[lo : i + 1])), abs=1e-12)

    def test_rolling_shift_equivariance(self, rng):
        # prepending w copies of the first value leaves every fully-warmed
        # output unchanged (shifted by w)
        for _ in range(N_PROPERTY_CASES):
            n = int(rng.integers(2, 80))
            window = int(rng.integers(1, 12))
            vals = list(rng.normal(size=n))
            padded = [vals[0]] * window + vals
            base = rolling_mean(vals, window)
            shifted = rolling_mean(padded, window)
            for i in range(window - 1, n):
                assert shifted[window + i] == pytest.approx(base[i], abs=1e-12)

    def test_round_trip_lossless_for_hostile_floats(self, rng, tmp_path):
        # denormals, huge magnitudes, and full-precision mantissas all
        # round-trip bit for bit through the JSONL path
        for case in range(N_PROPERTY_CASES):
            scale = 10.0 ** rng.integers(-300, 300)
            records = [
                StepRecord(
                    step=1,
                    train_loss=float(rng.normal() * scale),
                    cos_distances=[float(np.nextafter(rng.uniform(0, 2), 3))],
                    accepted_count=2,
                    skipped=False,
                    lr=float(np.nextafter(rng.uniform(0, 1), 2)),
                    train_acc=None,
                    val_acc=float(rng.uniform()),
                )
            ]
            path = tmp_path / f"r{case}.jsonl"
            write_records(records, path)
            back = read_records(path)
            assert back == records
            assert back[0].train_loss.hex() == records[0].train_loss.hex()
