import csv
import itertools
import math
import wave

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ser3d.dataset import (
    CATEGORIES,
    LANDMARKS,
    FoldPlan,
    TraceSample,
    UtteranceRecord,
    load_manifest,
    make_folds,
    map_trace,
    read_audio,
    read_trace,
    resolve_labels,
    split_sizes,
    synth_corpus,
    write_manifest,
)
from ser3d.dataset.labels import average_distances, write_trace
from ser3d.errors import DataError, DegenerateInputError

HEADER = "id,audio_path,corpus_id,speaker_id,label,trace_path\n"


class TestMapTrace:
    @pytest.mark.parametrize("cat", CATEGORIES)
    def test_landmarks_map_to_themselves(self, cat):
        v, a = LANDMARKS[cat]
        assert map_trace([TraceSample(0.0, v, a), TraceSample(1.0, v, a)]) == cat

    def test_origin_is_neutral(self):
        assert map_trace([TraceSample(0, 0.0, 0.0)]) == "neutral"

    def test_table_values(self):
        assert LANDMARKS == {"neutral": (0.0, 0.0), "happy": (0.74, 0.52),
                             "angry": (-0.77, 0.75), "sad": (-0.70, -0.48)}

    def test_two_sample_trace_hand_arithmetic(self):
        trace = [TraceSample(0, 0.74, 0.52), TraceSample(1, 0.60, 0.40)]
        d = average_distances(trace)
        # per-sample squared distances worked out by hand
        expected = {
            "neutral": (math.sqrt(0.818) + math.sqrt(0.52)) / 2,
            "happy": (0.0 + math.sqrt(0.034)) / 2,
            "sad": (math.sqrt(3.0736) + math.sqrt(2.4644)) / 2,
            "angry": (math.sqrt(2.333) + math.sqrt(1.9994)) / 2,
        }
        for cat in CATEGORIES:
            assert d[cat] == pytest.approx(expected[cat], abs=1e-9)
        assert map_trace(trace) == "happy"

    def test_tie_goes_to_earlier_category(self):
        # equidistant from neutral and happy: projection onto the perpendicular bisector
        v, a = 0.37, 0.26
        dist = math.hypot(v, a)
        assert abs(dist - math.hypot(v - 0.74, a - 0.52)) < 1e-12
        assert map_trace([TraceSample(0, v, a)]) == "neutral"

    def test_empty(self):
        with pytest.raises(DegenerateInputError):
            map_trace([])

    @given(st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), min_size=1, max_size=12),
           st.randoms())
    @settings(max_examples=50)
    def test_order_and_duplication_invariance(self, pts, rnd):
        trace = [TraceSample(i, v, a) for i, (v, a) in enumerate(pts)]
        shuffled = list(trace)
        rnd.shuffle(shuffled)
        base = average_distances(trace)
        for other in (shuffled, trace + trace):
            d = average_distances(other)
            for c in CATEGORIES:
                assert d[c] == pytest.approx(base[c], abs=1e-12)


class TestTraceFile:
    def test_round_trip(self, tmp_path):
        trace = [TraceSample(0.0, 0.1, -0.2), TraceSample(0.04, 0.3, 0.5)]
        write_trace(tmp_path / "t.csv", trace)
        assert read_trace(tmp_path / "t.csv") == trace

    def test_decreasing_time(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("time,valence,arousal\n1,0,0\n0.5,0,0\n")
        with pytest.raises(DataError, match=":3:"):
            read_trace(p)


def write_manifest_text(tmp_path, rows):
    p = tmp_path / "manifest.csv"
    p.write_text(HEADER + "".join(r + "\n" for r in rows))
    return p


class TestManifest:
    def test_three_rows(self, tmp_path):
        p = write_manifest_text(tmp_path, [
            "u1,a.wav,c1,s1,happy,",
            "u2,b.wav,c1,s2,sad,",
            "u3,c.wav,c2,s3,,t.csv",
        ])
        recs = load_manifest(p)
        assert [r.id for r in recs] == ["u1", "u2", "u3"]
        assert recs[0].audio_path == tmp_path / "a.wav"
        assert recs[2].label is None and recs[2].trace_path == tmp_path / "t.csv"

    def test_both_label_and_trace_rejected(self, tmp_path):
        p = write_manifest_text(tmp_path, ["u1,a.wav,c1,s1,happy,t.csv"])
        with pytest.raises(DataError, match=":2:"):
            load_manifest(p)

    @pytest.mark.parametrize("row", [
        "u1,a.wav,c1,,happy,",
        "u1,a.wav,c1,s1,bored,",
        "u1,a.wav,c1,s1,,",
        "u1,a.wav,c1,s1",
    ])
    def test_malformed_rows(self, tmp_path, row):
        with pytest.raises(DataError):
            load_manifest(write_manifest_text(tmp_path, [row]))

    def test_bad_header(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("id,path\nu1,a.wav\n")
        with pytest.raises(DataError, match="header"):
            load_manifest(p)

    def test_duplicate_id(self, tmp_path):
        p = write_manifest_text(tmp_path, ["u1,a.wav,c,s,happy,", "u1,b.wav,c,s,sad,"])
        with pytest.raises(DataError, match="duplicate"):
            load_manifest(p)

    def test_missing_file_check(self, tmp_path):
        p = write_manifest_text(tmp_path, ["u1,nope.wav,c,s,happy,"])
        with pytest.raises(DataError, match="not found"):
            load_manifest(p, check_files=True)

    def test_write_round_trip(self, tmp_path):
        recs = [UtteranceRecord("a", tmp_path / "x" / "a.wav", "c", "s", label="sad"),
                UtteranceRecord("b", tmp_path / "b.wav", "c", "t", trace_path=tmp_path / "b.csv")]
        write_manifest(recs, tmp_path / "m.csv")
        back = load_manifest(tmp_path / "m.csv")
        assert [(r.id, r.audio_path.resolve(), r.label) for r in back] == \
            [(r.id, r.audio_path.resolve(), r.label) for r in recs]

    def test_resolve_labels(self, tmp_path):
        write_trace(tmp_path / "t.csv", [TraceSample(0, -0.7, -0.5)])
        recs = [UtteranceRecord("a", tmp_path / "a.wav", "c", "s", trace_path=tmp_path / "t.csv")]
        (r,) = resolve_labels(recs)
        assert r.label == "sad" and r.trace_path is None


class TestReadAudio:
    def _write(self, path, width, channels, frames: bytes, rate=16000):
        with wave.open(str(path), "wb") as fh:
            fh.setnchannels(channels)
            fh.setsampwidth(width)
            fh.setframerate(rate)
            fh.writeframes(frames)

    def test_16bit_scaling(self, tmp_path):
        pcm = np.array([-32768, 0, 16384, 32767], dtype="<i2")
        self._write(tmp_path / "a.wav", 2, 1, pcm.tobytes())
        w = read_audio(tmp_path / "a.wav")
        np.testing.assert_array_equal(w.samples, pcm / 32768.0)
        assert w.samples[0] == -1.0 and w.sample_rate == 16000

    def test_8bit_unsigned(self, tmp_path):
        self._write(tmp_path / "a.wav", 1, 1, bytes([0, 128, 255]), rate=8000)
        w = read_audio(tmp_path / "a.wav")
        np.testing.assert_array_equal(w.samples, [-1.0, 0.0, 127 / 128])
        assert w.sample_rate == 8000

    def test_stereo_first_channel(self, tmp_path):
        pcm = np.array([100, -5, 200, -6], dtype="<i2")
        self._write(tmp_path / "a.wav", 2, 2, pcm.tobytes())
        np.testing.assert_array_equal(read_audio(tmp_path / "a.wav").samples,
                                      [100 / 32768, 200 / 32768])

    def test_unsupported_width(self, tmp_path):
        self._write(tmp_path / "a.wav", 3, 1, bytes(9))
        with pytest.raises(DataError, match="24 bits"):
            read_audio(tmp_path / "a.wav")

    def test_not_wav(self, tmp_path):
        (tmp_path / "a.wav").write_bytes(b"garbage" * 10)
        with pytest.raises(DataError):
            read_audio(tmp_path / "a.wav")

    def test_truncated(self, tmp_path):
        self._write(tmp_path / "a.wav", 2, 1, bytes(200))
        data = (tmp_path / "a.wav").read_bytes()
        (tmp_path / "a.wav").write_bytes(data[:-50])
        with pytest.raises(DataError, match="truncated"):
            read_audio(tmp_path / "a.wav")

    def test_missing(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            read_audio(tmp_path / "none.wav")


def random_manifest(rng, n_corpora=None):
    records = []
    for c in range(n_corpora or int(rng.integers(1, 8))):
        n_spk = int(rng.integers(2, 30))
        for s in range(n_spk):
            for u in range(int(rng.integers(1, 4))):
                records.append(UtteranceRecord(f"c{c}s{s}u{u}", f"c{c}/s{s}/{u}.wav", f"c{c}",
                                               f"s{s}", label=CATEGORIES[int(rng.integers(4))]))
    return records


class TestFolds:
    @pytest.mark.parametrize("n,expected", [(2, (1, 0, 1)), (3, (1, 1, 1)), (4, (1, 1, 2)),
                                            (8, (2, 2, 4)), (10, (2, 2, 6)), (20, (4, 4, 12)),
                                            (51, (10, 10, 31)), (164, (33, 33, 98))])
    def test_split_sizes(self, n, expected):
        assert split_sizes(n) == expected

    def test_ten_speakers(self):
        recs = [UtteranceRecord(f"u{i}", "x.wav", "emodb", f"s{i}", label="happy")
                for i in range(10)]
        plans = make_folds(recs, seed=3)
        assert len(plans) == 5
        tests = []
        for p in plans:
            sp = p.speakers["emodb"]
            assert (len(sp["test"]), len(sp["val"]), len(sp["train"])) == (2, 2, 6)
            tests.extend(sp["test"])
        # rotation enumeration: five disjoint test blocks of two tile the ring
        assert sorted(tests) == sorted(f"s{i}" for i in range(10))

    def test_deterministic_and_seed_dependent(self):
        recs = random_manifest(np.random.default_rng(0), 3)
        a = [p.to_dict() for p in make_folds(recs, 11)]
        assert a == [p.to_dict() for p in make_folds(recs, 11)]
        assert a != [p.to_dict() for p in make_folds(recs, 12)]

    def test_empty_manifest(self):
        with pytest.raises(DataError):
            make_folds([], 0)

    def test_single_speaker_corpus_warns(self, caplog):
        recs = [UtteranceRecord("a", "a.wav", "solo", "only", label="sad"),
                UtteranceRecord("b", "b.wav", "big", "x", label="sad"),
                UtteranceRecord("c", "c.wav", "big", "y", label="sad")]
        plans = make_folds(recs, 0)
        assert "solo" in caplog.text
        assert plans[0].speakers["solo"]["test"] == ["only"]
        assert all(p.speakers["solo"]["train"] == ["only"] for p in plans[1:])

    def test_save_load(self, tmp_path):
        recs = random_manifest(np.random.default_rng(1), 2)
        plan = make_folds(recs, 5)[2]
        plan.save(tmp_path / "fold.json")
        assert FoldPlan.load(tmp_path / "fold.json") == plan
        d = plan.to_dict()
        d["format_version"] = 99
        with pytest.raises(DataError):
            FoldPlan.from_dict(d)

    def test_class_counts_preserved(self):
        recs = random_manifest(np.random.default_rng(2))
        total = {c: sum(r.label == c for r in recs) for c in CATEGORIES}
        label = {r.id: r.label for r in recs}
        for p in make_folds(recs, 1):
            counts = {c: 0 for c in CATEGORIES}
            for ids in p.partitions.values():
                for i in ids:
                    counts[label[i]] += 1
            assert counts == total


class TestSynth:
    def test_counts_and_manifest(self, tmp_path):
        recs = synth_corpus(tmp_path, n_speakers=8, n_utt_per_class=25, seed=1,
                            duration_range=(0.05, 0.1))
        assert len(recs) == 800
        assert len(list(tmp_path.rglob("*.wav"))) == 800
        back = load_manifest(tmp_path / "manifest.csv", check_files=True)
        assert [r.id for r in back] == [r.id for r in recs]

    def test_byte_identical(self, tmp_path):
        for d in ("a", "b"):
            synth_corpus(tmp_path / d, n_speakers=2, n_utt_per_class=2, seed=4)
        files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
        assert files
        for f in files:
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_linear_classifier_beats_chance(self, tmp_path):
        from ser3d.dsp import extract_volume, normalize_speakers

        recs = synth_corpus(tmp_path, n_speakers=4, n_utt_per_class=6, seed=2)
        waves = normalize_speakers([read_audio(r.audio_path, r.speaker_id) for r in recs])
        X = np.stack([extract_volume(w).values.mean(axis=(0, 1)) for w in waves])
        y = np.array([CATEGORIES.index(r.label) for r in recs])
        spk = np.array([r.speaker_id for r in recs])
        train, test = spk != "spk03", spk == "spk03"
        # one-vs-rest least squares on standardised mean log-spectra, held-out speaker
        mu, sd = X[train].mean(0), X[train].std(0) + 1e-9
        A = np.hstack([(X - mu) / sd, np.ones((len(X), 1))])
        W = np.linalg.lstsq(A[train], np.eye(4)[y[train]], rcond=None)[0]
        acc = np.mean((A[test] @ W).argmax(1) == y[test])
        assert acc > 0.5


@pytest.mark.parametrize("seed", range(50))
def test_fold_integrity_random_manifests(seed):
    rng = np.random.default_rng(seed)
    recs = random_manifest(rng)
    plans = make_folds(recs, seed)
    n_by_corpus = {}
    for r in recs:
        n_by_corpus.setdefault(r.corpus_id, set()).add(r.speaker_id)
    for p in plans:
        for corpus, parts in p.speakers.items():
            sets = [set(parts[k]) for k in ("train", "val", "test")]
            for a, b in itertools.combinations(sets, 2):
                assert not a & b
            assert set().union(*sets) == n_by_corpus[corpus]
            t, v, tr = split_sizes(len(n_by_corpus[corpus]))
            assert (len(parts["test"]), len(parts["val"]), len(parts["train"])) == (t, v, tr)
        for r in recs:
            part = p.partition_of(r.corpus_id, r.speaker_id)
            assert r.id in p.partitions[part]
