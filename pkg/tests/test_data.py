import numpy as np
import pytest

from dpaudit.data import (
    DataFormatError,
    Dataset,
    SynthSpec,
    load_dataset,
    save_dataset,
    synth_dataset,
    train_test_split,
)
from dpaudit.numerics import RngStream


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


class TestCsv:
    def test_six_rows(self, tmp_path):
        rows = "\n".join(f"{i}.5,{i},-{i},{i % 2}" for i in range(6))
        data = load_dataset(write(tmp_path, "a,b,c,label\n" + rows + "\n"))
        assert (data.n, data.d, data.class_count) == (6, 3, 2)
        np.testing.assert_array_equal(data.labels, [0, 1, 0, 1, 0, 1])

    def test_label_column_anywhere(self, tmp_path):
        data = load_dataset(write(tmp_path, "label,x\n1,0.25\n0,0.5\n"))
        np.testing.assert_array_equal(data.features, [[0.25], [0.5]])

    def test_round_trip(self, tmp_path):
        data = synth_dataset(SynthSpec(n=40, d=5), RngStream(0))
        save_dataset(data, tmp_path / "rt.csv")
        back = load_dataset(tmp_path / "rt.csv")
        np.testing.assert_array_equal(back.features, data.features)
        assert back == data

    @pytest.mark.parametrize("body,line", [
        ("x,label\n1,0\n2\n", 3),
        ("x,label\n1,0\nfoo,1\n", 3),
        ("x,label\n1,0\n1,0\n2,0.5\n", 4),
        ("x,label\n1,-1\n", 2),
        ("x,label\nnan,0\n", 2),
    ])
    def test_rejects_with_line_number(self, tmp_path, body, line):
        with pytest.raises(DataFormatError, match=f":{line}:"):
            load_dataset(write(tmp_path, body))

    def test_unknown_label_with_fixed_classes(self, tmp_path):
        with pytest.raises(DataFormatError, match=":3:"):
            load_dataset(write(tmp_path, "x,label\n1,0\n2,5\n"), class_count=2)

    def test_missing_label_column(self, tmp_path):
        with pytest.raises(DataFormatError):
            load_dataset(write(tmp_path, "x,y\n1,0\n"))


class TestSynthetic:
    def test_balanced(self):
        data = synth_dataset(SynthSpec(n=6000, d=4), RngStream(1))
        assert np.bincount(data.labels).tolist() == [3000, 3000]

    def test_separation_on_first_axis(self):
        data = synth_dataset(SynthSpec(n=4000, d=3, separation=4.0), RngStream(2))
        m1 = data.features[data.labels == 1].mean(axis=0)
        m0 = data.features[data.labels == 0].mean(axis=0)
        assert m1[0] - m0[0] == pytest.approx(4.0, abs=0.15)
        np.testing.assert_allclose(m1[1:] - m0[1:], 0, atol=0.15)

    def test_images_have_dark_border(self):
        spec = SynthSpec(kind="images", n=20)
        data = synth_dataset(spec, RngStream(3))
        imgs = data.features.reshape(20, 28, 28)
        assert data.d == 784
        assert imgs[:, :6, :].max() == 0 and imgs[:, :, :6].max() == 0
        assert 0 <= data.features.min() and data.features.max() <= 1

    def test_spec_parse(self):
        spec = SynthSpec.parse("gauss:n=50,d=7,separation=2.5")
        assert (spec.n, spec.d, spec.separation) == (50, 7, 2.5)
        assert SynthSpec.parse(spec.to_string()) == spec
        with pytest.raises(ValueError):
            SynthSpec.parse("gauss:bogus=1")

    def test_deterministic(self):
        a = synth_dataset(SynthSpec(n=30), RngStream(9, 1))
        b = synth_dataset(SynthSpec(n=30), RngStream(9, 1))
        assert a == b


class TestDataset:
    def test_validation(self):
        with pytest.raises(ValueError):
            Dataset(np.zeros((3, 2)), np.array([0, 1]), 2)
        with pytest.raises(ValueError):
            Dataset(np.zeros((2, 2)), np.array([0, 2]), 2)

    def test_immutable(self):
        data = Dataset(np.zeros((2, 2)), np.array([0, 1]), 2)
        with pytest.raises(ValueError):
            data.features[0, 0] = 1.0

    def test_replace_rows_and_diff(self):
        data = Dataset(np.zeros((5, 2)), np.zeros(5, dtype=int), 2)
        other = data.replace_rows([1, 3], np.ones((2, 2)), [1, 1])
        np.testing.assert_array_equal(data.differing_rows(other), [1, 3])

    def test_split_partitions(self):
        data = synth_dataset(SynthSpec(n=100, d=2), RngStream(0))
        tr, te = train_test_split(data, 0.2, RngStream(0, 1))
        assert (tr.n, te.n) == (80, 20)
        both = np.vstack([tr.features, te.features])
        assert sorted(map(tuple, both)) == sorted(map(tuple, data.features))
