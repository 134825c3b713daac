import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dash_ensemble.data import (
    Dataset, gen_spirals, gen_two_moons, load_delimited, save_delimited, split, standardize,
)
from dash_ensemble.errors import (
    DataError, EmptyFileError, NonNumericCellError, ParameterError, RaggedRowError,
)


def test_two_moons_small_exact():
    ds = gen_two_moons(4, 0.0)
    expect = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 0.5], [2.0, 0.5]])
    assert np.allclose(ds.inputs, expect, atol=1e-15)
    assert ds.labels.tolist() == [0, 0, 1, 1] and ds.n_classes == 2


def test_two_moons_parametric():
    ds = gen_two_moons(200, 0.0)
    up = ds.inputs[ds.labels == 0]
    low = ds.inputs[ds.labels == 1]
    assert np.all(np.abs(up[:, 0] ** 2 + up[:, 1] ** 2 - 1) < 1e-12) and np.all(up[:, 1] >= -1e-12)
    assert np.all(np.abs((1 - low[:, 0]) ** 2 + (0.5 - low[:, 1]) ** 2 - 1) < 1e-12)
    with pytest.raises(ParameterError):
        gen_two_moons(5)


def test_generators_deterministic():
    assert gen_two_moons(50, 0.2, seed=3).inputs.tobytes() == gen_two_moons(50, 0.2, seed=3).inputs.tobytes()
    assert gen_two_moons(50, 0.2, seed=3).inputs.tobytes() != gen_two_moons(50, 0.2, seed=4).inputs.tobytes()
    a, b = gen_spirals(60, 1.0, 0.1, 3, seed=1), gen_spirals(60, 1.0, 0.1, 3, seed=1)
    assert a.inputs.tobytes() == b.inputs.tobytes()


def test_spirals_parametric_and_balanced():
    ds = gen_spirals(4, 1.0, 0.0, 2)
    for x, y in zip(ds.inputs, ds.labels):
        r = math.hypot(*x)
        assert r in (0.5, 1.0) or abs(r - 0.5) < 1e-15 or abs(r - 1.0) < 1e-15
        angle = 2 * math.pi * (r + y / 2)
        assert abs(x[0] - r * math.cos(angle)) < 1e-12 and abs(x[1] - r * math.sin(angle)) < 1e-12
    ds = gen_spirals(300, 1.5, 0.0, 5)
    assert np.bincount(ds.labels).tolist() == [60] * 5
    with pytest.raises(ParameterError):
        gen_spirals(10, classes=1)
    with pytest.raises(ParameterError):
        gen_spirals(10, classes=3)


def test_save_load_round_trip(tmp_path):
    ds = Dataset(np.array([[0.1, -2.5], [1e-17, 3.0], [math.pi, 7.0]]), [0, 1, 1], 2)
    path = tmp_path / "d.csv"
    save_delimited(ds, path)
    back = load_delimited(path)
    assert back.inputs.tobytes() == ds.inputs.tobytes()
    assert back.labels.tolist() == [0, 1, 1] and back.header == ["x0", "x1", "label"]
    save_delimited(back, tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_bytes() == path.read_bytes()


def test_string_labels_first_appearance(tmp_path):
    path = tmp_path / "pets.tsv"
    path.write_text("1.0\tcat\n2.0\tdog\n3.0\tcat\n")
    ds = load_delimited(path, delimiter="\t")
    assert ds.labels.tolist() == [0, 1, 0] and ds.label_names == ["cat", "dog"]
    ds = load_delimited(path, delimiter="\t", label_names=["dog", "cat"])
    assert ds.labels.tolist() == [1, 0, 1]


def test_label_column_by_name_and_index(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("y,a,b\n1,0.5,0.25\n0,1.5,2.5\n")
    ds = load_delimited(path, label_column="y")
    assert ds.labels.tolist() == [1, 0] and ds.inputs.tolist() == [[0.5, 0.25], [1.5, 2.5]]
    assert load_delimited(path, label_column=0).labels.tolist() == [1, 0]


def test_parse_matches_naive_oracle(tmp_path):
    rng = np.random.default_rng(0)
    lines = []
    for _ in range(100):
        vals = rng.normal(size=3) * 10.0 ** rng.integers(-5, 5)
        lines.append(",".join(f"{v:.10g}" for v in vals) + f",{rng.choice(['a', 'b', 'c'])}")
    path = tmp_path / "d.csv"
    path.write_text("\n".join(lines) + "\n")
    ds = load_delimited(path)
    seen = {}
    for r, line in enumerate(path.read_text().splitlines()):
        cells = line.split(",")
        assert ds.inputs[r].tolist() == [float(c) for c in cells[:-1]]
        assert ds.labels[r] == seen.setdefault(cells[-1], len(seen))


def test_distinct_load_errors(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(EmptyFileError, match="empty.csv"):
        load_delimited(empty)
    ragged = tmp_path / "ragged.csv"
    ragged.write_text("1,2,0\n3,1\n")
    with pytest.raises(RaggedRowError, match="row 2"):
        load_delimited(ragged)
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2,0\n3,oops,1\n")
    with pytest.raises(NonNumericCellError) as info:
        load_delimited(bad)
    assert info.value.row == 2 and info.value.column == 2
    header_only = tmp_path / "h.csv"
    header_only.write_text("a,b,label\n")
    with pytest.raises(EmptyFileError):
        load_delimited(header_only)


def test_split_sizes():
    ds = gen_two_moons(10)
    tr, va, te = split(ds, (0.8, 0.1, 0.1), seed=0)
    assert (len(tr), len(va), len(te)) == (8, 1, 1)
    tr, va, te = split(ds, (1.0, 0.0, 0.0))
    assert len(tr) == 10 and va is None and te is None
    tr, va, te = split(gen_two_moons(14), (0.5, 0.25, 0.25))
    assert (len(tr), len(va), len(te)) == (8, 3, 3)
    with pytest.raises(ParameterError):
        split(ds, (0.5, 0.2, 0.2))


def _row_ids(part):
    return [] if part is None else [tuple(r) for r in part.inputs]


@settings(max_examples=50, deadline=None)
@given(n=st.integers(2, 80).map(lambda k: 2 * k), a=st.floats(0.05, 0.9), seed=st.integers(0, 1000),
       stratified=st.booleans())
def test_split_is_disjoint_cover(n, a, seed, stratified):
    ds = gen_two_moons(n, 0.3, seed=seed)
    rest = 1.0 - a
    try:
        parts = split(ds, (a, rest / 2, rest / 2), seed=seed, stratified=stratified)
    except DataError:
        return
    rows = sum((_row_ids(p) for p in parts), [])
    assert sorted(rows) == sorted(tuple(r) for r in ds.inputs)


def test_stratified_balance():
    ds = gen_two_moons(200, 0.1)
    for seed in range(5):
        for part in split(ds, (0.7, 0.15, 0.15), seed=seed, stratified=True):
            counts = np.bincount(part.labels, minlength=2)
            assert abs(counts[0] - counts[1]) <= 1
    tiny = Dataset(np.zeros((4, 1)), [0, 0, 0, 1], 2)
    with pytest.raises(DataError):
        split(tiny, (0.5, 0.25, 0.25), stratified=True)


def test_standardize_uses_train_statistics():
    tr = Dataset(np.array([[0.0, 1.0], [2.0, 1.0]]), [0, 1], 2)
    te = Dataset(np.array([[4.0, 3.0]]), [0], 2)
    a, b = standardize(tr, te)
    assert a.inputs.tolist() == [[-1.0, 0.0], [1.0, 0.0]]
    assert b.inputs.tolist() == [[3.0, 2.0]]
