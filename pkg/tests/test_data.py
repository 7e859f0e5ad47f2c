import struct

import numpy as np
import pytest

from condfilter.data import (
    EmbeddingDataError,
    EmbeddingFormatError,
    EmbeddingLengthError,
    EmbeddingSet,
    RunReport,
    ScoredSelection,
    load_embeddings,
    load_labels,
    read_selection,
    save_embeddings,
    save_labels,
    select_indices,
    write_selection,
)


def _emb1(count, dim, values):
    return struct.pack("<4sII", b"EMB1", count, dim) + struct.pack(f"<{len(values)}f", *values)


def test_load_binary_direct_encoding(tmp_path):
    p = tmp_path / "a.emb"
    p.write_bytes(_emb1(2, 3, [1, 2, 3, 4, 5, 6]))
    emb = load_embeddings(p)
    assert (emb.count, emb.dim) == (2, 3)
    np.testing.assert_array_equal(emb.data, [[1, 2, 3], [4, 5, 6]])


def test_load_csv(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("1.0,2.0\n3.0,4.0")
    emb = load_embeddings(p, "csv")
    assert (emb.count, emb.dim) == (2, 2)
    np.testing.assert_array_equal(emb.data, [[1, 2], [3, 4]])


@pytest.mark.parametrize("pos", [0, 3, 5])
def test_nan_anywhere_is_data_error(tmp_path, pos):
    vals = [1.0] * 6
    vals[pos] = float("nan")
    p = tmp_path / "a.emb"
    p.write_bytes(_emb1(2, 3, vals))
    with pytest.raises(EmbeddingDataError):
        load_embeddings(p)


def test_csv_nan_and_inf_rejected(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("1,nan\n")
    with pytest.raises(EmbeddingDataError):
        load_embeddings(p, "csv")
    p.write_text("inf,1\n")
    with pytest.raises(EmbeddingDataError):
        load_embeddings(p, "csv")


def test_bad_magic_and_truncation(tmp_path):
    p = tmp_path / "a.emb"
    p.write_bytes(b"EMB2" + _emb1(1, 1, [0.0])[4:])
    with pytest.raises(EmbeddingFormatError):
        load_embeddings(p)
    p.write_bytes(_emb1(2, 3, [1, 2, 3, 4, 5]))
    with pytest.raises(EmbeddingLengthError):
        load_embeddings(p)
    p.write_bytes(b"EM")
    with pytest.raises(EmbeddingFormatError):
        load_embeddings(p)


def test_roundtrip_single_value(tmp_path):
    emb = EmbeddingSet(np.array([[0.5]], dtype=np.float32))
    save_embeddings(emb, tmp_path / "x.emb")
    assert load_embeddings(tmp_path / "x.emb").equals(emb)


def test_roundtrip_large_random_is_bitwise(tmp_path):
    data = np.random.default_rng(7).standard_normal((1000, 128)).astype(np.float32)
    emb = EmbeddingSet(data)
    save_embeddings(emb, tmp_path / "x.emb")
    back = load_embeddings(tmp_path / "x.emb")
    assert back.data.tobytes() == data.tobytes()
    raw = (tmp_path / "x.emb").read_bytes()
    assert raw[12:] == data.astype("<f4").tobytes()


def test_roundtrip_empty(tmp_path):
    emb = EmbeddingSet.empty(4)
    save_embeddings(emb, tmp_path / "e.emb")
    back = load_embeddings(tmp_path / "e.emb")
    assert back.count == 0 and back.dim == 4
    assert (tmp_path / "e.emb").stat().st_size == 12


def test_roundtrip_extreme_floats(tmp_path):
    vals = np.array([[np.finfo(np.float32).max, np.finfo(np.float32).tiny, -0.0, 1e-45]], dtype=np.float32)
    save_embeddings(EmbeddingSet(vals), tmp_path / "x.emb")
    assert load_embeddings(tmp_path / "x.emb").data.tobytes() == vals.tobytes()


def test_labels_roundtrip_and_length_check(tmp_path):
    save_labels([3, -1, 7], tmp_path / "l.lbl")
    np.testing.assert_array_equal(load_labels(tmp_path / "l.lbl"), [3, -1, 7])
    with pytest.raises(EmbeddingDataError):
        EmbeddingSet(np.zeros((2, 1)), labels=[1, 2, 3])


def test_embedding_set_is_immutable():
    emb = EmbeddingSet(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        emb.data[0, 0] = 1.0


def test_write_selection_format(tmp_path):
    sel = ScoredSelection(np.arange(10.0), [0, 5, 9], 3, "cluster_min", 0, "ascending")
    write_selection(sel, tmp_path / "s.txt")
    assert (tmp_path / "s.txt").read_text() == "0\n5\n9\n"
    np.testing.assert_array_equal(read_selection(tmp_path / "s.txt"), [0, 5, 9])


def test_report_counts_selected(tmp_path):
    sel = ScoredSelection(np.array([3.0, 1.0, 2.0]), [2], 1, "domain", 5, "descending")
    write_selection(sel, tmp_path / "s.txt", tmp_path / "r.json")
    report = RunReport.from_text((tmp_path / "r.json").read_text())
    assert report.selected_count == 1
    assert report.score_min <= report.score_mean <= report.score_max
    assert report.to_text() == (tmp_path / "r.json").read_text()


def test_select_indices_orientation_and_ties():
    scores = [1.0, 0.0, 1.0, 0.0, 2.0]
    assert select_indices(scores, 3, "ascending")[0].tolist() == [0, 1, 3]
    assert select_indices(scores, 2, "descending")[0].tolist() == [0, 4]


def test_select_indices_clamps_and_rejects_zero():
    sel, clamped = select_indices([1.0, 2.0], 5, "ascending")
    assert sel.tolist() == [0, 1] and clamped
    with pytest.raises(ValueError):
        select_indices([1.0], 0, "ascending")
