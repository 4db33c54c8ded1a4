from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gakp.errors import FormatError, InputError
from gakp.motio import (
    MotTable, SyntheticSceneConfig, combine_reports, evaluate, format_csv, format_table, generate_synthetic, mota,
    read_detections, read_ground_truth, write_results, write_table,
)
from gakp.motio.io import format_row


def test_parse_example_line(tmp_path):
    p = tmp_path / "det.txt"
    p.write_text("1,-1,10.0,20.0,30.0,40.0,0.9,-1,-1,-1\n")
    t = read_detections(p)
    assert t.frames.tolist() == [1]
    np.testing.assert_array_equal(t.boxes[0], [10, 20, 30, 40])
    assert t.conf[0] == 0.9


def test_empty_file(tmp_path):
    p = tmp_path / "det.txt"
    p.write_text("")
    t = read_detections(p)
    assert len(t) == 0 and t.frame_groups() == {}


def test_malformed_lines_report_line_number(tmp_path):
    cases = ["1,-1,10,20,30\n", "1,-1,10,20,abc,40,1\n", "0,-1,10,20,30,40,1\n", "1,-1,10,20,0,40,1\n",
             "1,-1,10,20,30,nan,1\n"]
    for text in cases:
        p = tmp_path / "bad.txt"
        p.write_text("1,-1,1,1,1,1,1,-1,-1,-1\n" + text)
        with pytest.raises(FormatError, match=":2:"):
            read_detections(p)
    with pytest.raises(InputError):
        read_detections(tmp_path / "missing.txt")


def test_unsorted_frames_and_ignored_gt(tmp_path):
    p = tmp_path / "gt.txt"
    p.write_text("3,1,0,0,10,10,1,-1,-1,-1\n1,2,0,0,10,10,1,-1,-1,-1\n2,1,0,0,10,10,0,-1,-1,-1\n")
    t = read_ground_truth(p)
    assert t.frames.tolist() == [1, 3]
    assert len(read_ground_truth(p, drop_ignored=False)) == 3


def test_round_trip_10k_lines_byte_identical(tmp_path):
    rng = np.random.default_rng(0)
    n = 10_000
    data = np.column_stack([np.sort(rng.integers(1, 500, n)), -np.ones(n), rng.uniform(0, 1900, (n, 2)),
                            rng.uniform(1, 300, (n, 2)), rng.uniform(0, 1, n), -np.ones((n, 3))])
    src = tmp_path / "a.txt"
    src.write_text("".join(format_row(r) + "\n" for r in data))
    first = src.read_bytes()
    dst = tmp_path / "b.txt"
    write_table(read_detections(src), dst)
    assert dst.read_bytes() == first
    assert len(first.splitlines()) == n


def test_write_results_format_and_order(tmp_path):
    p = tmp_path / "res.txt"
    write_results([], p)
    assert p.read_text() == ""
    write_results([(2, 5, 1, 2, 3, 4), (1, 7, 1.005, 2, 3, 4), (1, 3, 0, 0, 10, 20)], p)
    assert p.read_text().splitlines() == ["1,3,0.00,0.00,10.00,20.00,1,-1,-1,-1",
                                         "1,7,1.00,2.00,3.00,4.00,1,-1,-1,-1",
                                         "2,5,1.00,2.00,3.00,4.00,1,-1,-1,-1"]
    before = p.read_bytes()
    write_results(read_ground_truth(p), p)
    assert p.read_bytes() == before


def test_synthetic_noise_free_limit():
    cfg = SyntheticSceneConfig(miss_probability=0, occlusion_miss_probability=0, false_positive_rate=0,
                               detection_noise_sigma=0, seed=4)
    gt, det = generate_synthetic(cfg)
    order = np.lexsort((det.boxes[:, 0], det.frames))
    g = np.lexsort((gt.boxes[:, 0], gt.frames))
    np.testing.assert_array_equal(det.boxes[order], gt.boxes[g])
    assert det.identities.tolist() == [i for i in det.identities if i > 0]


def test_synthetic_miss_rate_binomial():
    cfg = SyntheticSceneConfig(num_identities=120, num_frames=150, lifetime_range=(100, 150), miss_probability=0.1,
                               occlusion_miss_probability=0, false_positive_rate=0, seed=7)
    gt, det = generate_synthetic(cfg)
    assert len(gt) >= 10_000
    dropped = 1 - len(det) / len(gt)
    assert abs(dropped - 0.1) <= 0.01


def test_synthetic_deterministic(tmp_path):
    from gakp.motio import write_scene
    a = write_scene(SyntheticSceneConfig(seed=3), tmp_path / "a")
    b = write_scene(SyntheticSceneConfig(seed=3), tmp_path / "b")
    for name in ("gt.txt", "det.txt", "det.emb", "scene.cfg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert len(a[0]) and len(b[1])
    with pytest.raises(InputError):
        SyntheticSceneConfig(miss_probability=1.5)


def rows_table(rows):
    rows = np.array(rows, dtype=float).reshape(-1, 6)
    return MotTable.from_rows(rows[:, 0], rows[:, 1], rows[:, 2:6])


def box1(f):
    return (100 + 10 * f, 100, 50, 100)


def box2(f):
    return (900 - 10 * f, 400, 50, 100)


def hand_scenario():
    gt = [(f, 1, *box1(f)) for f in range(1, 11)] + [(f, 2, *box2(f)) for f in range(1, 9)]
    hyp = []
    for f in range(1, 11):
        if f != 4:
            l, t, w, h = box1(f)
            hyp.append((f, 1, l + 10, t, w, h))  # IoU 2/3 with id1
    hyp += [(f, 2, *box2(f)) for f in range(1, 6)]
    hyp += [(f, 3, *box2(f)) for f in range(6, 9)] + [(9, 3, *box2(8))]
    hyp += [(3, 5, *box1(3)), (7, 9, 1500, 900, 50, 100)]
    return rows_table(gt), rows_table(hyp)


def test_hand_computed_clear_oracle():
    gt, hyp = hand_scenario()
    r = evaluate(gt, hyp)
    assert (r.num_gt, r.num_hyp) == (18, 20)
    assert (r.fp, r.fn, r.ids, r.frag) == (3, 1, 1, 1)
    assert (r.mt, r.ml, r.num_gt_ids) == (2, 0, 2)
    assert r.mota == 1 - 5 / 18
    assert r.idtp == 14
    assert abs(r.idf1 - 28 / 38) < 1e-15
    assert abs(r.idp - 14 / 20) < 1e-15 and abs(r.idr - 14 / 18) < 1e-15
    assert abs(r.motp - (9 * 2 / 3 + 8) / 17) < 1e-12


def test_mota_arithmetic():
    assert abs(mota(5, 10, 2, 100) - 0.83) < 1e-15
    assert np.isnan(mota(0, 0, 0, 0))


def test_perfect_results():
    gt, _ = generate_synthetic(SyntheticSceneConfig(num_frames=40, seed=1))
    r = evaluate(gt, gt)
    assert (r.mota, r.idf1, r.ids, r.fp, r.fn, r.ml) == (1.0, 1.0, 0, 0, 0, 0)
    assert r.mt == r.num_gt_ids == len(set(gt.ids))


@given(st.integers(0, 2**31 - 1), st.integers(1, 30))
def test_removing_true_boxes_adds_fn(seed, k):
    gt, _ = generate_synthetic(SyntheticSceneConfig(num_frames=30, num_identities=8, seed=seed % 1000))
    rng = np.random.default_rng(seed)
    k = min(k, len(gt))
    keep = np.sort(rng.choice(len(gt), len(gt) - k, replace=False))
    r = evaluate(gt, gt.subset(keep))
    assert (r.fn, r.fp, r.ids) == (k, 0, 0)


@given(st.integers(1, 50), st.integers(0, 20), st.integers(0, 20), st.integers(0, 20),
       st.sampled_from(["fp", "fn", "ids"]))
def test_mota_strictly_decreasing(n, fp, fn, ids, which):
    base = mota(fp, fn, ids, n)
    more = mota(fp + (which == "fp"), fn + (which == "fn"), ids + (which == "ids"), n)
    assert more < base


def test_frame_mismatch_rejected():
    gt = rows_table([(1, 1, 0, 0, 10, 10)])
    with pytest.raises(InputError):
        evaluate(gt, rows_table([(5, 1, 0, 0, 10, 10)]))
    with pytest.raises(InputError):
        evaluate(rows_table([]), gt)


def test_combine_reports_pools_counts():
    gt, hyp = hand_scenario()
    a = replace(evaluate(gt, hyp), hz=10.0)
    b = replace(evaluate(gt, gt), hz=30.0)
    c = combine_reports([a, b])
    assert (c.fp, c.fn, c.ids, c.num_gt, c.num_hyp, c.mt) == (3, 1, 1, 36, 38, 4)
    assert c.mota == 1 - 5 / 36
    assert abs(c.idf1 - 2 * (14 + 18) / (36 + 38)) < 1e-15
    assert abs(c.hz - 15.0) < 1e-12
    assert abs(c.motp - (17 * a.motp + 18 * 1.0) / 35) < 1e-12
    single = combine_reports([a])
    assert (single.mota, single.idf1, single.fp) == (a.mota, a.idf1, a.fp)
    with pytest.raises(InputError):
        combine_reports([])


def test_report_formats():
    gt, hyp = hand_scenario()
    r = evaluate(gt, hyp, hz=12.5)
    csv = format_csv([r], ["implicit"]).splitlines()
    assert csv[0] == "tracker,MOTA,IDF1,MT,ML,FP,FN,IDs,Frag,Hz"
    assert csv[1].startswith("implicit,0.722222,0.736842,2,0,3,1,1,1,12.500")
    table = format_table([r], ["implicit"]).splitlines()
    assert table[0].split()[:3] == ["Tracker", "MOTA", "IDF1"]
    assert "72.2" in table[2]
