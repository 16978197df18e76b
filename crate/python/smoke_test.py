"""Smoke test for the octdyn extension module.

Build the module first:

    cargo build --release -p octdyn-py --features extension-module
    cp target/release/liboctdyn.so python/octdyn.so

then run `python3 python/smoke_test.py` from the repository root.
"""

import math
import os
import random
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import octdyn  # noqa: E402


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def hole_scan(width=64, height=40):
    rows = [[0] * width for _ in range(height)]
    for c in range(width):
        rows[30][c] = 7  # ELM
        rows[32][c] = 8  # EZ
        rows[34][c] = 9  # RPE
    for r in range(10, 30):
        half = 4 + (r - 10) // 3
        for c in range(32 - half, 32 + half + 1):
            rows[r][c] = 1
    for c in range(26, 39):
        rows[32][c] = 0
    return rows


def check_scan():
    rows = hole_scan()
    scan = octdyn.LabeledScan(rows, spacing=(10.0, 4.0), orientation="H")
    assert (scan.width, scan.height) == (64, 40)
    assert scan.rows() == rows
    assert scan.count(1) == scan.count("MacularHole") > 0
    m = scan.measure()
    hole = m["hole"]
    assert hole["hole_present"]
    assert hole["bd_um"] >= hole["mld_um"] > 0
    assert close(m["composite"]["mhi"], hole["height_um"] / hole["bd_um"])
    assert not m["ez"]["band_absent"] and m["ez"]["defect_um"] > 0

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "scan.png")
        scan.save(path)
        again = octdyn.LabeledScan.load(path, spacing=(10.0, 4.0))
        assert again.rows() == rows

    fv = octdyn.extract_features("E1", "PRE", [scan])
    assert fv["eye_id"] == "E1" and close(fv["mld_um"], hole["mld_um"])
    print("scan + morphometry ok:", repr(scan))


def check_dynamics():
    ci = octdyn.composite_indices(400.0, 800.0, 900.0, 400.0)
    assert close(ci["mhi"], 0.5) and close(ci["thi"], 1.0) and close(ci["dhi"], 0.5)
    assert octdyn.composite_indices(0.0, 800.0, 900.0, 400.0)["dhi"] is None
    day = octdyn.resolution_day({"PRE": 500.0, "W2": 200.0, "M3": 0.0, "M6": 0.0, "M12": 0.0})
    assert day is not None and day > 0
    assert octdyn.resolution_day({"PRE": 500.0, "W2": 200.0, "M3": 100.0}) is None
    assert close(octdyn.recovery_rate(300.0, day), 300.0 / day)
    print("dynamics ok: resolved on day", day)


def check_stats():
    rng = random.Random(7)
    x, y = [], []
    for _ in range(300):
        a, b = rng.gauss(0, 1), rng.gauss(0, 1)
        p = 1 / (1 + math.exp(-(0.3 + 1.2 * a - 0.8 * b)))
        x.append([a, b])
        y.append(rng.random() < p)
    fit = octdyn.fit_logistic(x, y, names=["a", "b"])
    assert fit["converged"]
    coef = {t["name"]: t["b"] for t in fit["terms"]}
    assert coef["a"] > 0.5 and coef["b"] < -0.3, coef

    or_, lo, hi = octdyn.odds_ratio(0.5, 0.1)
    assert close(or_, math.exp(0.5)) and lo < or_ < hi

    w, p = octdyn.shapiro_wilk([rng.gauss(0, 1) for _ in range(50)])
    assert 0.8 < w <= 1.0 and 0.0 <= p <= 1.0

    r = octdyn.roc([0.1, 0.4, 0.35, 0.8], [False, False, True, True])
    assert close(r["auc"], 0.75)

    cols = [("u", [rng.gauss(0, 1) for _ in range(100)])]
    cols.append(("v", [u + 0.1 * rng.gauss(0, 1) for u in cols[0][1]]))
    vifs = dict(octdyn.vif(cols))
    assert vifs["u"] > 10 and vifs["v"] > 10
    print("stats ok: auc", r["auc"], "vif", {k: round(v, 1) for k, v in vifs.items()})


def check_segmetrics():
    m = octdyn.binary_metrics([True, True, False, False], [True, False, True, False])
    assert close(m["dice"], 0.5) and close(m["iou"], 1 / 3) and close(m["accuracy"], 0.5)
    truth = octdyn.LabeledScan(hole_scan())
    rows = hole_scan()
    rows[15][32] = 0
    pred = octdyn.LabeledScan(rows)
    report = octdyn.segmentation_report([pred], [truth])
    assert isinstance(report, (dict, list))
    assert octdyn.outcome(40, 60) == (True, 20)
    assert octdyn.outcome(40, 55) == (False, 15)
    assert octdyn.outcome(40, 55, threshold=15) == (True, 15)
    print("segmetrics ok")


def check_fusion():
    model = octdyn.FusionModel(clinical_dim=3, values_dim=4, seed=1, zero_init_classifier=True)
    assert model.n_parameters > 0
    assert model.config["d_model"] == 16
    image = [[(r * c % 7) / 7 for c in range(32)] for r in range(32)]
    p = model.predict(image, [66.0, 150.0, 23.5], [1.0, 2.0, 3.0, 4.0])
    assert close(p, 0.5), p

    model = octdyn.FusionModel(clinical_dim=3, values_dim=4, seed=1)
    p = model.predict(image, [66.0, 150.0, 23.5], [1.0, 2.0, 3.0, 4.0])
    assert 0.0 < p < 1.0
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "model.json")
        model.save(path)
        again = octdyn.FusionModel.load(path)
        assert again.predict(image, [66.0, 150.0, 23.5], [1.0, 2.0, 3.0, 4.0]) == p
    print("fusion ok: p =", round(p, 4), "params", model.n_parameters)


def check_errors():
    for bad in (
        lambda: octdyn.LabeledScan([[0, 1], [0]]),
        lambda: octdyn.LabeledScan([[42]]),
        lambda: octdyn.recovery_rate(1.0, 0),
        lambda: octdyn.roc([0.1, 0.2], [True, True]),
    ):
        try:
            bad()
        except ValueError:
            continue
        raise AssertionError("expected ValueError")
    print("errors ok")


if __name__ == "__main__":
    print("octdyn", octdyn.__version__)
    check_scan()
    check_dynamics()
    check_stats()
    check_segmetrics()
    check_fusion()
    check_errors()
    print("all smoke checks passed")
