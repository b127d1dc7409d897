import dataclasses
import math

import numpy as np
import pytest

from twohead import (ConfigError, UNKNOWN, UsageError, boundary_grid,
                     divergence_density, evaluate, init_model, predict,
                     scott_bandwidth)
from twohead.evaluation import density_to_csv, write_boundary_svg
from twohead.rng import make_rng


def _zeroed(model):
    for _, layer in model.named_layers():
        layer.weight[:] = 0.0
        layer.bias[:] = 0.0
    return model


def _agreeing(model, cls=0, strength=25.0):
    """Zero weights, then bias both heads toward one class."""
    _zeroed(model)
    model.head1[-1].bias[cls] = strength
    model.head2[-1].bias[cls] = strength
    return model


def test_predict_confident_agreeing_heads():
    m = _agreeing(init_model([2, 8, 8, 8], 3, seed=1), cls=1)
    labels, l_crs = predict(m, np.zeros((4, 2)), delta=math.log(3))
    assert np.all(labels == 1)
    assert l_crs.max() < 1e-6


def test_predict_uniform_pair_is_unknown():
    m = _zeroed(init_model([2, 8, 8, 8], 3, seed=1))
    labels, l_crs = predict(m, np.zeros((3, 2)), delta=math.log(3))
    # uniform heads: crs = 2 ln C, twice the threshold
    assert np.allclose(l_crs, 2.0 * math.log(3), atol=1e-9)
    assert np.all(labels == UNKNOWN)


def test_predict_disagreeing_heads_rejected():
    m = _zeroed(init_model([2, 8, 8, 8], 3, seed=1))
    m.head1[-1].bias[0] = 30.0
    m.head2[-1].bias[1] = 30.0
    labels, l_crs = predict(m, np.zeros((2, 2)), delta=math.log(3))
    assert np.all(labels == UNKNOWN)
    assert l_crs.min() > 10.0


def test_predict_tie_breaks_low_index():
    m = _zeroed(init_model([2, 8, 8, 8], 3, seed=1))
    m.head1[-1].bias[:] = [5.0, 5.0, 0.0]
    m.head2[-1].bias[:] = [5.0, 5.0, 0.0]
    labels, _ = predict(m, np.zeros((1, 2)), delta=10.0)
    assert labels[0] == 0


def test_evaluate_all_unknown_gives_one_third(toy_data):
    _, target = toy_data
    m = _zeroed(init_model([2, 8, 8, 8], 3, seed=1))
    report = evaluate(m, target, delta=math.log(3))
    assert set(report.per_class_accuracy) == {0, 1, UNKNOWN}
    assert report.per_class_accuracy[UNKNOWN] == 1.0
    assert report.per_class_accuracy[0] == 0.0
    assert abs(report.average_accuracy - 1.0 / 3.0) < 1e-12


def test_evaluate_averages_c_plus_one(reference_run, toy_data):
    _, report, _ = reference_run
    vals = list(report.per_class_accuracy.values())
    assert len(vals) == 3
    assert abs(report.average_accuracy - np.mean(vals)) < 1e-12
    assert all(0.0 <= v <= 1.0 for v in vals)
    assert report.common_divergences.size == 600
    assert report.private_divergences.size == 300


def test_evaluate_without_private_warns(toy_data):
    _, target = toy_data
    keep = target.true_labels != 3
    common_only = dataclasses.replace(
        target, features=target.features[keep], true_labels=target.true_labels[keep])
    m = _agreeing(init_model([2, 8, 8, 8], 3, seed=1))
    with pytest.warns(UserWarning):
        report = evaluate(m, common_only, delta=math.log(3))
    assert set(report.per_class_accuracy) == {0, 1}


def test_scott_bandwidth_frozen_value():
    rng = make_rng(0, "kde")
    v = rng.normal(size=100)
    v = (v - v.mean()) / v.std(ddof=1) * 2.0  # exact sample stddev 2
    h = scott_bandwidth(v)
    assert abs(h - 2.0 * 100 ** (-0.2)) < 1e-9
    assert abs(h - 0.79621) < 1e-5


def test_scott_bandwidth_guards():
    with pytest.raises(UsageError):
        scott_bandwidth(np.array([1.0]))
    with pytest.raises(UsageError, match="jitter"):
        scott_bandwidth(np.full(10, 3.3))


def test_density_symmetric_two_points():
    values = np.array([-1.0, 3.0])
    grid = np.linspace(-6.0, 8.0, 141)  # symmetric about the midpoint 1.0
    pdf = divergence_density(values, grid)
    assert np.allclose(pdf, pdf[::-1], atol=1e-12)
    assert pdf.min() >= 0.0


def test_density_integrates_to_one():
    rng = make_rng(1, "kde2")
    values = rng.normal(size=400) * 1.7 + 4.0
    h = scott_bandwidth(values)
    grid = np.linspace(values.min() - 5 * h, values.max() + 5 * h, 2048)
    pdf = divergence_density(values, grid)
    integral = np.trapezoid(pdf, grid)
    assert abs(integral - 1.0) < 1e-3


def test_density_matches_direct_sum():
    # independent oracle: per-point Gaussian mixture evaluated explicitly
    values = np.array([0.0, 1.0, 5.0])
    h = scott_bandwidth(values)
    grid = np.array([-1.0, 0.5, 2.0])
    expect = np.zeros_like(grid)
    for i, g in enumerate(grid):
        expect[i] = np.mean(
            [math.exp(-0.5 * ((g - v) / h) ** 2) / (h * math.sqrt(2 * math.pi))
             for v in values])
    assert np.allclose(divergence_density(values, grid), expect, atol=1e-12)


def test_boundary_grid_counts_and_uniform_case():
    m = _zeroed(init_model([2, 8, 8, 8], 3, seed=1))
    delta = math.log(3)
    grid = boundary_grid(m, ((-10.0, 14.0), (-12.0, 10.0)), 200, delta)
    assert grid.l_crs.shape == (200, 200)
    assert grid.l_crs.size == 40_000
    # uniform pair everywhere: crs = 2 ln C > delta, every cell unknown
    assert np.allclose(grid.l_crs, 2.0 * math.log(3), atol=1e-9)
    assert grid.unknown.all()
    assert np.array_equal(grid.unknown, grid.l_crs > delta)


def test_boundary_grid_rejects_non_2d():
    m = init_model([3, 8, 8, 8], 3, seed=1)
    with pytest.raises(ConfigError):
        boundary_grid(m, ((-1, 1), (-1, 1)), 10, 1.0)


def test_boundary_csv_and_svg(tmp_path, toy_data):
    source, target = toy_data
    m = init_model([2, 8, 8, 8], 3, seed=1)
    grid = boundary_grid(m, ((-10.0, 14.0), (-12.0, 10.0)), 20, math.log(3))
    csv_path = tmp_path / "b.csv"
    grid.to_csv(csv_path)
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "x,y,pred1,pred2,l_crs,unknown"
    assert len(lines) == 1 + 400

    svg_path = tmp_path / "b.svg"
    write_boundary_svg(grid, svg_path, source=source, target=target)
    svg = svg_path.read_text()
    assert svg.startswith("<svg")
    assert svg.rstrip().endswith("</svg>")
    assert "<rect" in svg and "<circle" in svg
    assert "http" not in svg.replace("http://www.w3.org/2000/svg", "")


def test_density_csv(tmp_path, reference_run):
    _, report, _ = reference_run
    path = tmp_path / "density.csv"
    density_to_csv(report, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x,pdf_common,pdf_private"
    assert len(lines) > 10


def test_eval_report_csv(tmp_path, reference_run):
    _, report, _ = reference_run
    path = tmp_path / "report.csv"
    report.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "class,role,recall"
    assert lines[-1].startswith("average,")
    assert len(lines) == 1 + 3 + 1
