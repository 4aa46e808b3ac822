import numpy as np
import pytest

from logcave.grids import (Grid, GridFactory, GridSchedule, make_grid,
                           schedule_diagnostics, schedule_size, stage_lengths)
from logcave.hull import build_hull, make_dataset
from logcave.rng import RngStream


def test_polynomial_schedule_example():
    sched = GridSchedule("polynomial", C=1, beta=2)
    assert schedule_size(sched, 7) == 49
    assert schedule_size(sched, 0) == 1        # t = 0 counts as t = 1


def test_fixed_schedule():
    sched = GridSchedule("fixed", C=10_000)
    assert all(schedule_size(sched, t) == 10_000 for t in (0, 5, 127))


def test_multi_stage_table_values():
    sched = GridSchedule("multi_stage", C=5000, rho=2)
    assert schedule_size(sched, 20) == 20_000      # stage 2
    sizes = {schedule_size(sched, t) for t in range(1, 129)}
    assert sizes == {10_000, 20_000, 40_000, 80_000}


def test_multi_stage_stage_lengths():
    sched = GridSchedule("multi_stage", C=100, rho=2)
    assert stage_lengths(sched, 128) == [16, 16, 32, 64]


def test_schedules_nondecreasing():
    for sched in (GridSchedule("polynomial", C=3, beta=1.5),
                  GridSchedule("exponential", C=4, rho=1.3),
                  GridSchedule("multi_stage", C=10, rho=2),
                  GridSchedule("fixed", C=7)):
        ms = [schedule_size(sched, t) for t in range(200)]
        assert all(b >= a for a, b in zip(ms, ms[1:]))


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        GridSchedule("quadratic")


def interval_hull():
    return build_hull(make_dataset([[0.0], [2.0], [1.0]]))


def test_random_grid_membership_and_size():
    h = interval_hull()
    g = make_grid(h, GridSchedule("fixed", C=4), 0, "random", RngStream(5))
    assert g.size == 4
    assert np.all((g.points >= 0) & (g.points <= 2))
    assert g.weight * g.size == pytest.approx(h.total_volume, rel=1e-10)


def test_deterministic_grid_search_square():
    h = build_hull(make_dataset([[0, 0], [1, 0], [0, 1], [1, 1]]))
    g = make_grid(h, GridSchedule("fixed", C=9), 0, "deterministic")
    assert g.points_per_axis == 3
    assert g.size == 9


def test_deterministic_grid_search_triangle():
    h = build_hull(make_dataset([[0, 0], [1, 0], [0, 1]]))
    g = make_grid(h, GridSchedule("fixed", C=6), 0, "deterministic")
    assert g.points_per_axis == 3
    assert g.size == 6


def test_grid_determinism_bitwise():
    h = interval_hull()
    sched = GridSchedule("polynomial", C=5, beta=1)
    a = make_grid(h, sched, 3, "random", RngStream(42))
    b = make_grid(h, sched, 3, "random", RngStream(42))
    assert a.points.tobytes() == b.points.tobytes()
    c = make_grid(h, sched, 4, "random", RngStream(42))
    assert c.points.tobytes() != a.points.tobytes()


def test_realized_sizes_nondecreasing_deterministic():
    h = build_hull(make_dataset([[0, 0], [1, 0], [0, 1], [1, 1], [0.5, 0.5]]))
    factory = GridFactory(h, GridSchedule("polynomial", C=4, beta=2), "deterministic")
    sizes = [factory.make(t).size for t in range(1, 10)]
    assert all(b >= a for a, b in zip(sizes, sizes[1:]))


def test_pinned_axis_counts():
    h = build_hull(make_dataset([[0, 0], [1, 0], [0, 1], [1, 1]]))
    factory = GridFactory(h, GridSchedule("fixed", C=4), "deterministic",
                          pinned_axis_counts={0: 5})
    assert factory.make(0).points_per_axis == 5
    assert factory.make(0).size == 25


def test_schedule_diagnostics():
    sched = GridSchedule("multi_stage", C=100, rho=2)
    diag = schedule_diagnostics(sched, 128)
    ms = np.array([schedule_size(sched, t) for t in range(128)], dtype=float)
    assert diag["M1"] == pytest.approx(np.sqrt((1 / ms).sum()))
    assert diag["M_half"] == pytest.approx((ms ** -0.5).sum())
    assert diag["M2"] == pytest.approx(np.sqrt((ms ** -2).sum()))
    assert np.isfinite(diag["M1"])
