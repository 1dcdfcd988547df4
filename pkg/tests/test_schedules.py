import pytest
from hypothesis import given
from hypothesis import strategies as st

from mustvqa.exceptions import IterOutOfRange
from mustvqa.harness.schedules import ScheduleSpec, lr_at

STEP = ScheduleSpec("step_decay", base_lr=1e-4, total_iters=24000, milestones=(14000, 19000), factor=0.1)
WARM = ScheduleSpec("warmup_linear", base_lr=1e-4, peak_lr=1e-3, warmup_iters=1000, total_iters=24000)


def test_step_decay_values():
    assert [lr_at(STEP, i) for i in (0, 13999, 14000, 19000, 24000)] == [1e-4, 1e-4, 1e-5, 1e-6, 1e-6]


def test_warmup_values():
    assert lr_at(WARM, 0) == 1e-4
    assert lr_at(WARM, 1000) == 1e-3
    assert lr_at(WARM, 24000) == 0.0
    assert lr_at(WARM, 500) == pytest.approx(5.5e-4)
    assert lr_at(WARM, 12500) == pytest.approx(5e-4)


def test_out_of_range():
    with pytest.raises(IterOutOfRange):
        lr_at(STEP, -1)
    with pytest.raises(IterOutOfRange):
        lr_at(WARM, 24001)


@given(st.integers(0, 24000))
def test_non_negative_and_bounded(it):
    assert 0.0 <= lr_at(STEP, it) <= 1e-4
    assert 0.0 <= lr_at(WARM, it) <= 1e-3


@given(st.integers(0, 23999))
def test_warmup_is_continuous(it):
    # slope never exceeds (peak - base) / warmup
    assert abs(lr_at(WARM, it + 1) - lr_at(WARM, it)) <= 9e-7 + 1e-15


def test_step_decay_is_monotone():
    values = [lr_at(STEP, i) for i in range(0, 24001, 100)]
    assert values == sorted(values, reverse=True)


def test_validation():
    with pytest.raises(ValueError):
        ScheduleSpec("step_decay", milestones=(5, 5))
    with pytest.raises(ValueError):
        ScheduleSpec("cosine")
    with pytest.raises(ValueError):
        ScheduleSpec("warmup_linear", warmup_iters=10, total_iters=10)


def test_scaled_keeps_shape():
    small = STEP.scaled(2400)
    assert small.milestones == (1400, 1900)
    assert WARM.scaled(2400).warmup_iters == 100
    assert ScheduleSpec.from_dict(small.to_dict()) == small
    assert STEP.scaled(1).milestones == (1,)
