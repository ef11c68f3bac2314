import pytest

from sparsemia import resnet20


def test_total_param_count():
    assert resnet20.param_count() == 272_474


def test_conv_inventory():
    convs = resnet20.resnet20_shapes()
    # stem + 18 stage convs + 2 projection shortcuts
    assert len(convs) == 21
    assert sum(1 for c in convs if c.projection) == 2
    assert sum(1 for c in convs if c.stage == 3 and not c.projection) == 6


@pytest.mark.parametrize(
    "segments,depth,expected",
    [
        (1, 2, 32.3),
        (1, 3, 29.6),
        (2, 2, 15.9),
        (2, 3, 12.9),
        (3, 2, 11.8),
        (3, 3, 8.5),
    ],
)
def test_butterfly_fractions(segments, depth, expected):
    assert resnet20.butterfly_fraction(segments, depth) == pytest.approx(expected, abs=0.5)


def test_no_substitution_is_hundred_percent():
    assert resnet20.butterfly_fraction(0, 2) == 100.0


def test_invalid_segments():
    with pytest.raises(ValueError):
        resnet20.butterfly_fraction(4, 2)
