import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fegkit.core import (
    DimensionError,
    NonFiniteError,
    OperatorHandle,
    ParameterRangeError,
    ProblemSpec,
    as_point,
    evaluate_operator,
    vector_combine,
)
from fegkit.problems import make_bilinear, make_worst_case_smooth


def test_evaluate_bilinear_examples():
    p = make_bilinear(1.0)
    assert evaluate_operator(p, [1.0, 0.0]).tolist() == [0.0, -1.0]
    assert evaluate_operator(p, [0.0, 0.0]).tolist() == [0.0, 0.0]


def test_evaluate_worst_case_origin():
    p = make_worst_case_smooth(1.0, 1.0)
    assert evaluate_operator(p, [0.0, 0.0]).tolist() == [-1.0, -1.0]


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        evaluate_operator(make_bilinear(1.0), [1.0, 2.0, 3.0])


def test_nonfinite_output_names_coordinate():
    op = OperatorHandle(lambda z: np.array([1.0, np.inf, 0.0]), 3)
    with pytest.raises(NonFiniteError) as info:
        evaluate_operator(op, np.zeros(3))
    assert info.value.index == 1


def test_nonfinite_input_rejected():
    with pytest.raises(NonFiniteError):
        as_point([0.0, np.nan])


@pytest.mark.parametrize(
    "pairs, expected",
    [
        ([(1.0, (1, 0)), (-1.0, (1, 0))], [0.0, 0.0]),
        ([(0.5, (2, 4))], [1.0, 2.0]),
        ([(1.0, (1, 1)), (0.5, (0, 2)), (-1.0, (1, 0))], [0.0, 2.0]),
    ],
)
def test_vector_combine_examples(pairs, expected):
    assert vector_combine(pairs).tolist() == expected


def test_vector_combine_errors():
    with pytest.raises(DimensionError):
        vector_combine([(1.0, (1, 0)), (1.0, (1, 0, 0))])
    with pytest.raises(ValueError):
        vector_combine([])


finite = st.floats(-1e6, 1e6, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(finite, st.lists(finite, min_size=3, max_size=3)), min_size=1, max_size=6))
def test_vector_combine_reproducible_and_ordered(pairs):
    a = vector_combine(pairs)
    b = vector_combine(pairs)
    assert a.tobytes() == b.tobytes()
    acc = pairs[0][0] * np.array(pairs[0][1], dtype=float)
    for c, p in pairs[1:]:
        acc = acc + c * np.array(p, dtype=float)
    assert acc.tobytes() == a.tobytes()


def test_bilinear_skew_symmetry_exact():
    p = make_bilinear(1.0)
    rng = np.random.default_rng(3)
    for _ in range(1000):
        z, w = rng.standard_normal(2), rng.standard_normal(2)
        dF = evaluate_operator(p, z) - evaluate_operator(p, w)
        dz = z - w
        # (dy, -dx) . (dx, dy) cancels term by term
        assert dF[0] * dz[0] + dF[1] * dz[1] == 0.0


def test_problem_spec_validation():
    op = OperatorHandle(lambda z: z, 2)
    with pytest.raises(ParameterRangeError):
        ProblemSpec(op, lipschitz=0.0)
    with pytest.raises(ValueError):
        ProblemSpec(op, solution=np.ones(2))
    p = ProblemSpec(op, lipschitz=1.0, comonotone=1.0, solution=np.zeros(2))
    assert p.dim == 2 and p.feg_admissible()
    assert not ProblemSpec(op, lipschitz=1.0, comonotone=-0.5).feg_admissible()


def test_known_solutions_are_stationary():
    p = make_bilinear(3.0)
    assert np.linalg.norm(evaluate_operator(p, p.solution)) <= 1e-12


def test_points_are_read_only():
    z = as_point([1.0, 2.0])
    with pytest.raises(ValueError):
        z[0] = 3.0
