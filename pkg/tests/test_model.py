from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pjmp.errors import (
    IndexOutOfRange,
    IntensityBelowFloor,
    IntensityBelowLinearBound,
    InvalidState,
    ModelError,
    NegativeWeight,
    NonPositiveCeiling,
    NonPositiveDelta,
    NonzeroDiagonal,
    ObservableUndefined,
)
from pjmp.model import (
    IntensitySpec,
    apply_jump,
    carre_du_champ,
    exact,
    generator_apply,
    intensities,
    total_intensity,
    validate_model,
)

from conftest import affine_model

PAIR = {
    "n_neurons": 2,
    "weights": [[0, 0.5], [0.5, 0]],
    "intensity": {"family": "affine", "a": 1, "b": 1, "delta": 1, "c": 0.5},
    "ceiling": 1,
}


def with_(base, **kw):
    out = dict(base)
    out.update(kw)
    return out


class TestValidation:
    def test_pair_model_is_valid(self):
        m = validate_model(PAIR)
        assert m.n_neurons == 2
        assert m.delta == 1.0 and m.c == 0.5
        assert m.weights[0][1] == Fraction(1, 2)

    def test_zero_floor_rejected(self):
        with pytest.raises(NonPositiveDelta):
            validate_model(with_(PAIR, intensity={"family": "affine", "a": 0, "b": 1}))

    def test_linear_bound_violation(self):
        raw = with_(PAIR, intensity={"family": "affine", "a": 0.1, "b": 0, "c": 1})
        with pytest.raises(IntensityBelowLinearBound):
            validate_model(raw)

    def test_declared_delta_above_floor(self):
        with pytest.raises(IntensityBelowFloor):
            validate_model(with_(PAIR, intensity={"family": "affine", "a": 1, "b": 1, "delta": 2}))

    def test_negative_weight(self):
        with pytest.raises(NegativeWeight) as err:
            validate_model(with_(PAIR, weights=[[0, -0.5], [0.5, 0]]))
        assert "weights[0][1]" in str(err.value)

    def test_nonzero_diagonal(self):
        with pytest.raises(NonzeroDiagonal):
            validate_model(with_(PAIR, weights=[[0.1, 0.5], [0.5, 0]]))

    def test_nonpositive_ceiling(self):
        with pytest.raises(NonPositiveCeiling):
            validate_model(with_(PAIR, ceiling=0))

    def test_ragged_weights_report_field(self):
        with pytest.raises(ModelError) as err:
            validate_model(with_(PAIR, weights=[[0, 0.5], [0.5]]))
        assert err.value.field == "weights[1]"

    def test_n_neurons_must_match(self):
        with pytest.raises(ModelError):
            validate_model(with_(PAIR, n_neurons=3))

    def test_unknown_key(self):
        with pytest.raises(ModelError):
            validate_model(with_(PAIR, drift=1))

    def test_table_intensity(self):
        raw = with_(PAIR, intensity={"family": "table", "breakpoints": [0, 0.5, 1], "values": [1, 1.2, 2]})
        m = validate_model(raw)
        assert m.phi(0.25) == pytest.approx(1.1)
        assert m.delta == 1.0
        assert m.phi_max == 2.0

    def test_table_must_cover_ceiling(self):
        raw = with_(PAIR, intensity={"family": "table", "breakpoints": [0, 0.5], "values": [1, 2]})
        with pytest.raises(ModelError):
            validate_model(raw)

    def test_default_c_is_certified(self):
        m = validate_model(with_(PAIR, intensity={"family": "affine", "a": 0.2, "b": 0}))
        assert 0 < m.c < 0.2

    def test_round_trip(self):
        m = validate_model(PAIR)
        assert validate_model(m.to_dict()) == m

    def test_exact_parses_decimal_floats(self):
        assert exact(0.1) == Fraction(1, 10)
        assert exact("3/7") == Fraction(3, 7)
        with pytest.raises(ModelError):
            exact(float("nan"))


class TestJump:
    model = validate_model(PAIR)

    def test_increment_applied(self):
        assert apply_jump(self.model, (0.3, 0.2), 0).tolist() == [0.0, 0.7]

    def test_increment_suppressed_at_ceiling(self):
        assert apply_jump(self.model, (0.3, 0.8), 0).tolist() == [0.0, 0.8]

    def test_single_neuron_resets(self):
        m = affine_model([[0]], b=0.0)
        assert apply_jump(m, (0.4,), 0).tolist() == [0.0]

    def test_index_out_of_range(self):
        with pytest.raises(IndexOutOfRange):
            apply_jump(self.model, (0, 0), 2)

    def test_state_outside_box(self):
        with pytest.raises(InvalidState):
            apply_jump(self.model, (0, 1.5), 0)

    def test_sender_rule(self):
        m = validate_model(with_(PAIR, clip_rule="sender"))
        # the spiking neuron's own potential decides: 0.6 + 0.5 > 1
        assert apply_jump(m, (0.6, 0.1), 0).tolist() == [0.0, 0.1]
        assert apply_jump(m, (0.4, 0.1), 0).tolist() == [0.0, 0.6]


class TestIntensities:
    def test_affine_values(self):
        m = validate_model(PAIR)
        assert intensities(m, (0.3, 0.2)) == pytest.approx([1.3, 1.2])
        assert total_intensity(m, (0.3, 0.2)) == pytest.approx(2.5)

    def test_constant(self):
        m = affine_model([[0]], b=0.0)
        assert total_intensity(m, (0.77,)) == 1.0

    def test_at_ceiling(self):
        m = validate_model(PAIR)
        assert total_intensity(m, (1, 1)) == m.total_rate_bound == 4.0


class TestGenerator:
    def test_constant_observable(self):
        m = validate_model(PAIR)
        assert generator_apply(m, lambda y: 3.0, (0.5, 0)) == 0.0
        assert carre_du_champ(m, lambda y: 3.0, (0.5, 0)) == 0.0

    def test_single_neuron_identity(self):
        m = affine_model([[0]], b=0.0)
        assert generator_apply(m, lambda y: y[0], (0.7,)) == pytest.approx(-0.7)

    def test_carre_du_champ_slope_one(self):
        m = affine_model([[0]], a=1.0, b=1.0)
        assert carre_du_champ(m, lambda y: y[0], (1,)) == pytest.approx(1.0)

    def test_undefined_observable(self):
        m = validate_model(PAIR)
        table = {(0.0, 0.0): 1.0}
        with pytest.raises(ObservableUndefined):
            generator_apply(m, lambda y: table[tuple(y)], (0, 0))


weights = st.floats(0, 1).map(lambda v: round(v, 2))
potential = st.floats(0, 1).map(lambda v: round(v, 3))


@st.composite
def model_and_state(draw):
    n = draw(st.integers(1, 4))
    W = [[0 if i == j else draw(weights) for j in range(n)] for i in range(n)]
    a = draw(st.floats(0.1, 3))
    b = draw(st.floats(0, 3))
    m = validate_model({"weights": W, "intensity": {"family": "affine", "a": a, "b": b}, "ceiling": 1})
    x = tuple(draw(potential) for _ in range(n))
    return m, x


@settings(max_examples=200, deadline=None)
@given(model_and_state(), st.data())
def test_jump_stays_in_box_and_resets(ms, data):
    m, x = ms
    i = data.draw(st.integers(0, m.n_neurons - 1))
    y = apply_jump(m, x, i)
    assert y[i] == 0
    assert np.all((y >= 0) & (y <= m.m))
    assert apply_jump(m, y, i)[i] == 0


@settings(max_examples=200, deadline=None)
@given(model_and_state(), st.integers(0, 2**32 - 1))
def test_generator_matches_term_by_term_and_carre_du_champ_identity(ms, seed):
    m, x = ms
    rng = np.random.default_rng(seed)
    table = {}

    def f(y):
        key = tuple(np.round(np.asarray(y, dtype=float), 9))
        if key not in table:
            table[key] = float(rng.standard_normal())
        return table[key]

    x = np.array(x, dtype=float)
    brute = sum(float(m.phi(x[i])) * (f(apply_jump(m, x, i)) - f(x)) for i in range(m.n_neurons))
    assert generator_apply(m, f, x) == pytest.approx(brute, abs=1e-12)

    g = carre_du_champ(m, f, x)
    assert g >= 0
    f2 = lambda y: f(y) ** 2
    identity = 0.5 * (generator_apply(m, f2, x) - 2 * f(x) * generator_apply(m, f, x))
    assert g == pytest.approx(identity, abs=1e-12 * max(1.0, abs(g)) * 10)


@settings(max_examples=100, deadline=None)
@given(model_and_state())
def test_total_intensity_bounds(ms):
    m, x = ms
    total = total_intensity(m, x)
    assert m.n_neurons * m.delta - 1e-12 <= total <= m.total_rate_bound + 1e-12


def test_intensity_spec_rejects_negative_slope():
    with pytest.raises(ModelError):
        IntensitySpec("affine", a=1, b=-1)
