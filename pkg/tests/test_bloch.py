import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qtsteer.bloch import (BlochState, JumpKind, JumpOperator, MIXED, PLUS,
                           MINUS, DegenerateStateError, PositivityError,
                           apply_jump, check_positivity, normalize,
                           steering_functionals)

import matrix_oracle as mo


def bloch_close(a: BlochState, b, tol=1e-12):
    ref = (b.w, b.x, b.y, b.z) if isinstance(b, BlochState) else b
    return max(abs(a.w - ref[0]), abs(a.x - ref[1]),
               abs(a.y - ref[2]), abs(a.z - ref[3])) <= tol


class TestSteeringFunctionals:
    def test_sx_eigenstate(self):
        f = steering_functionals(BlochState(1.0, x=1.0))
        assert f.f1 == 1.0 and f.f2 == 0.0

    def test_pure_state_in_yz_plane(self):
        f = steering_functionals(BlochState(1.0, 0.0, 0.6, 0.8))
        assert f.f1 == 0.0
        assert f.f2 == pytest.approx(1.0, abs=1e-12)

    def test_maximally_mixed(self):
        f = steering_functionals(MIXED)
        assert f.f1 == 0.0 and f.f2 == 0.0

    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError):
            steering_functionals(BlochState(2.0, x=1.0))


class TestApplyJump:
    def test_lower_transfers_plus_to_minus(self):
        out = apply_jump(PLUS, JumpOperator(JumpKind.LOWER_PLUS_MINUS))
        assert bloch_close(out, MINUS)

    def test_projector_plus_on_mixed_matches_matrix_arithmetic(self):
        # oracle: evaluate (sx+1) rho (sx+1) on rho = I/2 directly
        op = mo.SX + mo.ID
        ref = op @ mo.rho_from_bloch(1, 0, 0, 0) @ op
        out = apply_jump(MIXED, JumpOperator(JumpKind.PROJECTOR_PLUS))
        assert bloch_close(out, mo.bloch_from_rho(ref))
        assert out.w == pytest.approx(2.0)

    def test_annihilated_component_gives_zero_trace(self):
        out = apply_jump(MINUS, JumpOperator(JumpKind.LOWER_PLUS_MINUS))
        assert out.w == 0.0

    @pytest.mark.parametrize("kind,mat", [
        (JumpKind.LOWER_PLUS_MINUS, mo.S_MP),
        (JumpKind.LOWER_MINUS_PLUS, mo.S_PM),
        (JumpKind.SIGMA_X, mo.SX),
        (JumpKind.PROJECTOR_PLUS, mo.SX + mo.ID),
        (JumpKind.PROJECTOR_MINUS, mo.SX - mo.ID),
        (JumpKind.SIGMA_MINUS, mo.SM),
    ])
    def test_all_kinds_match_matrix_arithmetic(self, kind, mat, rng):
        for _ in range(25):
            v = rng.normal(size=3)
            v *= rng.random() / np.linalg.norm(v)
            st_in = BlochState(1.0, *v)
            ref = mo.jump(mat, mo.rho_from_bloch(1.0, *v))
            out = apply_jump(st_in, JumpOperator(kind))
            assert bloch_close(out, mo.bloch_from_rho(ref), tol=1e-12)

    def test_scale_enters_squared(self):
        out = apply_jump(PLUS, JumpOperator(JumpKind.PROJECTOR_PLUS, scale=0.5))
        assert out.w == pytest.approx(0.25 * 4.0)

    def test_pure_state_stays_pure_after_jump(self, rng):
        for kind in (JumpKind.PROJECTOR_PLUS, JumpKind.LOWER_PLUS_MINUS,
                     JumpKind.LOWER_MINUS_PLUS):
            v = rng.normal(size=3)
            v /= np.linalg.norm(v)
            out = apply_jump(BlochState(1.0, *v), JumpOperator(kind))
            if out.w > 1e-12:
                nrm, _ = normalize(out)
                assert nrm.bloch_norm() == pytest.approx(1.0, abs=1e-9)


class TestNormalize:
    def test_scaling(self):
        nrm, wgt = normalize(BlochState(2.0, x=2.0))
        assert bloch_close(nrm, (1.0, 1.0, 0.0, 0.0)) and wgt == 2.0

    def test_identity_when_normalized(self):
        nrm, wgt = normalize(BlochState(1.0, x=0.3))
        assert bloch_close(nrm, (1.0, 0.3, 0.0, 0.0)) and wgt == 1.0

    def test_degenerate_raises(self):
        with pytest.raises(DegenerateStateError):
            normalize(BlochState(0.0))


class TestPositivityPolicy:
    def test_roundoff_overshoot_clamped(self):
        st_in = BlochState(1.0, x=1.0 + 1e-9)
        out = check_positivity(st_in)
        assert out.bloch_norm() <= 1.0

    def test_large_overshoot_rejected(self):
        with pytest.raises(PositivityError):
            check_positivity(BlochState(1.0, x=1.0 + 1e-5))


@st.composite
def ball_states(draw):
    x = draw(st.floats(-1, 1))
    y = draw(st.floats(-1, 1))
    z = draw(st.floats(-1, 1))
    r = math.sqrt(x * x + y * y + z * z)
    if r > 1.0:
        x, y, z = x / r, y / r, z / r
    return BlochState(1.0, x, y, z)


@settings(max_examples=300)
@given(ball_states())
def test_functional_bound_property(state):
    f = steering_functionals(state)
    assert 0.0 <= f.f1 <= 1.0 and 0.0 <= f.f2 <= 1.0
    assert f.f1 + f.f2 <= 1.0 + 1e-12


def test_functional_bound_bulk_fuzz():
    rng = np.random.default_rng(5)
    v = rng.normal(size=(100_000, 3))
    v /= np.linalg.norm(v, axis=1)[:, None]
    v *= rng.random((100_000, 1)) ** (1 / 3)
    f = (v[:, 0] ** 2) + (v[:, 1] ** 2 + v[:, 2] ** 2)
    assert f.max() <= 1.0 + 1e-12


@settings(max_examples=200)
@given(ball_states(), ball_states(), st.floats(0, 1))
def test_functional_convexity_property(a, b, lam):
    mix = BlochState(1.0, lam * a.x + (1 - lam) * b.x,
                     lam * a.y + (1 - lam) * b.y,
                     lam * a.z + (1 - lam) * b.z)
    fm = steering_functionals(mix)
    fa = steering_functionals(a)
    fb = steering_functionals(b)
    assert fm.f1 <= lam * fa.f1 + (1 - lam) * fb.f1 + 1e-12
    assert fm.f2 <= lam * fa.f2 + (1 - lam) * fb.f2 + 1e-12
