import numpy as np
import pytest
from hypothesis import given, strategies as st

from ciliate_ctl.core import KinematicModel, SphericalModel, SwimmerModel, skew
from ciliate_ctl.criteria import (ACCESSIBLE, CONTROLLABLE, FAILS, HOLDS, NA, NOT_CONTROLLABLE,
                                  UNDETERMINED, PreconditionError, check_equal_density,
                                  check_prop_pa, check_prop_pc, check_spherical, classify,
                                  eigvec_condition, identity_checks, normalize_spherical)
from ciliate_ctl.lie import kinematic_lie_rank
from conftest import random_dissipative, random_spd


def m1(J, b1, b2, A=None):
    A = -np.eye(6) if A is None else A
    return SwimmerModel(A, np.concatenate([b1, b2]).reshape(6, 1), J, 1.0)


def test_prop_pa_worked_example():
    v = check_prop_pa(m1(np.diag([1.0, 2, 3]), [1.0, 0, 0], [1.0, 1, 1]))
    assert v.status == HOLDS
    q = v.quantities
    assert q["hypo1"] == pytest.approx(6) and q["hypo2"] == pytest.approx(2)
    assert q["lam"] == pytest.approx(7 / 3) and q["specJ"] == pytest.approx(8 / 27)


def test_prop_pa_degenerate_cases():
    v = check_prop_pa(m1(np.diag([1.0, 2, 3]), [1.0, 0, 0], [0.0, 0, 0]))
    assert v.status == FAILS and v.quantities["hypo2"] == 0
    v = check_prop_pa(m1(np.eye(3), [1.0, 0, 0], [1.0, 2, 3]))
    assert v.status == FAILS and "specJ" in v.note
    assert v.quantities["lam"] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        check_prop_pa(random_dissipative(np.random.default_rng(0), m=3))


def test_prop_pc_spherical_holds():
    B1 = np.array([[0.0, 1, 0], [1, 0, 0], [0, 0, 0]])
    model = SphericalModel(1.0, 2.0, B1, np.eye(3)).to_swimmer()
    v = check_prop_pc(model)
    assert v.status == HOLDS
    assert abs(v.quantities["det_sym_At11"]) > 0


def test_prop_pc_singular_b2_and_not_applicable(rng):
    model = random_dissipative(rng, m=3)
    B = model.B.copy()
    B[3:, 2] = B[3:, 0]
    v = check_prop_pc(model.with_B(B))
    assert v.status == FAILS and "B2" in v.note
    assert check_prop_pc(random_dissipative(rng, m=1)).status == NA


def test_eigvec_condition_isotropic():
    # every vector is a J-eigenvector; the test reduces to Bt being a multiple of Id
    assert not eigvec_condition(np.eye(3), 2.5 * np.eye(3))[0]
    assert eigvec_condition(np.eye(3), np.diag([1.0, 2, 3]))[0]
    # distinct spectrum and a commuting Bt
    ok, info = eigvec_condition(np.diag([1.0, 2, 3]), np.diag([4.0, -1, 2]))
    assert not ok and info["multiplicities"] == [1, 1, 1]


def test_spherical_iff():
    assert check_spherical(SphericalModel(1.0, 2.0, np.eye(3), np.eye(3))).status == HOLDS
    v = check_spherical(SphericalModel(1.0, 2.0, np.zeros((3, 3)), np.eye(3)))
    assert v.status == FAILS and "invariant" in v.note
    v = check_spherical(SphericalModel(1.0, 2.0, np.eye(3), np.diag([1.0, 1, 0])))
    assert v.status == FAILS and v.quantities["rank_B2"] == 2
    rep = classify(SphericalModel(1.0, 2.0, np.eye(3), np.diag([1.0, 1, 0])))
    assert rep.classification == NOT_CONTROLLABLE


def test_equal_density_examples(rng):
    assert check_equal_density(KinematicModel(np.eye(3), np.eye(3))).note == "condition 1"
    for L2 in (np.eye(3), np.diag([1.0, 1, 0]), rng.normal(size=(3, 3))):
        L = KinematicModel(np.zeros((3, 3)), L2)
        assert check_equal_density(L).status == FAILS
        assert kinematic_lie_rank(L) < 6
    L = KinematicModel(rng.normal(size=(3, 2)), np.outer(rng.normal(size=3), rng.normal(size=2)))
    v = check_equal_density(L)
    assert v.status == FAILS and "rank L2 <= 1" in v.note
    # condition 2: rank L2 = 2 with an extra translation column
    L = KinematicModel(np.array([[0.0, 0, 1], [0, 0, 0], [0, 0, 0]]), np.diag([1.0, 1, 0]))
    v = check_equal_density(L)
    assert v.holds and v.quantities["cond2"]


@given(st.integers(0, 10_000))
def test_criteria_invariant_under_control_change(seed):
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(3, 3)) + 3 * np.eye(3)
    model = random_dissipative(rng, m=3)
    assert check_prop_pc(model).status == check_prop_pc(model.with_B(model.B @ G)).status
    sph = SphericalModel(1.0, 2.0, rng.normal(size=(3, 3)), rng.normal(size=(3, 3)))
    sph2 = SphericalModel(1.0, 2.0, sph.B1 @ G, sph.B2 @ G)
    assert check_spherical(sph).status == check_spherical(sph2).status
    L = KinematicModel(rng.normal(size=(3, 3)), rng.normal(size=(3, 3)))
    assert check_equal_density(L).status == check_equal_density(KinematicModel(L.L1 @ G, L.L2 @ G)).status
    g = rng.normal() + 3.0
    mm = random_dissipative(rng, m=1)
    assert check_prop_pa(mm).status == check_prop_pa(mm.with_B(g * mm.B)).status


def _check_normalization(B1, B2, n):
    assert np.allclose(n.Q @ n.Q.T, np.eye(3)) and np.linalg.det(n.Q) == pytest.approx(1.0)
    assert np.allclose(n.B2n, np.eye(3), atol=1e-12)
    assert np.allclose(n.Q @ B1 @ n.Gamma, n.B1n)
    c1 = n.B1n[:, 0]
    assert np.linalg.norm(np.cross(c1, [1.0, 0, 0])) > 1e-6


def test_normalize_m3():
    B1, B2 = skew([0, 0, 1.0]), np.eye(3)
    n = normalize_spherical(B1, B2)
    assert n.case == "m=3"
    _check_normalization(B1, B2, n)


def test_normalize_proportional_columns():
    B2 = np.column_stack([np.eye(3), np.zeros(3)])
    B1 = np.column_stack([np.zeros((3, 3)), [1.0, 0, 0]])
    n = normalize_spherical(B1, B2)
    assert n.case == "proportional-columns"
    assert abs(n.Gamma[3]).max() > 0  # column 4 is mixed in
    _check_normalization(B1, B2, n)


def test_normalize_independent_triple(rng):
    B1, B2 = rng.normal(size=(3, 5)), rng.normal(size=(3, 5))
    n = normalize_spherical(B1, B2)
    assert n.case == "independent-triple"
    _check_normalization(B1, B2, n)


def test_normalize_preconditions():
    with pytest.raises(PreconditionError):
        normalize_spherical(2.0 * np.eye(3), np.eye(3))
    with pytest.raises(PreconditionError):
        normalize_spherical(np.eye(3), np.diag([1.0, 1, 0]))


def test_identity_examples():
    r = identity_checks(np.diag([1.0, 2, 3]), [1.0, 1, 1])
    assert np.allclose(r["algebraic"]["lhs"], [-1, 1, -1 / 3])
    assert np.allclose(r["algebraic"]["rhs"], [-1, 1, -1 / 3])
    r = identity_checks(np.diag([1.0, 2, 3]), [0.0, 1, 0])
    assert np.allclose(r["algebraic"]["lhs"], 0) and np.allclose(r["algebraic"]["rhs"], 0)
    assert r["D"]["status"] == NA
    assert identity_checks(np.diag([1.0, 1, 0]), [1.0, 1, 1])["status"] == NA


def test_identity_random(rng):
    for _ in range(50):
        J = random_spd(rng)
        r = identity_checks(J, rng.normal(size=3))
        assert r["algebraic"]["status"] == HOLDS
        assert r["D"]["ratio"] == pytest.approx(1.0, rel=1e-8)


def test_classify_routes(rng):
    rep = classify(random_dissipative(rng, m=1))
    assert rep.classification == ACCESSIBLE
    assert {v.name for v in rep.verdicts} == {"lie-rank-at-rest", "prop-pa"}
    rep = classify(random_dissipative(rng, m=3))
    assert rep.classification == CONTROLLABLE
    assert classify(KinematicModel(np.eye(3), np.eye(3))).classification == CONTROLLABLE
    # m = 1 with isotropic J and b1 = 0: nothing is known to hold
    model = m1(np.eye(3), [0.0, 0, 0], [1.0, 0, 0], A=-np.diag([1.0, 1, 1, 2, 2, 2]) + 0.1 * np.eye(6)[::-1])
    rep = classify(model, depth=4)
    assert rep.classification == UNDETERMINED
    assert all(v.quantities is not None for v in rep.verdicts)
    assert "classification" in rep.to_dict()
