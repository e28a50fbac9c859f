import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from etvgate import (
    DegenerateResponseError,
    DiscreteDistribution,
    FiniteJoint,
    HierarchyError,
    OutOfSupportError,
    ParameterError,
    SupportMismatchError,
    etv_exact,
    hetv_exact,
    oracle_classifier,
    read_joint,
    total_variation,
    write_joint,
)
from etvgate.oracle import hetv_levels
from etvgate.samplers import ConjointDesign, conjoint_ideal_joint

from conftest import (
    HAND_ETV,
    HAND_MASSES,
    HAND_ORACLE,
    brute_conditionals,
    brute_etv,
    joint_from,
    random_masses,
)


def dist(*probs, support=None):
    return DiscreteDistribution(support or tuple(range(len(probs))), np.array(probs))


class TestTotalVariation:
    def test_identical(self):
        assert total_variation(dist(0.3, 0.7), dist(0.3, 0.7)) == 0.0

    def test_disjoint_point_masses(self):
        assert total_variation(dist(1.0, 0.0), dist(0.0, 1.0)) == 1.0

    def test_half_l1(self):
        assert total_variation(dist(0.5, 0.5), dist(0.9, 0.1)) == pytest.approx(0.4, abs=1e-15)

    def test_support_matched_by_value(self):
        p = dist(0.2, 0.8, support=("a", "b"))
        q = dist(0.8, 0.2, support=("b", "a"))
        assert total_variation(p, q) == 0.0

    def test_mismatch(self):
        with pytest.raises(SupportMismatchError):
            total_variation(dist(0.5, 0.5), dist(0.2, 0.3, 0.5))

    @given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=6), st.integers(0, 2**32 - 1))
    def test_symmetric_and_bounded(self, w, seed):
        p = np.array(w) / sum(w)
        q = np.random.default_rng(seed).dirichlet(np.ones(len(w)))
        a, b = dist(*p), dist(*q)
        assert total_variation(a, b) == pytest.approx(total_variation(b, a), abs=1e-15)
        assert 0.0 <= total_variation(a, b) <= 1.0


class TestFiniteJoint:
    def test_mass_must_sum_to_one(self):
        with pytest.raises(ParameterError):
            FiniteJoint((0,), (0, 1), (0,), np.array([[[0.5], [0.4]]]))

    def test_duplicates_rejected(self):
        with pytest.raises(ParameterError):
            FiniteJoint((0, 0), (0, 1), (0,), np.full((2, 2, 1), 0.25))

    def test_hierarchy_inconsistency(self):
        ys = (("A", "1"), ("B", "1"))
        with pytest.raises(HierarchyError):
            FiniteJoint((0,), ys, (0,), np.array([[[0.5], [0.5]]]))

    def test_roundtrip(self, tmp_path, hand_joint):
        path = tmp_path / "joint.csv"
        write_joint(hand_joint, path)
        back = read_joint(path)
        assert etv_exact(back) == etv_exact(hand_joint)

    def test_roundtrip_hierarchical(self, tmp_path):
        joint = three_level_joint(np.random.default_rng(3))
        path = tmp_path / "h.csv"
        write_joint(joint, path)
        back = read_joint(path)
        assert back.levels == 3
        np.testing.assert_allclose(hetv_levels(back), hetv_levels(joint), atol=1e-15)


class TestEtvExact:
    def test_hand_joint(self, hand_joint):
        assert brute_etv(HAND_MASSES) == pytest.approx(HAND_ETV, abs=1e-15)
        assert etv_exact(hand_joint) == pytest.approx(HAND_ETV, abs=1e-14)

    def test_independent_is_zero(self, null_joint):
        assert etv_exact(null_joint) == 0.0

    def test_deterministic_uniform_is_one(self):
        for k in (2, 3, 5):
            masses = {(i, i, 0): 1.0 / k for i in range(k)}
            masses.update({(i, j, 0): 0.0 for i in range(k) for j in range(k) if i != j})
            assert etv_exact(joint_from(masses)) == pytest.approx(1.0, abs=1e-12)

    def test_degenerate_response(self):
        with pytest.raises(DegenerateResponseError):
            etv_exact(FiniteJoint((0, 1), ("only",), (0,), np.array([[[0.5]], [[0.5]]])))

    def test_zero_mass_cells_skipped(self):
        masses = random_masses(np.random.default_rng(1), 3, 3, 2, zero_frac=0.4)
        assert etv_exact(joint_from(masses)) == pytest.approx(brute_etv(masses), abs=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(2, 4), st.integers(2, 4), st.integers(1, 3), st.integers(0, 2**32 - 1),
           st.sampled_from([0.0, 0.3]))
    def test_matches_brute_force(self, nx, ny, nz, seed, zero_frac):
        masses = random_masses(np.random.default_rng(seed), nx, ny, nz, zero_frac)
        value = etv_exact(joint_from(masses))
        assert 0.0 <= value <= 1.0
        assert value == pytest.approx(brute_etv(masses), abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_label_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        masses = random_masses(rng, 3, 4, 2)
        perm = dict(zip([f"y{j}" for j in range(4)], [f"y{j}" for j in rng.permutation(4)]))
        permuted = {(x, perm[y], z): m for (x, y, z), m in masses.items()}
        assert etv_exact(joint_from(permuted)) == pytest.approx(etv_exact(joint_from(masses)), abs=1e-12)

    def test_zero_iff_no_tv(self):
        # dependence confined to a single cell still makes ETV positive
        masses = {(x, y, 0): 1 / 8 for x in range(2) for y in range(4)}
        masses[0, 0, 0], masses[0, 1, 0] = 1 / 8 + 0.01, 1 / 8 - 0.01
        assert etv_exact(joint_from(masses)) > 0

    @pytest.mark.parametrize("q", np.linspace(0, 1, 11))
    @pytest.mark.parametrize("p", np.linspace(0, 1, 11))
    def test_conjoint_closed_form(self, q, p):
        joint = conjoint_ideal_joint(ConjointDesign(q, p))
        assert etv_exact(joint) == pytest.approx((1 - q) * abs(p - 0.5), abs=1e-10)

    def test_conjoint_headline_values(self):
        assert etv_exact(conjoint_ideal_joint(ConjointDesign(0.27, 1.0))) == pytest.approx(0.365, abs=1e-12)
        assert etv_exact(conjoint_ideal_joint(ConjointDesign(0.27, 0.63))) == pytest.approx(0.0949, abs=1e-12)


def three_level_joint(rng):
    leaves = [("A", "A1", "A1a"), ("A", "A1", "A1b"), ("A", "A2", "A2a"),
              ("B", "B1", "B1a"), ("B", "B1", "B1b"), ("B", "B2", "B2a")]
    mass = rng.random((3, len(leaves), 2))
    mass /= mass.sum()
    return FiniteJoint((0, 1, 2), tuple(leaves), ("u", "v"), mass)


def brute_level_etv(joint, k):
    masses = {}
    for i, x in enumerate(joint.x_support):
        for j, y in enumerate(joint.y_support):
            for l, z in enumerate(joint.z_support):
                key = (x, y[:k], z)
                masses[key] = masses.get(key, 0.0) + joint.mass[i, j, l]
    ny = len({y[:k] for y in joint.y_support})
    return ny, brute_etv(masses)


class TestHetv:
    def test_single_level(self, hand_joint):
        assert hetv_exact(hand_joint, [1.0]) == pytest.approx(etv_exact(hand_joint) / 2, abs=1e-15)

    def test_no_refinement_level_is_zero(self, hand_joint):
        refined = FiniteJoint(hand_joint.x_support, (("a", "a*"), ("b", "b*")), hand_joint.z_support,
                              hand_joint.mass)
        levels = hetv_levels(refined)
        assert levels[1] == 0.0
        assert levels[0] == pytest.approx(etv_exact(hand_joint) / 2, abs=1e-15)

    @pytest.mark.parametrize("seed", range(5))
    def test_three_levels_brute_force(self, seed):
        joint = three_level_joint(np.random.default_rng(seed))
        scaled = []
        for k in (1, 2, 3):
            ny, e = brute_level_etv(joint, k)
            scaled.append((1 - 1 / ny) * e)
        w = np.array([0.5, 2.0, 1.0])
        expected = w[0] * scaled[0] + w[1] * (scaled[1] - scaled[0]) + w[2] * (scaled[2] - scaled[1])
        assert hetv_exact(joint, w) == pytest.approx(expected, abs=1e-12)
        assert np.all(hetv_levels(joint) >= -1e-12)

    def test_all_ones_telescopes(self):
        joint = three_level_joint(np.random.default_rng(11))
        ny, e = brute_level_etv(joint, 3)
        assert hetv_exact(joint, [1, 1, 1]) == pytest.approx((1 - 1 / ny) * e, abs=1e-12)

    def test_weight_errors(self):
        joint = three_level_joint(np.random.default_rng(0))
        with pytest.raises(ParameterError):
            hetv_exact(joint, [1, 1])
        with pytest.raises(ParameterError):
            hetv_exact(joint, [1, -1, 1])


class TestOracleClassifier:
    def test_hand_table(self, hand_joint):
        f = oracle_classifier(hand_joint)
        keys = list(HAND_ORACLE)
        x = np.array([[k[0]] for k in keys], dtype=object)
        y = np.array([k[1] for k in keys], dtype=object)
        z = np.array([[k[2]] for k in keys], dtype=object)
        np.testing.assert_array_equal(f(x, y, z), [HAND_ORACLE[k] for k in keys])

    def test_hand_table_from_brute_conditionals(self):
        p_xz, p_z, p_yz = brute_conditionals(HAND_MASSES)
        for (x, y, z), m in HAND_MASSES.items():
            assert HAND_ORACLE[x, y, z] == int(m / p_xz[x, z] > p_yz[y, z] / p_z[z])

    def test_null_joint_scores_zero(self, null_joint):
        f = oracle_classifier(null_joint)
        assert not f.table.any()

    def test_deterministic_response(self):
        masses = {(x, y, "-"): (1 / 3 if y == x else 0.0) for x in range(3) for y in range(3)}
        f = oracle_classifier(joint_from(masses))
        for x, y in itertools.product(range(3), range(3)):
            out = f(np.array([[x]], dtype=object), np.array([y], dtype=object), np.array([["-"]], dtype=object))
            assert out[0] == (1.0 if x == y else 0.0)

    def test_out_of_support(self, hand_joint):
        f = oracle_classifier(hand_joint)
        with pytest.raises(OutOfSupportError):
            f(np.array([[7]], dtype=object), np.array(["a"], dtype=object), np.array([[0]], dtype=object))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_exact_loss_identity(self, seed):
        # 2 (1 - E[loss]) = 2 E[TV] for the oracle, by full enumeration
        masses = random_masses(np.random.default_rng(seed), 3, 3, 2)
        joint = joint_from(masses)
        f = oracle_classifier(joint)
        p_xz, p_z, p_yz = brute_conditionals(masses)
        xs = sorted({k[0] for k in masses})
        ix = {v: i for i, v in enumerate(joint.x_support)}
        iy = {v: i for i, v in enumerate(joint.y_support)}
        iz = {v: i for i, v in enumerate(joint.z_support)}

        def score(x, y, z):
            return f.table[ix[x], iy[y], iz[z]]

        loss = 0.0
        for (x, y, z), m in masses.items():
            loss += m * abs(score(x, y, z) - 1)
            loss += m * sum(p_xz[x2, z] / p_z[z] * score(x2, y, z) for x2 in xs)
        expected_tv = brute_etv(masses) * (1 - 1 / 3)
        assert 2 * (1 - loss) == pytest.approx(2 * expected_tv, abs=1e-12)
