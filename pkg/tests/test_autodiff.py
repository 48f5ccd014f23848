import math

import numpy as np
import pytest

from ccmabeam import autodiff as ad
from ccmabeam.autodiff import CVar, DomainError, Tape, TapeMismatchError, Var


def grad_of(build):
    """Run build(tape) -> (root, leaves) and return the leaf gradients."""
    tape = Tape()
    root, leaves = build(tape)
    return tape.gradients(root, leaves)


class TestPrimitives:
    def test_product_gradient(self):
        tape = Tape()
        x, y = tape.var(2.0), tape.var(3.0)
        gx, gy = tape.gradients(x * y, [x, y])
        assert gx == 3.0 and gy == 2.0

    def test_exp_at_zero(self):
        tape = Tape()
        x = tape.var(0.0)
        assert tape.gradients(ad.exp(x), [x]) == [1.0]

    def test_modulus_squared_gradient(self):
        tape = Tape()
        a, b = tape.var(3.0), tape.var(4.0)
        z = CVar(a, b)
        m = z.modulus2()
        assert m.value == 25.0
        assert tape.gradients(m, [a, b]) == [6.0, 8.0]

    def test_cvar_product_and_conj(self):
        tape = Tape()
        z = CVar(tape.var(1.0), tape.var(2.0))
        w = CVar(tape.var(3.0), tape.var(-1.0))
        p = z * w
        assert (p.re.value, p.im.value) == (5.0, 5.0)
        c = z.conj()
        assert (c.re.value, c.im.value) == (1.0, -2.0)
        s = z + w
        assert (s.re.value, s.im.value) == (4.0, 1.0)

    def test_abs_subgradient_zero_at_kink(self):
        tape = Tape()
        x = tape.var(0.0)
        assert tape.gradients(abs(x), [x]) == [0.0]

    def test_division_and_power(self):
        tape = Tape()
        x = tape.var(4.0)
        assert math.isclose(tape.gradients(1.0 / x, [x])[0], -1.0 / 16.0)
        tape = Tape()
        x = tape.var(4.0)
        assert math.isclose(tape.gradients(x**0.5, [x])[0], 0.25)

    def test_min_max_clamp_routing(self):
        tape = Tape()
        a, b = tape.var(1.0), tape.var(2.0)
        assert tape.gradients(ad.vmax(a, b), [a, b]) == [0.0, 1.0]
        tape = Tape()
        a, b = tape.var(1.0), tape.var(2.0)
        assert tape.gradients(ad.vmin(a, b), [a, b]) == [1.0, 0.0]
        tape = Tape()
        x = tape.var(0.5)
        assert tape.gradients(ad.clamp(x, 0.0, 1.0), [x]) == [1.0]
        tape = Tape()
        x = tape.var(1.5)
        out = ad.clamp(x, 0.0, 1.0)
        assert out.value == 1.0
        assert tape.gradients(out, [x]) == [0.0]

    def test_float_fallbacks(self):
        assert ad.exp(0.0) == 1.0
        assert ad.ln(math.e) == pytest.approx(1.0)
        assert ad.log10(100.0) == pytest.approx(2.0)
        assert ad.sqrt(9.0) == 3.0
        assert ad.vmax(1.0, 2.0) == 2.0
        assert ad.clamp(5.0, 0.0, 1.0) == 1.0
        assert ad.value_of(1.5) == 1.5

    def test_domain_errors(self):
        tape = Tape()
        x = tape.var(-1.0)
        with pytest.raises(DomainError):
            ad.ln(x)
        with pytest.raises(DomainError):
            ad.sqrt(x)
        with pytest.raises(DomainError):
            ad.log10(tape.var(0.0))
        with pytest.raises(DomainError):
            ad.power(x, 0.5)
        with pytest.raises(ZeroDivisionError):
            x / tape.var(0.0)
        with pytest.raises(DomainError):
            tape.var(math.nan)

    def test_primitives_match_finite_differences(self):
        """Every primitive vs. central differences on random interior points."""
        rng = np.random.default_rng(42)
        cases = [
            ("add", lambda x: x + 1.7, lambda r: r.uniform(-10, 10)),
            ("sub", lambda x: 3.0 - x, lambda r: r.uniform(-10, 10)),
            ("mul", lambda x: x * -2.5, lambda r: r.uniform(-10, 10)),
            ("div", lambda x: x / 1.3, lambda r: r.uniform(-10, 10)),
            ("rdiv", lambda x: 2.0 / x, lambda r: r.uniform(0.5, 10)),
            ("neg", lambda x: -x, lambda r: r.uniform(-10, 10)),
            ("exp", ad.exp, lambda r: r.uniform(-3, 3)),
            ("ln", ad.ln, lambda r: r.uniform(0.1, 10)),
            ("log10", ad.log10, lambda r: r.uniform(0.1, 10)),
            ("sqrt", ad.sqrt, lambda r: r.uniform(0.1, 10)),
            ("sin", ad.sin, lambda r: r.uniform(-3, 3)),
            ("cos", ad.cos, lambda r: r.uniform(-3, 3)),
            ("abs", abs, lambda r: r.uniform(0.5, 5) * r.choice([-1, 1])),
            ("pow", lambda x: ad.power(x, 2.7), lambda r: r.uniform(0.2, 5)),
            ("max", lambda x: ad.vmax(x, 1.0), lambda r: r.uniform(1.5, 5)),
            ("min", lambda x: ad.vmin(x, 1.0), lambda r: r.uniform(1.5, 5)),
            ("clamp", lambda x: ad.clamp(x, -2.0, 2.0), lambda r: r.uniform(-1.5, 1.5)),
        ]
        points_per_case = 1000 // len(cases) + 1
        for name, fn, sample in cases:
            for _ in range(points_per_case):
                p = float(sample(rng))
                result = ad.gradcheck(lambda xs: fn(xs[0]), [p], rel_step=1e-5)
                assert result.max_rel_error < 1e-6, f"{name} at {p}: {result.max_rel_error}"


class TestBackward:
    def test_sum_of_squares(self):
        tape = Tape()
        xs = [tape.var(v) for v in (1.0, -2.0, 3.5)]
        root = ad.vsum([x * x for x in xs])
        assert tape.gradients(root, xs) == [2.0, -4.0, 7.0]

    def test_unreachable_leaf_gets_zero(self):
        tape = Tape()
        x = tape.var(1.0)
        y = tape.var(5.0)
        root = x * 2.0
        assert tape.gradients(root, [x, y]) == [2.0, 0.0]

    def test_constant_expression_zero_gradient(self):
        tape = Tape()
        x = tape.var(1.0)
        root = tape.var(7.0) * 2.0  # no dependence on x
        assert tape.gradients(root, [x]) == [0.0]

    def test_backward_is_linear(self):
        def f(x):
            return x[0] * x[0] + ad.sin(x[1])

        def g(x):
            return ad.exp(x[0]) * x[1]

        point = [0.7, -1.2]
        a, b = 2.5, -0.3

        tape = Tape()
        xs = [tape.var(p) for p in point]
        gf = tape.gradients(f(xs), xs)
        tape = Tape()
        xs = [tape.var(p) for p in point]
        gg = tape.gradients(g(xs), xs)
        tape = Tape()
        xs = [tape.var(p) for p in point]
        gc = tape.gradients(a * f(xs) + b * g(xs), xs)
        for k in range(2):
            assert gc[k] == pytest.approx(a * gf[k] + b * gg[k], rel=1e-12)

    def test_foreign_root_rejected(self):
        tape = Tape()
        other = Tape()
        x = other.var(1.0)
        with pytest.raises(TapeMismatchError):
            tape.backward(x)
        with pytest.raises(TapeMismatchError):
            tape.var(1.0) + x

    def test_cross_tape_mixing_rejected_everywhere(self):
        tape = Tape()
        other = Tape()
        a = tape.var(1.0)
        b = other.var(2.0)
        with pytest.raises(TapeMismatchError):
            ad.vmax(a, b)
        with pytest.raises(TapeMismatchError):
            ad.vmin(a, b)
        with pytest.raises(TapeMismatchError):
            ad.lincomb([a, b], [1.0, 1.0])
        with pytest.raises(TapeMismatchError):
            ad.sumsq([a, b])

    def test_replay_determinism(self):
        def run():
            tape = Tape()
            xs = [tape.var(v) for v in (0.3, 1.7, -2.2)]
            root = ad.exp(xs[0]) * ad.sin(xs[1]) + xs[2] / xs[0] + ad.sqrt(abs(xs[2]))
            return root.value, tape.gradients(root, xs)

        v1, g1 = run()
        v2, g2 = run()
        assert v1 == v2
        assert g1 == g2


class TestReductions:
    def test_lincomb_matches_manual(self):
        tape = Tape()
        xs = [tape.var(v) for v in (1.0, 2.0, 3.0)]
        coeffs = np.array([0.5, -1.0, 2.0])
        node = ad.lincomb(xs, coeffs, const=0.25)
        assert node.value == pytest.approx(0.5 - 2.0 + 6.0 + 0.25)
        assert tape.gradients(node, xs) == pytest.approx(list(coeffs))

    def test_lincomb_gather_path(self):
        tape = Tape()
        xs = [tape.var(v) for v in (1.0, 2.0, 3.0)]
        _ = xs[0] * 2.0  # break contiguity of the next selection
        picked = [xs[2], xs[0]]
        node = ad.lincomb(picked, [1.0, 10.0])
        assert node.value == 13.0
        assert tape.gradients(node, xs) == [10.0, 0.0, 1.0]

    def test_lincomb_float_path(self):
        assert ad.lincomb([1.0, 2.0], [3.0, 4.0], const=1.0) == 12.0
        assert ad.lincomb([], None, const=2.5) == 2.5

    def test_lincomb_many_matches_single(self):
        tape = Tape()
        xs = [tape.var(v) for v in (1.0, -2.0, 0.5)]
        matrix = np.array([[1.0, 2.0, 3.0], [0.0, -1.0, 4.0]])
        many = ad.lincomb_many(xs, matrix)
        singles = [ad.lincomb(xs, row) for row in matrix]
        for m, s in zip(many, singles):
            assert m.value == s.value
        g0 = tape.gradients(many[0], xs)
        assert g0 == pytest.approx([1.0, 2.0, 3.0])

    def test_quadform_matches_manual(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=(4, 4))
        a = a + a.T
        vals = rng.normal(size=4)
        tape = Tape()
        xs = [tape.var(v) for v in vals]
        node = ad.quadform(xs, a)
        assert node.value == pytest.approx(float(vals @ a @ vals))
        assert tape.gradients(node, xs) == pytest.approx(list(2.0 * a @ vals))

    def test_sumsq(self):
        tape = Tape()
        xs = [tape.var(v) for v in (1.0, 2.0)]
        node = ad.sumsq(xs)
        assert node.value == 5.0
        assert tape.gradients(node, xs) == [2.0, 4.0]
        assert ad.sumsq([3.0, 4.0]) == 25.0

    def test_shape_validation(self):
        tape = Tape()
        xs = [tape.var(1.0), tape.var(2.0)]
        with pytest.raises(ValueError):
            ad.lincomb(xs, [1.0])
        with pytest.raises(ValueError):
            ad.quadform(xs, np.eye(3))


class TestGradcheck:
    def test_quadratic_bowl(self):
        result = ad.gradcheck(lambda xs: ad.vsum([x * x for x in xs]), [0.5, -1.5, 2.0])
        assert result.max_rel_error < 1e-8
        assert result.excluded == ()

    def test_branch_boundary_excluded(self):
        def f(xs):
            x = xs[0]
            if ad.value_of(x) > 1.0:  # value jump across the branch
                return x * 2.0
            return x * 0.0 + 5.0

        result = ad.gradcheck(f, [1.0])
        assert result.excluded == (0,)
        assert result.max_rel_error == 0.0  # nothing left to compare

    def test_requires_var_output(self):
        with pytest.raises(TypeError):
            ad.gradcheck(lambda xs: 1.0, [0.5])
