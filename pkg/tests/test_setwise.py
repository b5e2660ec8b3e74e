"""Tests for heterogeneous set-wise accounting."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpcomp.setwise import (
    AccountantStateError,
    BoundedRange,
    Cdp,
    CdpPair,
    ConsumeMismatchError,
    PureDP,
    SetwiseAccountant,
    Zcdp,
    br_mean_loss,
    convert_to_cdp,
    convert_to_zcdp,
    dp_mean_loss,
    global_bound_homogeneous,
    zcdp_dp_guarantee,
)

from .oracles import mp_br_mean, mp_dp_mean, mp_setwise_eps, mp_zcdp_eps


class TestPrivacyClasses:
    def test_validation(self) -> None:
        with pytest.raises(ValueError):
            PureDP(eps=0.0)
        with pytest.raises(ValueError):
            PureDP(eps=math.inf)
        with pytest.raises(ValueError):
            BoundedRange(alpha=-1.0)
        with pytest.raises(ValueError):
            Cdp(mu=-0.1, tau=1.0)
        with pytest.raises(ValueError):
            Cdp(mu=0.1, tau=0.0)
        with pytest.raises(ValueError):
            Zcdp(delta=1.0, xi=0.0, rho=0.1)
        with pytest.raises(ValueError):
            Zcdp(delta=0.0, xi=math.nan, rho=0.1)
        with pytest.raises(ValueError):
            Zcdp(delta=0.0, xi=0.0, rho=-0.1)

    def test_frozen(self) -> None:
        c = PureDP(eps=1.0)
        with pytest.raises(AttributeError):
            c.eps = 2.0  # type: ignore[misc]


class TestMeanLosses:
    def test_dp_mean_frozen(self) -> None:
        # eps * tanh(eps/2) at eps=1
        assert dp_mean_loss(1.0) == pytest.approx(0.46211715726000974, abs=1e-15)

    def test_br_mean_frozen(self) -> None:
        assert br_mean_loss(1.0) == pytest.approx(0.12330156148224454, abs=1e-15)
        assert br_mean_loss(0.5) == pytest.approx(0.031142092261155878, abs=1e-15)
        # quadratic regime: ~ alpha^2 / 24 at alpha -> 0
        assert br_mean_loss(1e-9) == pytest.approx(1.25e-19, rel=1e-6)

    def test_br_mean_validation(self) -> None:
        with pytest.raises(ValueError):
            br_mean_loss(0.0)
        with pytest.raises(ValueError):
            br_mean_loss(math.inf)

    @given(st.floats(min_value=1e-8, max_value=200.0))
    @settings(max_examples=150, deadline=None)
    def test_br_mean_matches_oracle(self, alpha: float) -> None:
        got = br_mean_loss(alpha)
        want = float(mp_br_mean(alpha))
        assert got == pytest.approx(want, rel=1e-11, abs=1e-15)

    @given(st.floats(min_value=1e-6, max_value=50.0))
    @settings(max_examples=100, deadline=None)
    def test_dp_mean_matches_oracle(self, eps: float) -> None:
        assert dp_mean_loss(eps) == pytest.approx(
            float(mp_dp_mean(eps)), rel=1e-12, abs=1e-300
        )

    @given(st.floats(min_value=1e-6, max_value=100.0))
    @settings(max_examples=150, deadline=None)
    def test_br_offset_never_positive(self, alpha: float) -> None:
        # the zCDP offset of a BR mechanism, mean - alpha^2/8, stays <= 0,
        # so the BR conversion never inflates the pure-rho budget
        z = convert_to_zcdp(BoundedRange(alpha))
        assert z.xi <= 1e-15

    def test_br_offset_frozen(self) -> None:
        z = convert_to_zcdp(BoundedRange(1.0))
        assert z.xi == pytest.approx(-0.00169843851775546, abs=1e-15)


class TestConversions:
    def test_pure_dp_to_cdp(self) -> None:
        pair = convert_to_cdp(PureDP(eps=0.7))
        assert pair.tau == 0.7
        assert pair.mu == pytest.approx(dp_mean_loss(0.7), abs=0.0)

    def test_br_to_cdp(self) -> None:
        pair = convert_to_cdp(BoundedRange(alpha=0.9))
        assert pair.tau == pytest.approx(0.45, abs=0.0)
        assert pair.mu == pytest.approx(br_mean_loss(0.9), abs=0.0)

    def test_cdp_passthrough(self) -> None:
        assert convert_to_cdp(Cdp(mu=0.2, tau=0.6)) == CdpPair(mu=0.2, tau=0.6)

    def test_zcdp_rejected_on_cdp_route(self) -> None:
        with pytest.raises(ValueError):
            convert_to_cdp(Zcdp(delta=0.0, xi=0.0, rho=0.5))

    def test_pure_dp_to_zcdp(self) -> None:
        z = convert_to_zcdp(PureDP(eps=2.0))
        assert (z.delta, z.xi, z.rho) == (0.0, 0.0, 2.0)

    def test_br_to_zcdp(self) -> None:
        z = convert_to_zcdp(BoundedRange(alpha=2.0))
        assert z.delta == 0.0
        assert z.rho == 0.5
        assert z.xi == pytest.approx(br_mean_loss(2.0) - 0.5, abs=0.0)

    def test_cdp_to_zcdp(self) -> None:
        z = convert_to_zcdp(Cdp(mu=0.5, tau=0.8))
        assert z.delta == 0.0
        assert z.rho == pytest.approx(0.32, abs=1e-16)
        assert z.xi == pytest.approx(0.5 - 0.32, abs=1e-16)

    def test_zcdp_passthrough(self) -> None:
        z = Zcdp(delta=1e-8, xi=-0.1, rho=0.25)
        assert convert_to_zcdp(z) is z

    def test_zcdp_dp_guarantee(self) -> None:
        z = Zcdp(delta=1e-8, xi=-0.1, rho=0.25)
        eps, total = zcdp_dp_guarantee(z, delta=1e-6)
        want = -0.1 + 0.25 + 2.0 * math.sqrt(0.25 * math.log(1e6))
        assert eps == pytest.approx(want, rel=1e-15)
        assert total == pytest.approx(1e-6 + 1e-8, rel=1e-15)
        with pytest.raises(ValueError):
            zcdp_dp_guarantee(z, delta=0.0)


class TestGlobalBoundCdp:
    def test_heterogeneous_frozen(self) -> None:
        acc = SetwiseAccountant(delta_slack=1e-6)
        acc.register(PureDP(eps=1.0))
        acc.register(BoundedRange(alpha=1.0))
        acc.register(Cdp(mu=0.3, tau=0.5))
        assert acc.global_bound_cdp() == pytest.approx(
            7.323316797610296, abs=1e-12
        )

    def test_explicit_delta_overrides_slack(self) -> None:
        acc = SetwiseAccountant(delta_slack=1e-6)
        acc.register(PureDP(eps=0.5))
        assert acc.global_bound_cdp(1e-3) < acc.global_bound_cdp()

    def test_matches_oracle(self) -> None:
        acc = SetwiseAccountant(delta_slack=1e-5)
        classes = [PureDP(0.3), PureDP(1.1), BoundedRange(0.7), Cdp(0.05, 0.2)]
        for c in classes:
            acc.register(c)
        pairs = [convert_to_cdp(c) for c in classes]
        want = float(
            mp_setwise_eps([p.mu for p in pairs], [p.tau for p in pairs], 1e-5)
        )
        assert acc.global_bound_cdp() == pytest.approx(want, rel=1e-13)

    def test_advanced_composition_identity(self) -> None:
        # k copies of pure eps-DP reduce to the classical k-fold formula
        # k*eps*(e^eps-1)/(e^eps+1) + eps*sqrt(2 k ln(1/delta))
        for k, eps, delta in ((25, 0.1, 1e-6), (100, 0.05, 1e-9), (7, 1.3, 1e-4)):
            acc = SetwiseAccountant(delta_slack=delta)
            for _ in range(k):
                acc.register(PureDP(eps))
            closed = k * eps * math.expm1(eps) / (
                math.exp(eps) + 1.0
            ) + eps * math.sqrt(2.0 * k * math.log(1.0 / delta))
            assert acc.global_bound_cdp() == pytest.approx(closed, abs=1e-12)

    @given(
        st.lists(
            st.one_of(
                st.floats(min_value=0.01, max_value=3.0).map(PureDP),
                st.floats(min_value=0.01, max_value=3.0).map(BoundedRange),
                st.tuples(
                    st.floats(min_value=0.0, max_value=1.0),
                    st.floats(min_value=0.01, max_value=2.0),
                ).map(lambda t: Cdp(mu=t[0], tau=t[1])),
            ),
            min_size=1,
            max_size=8,
        ),
        st.randoms(use_true_random=False),
    )
    @settings(max_examples=60, deadline=None)
    def test_order_independence(self, classes, rng) -> None:
        a = SetwiseAccountant(1e-6)
        for c in classes:
            a.register(c)
        shuffled = list(classes)
        rng.shuffle(shuffled)
        b = SetwiseAccountant(1e-6)
        for c in shuffled:
            b.register(c)
        assert a.global_bound_cdp() == pytest.approx(
            b.global_bound_cdp(), rel=1e-12
        )

    def test_rejects_zcdp_registrations(self) -> None:
        acc = SetwiseAccountant(1e-6)
        acc.register(PureDP(1.0))
        acc.register(Zcdp(delta=0.0, xi=0.0, rho=0.1))
        with pytest.raises(ValueError):
            acc.global_bound_cdp()

    def test_empty_accountant(self) -> None:
        with pytest.raises(ValueError):
            SetwiseAccountant(1e-6).global_bound_cdp()

    @given(
        st.integers(min_value=0, max_value=5),
        st.integers(min_value=0, max_value=5),
        st.integers(min_value=0, max_value=5),
        st.floats(min_value=0.05, max_value=2.0),
        st.floats(min_value=0.05, max_value=2.0),
        st.floats(min_value=0.0, max_value=1.0),
        st.floats(min_value=0.05, max_value=1.5),
    )
    @settings(max_examples=80, deadline=None)
    def test_homogeneous_matches_accountant(
        self, m_dp, m_br, m_cdp, eps, alpha, mu, tau
    ) -> None:
        if m_dp + m_br + m_cdp == 0:
            with pytest.raises(ValueError):
                global_bound_homogeneous(
                    m_dp, eps, m_br, alpha, m_cdp, mu, tau, 1e-6
                )
            return
        acc = SetwiseAccountant(1e-6)
        for _ in range(m_dp):
            acc.register(PureDP(eps))
        for _ in range(m_br):
            acc.register(BoundedRange(alpha))
        for _ in range(m_cdp):
            acc.register(Cdp(mu=mu, tau=tau))
        want = global_bound_homogeneous(m_dp, eps, m_br, alpha, m_cdp, mu, tau, 1e-6)
        assert acc.global_bound_cdp() == pytest.approx(want, rel=1e-12)


class TestGlobalBoundZcdp:
    def test_frozen(self) -> None:
        acc = SetwiseAccountant(delta_slack=1e-6)
        acc.register(Zcdp(delta=0.0, xi=0.0, rho=0.5))
        acc.register(Zcdp(delta=0.0, xi=0.0, rho=0.125))
        acc.register(Zcdp(delta=0.0, xi=-0.1, rho=0.3))
        eps, total = acc.global_bound_zcdp()
        assert eps == pytest.approx(7.974642582987475, abs=1e-12)
        assert total == pytest.approx(1e-6, rel=1e-15)

    def test_mixed_classes_and_delta_total(self) -> None:
        acc = SetwiseAccountant(delta_slack=1e-6)
        acc.register(PureDP(1.0))
        acc.register(Zcdp(delta=1e-2, xi=-0.1, rho=0.3))
        eps, total = acc.global_bound_zcdp()
        want = float(mp_zcdp_eps([0.0, -0.1], [0.5, 0.3], 1e-6))
        assert eps == pytest.approx(want, rel=1e-13)
        assert total == pytest.approx(1e-6 + 1e-2, rel=1e-15)

    def test_never_below_cdp_route_information(self) -> None:
        # pure-DP sets: zCDP route uses rho = eps^2/2 with xi = 0, so the
        # budgets are comparable and both must cover the mechanism set
        acc = SetwiseAccountant(1e-6)
        for _ in range(10):
            acc.register(PureDP(0.4))
        eps_z, total = acc.global_bound_zcdp()
        assert total == pytest.approx(1e-6)
        assert eps_z > 0.0

    def test_empty_accountant(self) -> None:
        with pytest.raises(ValueError):
            SetwiseAccountant(1e-6).global_bound_zcdp()


class TestConsumeLifecycle:
    def test_register_after_consume_raises(self) -> None:
        acc = SetwiseAccountant(1e-6)
        acc.register(PureDP(1.0))
        acc.register(PureDP(2.0))
        acc.consume(PureDP(1.0))
        with pytest.raises(AccountantStateError):
            acc.register(PureDP(0.5))

    def test_consume_unknown_raises(self) -> None:
        acc = SetwiseAccountant(1e-6)
        acc.register(PureDP(1.0))
        with pytest.raises(ConsumeMismatchError):
            acc.consume(PureDP(2.0))

    def test_consume_exhausted_raises(self) -> None:
        acc = SetwiseAccountant(1e-6)
        acc.register(PureDP(1.0))
        acc.register(PureDP(1.0))
        acc.consume(PureDP(1.0))
        acc.consume(PureDP(1.0))
        with pytest.raises(ConsumeMismatchError):
            acc.consume(PureDP(1.0))

    def test_consume_matches_with_rounding(self) -> None:
        acc = SetwiseAccountant(1e-6)
        acc.register(PureDP(0.5))
        acc.consume(PureDP(0.5 + 1e-13))
        assert len(acc.consumed) == 1

    def test_consume_rejects_beyond_rounding(self) -> None:
        acc = SetwiseAccountant(1e-6)
        acc.register(PureDP(0.5))
        with pytest.raises(ConsumeMismatchError):
            acc.consume(PureDP(0.5 + 1e-10))

    def test_bound_unchanged_by_consumption(self) -> None:
        acc = SetwiseAccountant(1e-6)
        acc.register(PureDP(1.0))
        acc.register(BoundedRange(0.8))
        before = acc.global_bound_cdp()
        acc.consume(BoundedRange(0.8))
        assert acc.global_bound_cdp() == before

    def test_consume_any_order(self) -> None:
        acc = SetwiseAccountant(1e-6)
        acc.register(PureDP(1.0))
        acc.register(Cdp(mu=0.1, tau=0.2))
        acc.register(BoundedRange(0.8))
        acc.consume(BoundedRange(0.8))
        acc.consume(PureDP(1.0))
        acc.consume(Cdp(mu=0.1, tau=0.2))
        assert len(acc.consumed) == 3


class TestJsonRoundTrip:
    def test_roundtrip_preserves_state_and_bound(self) -> None:
        acc = SetwiseAccountant(delta_slack=1e-7)
        acc.register(PureDP(1.0))
        acc.register(BoundedRange(0.8))
        acc.register(Cdp(mu=0.3, tau=0.5))
        acc.consume(BoundedRange(0.8))
        clone = SetwiseAccountant.from_json(acc.to_json())
        assert clone.delta_slack == acc.delta_slack
        assert clone.registered == acc.registered
        assert clone.consumed == acc.consumed
        assert clone.global_bound_cdp() == acc.global_bound_cdp()

    def test_roundtrip_zcdp(self) -> None:
        acc = SetwiseAccountant(delta_slack=1e-6)
        acc.register(Zcdp(delta=1e-9, xi=-0.05, rho=0.2))
        clone = SetwiseAccountant.from_json(acc.to_json())
        assert clone.global_bound_zcdp() == acc.global_bound_zcdp()

    def test_clone_respects_freeze(self) -> None:
        acc = SetwiseAccountant(1e-6)
        acc.register(PureDP(1.0))
        acc.consume(PureDP(1.0))
        clone = SetwiseAccountant.from_json(acc.to_json())
        with pytest.raises(AccountantStateError):
            clone.register(PureDP(2.0))
