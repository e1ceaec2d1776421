import json

import numpy as np
import pytest

from higate.learners import GateHyper, gate_to_dict
from higate.policies import (
    Decision,
    PolicyFamily,
    PolicySpec,
    build_post_gate,
    build_pre_gate,
    decide,
    decide_batch,
    parse_policy,
)
from higate.trace import Trace

from conftest import mk_record, mk_trace, separable_trace


class TestDecide:
    def test_ft_confident_accepts(self):
        rec = mk_record("a", 0, [0.9, 0.1])
        policy = PolicySpec(PolicyFamily.FT, theta=0.5)
        assert decide(policy, rec) is Decision.ACCEPT_LOCAL

    def test_ft_boundary_accepts(self):
        rec = mk_record("a", 0, [0.5, 0.3, 0.2])
        policy = PolicySpec(PolicyFamily.FT, theta=0.5)
        assert decide(policy, rec) is Decision.ACCEPT_LOCAL

    def test_ft_theta_one_offloads_non_one_hot(self):
        rec = mk_record("a", 0, [0.99, 0.01])
        policy = PolicySpec(PolicyFamily.FT, theta=1.0)
        assert decide(policy, rec) is Decision.OFFLOAD

    def test_ft_theta_zero_never_offloads(self, overconfident_trace):
        policy = PolicySpec(PolicyFamily.FT, theta=0.0)
        assert not decide_batch(policy, overconfident_trace).any()

    def test_constant_families(self, overconfident_trace):
        full = PolicySpec(PolicyFamily.FULL_OFFLOAD)
        never = PolicySpec(PolicyFamily.NEVER_OFFLOAD)
        assert decide_batch(full, overconfident_trace).all()
        assert not decide_batch(never, overconfident_trace).any()
        rec = overconfident_trace.records[17]
        assert decide(full, rec) is Decision.OFFLOAD
        assert decide(never, rec) is Decision.ACCEPT_LOCAL

    def test_unresolved_theta_refused(self):
        policy = PolicySpec(PolicyFamily.FT)
        rec = mk_record("a", 0, [0.9, 0.1])
        with pytest.raises(ValueError, match="not resolved"):
            decide(policy, rec)

    def test_pre_gate_requires_features(self, featured_trace):
        result = build_pre_gate(featured_trace, GateHyper(kind="lr"), seed=0)
        bare = mk_record("a", 0, [0.9] + [0.1 / 9] * 9)
        with pytest.raises(ValueError, match="features"):
            decide(result.policy, bare)

    def test_decide_batch_matches_decide(self, featured_trace):
        sub = Trace(featured_trace.records[:300], featured_trace.num_classes,
                    featured_trace.feature_dim)
        post = build_post_gate(sub, GateHyper(kind="lr"), seed=0)
        pre = build_pre_gate(sub, GateHyper(kind="rf", num_trees=5), seed=0)
        policies = [
            PolicySpec(PolicyFamily.FT, theta=0.8),
            PolicySpec(PolicyFamily.CFT, theta=0.8, temperature=2.0),
            post.policy,
            pre.policy,
            PolicySpec(PolicyFamily.FULL_OFFLOAD),
            PolicySpec(PolicyFamily.NEVER_OFFLOAD),
        ]
        for policy in policies:
            mask = decide_batch(policy, sub)
            loop = np.array([decide(policy, r) is Decision.OFFLOAD for r in sub])
            assert np.array_equal(mask, loop), policy.label


class TestThresholdMonotonicity:
    def test_offload_fraction_non_decreasing_in_theta(self, overconfident_trace):
        fractions = []
        for theta in np.linspace(0, 1, 21):
            mask = decide_batch(PolicySpec(PolicyFamily.FT, theta=float(theta)),
                                overconfident_trace)
            fractions.append(mask.mean())
        assert all(a <= b + 1e-15 for a, b in zip(fractions, fractions[1:]))

    def test_cft_with_unit_temperature_equals_ft(self, overconfident_trace):
        for theta in (0.0, 0.3, 0.55, 0.8, 1.0):
            ft = decide_batch(PolicySpec(PolicyFamily.FT, theta=theta), overconfident_trace)
            cft = decide_batch(PolicySpec(PolicyFamily.CFT, theta=theta, temperature=1.0),
                               overconfident_trace)
            assert np.array_equal(ft, cft)


class TestGateBuilding:
    def test_post_gate_on_separable_trace(self):
        trace = separable_trace(n=3000, seed=1)
        result = build_post_gate(trace, GateHyper(kind="lr"), seed=0)
        assert result.holdout_accuracy >= 0.95
        counts = result.class_counts
        assert counts["complex"] > 0 and counts["simple"] > 0

    def test_zero_complex_errors(self):
        trace = mk_trace([(0, [0.9, 0.1])] * 20)
        with pytest.raises(ValueError, match="both classes"):
            build_post_gate(trace, GateHyper(kind="lr"), seed=0)

    def test_same_seed_identical_policy(self, featured_trace):
        sub = Trace(featured_trace.records[:2000], featured_trace.num_classes,
                    featured_trace.feature_dim)
        r1 = build_post_gate(sub, GateHyper(kind="lr"), seed=4)
        r2 = build_post_gate(sub, GateHyper(kind="lr"), seed=4)
        assert json.dumps(gate_to_dict(r1.gate), sort_keys=True) == \
            json.dumps(gate_to_dict(r2.gate), sort_keys=True)
        assert r1.holdout_accuracy == r2.holdout_accuracy

    def test_pre_gate_beats_chance_on_featured_trace(self, featured_trace):
        result = build_pre_gate(featured_trace, GateHyper(kind="rf"), seed=1)
        assert result.holdout_accuracy > 0.6

    def test_pre_gate_lr_beats_chance_on_featured_trace(self, featured_trace):
        result = build_pre_gate(featured_trace, GateHyper(kind="lr"), seed=1)
        assert result.holdout_accuracy > 0.6

    def test_pre_gate_without_features_errors(self, overconfident_trace):
        with pytest.raises(ValueError, match="features"):
            build_pre_gate(overconfident_trace, GateHyper(kind="lr"), seed=0)

    def test_constant_features_degenerate_to_constant_decision(self):
        rng = np.random.default_rng(0)
        rows = []
        for i in range(400):
            complex_ = i % 2 == 0
            probs = [0.4, 0.6] if complex_ else [0.9, 0.1]
            label = 0 if complex_ else 0  # pred differs: argmax 1 vs 0
            rows.append((0, probs, True, [1.0, 1.0, 1.0]))
        trace = mk_trace(rows)
        result = build_pre_gate(trace, GateHyper(kind="lr"), seed=0)
        mask = decide_batch(result.policy, trace)
        assert mask.all() or not mask.any()

    def test_permutation_consistency(self):
        # permuting softmax coordinates in both training and evaluation leaves
        # post-gate decisions unchanged
        trace = separable_trace(n=1200, seed=3)
        perm = np.array([3, 1, 4, 0, 2, 9, 7, 8, 5, 6])
        permuted = mk_trace([
            (int(np.argwhere(perm == r.label)[0][0]) if r.label in perm else r.label,
             r.sml_probs[perm], r.lml_correct)
            for r in trace
        ])
        base = build_post_gate(trace, GateHyper(kind="lr"), seed=2)
        swapped = build_post_gate(permuted, GateHyper(kind="lr"), seed=2)
        m1 = decide_batch(base.policy, trace)
        m2 = decide_batch(swapped.policy, permuted)
        assert np.array_equal(m1, m2)


class TestParsePolicy:
    def test_round_trips(self):
        req = parse_policy("ft:0.55")
        assert req.family is PolicyFamily.FT and req.theta == 0.55
        req = parse_policy("cft:0.5@T=1.8")
        assert req.family is PolicyFamily.CFT
        assert req.theta == 0.5 and req.temperature == 1.8
        req = parse_policy("cft")
        assert req.theta is None and req.temperature is None
        req = parse_policy("gate:post:model.json")
        assert req.family is PolicyFamily.POST_GATE
        assert req.gate_stage == "post" and req.gate_source == "model.json"
        req = parse_policy("gate:pre:lr")
        assert req.family is PolicyFamily.PRE_GATE and req.gate_source == "lr"
        assert parse_policy("full-offload").family is PolicyFamily.FULL_OFFLOAD
        assert parse_policy("never-offload").family is PolicyFamily.NEVER_OFFLOAD

    @pytest.mark.parametrize("bad", [
        "ft:1.5", "ft:x", "cft:0.5@1.8", "gate:mid:lr", "gate:post:", "nonsense",
        "cft:0.5@T=-1",
    ])
    def test_rejects_malformed(self, bad):
        with pytest.raises(ValueError):
            parse_policy(bad)


class TestPolicySpecValidation:
    def test_gate_family_requires_model(self):
        with pytest.raises(ValueError, match="gate model"):
            PolicySpec(PolicyFamily.POST_GATE)

    def test_theta_range(self):
        with pytest.raises(ValueError):
            PolicySpec(PolicyFamily.FT, theta=1.2)

    def test_temperature_positive(self):
        with pytest.raises(ValueError):
            PolicySpec(PolicyFamily.CFT, theta=0.5, temperature=0.0)
