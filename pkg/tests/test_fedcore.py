import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedteach.datagen import (LongTailSpec, PartitionPlan, apply_long_tail,
                              dirichlet_partition, generate_synthetic)
from fedteach.errors import DivergenceError, ShapeError
from fedteach.evaluation import evaluate
from fedteach.fedcore import (ClientState, FedConfig, RoundPlan, RoundRecord, aggregate,
                              client_seed, local_update, plan_round, round_weights,
                              run_federated, select_clients)
from fedteach.numerics import MlpParams, backward, cross_entropy, forward, init_mlp

from oracles import assert_grad_close, central_diff, weighted_mean


def test_select_all_when_fraction_one():
    assert select_clients(7, 1.0, seed=0, round_index=3).tolist() == list(range(7))


def test_select_forty_percent_of_twenty():
    for t in range(20):
        sel = select_clients(20, 0.4, seed=1, round_index=t)
        assert len(sel) == 8 and len(set(sel.tolist())) == 8
        assert sel.min() >= 0 and sel.max() < 20


def test_select_rounds_differ_and_repeat():
    a = select_clients(20, 0.4, 5, 0)
    assert np.array_equal(a, select_clients(20, 0.4, 5, 0))
    draws = {tuple(select_clients(20, 0.4, 5, t)) for t in range(20)}
    assert len(draws) > 15


def test_selection_frequency_is_uniform():
    n, rounds, frac = 20, 10000, 0.4
    counts = np.zeros(n)
    for t in range(rounds):
        counts[select_clients(n, frac, seed=2024, round_index=t)] += 1
    p = 8 / 20
    sigma = np.sqrt(rounds * p * (1 - p))
    assert np.all(np.abs(counts - rounds * p) <= 3 * sigma), counts


def test_select_rejects_bad_fraction():
    with pytest.raises(ValueError):
        select_clients(10, 0.0, 0, 0)
    with pytest.raises(ValueError):
        select_clients(10, 1.5, 0, 0)


@pytest.fixture
def shard():
    return generate_synthetic(3, 4, 30, 4.0, seed=0)


def test_zero_lr_returns_identical(backend, shard, rng):
    p = init_mlp((4, 6, 3), rng)
    out = local_update(p, shard, epochs=2, lr=0.0, batch_size=8, seed=0)
    assert out.flat.tobytes() == p.flat.tobytes()
    assert out is not p


def test_single_example_single_step(backend, shard, rng):
    p = init_mlp((4, 6, 3), rng)
    one = shard.subset([4])
    out = local_update(p, one, epochs=1, lr=0.3, batch_size=1, seed=0)
    f = lambda v: cross_entropy(forward(p.with_flat(v), one.X[0]), one.y[0])[0]
    fd = central_diff(f, p.flat)
    _, dlogits = cross_entropy(forward(p, one.X[0]), one.y[0])
    analytic = backward(p, one.X[0], dlogits).flat
    assert_grad_close(analytic, fd, rel=1e-6)
    np.testing.assert_allclose(out.flat, p.flat - 0.3 * fd, rtol=0, atol=1e-9)
    np.testing.assert_array_equal(out.flat, p.flat - 0.3 * analytic)


def _shard_loss(p, data):
    return np.mean([cross_entropy(forward(p, x), y)[0] for x, y in zip(data.X, data.y)])


def test_local_training_descends(backend, shard, rng):
    p = init_mlp((4, 6, 3), rng)
    out = local_update(p, shard, epochs=5, lr=0.01, batch_size=10, seed=1)
    assert _shard_loss(out, shard) <= _shard_loss(p, shard)


def test_local_update_leaves_global_untouched(shard, rng):
    p = init_mlp((4, 6, 3), rng)
    before = p.flat.copy()
    local_update(p, shard, epochs=1, lr=0.5, batch_size=4, seed=0)
    np.testing.assert_array_equal(p.flat, before)


def test_local_update_divergence_has_context(shard, rng):
    p = init_mlp((4, 6, 3), rng)
    with pytest.raises(DivergenceError, match="round 3, client 7"):
        local_update(p, shard, 3, 1e8, 4, 0, context="round 3, client 7")


def _scalar(v):
    return MlpParams((1, 1), ("linear",), np.array([0.0, v]))


def test_aggregate_examples(rng):
    p = init_mlp((3, 4, 2), rng)
    assert aggregate([(p, 17)]).flat.tobytes() == p.flat.tobytes()
    neg = p.with_flat(-p.flat)
    np.testing.assert_array_equal(aggregate([(p, 5), (neg, 5)]).flat, 0.0)
    # (1*6 + 2*3 + 3*2) / 6 = 3
    agg = aggregate([(_scalar(6.0), 1), (_scalar(3.0), 2), (_scalar(2.0), 3)])
    assert agg.flat[1] == pytest.approx(3.0, abs=1e-15)


def test_aggregate_errors(rng):
    p = init_mlp((3, 2), rng)
    q = init_mlp((3, 3), rng)
    with pytest.raises(ShapeError):
        aggregate([(p, 1), (q, 1)])
    with pytest.raises(ValueError):
        aggregate([(p, 0)])
    with pytest.raises(ValueError):
        aggregate([])


@settings(max_examples=50)
@given(st.lists(st.integers(1, 1000), min_size=1, max_size=8), st.integers(0, 2**31))
def test_aggregate_matches_weighted_mean_oracle(sizes, seed):
    r = np.random.default_rng(seed)
    base = init_mlp((3, 4, 2), r)
    ps = [base.with_flat(r.normal(size=base.flat.size)) for _ in sizes]
    got = aggregate(list(zip(ps, sizes))).flat
    want = weighted_mean([p.flat for p in ps], sizes)
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-14)
    assert abs(round_weights(sizes).sum() - 1.0) <= 1e-12


@settings(max_examples=30)
@given(st.integers(1, 12), st.integers(0, 2**31))
def test_aggregate_idempotent(n, seed):
    p = init_mlp((3, 4, 2), np.random.default_rng(seed))
    sizes = np.random.default_rng(seed + 1).integers(1, 100, n)
    out = aggregate([(p, int(s)) for s in sizes])
    np.testing.assert_allclose(out.flat, p.flat, rtol=1e-12, atol=0)
    assert out.same_shape(p)


def _world(seed, concentration, clients=5, K=4):
    data = apply_long_tail(generate_synthetic(K, 6, 200, 2.5, seed=seed),
                           LongTailSpec(10, 150), seed)
    return data, dirichlet_partition(data, clients, concentration, seed)


def test_zero_rounds_returns_init(rng):
    data, plan = _world(0, 0.5)
    p = init_mlp((6, 8, 4), rng)
    out, recs = run_federated(p, FedConfig(num_clients=5, rounds=0), plan, data)
    assert out == p and recs == []


def test_single_client_is_centralized_sgd(backend, rng):
    data = generate_synthetic(3, 4, 40, 3.0, seed=0)
    plan = PartitionPlan([np.arange(len(data))], 1.0)
    p = init_mlp((4, 6, 3), rng)
    cfg = FedConfig(num_clients=1, fraction=1.0, rounds=4, local_epochs=2, lr=0.1,
                    batch_size=16, seed=77)
    out, recs = run_federated(p, cfg, plan, data)
    chain = p
    for t in range(4):
        chain = local_update(chain, data, 2, 0.1, 16, client_seed(77, t, 0))
    assert out.flat.tobytes() == chain.flat.tobytes()
    assert all(r.weights == [1.0] for r in recs)


def test_round_records_and_log(tmp_path, rng):
    import io
    data, plan = _world(1, 0.5)
    p = init_mlp((6, 8, 4), rng)
    cfg = FedConfig(num_clients=5, fraction=0.6, rounds=3, seed=3)
    buf = io.StringIO()
    out, recs = run_federated(p, cfg, plan, data, evaluate=lambda q: {"accuracy": 0.5}, log=buf,
                              keep_params=True)
    lines = [json.loads(s) for s in buf.getvalue().splitlines()]
    assert len(lines) == 3
    for rec, line in zip(recs, lines):
        assert len(rec.selected) == 3
        assert abs(sum(rec.weights) - 1.0) <= 1e-12
        assert rec.sizes == [int(plan.sizes[k]) for k in rec.selected]
        assert line == rec.to_json()
        assert "params" not in line and not any("grad" in k for k in line)
    assert recs[-1].params == out


def test_client_streams_independent_of_visit_order(rng):
    data, plan = _world(2, 0.5)
    p = init_mlp((6, 8, 4), rng)
    cfg = FedConfig(num_clients=5, fraction=0.4, rounds=1, seed=8)
    out, recs = run_federated(p, cfg, plan, data)
    sel = recs[0].selected
    updates = {k: local_update(p, plan.shard(data, k), cfg.local_epochs, cfg.lr, cfg.batch_size,
                               client_seed(8, 0, k)) for k in reversed(sel)}
    again = aggregate([(updates[k], int(plan.sizes[k])) for k in sel])
    assert again.flat.tobytes() == out.flat.tobytes()


def test_deterministic_runs(rng):
    data, plan = _world(3, 0.5)
    p = init_mlp((6, 8, 4), rng)
    cfg = FedConfig(num_clients=5, rounds=3, seed=1)
    a, _ = run_federated(p, cfg, plan, data)
    b, _ = run_federated(p, cfg, plan, data)
    assert a.flat.tobytes() == b.flat.tobytes()


def test_partition_client_count_must_match(rng):
    data, plan = _world(0, 0.5)
    with pytest.raises(ValueError):
        run_federated(init_mlp((6, 4), rng), FedConfig(num_clients=4), plan, data)


@pytest.mark.slow
def test_iid_beats_heterogeneous_partition():
    # several local epochs so client drift under skew shows up
    for seed in range(3):
        data = generate_synthetic(6, 8, 150, 2.5, seed=seed)
        test = generate_synthetic(6, 8, 200, 2.5, seed=seed, split="test")
        init = init_mlp((8, 16, 6), np.random.default_rng(seed))
        cfg = FedConfig(num_clients=10, fraction=0.4, rounds=15, local_epochs=5, seed=seed)
        acc = {}
        for conc in (1e6, 0.1):
            plan = dirichlet_partition(data, 10, conc, seed)
            final, _ = run_federated(init, cfg, plan, data)
            acc[conc] = evaluate(final, test)[0]
        assert acc[1e6] > acc[0.1], (seed, acc)


def test_round_plan_invariants():
    data, plan = _world(4, 0.5)
    cfg = FedConfig(num_clients=5, fraction=0.4, seed=2)
    rp = plan_round(cfg, plan, 3)
    assert len(rp.selected) == 2 and set(rp.selected) <= set(range(5))
    assert abs(sum(rp.weights) - 1.0) <= 1e-12 and min(rp.weights) > 0
    with pytest.raises(ValueError):
        RoundPlan(0, (1, 2), (0.5, 0.6))
    with pytest.raises(ValueError):
        RoundPlan(0, (1, 2), (1.0, 0.0))


def test_client_state_needs_a_shard():
    with pytest.raises(ValueError, match="client 3"):
        ClientState(3, np.array([], dtype=int))
