import numpy as np
import pytest

from gossicrypt.analysis import stationary
from gossicrypt.simulator import (
    ConfigError,
    SimConfig,
    event_stream,
    measure_breach,
    measure_success,
    replicate_seeds,
    run,
    run_fast,
    run_full,
    _streams,
)

SMALL = SimConfig(N=16, L=2, transitions=3000, burn_in=300, seed=11)


@pytest.mark.parametrize("bad", [dict(N=10), dict(q=1.0), dict(tau=0), dict(L=0), dict(burn_in=5000),
                                 dict(variant=3), dict(strategy="zigzag"), dict(suite="rot13"),
                                 dict(refresh_loss=2), dict(sink_node=16), dict(delta=0),
                                 dict(delta=0.5, strategy="walk"), dict(r=0), dict(seed=-1)])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        SMALL.replace(**bad)


def test_config_edge_rates():
    assert SMALL.replace(lam=0).refresh_probability == 0
    assert SMALL.replace(tau=float("inf")).refresh_probability == 1
    with pytest.raises(ConfigError):
        SMALL.replace(lam=0, tau=float("inf"))


def test_full_and_fast_traces_identical():
    for cfg in (SMALL, SMALL.replace(strategy="walk", sink_mode="walk", suite="toy")):
        a, b = run_fast(cfg), run_full(cfg)
        assert np.array_equal(a.counts, b.counts)
        assert np.array_equal(a.effects, b.effects)
        assert b.refresh["accepted"] == b.refresh["built"]
        assert b.reports["accepted"] == b.reports["sent"] > 0


def test_deterministic():
    a, b = run_full(SMALL), run_full(SMALL)
    assert a.to_dict(trace=True) == b.to_dict(trace=True)
    c = run_full(SMALL.replace(seed=12))
    assert not np.array_equal(a.counts, c.counts)


def test_counts_move_by_one_with_event_sign():
    m = run_fast(SimConfig(N=100, transitions=5000, burn_in=0))
    step = np.diff(np.concatenate([[100], m.counts]))
    assert set(np.unique(step)) <= {-1, 0, 1}
    assert np.all(step[step == 1] == 1) and np.all(m.kinds[step == 1] == 1)
    assert np.all(m.kinds[step == -1] == 0)


def test_event_mix():
    cfg = SimConfig(transitions=20000, burn_in=0, lam=0.5, tau=2.0)
    ev = event_stream(cfg, _streams(cfg.seed)[0])
    p = cfg.refresh_probability
    assert abs(ev.kinds.mean() - p) < 4 * np.sqrt(p * (1 - p) / 20000)
    assert np.all(np.diff(ev.times) > 0)


def test_adversary_cell_tracks_compromises():
    m = run_fast(SMALL.replace(strategy="walk"))
    comp = np.flatnonzero(m.kinds == 0)
    assert np.array_equal(m.adv_cells[comp], m.targets[comp])


def test_variant1_leaks_keys_under_interception():
    cfg = SMALL.replace(variant=1, intercept_radius=4, suite="toy")
    m = run_full(cfg)
    assert m.refresh["intercepted_keys"] > 0
    # stolen refreshes keep compromised nodes compromised, so fewer correct nodes
    assert m.counts[cfg.burn_in:].mean() < run_fast(cfg).counts[cfg.burn_in:].mean()


def test_variant2_intercepts_leak_nothing():
    m = run_full(SMALL.replace(intercept_radius=4, suite="toy"))
    assert m.refresh["intercepted_keys"] == 0
    assert np.array_equal(m.counts, run_fast(SMALL).counts)


def test_refresh_loss_recorded():
    m = run_full(SMALL.replace(refresh_loss=0.5, suite="toy"))
    assert m.refresh["lost"] > 0
    assert m.decrypt_fail_rate > 0   # nodes moved on, sink did not


def test_replicate_seeds():
    s = replicate_seeds(42, 5)
    assert len(set(s)) == 5 and s == replicate_seeds(42, 5)


def test_metrics_distribution():
    m = run(SMALL.replace(protocol=False))
    d = m.empirical_distribution
    assert d.shape == (17,) and d.sum() == pytest.approx(1)
    tv = 0.5 * np.abs(d - stationary(SMALL.markov_model())).sum()
    assert tv < 0.2


def test_partial_node_set():
    m = run_fast(SMALL.replace(delta=0.5))
    assert m.targets.max() < 8 and len(m.empirical_distribution) == 9


def test_measure_success_small():
    cfg = SimConfig(N=36, L=3, transitions=3000, burn_in=300, protocol=False)
    ests = measure_success(cfg, qs=[0.5, 0.9], trials=500, runs=4)
    for e in ests:
        assert abs(e.median - e.analytical) < 0.08
        lo, hi = e.band
        assert lo <= e.median <= hi
    assert ests[0].median < ests[1].median


def test_measure_breach_small():
    cfg = SimConfig(N=36, transitions=4000, burn_in=400, protocol=False, q=0.5, epoch_spacing=50)
    est = measure_breach(cfg, 0, 2, k_max=3, runs=10, replicates=100)
    assert est.F[0] == 1 and np.all(np.diff(est.F) <= 0)
    assert len(est.relays) == 1
    with pytest.raises(ValueError):
        measure_breach(cfg, 3, 3)
