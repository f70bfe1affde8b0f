"""Training loop tests: schedule, selection oracles, label flipping, the
cross-teaching iterations, and the full train() contract."""

import math
from dataclasses import replace

import numpy as np
import pytest

from canclab import (
    Batch,
    ConfigError,
    MaskDataset,
    NetworkSpec,
    NumericError,
    TrainConfig,
    canc_iteration,
    coteaching_iteration,
    flip_labels,
    init_network,
    parse_layers,
    per_sample_loss,
    remember_rate,
    select_clean,
    select_swap,
    sgd_step,
    train,
)

SPEC = NetworkSpec(
    input_size=8, channels=1, layers=parse_layers("conv(3,3,2) lrelu(0.1) dense(27,2)")
)


def rand_batch(n=10, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 1, size=(n, 8, 8, 1))
    y = rng.integers(0, 2, size=n)
    return Batch(x, y)


def toy_dataset(n=64, seed=0, noisy=False):
    """Separable toy task: mean brightness above 0.5 means label 1."""
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, size=n)
    base = np.where(y[:, None, None, None] == 1, 0.75, 0.25)
    patches = np.clip(base + rng.normal(0, 0.05, size=(n, 8, 8, 1)), 0, 1)
    labels = y.copy()
    clean = None
    if noisy:
        clean = y.copy()
        flip = rng.random(n) < 0.2
        labels = np.where(flip, 1 - y, y)
    return MaskDataset(
        patches=patches,
        labels=labels.astype(np.int64),
        scene_ids=np.zeros(n, dtype=np.int64),
        rows=np.arange(n, dtype=np.int64),
        cols=np.zeros(n, dtype=np.int64),
        m=8,
        tau_label=0.01,
        clean_labels=clean,
    )


def params_equal(a, b):
    return all(
        np.array_equal(wa, wb) and np.array_equal(ba, bb)
        for (wa, ba), (wb, bb) in zip(a.params, b.params)
    )


# ---------------------------------------------------------------------------
# remember rate


def test_remember_rate_reference_points():
    assert remember_rate(0, 10, 0.45) == 1.0
    assert remember_rate(10, 10, 0.45) == pytest.approx(0.55, abs=1e-15)
    assert remember_rate(5, 10, 0.45) == pytest.approx(0.775, abs=1e-15)


def test_remember_rate_monotone_with_floor():
    prev = 2.0
    for t in range(0, 30):
        r = remember_rate(t, 10, 0.3)
        assert r <= prev
        assert 1 - 0.3 <= r <= 1.0
        prev = r
    assert remember_rate(25, 10, 0.3) == remember_rate(10, 10, 0.3)


def test_remember_rate_validation():
    with pytest.raises(ConfigError):
        remember_rate(1, 0, 0.3)
    with pytest.raises(ConfigError):
        remember_rate(-1, 5, 0.3)


# ---------------------------------------------------------------------------
# selection


def test_select_clean_reference():
    losses = np.array([0.9, 0.1, 0.5, 0.3])
    assert select_clean(losses, 0.5).tolist() == [1, 3]
    assert select_clean(losses, 1.0).tolist() == [0, 1, 2, 3]


def test_select_clean_floor_of_one():
    losses = np.array([0.9, 0.1, 0.5, 0.3])
    assert select_clean(losses, 0.01).tolist() == [1]


def test_select_swap_reference():
    losses = np.array([0.9, 0.1, 0.5, 0.3])
    assert select_swap(losses, 0.25).tolist() == [0]
    assert select_swap(losses, 0.0).tolist() == []


def test_selection_tie_break_prefers_lower_index():
    losses = np.array([0.5, 0.5, 0.5, 0.5])
    assert select_clean(losses, 0.5).tolist() == [0, 1]
    assert select_swap(losses, 0.5).tolist() == [0, 1]


def test_selection_matches_full_sort_oracle():
    rng = np.random.default_rng(12)
    losses = rng.uniform(size=1000)
    order = sorted(range(1000), key=lambda i: (losses[i], i))
    for rate in (0.1, 0.3, 0.7, 0.9):
        k = int(math.floor(rate * 1000))
        assert select_clean(losses, rate).tolist() == sorted(order[:k])
        order_desc = sorted(range(1000), key=lambda i: (-losses[i], i))
        assert select_swap(losses, rate).tolist() == sorted(order_desc[:k])


def test_selection_rejects_non_finite():
    with pytest.raises(NumericError):
        select_clean(np.array([0.1, np.nan]), 0.5)
    with pytest.raises(NumericError):
        select_swap(np.array([np.inf, 0.2]), 0.5)


def test_selection_rate_bounds():
    losses = np.array([0.1, 0.2])
    with pytest.raises(ConfigError):
        select_clean(losses, 0.0)
    with pytest.raises(ConfigError):
        select_clean(losses, 1.1)
    with pytest.raises(ConfigError):
        select_swap(losses, -0.1)


def test_disjointness_when_rates_fit():
    rng = np.random.default_rng(5)
    for _ in range(50):
        losses = rng.uniform(size=40)
        clean = set(select_clean(losses, 0.6).tolist())
        swap = set(select_swap(losses, 0.4).tolist())
        assert not clean & swap


# ---------------------------------------------------------------------------
# flips


def test_flip_labels_reference():
    assert flip_labels([0, 1, 0], []).tolist() == [0, 1, 0]
    assert flip_labels([0, 1, 0], [0, 1]).tolist() == [1, 0, 0]


def test_flip_labels_is_involution_and_pure():
    labels = np.array([0, 1, 1, 0, 1])
    idx = np.array([0, 2, 4])
    once = flip_labels(labels, idx)
    twice = flip_labels(once, idx)
    assert np.array_equal(twice, labels)
    assert labels.tolist() == [0, 1, 1, 0, 1]  # input untouched


def test_flip_labels_out_of_range():
    with pytest.raises(IndexError):
        flip_labels([0, 1], [2])


# ---------------------------------------------------------------------------
# iterations


def test_canc_iteration_counts():
    m1 = init_network(replace(SPEC, seed=1))
    m2 = init_network(replace(SPEC, seed=2))
    batch = rand_batch(n=10, seed=3)
    _, _, diag = canc_iteration(m1, m2, batch, r=0.6, s=0.2, lr=0.1)
    assert len(diag.clean_for_m2) == 6 and len(diag.swap_for_m2) == 2
    assert len(diag.clean_for_m1) == 6 and len(diag.swap_for_m1) == 2


def test_canc_iteration_matches_manual_assembly_oracle():
    """The peer update must equal: rank losses, pick clean + swap sets,
    flip the swap labels, concatenate, take one SGD step."""
    m1 = init_network(replace(SPEC, seed=1))
    m2 = init_network(replace(SPEC, seed=2))
    batch = rand_batch(n=12, seed=4)
    r, s, lr = 0.5, 0.25, 0.2

    m1_new, m2_new, _ = canc_iteration(m1, m2, batch, r, s, lr)

    def manual_update(selector_net, updated_net):
        losses = per_sample_loss(selector_net, batch)
        clean = select_clean(losses, r)
        swap = select_swap(losses, s)
        flipped = flip_labels(batch.y, swap)
        union = Batch(
            np.concatenate([batch.x[clean], batch.x[swap]]),
            np.concatenate([batch.y[clean], flipped[swap]]),
        )
        return sgd_step(updated_net, union, lr)

    oracle_m2 = manual_update(m1, m2)
    oracle_m1 = manual_update(m2, m1)
    for got, want in ((m2_new, oracle_m2), (m1_new, oracle_m1)):
        for (wg, bg), (ww, bw) in zip(got.params, want.params):
            assert np.allclose(wg, ww, rtol=1e-12, atol=0)
            assert np.allclose(bg, bw, rtol=1e-12, atol=0)


def test_canc_s_zero_bitwise_equals_coteaching_iteration():
    m1 = init_network(replace(SPEC, seed=1))
    m2 = init_network(replace(SPEC, seed=2))
    batch = rand_batch(n=10, seed=5)
    a1, a2, _ = canc_iteration(m1, m2, batch, r=0.7, s=0.0, lr=0.3)
    b1, b2, _ = coteaching_iteration(m1, m2, batch, r=0.7, lr=0.3)
    assert params_equal(a1, b1) and params_equal(a2, b2)


def test_cross_update_direction():
    """M1 must be changed only by M2's selection and vice versa."""
    m1 = init_network(replace(SPEC, seed=1))
    m2 = init_network(replace(SPEC, seed=2))
    batch = rand_batch(n=10, seed=6)
    losses_1 = per_sample_loss(m1, batch)
    losses_2 = per_sample_loss(m2, batch)
    new1, new2, _ = coteaching_iteration(m1, m2, batch, r=0.5, lr=0.1)

    sel2 = select_clean(losses_2, 0.5)
    expect1 = sgd_step(m1, Batch(batch.x[sel2], batch.y[sel2]), 0.1)
    assert params_equal(new1, expect1)
    sel1 = select_clean(losses_1, 0.5)
    expect2 = sgd_step(m2, Batch(batch.x[sel1], batch.y[sel1]), 0.1)
    assert params_equal(new2, expect2)
    # and the selections genuinely differ between the two networks here
    assert sel1.tolist() != sel2.tolist()


def test_canc_iteration_rejects_overflowing_swap():
    m1 = init_network(replace(SPEC, seed=1))
    m2 = init_network(replace(SPEC, seed=2))
    with pytest.raises(ConfigError):
        canc_iteration(m1, m2, rand_batch(), r=0.8, s=0.5, lr=0.1)


def test_canc_iteration_overlap_mode_swap_wins():
    m1 = init_network(replace(SPEC, seed=1))
    m2 = init_network(replace(SPEC, seed=2))
    batch = rand_batch(n=10, seed=7)
    _, _, diag = canc_iteration(m1, m2, batch, r=0.8, s=0.5, lr=0.1, allow_overlap=True)
    assert not set(diag.clean_for_m2.tolist()) & set(diag.swap_for_m2.tolist())
    assert len(diag.swap_for_m2) == 5


# ---------------------------------------------------------------------------
# train()


def base_config(**kw):
    cfg = dict(
        algo="canc", lr=0.2, t_max=4, t_k=2, batch_size=16, tau_f=0.4,
        swap_rate=0.1, shuffle_seed=10, init_seed_1=11, init_seed_2=12,
    )
    cfg.update(kw)
    return TrainConfig(**cfg)


def test_train_config_validation():
    with pytest.raises(ConfigError):
        base_config(algo="magic")
    with pytest.raises(ConfigError):
        base_config(tau_f=1.0)
    with pytest.raises(ConfigError):
        base_config(swap_rate=0.5, tau_f=0.4)  # swap must not exceed tau_f
    with pytest.raises(ConfigError):
        base_config(t_max=0)
    # the schedule-coupled ablation lifts the swap_rate cap
    base_config(swap_rate=0.5, tau_f=0.4, swap_mode="one_minus_r")


def test_train_single_iteration_layout():
    ds = toy_dataset(n=32, seed=1)
    cfg = base_config(algo="coteaching", t_max=1, n_max=1, batch_size=32, swap_rate=0.0)
    result = train(ds, ds, SPEC, cfg)
    assert len(result.records) == 1
    assert result.records[0].epoch == 0
    assert result.records[0].remember_rate == 1.0
    assert result.records[0].n_clean == 2 * 32  # both networks, full batch at R=1
    assert result.best_epoch == 0


def test_train_determinism():
    ds = toy_dataset(n=48, seed=2, noisy=True)
    cfg = base_config()
    a = train(ds, ds, SPEC, cfg)
    b = train(ds, ds, SPEC, cfg)
    assert repr(a.records) == repr(b.records)
    assert params_equal(a.best_network, b.best_network)
    for na, nb in zip(a.final_networks, b.final_networks):
        assert params_equal(na, nb)


def test_train_shuffle_seed_changes_trajectory():
    ds = toy_dataset(n=48, seed=2, noisy=True)
    a = train(ds, ds, SPEC, base_config())
    b = train(ds, ds, SPEC, base_config(shuffle_seed=99))
    assert repr(a.records) != repr(b.records)


def test_train_canc_s_zero_bitwise_equals_coteaching():
    ds = toy_dataset(n=48, seed=3, noisy=True)
    a = train(ds, ds, SPEC, base_config(algo="canc", swap_rate=0.0))
    b = train(ds, ds, SPEC, base_config(algo="coteaching", swap_rate=0.0))
    assert repr(a.records) == repr(b.records)
    for na, nb in zip(a.final_networks, b.final_networks):
        assert params_equal(na, nb)


def test_train_does_not_mutate_dataset_labels():
    ds = toy_dataset(n=48, seed=4, noisy=True)
    before = ds.labels.copy()
    train(ds, ds, SPEC, base_config(persist_swaps=True, t_max=3))
    assert np.array_equal(ds.labels, before)


def test_train_learns_separable_task():
    ds = toy_dataset(n=96, seed=5)
    cfg = base_config(algo="vanilla", t_max=12, t_k=2, lr=0.5, swap_rate=0.0)
    result = train(ds, ds, SPEC, cfg)
    assert result.best_accuracy > 0.9


def test_train_swap_stats_reported():
    ds = toy_dataset(n=64, seed=6, noisy=True)
    cfg = base_config(t_max=4, t_k=1, swap_rate=0.3, tau_f=0.4)
    result = train(ds, ds, SPEC, cfg)
    later = result.records[-1]
    assert later.swap_rate == pytest.approx(0.3)
    assert later.n_swapped > 0
    assert 0.0 <= later.swap_correct_fraction <= 1.0


def test_train_first_epoch_swaps_nothing():
    # R(0) = 1 leaves no room below the clean set, so S is clipped to 0
    ds = toy_dataset(n=64, seed=7, noisy=True)
    cfg = base_config(t_max=2, t_k=2, swap_rate=0.3, tau_f=0.4)
    result = train(ds, ds, SPEC, cfg)
    assert result.records[0].swap_rate == 0.0
    assert result.records[0].n_swapped == 0
    assert result.records[1].n_swapped > 0


def test_train_one_minus_r_mode_tracks_schedule():
    ds = toy_dataset(n=64, seed=8, noisy=True)
    cfg = base_config(t_max=3, t_k=2, swap_mode="one_minus_r", swap_rate=0.0, tau_f=0.4)
    result = train(ds, ds, SPEC, cfg)
    for rec in result.records:
        assert rec.swap_rate == pytest.approx(1.0 - rec.remember_rate)


def test_train_persist_swaps_changes_dynamics():
    ds = toy_dataset(n=64, seed=9, noisy=True)
    a = train(ds, ds, SPEC, base_config(t_max=4, t_k=1, swap_rate=0.3))
    b = train(ds, ds, SPEC, base_config(t_max=4, t_k=1, swap_rate=0.3, persist_swaps=True))
    assert repr(a.records) != repr(b.records)


def test_train_rejects_empty_sets():
    ds = toy_dataset(n=16, seed=10)
    empty = ds.take(np.array([], dtype=np.int64))
    with pytest.raises(ConfigError):
        train(empty, ds, SPEC, base_config())
    with pytest.raises(ConfigError):
        train(ds, empty, SPEC, base_config())


def test_train_best_snapshot_matches_records():
    ds = toy_dataset(n=64, seed=11, noisy=True)
    result = train(ds, ds, SPEC, base_config(t_max=5))
    best_from_records = max(rec.modelsel_metrics.accuracy for rec in result.records)
    assert result.best_accuracy == best_from_records
    assert result.records[result.best_epoch].modelsel_metrics.accuracy == best_from_records
