import numpy as np
import pytest
from scipy import stats

from lrising.diagnostics import chi_square_gof, integrated_autocorrelation
from lrising.enumeration import build_exact, encode_states
from lrising.kernel import AnisoLRNN, BiAxialLR, BoxGeometry, Dobrushin, IsotropicLR, Minus, Plus, SpinConfiguration
from lrising.mc import (
    ChainState,
    RunPlan,
    UniformStream,
    cluster_update,
    metropolis_sweep,
    run_chain,
    sample_configurations,
)

MODELS = [IsotropicLR(3.0), AnisoLRNN(1.5), BiAxialLR(1.5, 3.0)]


def test_uniform_stream_reproducible():
    a, b = UniformStream(5), UniformStream(5)
    assert np.array_equal(a.take(10), b.take(10))
    a.take(100000)
    b.take(100000)
    assert np.array_equal(a.take(7), b.take(7))
    assert a.consumed == 100017


@pytest.mark.parametrize("m", MODELS)
@pytest.mark.parametrize("bc", [Plus(), Dobrushin(0)])
def test_energy_bookkeeping(m, bc):
    st = ChainState.start(m, BoxGeometry(4, 3), bc, 0.4, 3)
    for _ in range(5):
        metropolis_sweep(st, 7)
        assert st.energy == pytest.approx(st.recomputed_energy(), rel=1e-6, abs=1e-9)
    if not isinstance(bc, Dobrushin):
        cluster_update(st, 200)
        assert st.energy == pytest.approx(st.recomputed_energy(), rel=1e-6, abs=1e-9)


def test_cluster_rejects_dobrushin():
    st = ChainState.start(IsotropicLR(3.0), BoxGeometry(2, 2), Dobrushin(0), 0.5, 1)
    with pytest.raises(ValueError):
        cluster_update(st)
    with pytest.raises(ValueError):
        RunPlan(IsotropicLR(3.0), BoxGeometry(2, 2), Dobrushin(0), 0.5, 1, sampler="cluster")


def test_run_plan_validation():
    box = BoxGeometry(2, 2)
    for kw in ({"burn_in_sweeps": -1}, {"n_samples": 0}, {"thinning_sweeps": 0},
               {"field_epsilon": 0.0}, {"sampler": "wolff"}):
        with pytest.raises(ValueError):
            RunPlan(IsotropicLR(3.0), box, Plus(), 0.5, 1, **kw)


def test_beta_zero_resamples_uniformly():
    st = ChainState.start(IsotropicLR(3.0), BoxGeometry(3, 3), Plus(), 0.0, 9)
    conf = sample_configurations(st, 20000, 1)
    p = (conf == 1).mean(axis=0)
    assert np.all(np.abs(p - 0.5) < 4 * 0.5 / np.sqrt(20000) + 1e-3)


@pytest.mark.parametrize("sampler", ["metropolis", "cluster"])
def test_single_site_two_point_law(sampler):
    m = IsotropicLR(3.0)
    box = BoxGeometry(0, 0)
    st = ChainState.start(m, box, Plus(), 0.4, 2)
    conf = sample_configurations(st, 200000, 1, sampler)
    exact = build_exact(m, box, Plus(), 0.4).magnetization()[0]
    mean = conf.mean()
    assert abs(mean - exact) < 5 * np.sqrt((1 - exact ** 2) / 200000)


def test_dobrushin_metropolis_chi_square():
    m = IsotropicLR(3.0)
    box = BoxGeometry(1, 1)
    g = build_exact(m, box, Dobrushin(0), 0.8)
    st = ChainState.start(m, box, Dobrushin(0), 0.8, 17)
    conf = sample_configurations(st, 200000, 3)
    counts = np.bincount(encode_states(conf), minlength=g.n_states)
    assert chi_square_gof(counts, g.weights).pvalue > 1e-3


def test_plus_cluster_chi_square():
    m = IsotropicLR(3.0)
    box = BoxGeometry(1, 1)
    g = build_exact(m, box, Plus(), 0.8)
    st = ChainState.start(m, box, Plus(), 0.8, 23)
    conf = sample_configurations(st, 200000, 1, "cluster")
    counts = np.bincount(encode_states(conf), minlength=g.n_states)
    assert chi_square_gof(counts, g.weights).pvalue > 1e-3


def test_determinism():
    plan = RunPlan(AnisoLRNN(1.5), BoxGeometry(3, 2), Dobrushin(0), 0.7, 99, 10, 50, 2)
    obs = {"m": lambda s: s.spins.mean()}
    assert run_chain(plan, obs) == run_chain(plan, obs)
    a = ChainState.start(IsotropicLR(3.0), BoxGeometry(3, 3), Plus(), 0.5, 4)
    b = ChainState.start(IsotropicLR(3.0), BoxGeometry(3, 3), Plus(), 0.5, 4)
    assert np.array_equal(sample_configurations(a, 300, 1, "cluster"), sample_configurations(b, 300, 1, "cluster"))


def test_run_chain_records():
    seen = []
    plan = RunPlan(IsotropicLR(3.0), BoxGeometry(2, 2), Plus(), 0.0, 1, 5, 40, 3)
    recs = run_chain(plan, {"m": lambda s: s.spins.mean()}, on_sample=seen.append)
    assert len(recs) == 40 == len(seen)
    assert [r["sweep"] for r in recs] == [5 + 3 * (k + 1) for k in range(40)]
    assert abs(np.mean([r["m"] for r in recs])) < 4 / np.sqrt(40 * 25)


@pytest.mark.parametrize("bc", [Plus(), Dobrushin(1)])
def test_flip_symmetry(bc):
    # same seed, flipped b.c. and flipped start: the trajectory is the spin negation
    m = BiAxialLR(1.5, 3.0)
    box = BoxGeometry(3, 2)
    s0 = SpinConfiguration.from_boundary(box, bc)
    a = ChainState.start(m, box, bc, 0.6, 77, sigma=s0)
    b = ChainState.start(m, box, bc.flipped(), 0.6, 77, sigma=s0.flipped())
    assert np.array_equal(sample_configurations(a, 200, 1), -sample_configurations(b, 200, 1))


def test_deep_ordered_magnetization():
    st = ChainState.start(IsotropicLR(3.5), BoxGeometry(16, 16), Plus(), 2.0, 5)
    conf = sample_configurations(st, 200, 1)
    assert conf.mean() > 0.9


def test_sampler_agreement():
    m = IsotropicLR(3.0)
    box = BoxGeometry(3, 3)
    a = ChainState.start(m, box, Minus(), 0.3, 31)
    b = ChainState.start(m, box, Minus(), 0.3, 32)
    ma = sample_configurations(a, 20000, 2).mean(axis=1)
    mb = sample_configurations(b, 20000, 1, "cluster").mean(axis=1)
    ta, tb = integrated_autocorrelation(ma), integrated_autocorrelation(mb)
    se = np.sqrt(2 * ta * ma.var() / ma.size + 2 * tb * mb.var() / mb.size)
    z = (ma.mean() - mb.mean()) / se
    assert 2 * stats.norm.sf(abs(z)) > 1e-3
