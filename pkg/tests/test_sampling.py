"""Stratified coarse sampling and importance-sampled fine depths along rays."""
import numpy as np
import scipy.stats

from layerfield.field import build_entity_field
from layerfield.rendering import LayerInstance, RenderConfig, render_pixel_keys, render_rays

from conftest import narrow_field_config


def _layer(box, entity=1, seed=0, t_eval=0, **kw):
    b = np.asarray(box, dtype=np.float64)
    return LayerInstance(
        key=entity, entity=entity,
        field=build_entity_field(entity, narrow_field_config(), seed=seed),
        box_world=b, box_source=b, t_eval=t_eval, t01=0.0, **kw,
    )


def _unit_z_rays(n):
    origins = np.zeros((n, 3))
    origins[:, 0] = np.linspace(-0.5, 0.5, n)
    dirs = np.tile(np.array([0.0, 0.0, 1.0]), (n, 1))
    return origins, dirs


def test_coarse_depths_honor_their_bins():
    # segment is exactly [2, 3]: with 4 samples, draw j stays in [2+j/4, 2+(j+1)/4]
    layer = _layer([[-1.0, -1.0, 2.0], [1.0, 1.0, 3.0]])
    origins, dirs = _unit_z_rays(16)
    keys = render_pixel_keys(0, 0, np.arange(16))
    cfg = RenderConfig(coarse_samples=4, fine_samples=4)
    res = render_rays(origins, dirs, keys, [layer], cfg)
    st = res.coarse
    assert np.allclose(st.s0, 2.0) and np.allclose(st.s1, 3.0)
    for j in range(4):
        assert (st.depths[:, j] >= 2.0 + j / 4).all()
        assert (st.depths[:, j] <= 2.0 + (j + 1) / 4).all()


def test_coarse_bins_hold_for_every_segment_and_draw():
    gen = np.random.default_rng(0)
    origins = gen.uniform(-0.3, 0.3, size=(64, 3))
    origins[:, 2] = -2.0
    dirs = gen.normal(size=(64, 3))
    dirs[:, 2] = np.abs(dirs[:, 2]) + 1.0
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    layers = [
        _layer([[-1.0, -1.0, -0.5], [1.0, 1.0, 0.5]], entity=0),
        _layer([[-0.8, -0.8, 0.8], [0.9, 0.9, 2.0]], entity=1, seed=2),
    ]
    cfg = RenderConfig(coarse_samples=8, fine_samples=8)
    res = render_rays(origins, dirs, render_pixel_keys(3, 0, np.arange(64)), layers, cfg)
    st = res.coarse
    n = cfg.coarse_samples
    width = (st.s1 - st.s0)[:, None]
    j = np.arange(n)[None, :]
    lo = st.s0[:, None] + width * j / n
    hi = st.s0[:, None] + width * (j + 1) / n
    assert (st.depths >= lo).all()
    assert (st.depths <= hi).all()


def test_coarse_offsets_are_uniform():
    # recover the in-bin offsets and chi-square them against uniformity
    layer = _layer([[-2.0, -2.0, 1.0], [2.0, 2.0, 4.0]])
    m = 1250
    origins = np.zeros((m, 3))
    dirs = np.tile(np.array([0.0, 0.0, 1.0]), (m, 1))
    cfg = RenderConfig(coarse_samples=8, fine_samples=8)
    res = render_rays(origins, dirs, render_pixel_keys(0, 0, np.arange(m)), layer and [layer], cfg)
    st = res.coarse
    n = cfg.coarse_samples
    width = (st.s1 - st.s0)[:, None]
    j = np.arange(n)[None, :]
    u = (st.depths - st.s0[:, None]) / width * n - j
    assert u.size == 10000
    counts = np.histogram(u.reshape(-1), bins=16, range=(0.0, 1.0))[0]
    assert scipy.stats.chisquare(counts).pvalue > 0.01


def test_single_sample_spans_the_whole_segment():
    layer = _layer([[-1.0, -1.0, 2.0], [1.0, 1.0, 3.0]])
    origins, dirs = _unit_z_rays(32)
    cfg = RenderConfig(coarse_samples=1, fine_samples=1)
    res = render_rays(origins, dirs, render_pixel_keys(1, 0, np.arange(32)), [layer], cfg)
    d = res.coarse.depths
    assert d.shape == (32, 1)
    assert (d >= 2.0).all() and (d <= 3.0).all()
    assert d.std() > 0.05  # actually stratified, not pinned


def test_fine_depths_stay_inside_the_segment_and_keep_coarse():
    layers = [
        _layer([[-1.0, -1.0, -0.5], [1.0, 1.0, 0.5]], entity=0),
        _layer([[-0.8, -0.8, 0.8], [0.9, 0.9, 2.0]], entity=1, seed=2),
    ]
    gen = np.random.default_rng(5)
    origins = gen.uniform(-0.2, 0.2, size=(40, 3))
    origins[:, 2] = -2.0
    dirs = np.tile(np.array([0.0, 0.0, 1.0]), (40, 1))
    cfg = RenderConfig(coarse_samples=8, fine_samples=8)
    res = render_rays(origins, dirs, render_pixel_keys(2, 0, np.arange(40)), layers, cfg)
    fd = res.fine.depths
    assert fd.shape[1] == cfg.coarse_samples + cfg.fine_samples
    assert (np.diff(fd, axis=1) >= 0).all()
    assert (fd >= res.fine.s0[:, None]).all()
    assert (fd <= res.fine.s1[:, None]).all()
    # the union keeps every coarse depth exactly
    for row_f, row_c in zip(fd, res.coarse.depths):
        assert np.isin(row_c, row_f).all()


def test_fine_samples_chase_the_density():
    # fine draws should land in coarse bins proportionally to their weights
    origins, dirs = _unit_z_rays(8)
    cfg = RenderConfig(coarse_samples=8, fine_samples=64)
    layer = _layer([[-1.0, -1.0, 1.0], [1.0, 1.0, 3.0]], entity=3, seed=7)
    res = render_rays(origins, dirs, render_pixel_keys(4, 0, np.arange(8)), [layer], cfg)
    from layerfield.rendering import _segment_cdf_weights
    w = _segment_cdf_weights(res.coarse.depths, res.coarse.sigma, res.coarse.s1)
    new = np.setdiff1d(res.fine.depths[0], res.coarse.depths[0])
    edges = np.concatenate([res.coarse.depths[0], res.coarse.s1[:1]])
    hist = np.histogram(new, bins=edges)[0]
    top = int(np.argmax(w[0]))
    share = w[0, top] / w[0].sum()
    assert hist[top] >= share * len(new) * 0.5


def test_draws_are_keyed_and_repeatable():
    layer = _layer([[-1.0, -1.0, 1.0], [1.0, 1.0, 3.0]])
    origins, dirs = _unit_z_rays(6)
    cfg = RenderConfig(coarse_samples=4, fine_samples=4)
    k0 = render_pixel_keys(0, 0, np.arange(6))
    a = render_rays(origins, dirs, k0, [layer], cfg)
    b = render_rays(origins, dirs, k0, [layer], cfg)
    assert np.array_equal(a.fine.depths, b.fine.depths)
    c = render_rays(origins, dirs, render_pixel_keys(1, 0, np.arange(6)), [layer], cfg)
    assert not np.array_equal(a.coarse.depths, c.coarse.depths)


def test_layer_streams_are_independent():
    # same pixels, same box, different evaluation frame: fresh draws
    box = [[-1.0, -1.0, 1.0], [1.0, 1.0, 3.0]]
    origins, dirs = _unit_z_rays(6)
    cfg = RenderConfig(coarse_samples=4, fine_samples=4)
    keys = render_pixel_keys(0, 0, np.arange(6))
    a = render_rays(origins, dirs, keys, [_layer(box, t_eval=0)], cfg)
    b = render_rays(origins, dirs, keys, [_layer(box, t_eval=1)], cfg)
    assert not np.array_equal(a.coarse.depths, b.coarse.depths)
