"""Layered rendering: background, compositing invariants, tiling, workers."""
import numpy as np

from layerfield.cameras import CameraModel, look_at
from layerfield.field import build_entity_field
from layerfield.rendering import (
    LayerInstance,
    RenderConfig,
    layers_at_frame,
    render_image,
    render_pixel_keys,
    render_rays,
)

from conftest import narrow_field_config


def _layer(box, entity=1, seed=0, t_eval=0, **kw):
    b = np.asarray(box, dtype=np.float64)
    return LayerInstance(
        key=entity, entity=entity,
        field=build_entity_field(entity, narrow_field_config(), seed=seed),
        box_world=b, box_source=b, t_eval=t_eval, t01=0.0, **kw,
    )


def _cam(size=8, cam_id=0):
    pos = np.array([0.0, 0.0, -3.0])
    rot = look_at(pos, np.array([0.0, 0.0, 0.0]))
    return CameraModel(cam_id=cam_id, width=size, height=size,
                       fx=size * 1.2, fy=size * 1.2, cx=size / 2 - 0.5, cy=size / 2 - 0.5,
                       rotation=rot, position=pos)


def _z_rays(n, x_lo=-0.5, x_hi=0.5):
    origins = np.zeros((n, 3))
    origins[:, 0] = np.linspace(x_lo, x_hi, n)
    origins[:, 2] = -2.0
    dirs = np.tile(np.array([0.0, 0.0, 1.0]), (n, 1))
    return origins, dirs


def test_empty_scene_returns_the_background_exactly():
    origins, dirs = _z_rays(5)
    cfg = RenderConfig(coarse_samples=4, fine_samples=4, background=(0.2, 0.5, 0.9))
    res = render_rays(origins, dirs, render_pixel_keys(0, 0, np.arange(5)), [], cfg)
    assert np.array_equal(res.rgb, np.tile([0.2, 0.5, 0.9], (5, 1)))
    assert np.array_equal(res.fine.alpha, np.zeros(5))


def test_missed_rays_keep_the_background_exactly():
    layer = _layer([[-0.2, -0.2, -0.2], [0.2, 0.2, 0.2]])
    origins, dirs = _z_rays(3, x_lo=0.0, x_hi=5.0)  # rays 1,2 miss the box
    cfg = RenderConfig(coarse_samples=4, fine_samples=4, background=(1.0, 0.0, 0.5))
    res = render_rays(origins, dirs, render_pixel_keys(0, 0, np.arange(3)), [layer], cfg)
    assert np.array_equal(res.rgb[1:], np.tile([1.0, 0.0, 0.5], (2, 1)))
    assert res.fine.alpha[0] > 0


def test_background_enters_through_residual_transmittance():
    # pix(bg1) - pix(bg0) == (1 - alpha) * (bg1 - bg0), and alpha is bg-free
    layer = _layer([[-1.0, -1.0, -0.5], [1.0, 1.0, 0.5]])
    origins, dirs = _z_rays(6)
    keys = render_pixel_keys(0, 0, np.arange(6))
    r0 = render_rays(origins, dirs, keys, [layer],
                     RenderConfig(coarse_samples=8, fine_samples=8, background=(0, 0, 0)))
    r1 = render_rays(origins, dirs, keys, [layer],
                     RenderConfig(coarse_samples=8, fine_samples=8, background=(1, 1, 1)))
    assert np.array_equal(r0.fine.alpha, r1.fine.alpha)
    resid = (1.0 - r0.fine.alpha)[:, None]
    assert np.allclose(r1.rgb - r0.rgb, resid, atol=1e-12)


def test_disjoint_layers_compose_like_the_over_operator():
    near = _layer([[-1.0, -1.0, -0.5], [1.0, 1.0, 0.0]], entity=1, seed=1)
    far = _layer([[-1.0, -1.0, 0.5], [1.0, 1.0, 1.0]], entity=2, seed=2)
    origins, dirs = _z_rays(6)
    keys = render_pixel_keys(0, 0, np.arange(6))
    cfg = RenderConfig(coarse_samples=8, fine_samples=8, background=(0.3, 0.1, 0.6))
    both = render_rays(origins, dirs, keys, [near, far], cfg)
    cfg0 = RenderConfig(coarse_samples=8, fine_samples=8, background=(0.0, 0.0, 0.0))
    rn = render_rays(origins, dirs, keys, [near], cfg0)
    rf = render_rays(origins, dirs, keys, [far], cfg0)
    bg = np.array(cfg.background)
    a_n = rn.fine.alpha[:, None]
    a_f = rf.fine.alpha[:, None]
    over = rn.rgb + (1 - a_n) * (rf.rgb + (1 - a_f) * bg)
    assert np.allclose(both.rgb, over, atol=1e-12)
    assert np.allclose(both.fine.alpha, 1 - (1 - rn.fine.alpha) * (1 - rf.fine.alpha), atol=1e-12)


def test_zero_density_scale_equals_leaving_the_layer_out():
    solid = _layer([[-1.0, -1.0, -0.5], [1.0, 1.0, 0.0]], entity=1, seed=1)
    ghost = _layer([[-1.0, -1.0, 0.5], [1.0, 1.0, 1.0]], entity=2, seed=2, density_scale=0.0)
    origins, dirs = _z_rays(6)
    keys = render_pixel_keys(0, 0, np.arange(6))
    cfg = RenderConfig(coarse_samples=8, fine_samples=8, background=(0.3, 0.1, 0.6))
    with_ghost = render_rays(origins, dirs, keys, [solid, ghost], cfg)
    without = render_rays(origins, dirs, keys, [solid], cfg)
    assert np.array_equal(with_ghost.rgb, without.rgb)
    assert np.array_equal(with_ghost.fine.alpha, without.fine.alpha)


def test_density_scale_thins_a_layer():
    full = _layer([[-1.0, -1.0, -0.5], [1.0, 1.0, 0.5]], seed=1)
    thin = _layer([[-1.0, -1.0, -0.5], [1.0, 1.0, 0.5]], seed=1, density_scale=0.25)
    origins, dirs = _z_rays(6)
    keys = render_pixel_keys(0, 0, np.arange(6))
    cfg = RenderConfig(coarse_samples=8, fine_samples=8)
    a_full = render_rays(origins, dirs, keys, [full], cfg).fine.alpha
    a_thin = render_rays(origins, dirs, keys, [thin], cfg).fine.alpha
    assert (a_thin < a_full).all()
    assert (a_thin > 0).all()


def test_single_pixel_image_matches_the_ray_path():
    cam = _cam(size=1)
    layer = _layer([[-0.4, -0.4, -0.4], [0.4, 0.4, 0.4]])
    cfg = RenderConfig(coarse_samples=8, fine_samples=8, background=(0.1, 0.2, 0.3))
    img, _ = render_image(cam, [layer], cfg, seed=5, camera_tag=9)
    origins, dirs = cam.rays(np.array([[0.0, 0.0]]))
    res = render_rays(origins, dirs, render_pixel_keys(5, 9, np.arange(1)), [layer], cfg)
    assert np.array_equal(img.reshape(1, 3), res.fine.pix.astype(np.float32))


def test_image_rendering_is_seeded_and_tag_separated():
    cam = _cam(size=6)
    layer = _layer([[-0.5, -0.5, -0.5], [0.5, 0.5, 0.5]])
    cfg = RenderConfig(coarse_samples=4, fine_samples=4)
    a, _ = render_image(cam, [layer], cfg, seed=0, camera_tag=0)
    b, _ = render_image(cam, [layer], cfg, seed=0, camera_tag=0)
    assert np.array_equal(a, b)
    c, _ = render_image(cam, [layer], cfg, seed=1, camera_tag=0)
    d, _ = render_image(cam, [layer], cfg, seed=0, camera_tag=1)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_tile_size_and_worker_count_never_change_pixels():
    cam = _cam(size=8)
    layers = [
        _layer([[-0.5, -0.5, -0.5], [0.5, 0.5, 0.5]], entity=1, seed=1),
        _layer([[-0.9, -0.9, 0.8], [0.9, 0.9, 1.2]], entity=2, seed=2),
    ]
    base = RenderConfig(coarse_samples=4, fine_samples=4)
    ref, _ = render_image(cam, layers, base, seed=3)
    # tile size only reshapes the evaluation batches; pixels agree to float32 ulp
    tiny_tiles, _ = render_image(cam, layers,
                                 RenderConfig(coarse_samples=4, fine_samples=4, tile=7), seed=3)
    assert np.allclose(ref, tiny_tiles, atol=1e-6)
    # worker count at a fixed tiling is exactly invariant
    serial, _ = render_image(cam, layers,
                             RenderConfig(coarse_samples=4, fine_samples=4, tile=11), seed=3)
    threaded, _ = render_image(cam, layers,
                               RenderConfig(coarse_samples=4, fine_samples=4, tile=11, workers=3),
                               seed=3)
    assert np.array_equal(serial, threaded)


def test_alpha_maps_cover_only_the_layers_own_pixels():
    cam = _cam(size=8)
    left = np.asarray([[-1.2, -1.2, -0.2], [-0.15, 1.2, 0.2]])
    right = np.asarray([[0.15, -1.2, -0.2], [1.2, 1.2, 0.2]])
    layers = [_layer(left, entity=1, seed=1), _layer(right, entity=2, seed=2)]
    cfg = RenderConfig(coarse_samples=8, fine_samples=8)
    img, amaps = render_image(cam, layers, cfg, seed=0, collect_alpha=True)
    assert set(amaps) == {1, 2}
    assert amaps[1].shape == (8, 8)
    assert (amaps[1] >= 0).all() and (amaps[1] <= 1).all()
    hit1 = amaps[1] > 0
    hit2 = amaps[2] > 0
    assert hit1.any() and hit2.any()
    assert not (hit1 & hit2).any()  # disjoint boxes never share a pixel
    # each layer's pixels cluster around its own projected box center
    cols1 = np.nonzero(hit1.any(axis=0))[0]
    cols2 = np.nonzero(hit2.any(axis=0))[0]
    uv1, _ = cam.project(left.mean(axis=0)[None])
    uv2, _ = cam.project(right.mean(axis=0)[None])
    assert (cols1.max() < cols2.min()) == (uv1[0, 0] < uv2[0, 0])


def test_progress_callback_counts_tiles():
    cam = _cam(size=6)
    layer = _layer([[-0.5, -0.5, -0.5], [0.5, 0.5, 0.5]])
    seen = []
    render_image(cam, [layer], RenderConfig(coarse_samples=2, fine_samples=2, tile=10),
                 seed=0, progress=lambda d, t: seen.append((d, t)))
    assert seen == [(1, 4), (2, 4), (3, 4), (4, 4)]


def test_layers_at_frame_builds_one_layer_per_entity():
    fields = {0: build_entity_field(0, narrow_field_config(), seed=0),
              2: build_entity_field(2, narrow_field_config(), seed=2)}
    boxes = {0: np.tile(np.array([[-1.0, -1, -1], [1, 1, 1.0]]), (3, 1, 1)),
             2: np.tile(np.array([[0.0, 0, 0], [1, 1, 1.0]]), (3, 1, 1))}
    out = layers_at_frame(fields, boxes, 1, 3)
    assert [l.entity for l in out] == [0, 2]
    assert out[0].t_eval == 1
    assert out[0].t01 == 0.5
    assert np.array_equal(out[1].box_world, boxes[2][1])
    assert np.array_equal(out[1].box_source, out[1].box_world)


def test_normalized_query_points_span_the_source_box():
    # a translated copy of the same box yields identical normalized points,
    # so the same field renders the same appearance wherever its box sits
    cfg = RenderConfig(coarse_samples=8, fine_samples=8)
    box_a = np.asarray([[-0.5, -0.5, -0.5], [0.5, 0.5, 0.5]])
    shift = np.array([3.0, 0.0, 0.0])
    box_b = box_a + shift
    la = _layer(box_a, seed=4)
    lb = LayerInstance(key=la.key, entity=la.entity, field=la.field,
                       box_world=box_b, box_source=box_b, t_eval=0, t01=0.0)
    o_a, d_a = _z_rays(5)
    o_b = o_a + shift
    keys = render_pixel_keys(0, 0, np.arange(5))
    ra = render_rays(o_a, d_a, keys, [la], cfg)
    rb = render_rays(o_b, d_a, keys, [lb], cfg)
    assert np.allclose(ra.rgb, rb.rgb, atol=1e-9)
