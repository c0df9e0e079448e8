import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rawrestore.blur import blur_rgb, delta_kernel, gen_motion_kernel, make_rgb_kernel
from rawrestore.image import RgbImage
from rawrestore.isp import (SITE_CHANNEL, CfaPattern, NoiseParams, RawImage, apply_noise,
                            demosaic_bilinear, mosaic, srgb_to_linrgb)
from rawrestore.metrics import psnr
from rawrestore.scenes import standard_scene
from rawrestore.solver.cg import conjugate_gradient, zstep_cg
from rawrestore.solver.hqs import (DEFAULT_T, HqsSchedule, JointProblem, hqs_restore_joint,
                                   hqs_restore_twostage, make_schedule)
from rawrestore.solver.prox import (FourierTikhonov, TvProx, make_prox, prox_tikhonov, prox_tv,
                                    tv_energy)
from rawrestore.solver.zstep import (MosaicFftSolver, combine_sites, zstep_mosaic_fft,
                                     zstep_plain_fft)

PATTERNS = ("RGGB", "BGGR", "GRBG", "GBRG")


def conv_matrix(k, shape):
    """Dense circular-convolution matrix built tap by tap."""
    h, w = shape
    kh, kw = k.shape
    a = np.zeros((h * w, h * w))
    for i in range(h):
        for j in range(w):
            for p in range(kh):
                for q in range(kw):
                    src = ((i - p + kh // 2) % h) * w + (j - q + kw // 2) % w
                    a[i * w + j, src] += k[p, q]
    return a


def random_rgb_kernel(rng, size):
    k = rng.random((size, size, 3))
    return k / k.sum(axis=(0, 1))


def random_raw(rng, shape, cfa):
    return RawImage(rng.random(shape), CfaPattern(cfa))


def dense_site_solve(raw, x, kernel, beta, mask, channel):
    a = conv_matrix(kernel[..., channel], raw.shape)
    s = np.diag(mask.ravel().astype(np.float64))
    lhs = a.T @ s @ a + beta * np.eye(a.shape[0])
    rhs = a.T @ (mask.ravel() * raw.plane.ravel()) + beta * x[..., channel].ravel()
    return np.linalg.solve(lhs, rhs).reshape(raw.shape)


class TestPlainZstep:
    def test_identity_blend(self):
        d = np.full((4, 4, 3), 1.0)
        x = np.zeros((4, 4, 3))
        z = zstep_plain_fft(d, x, delta_kernel(1), 1.0)
        assert np.allclose(z, 0.5, atol=1e-14)

    def test_dense_oracle(self):
        rng = np.random.default_rng(0)
        d, x = rng.random((8, 10, 3)), rng.random((8, 10, 3))
        k = random_rgb_kernel(rng, 3)
        z = zstep_plain_fft(d, x, k, 0.3)
        for c in range(3):
            a = conv_matrix(k[..., c], (8, 10))
            ref = np.linalg.solve(a.T @ a + 0.3 * np.eye(80), a.T @ d[..., c].ravel()
                                  + 0.3 * x[..., c].ravel())
            assert np.allclose(z[..., c].ravel(), ref, atol=1e-10)

    def test_cg_agrees(self):
        rng = np.random.default_rng(1)
        d, x = rng.random((16, 16, 3)), rng.random((16, 16, 3))
        k = random_rgb_kernel(rng, 5)
        ref, infos = zstep_cg(d, x, k, 0.05)
        assert all(i.converged for i in infos.values())
        z = zstep_plain_fft(d, x, k, 0.05)
        assert np.linalg.norm(z - ref) <= 1e-6 * np.linalg.norm(ref)

    def test_anchor(self):
        rng = np.random.default_rng(2)
        d, x = rng.random((16, 16, 3)), rng.random((16, 16, 3))
        z = zstep_plain_fft(d, x, random_rgb_kernel(rng, 5), 1e8)
        assert np.max(np.abs(z - x)) < 1e-6

    def test_beta_must_be_positive(self):
        with pytest.raises(ValueError):
            zstep_plain_fft(np.zeros((4, 4, 3)), np.zeros((4, 4, 3)), delta_kernel(1), 0.0)


class TestMosaicZstep:
    @pytest.mark.parametrize("cfa", PATTERNS)
    def test_dense_oracle_per_site(self, cfa):
        rng = np.random.default_rng(PATTERNS.index(cfa))
        raw = random_raw(rng, (16, 16), cfa)
        x = rng.random((16, 16, 3))
        k = random_rgb_kernel(rng, 5)
        sol = MosaicFftSolver(raw, k).solve_sites(x, 0.1)
        for site, plane in sol.items():
            ref = dense_site_solve(raw, x, k, 0.1, raw.cfa.mask(site, raw.shape),
                                   SITE_CHANNEL[site])
            assert np.linalg.norm(plane - ref) <= 1e-6 * np.linalg.norm(ref)

    def test_joint_green_dense_oracle(self):
        rng = np.random.default_rng(9)
        raw = random_raw(rng, (12, 16), "GBRG")
        x = rng.random((12, 16, 3))
        k = random_rgb_kernel(rng, 3)
        z = zstep_mosaic_fft(raw, x, k, 0.02, green_mode="joint")
        gmask = raw.cfa.mask("G1", raw.shape) | raw.cfa.mask("G2", raw.shape)
        ref = dense_site_solve(raw, x, k, 0.02, gmask, 1)
        assert np.linalg.norm(z[..., 1] - ref) <= 1e-6 * np.linalg.norm(ref)

    @pytest.mark.parametrize("seed", range(12))
    def test_cg_oracle(self, seed):
        rng = np.random.default_rng(100 + seed)
        beta = (1e-3, 1e-1, 10.0)[seed % 3]
        ksize = (3, 5, 9)[(seed // 3) % 3]
        raw = random_raw(rng, (16, 16), PATTERNS[seed % 4])
        x = rng.random((16, 16, 3))
        k = random_rgb_kernel(rng, ksize)
        ref, _ = zstep_cg(raw, x, k, beta, tol=1e-10, max_iter=5000)
        z = zstep_mosaic_fft(raw, x, k, beta)
        assert np.linalg.norm(z - ref) <= 1e-6 * np.linalg.norm(ref)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.sampled_from(PATTERNS))
    def test_green_recombination_rule(self, seed, cfa):
        rng = np.random.default_rng(seed)
        raw = random_raw(rng, (8, 12), cfa)
        x = rng.random((8, 12, 3))
        solver = MosaicFftSolver(raw, random_rgb_kernel(rng, 3))
        sol = solver.solve_sites(x, 0.5)
        z = solver(x, 0.5)
        m1 = raw.cfa.mask("G1", raw.shape)
        m2 = raw.cfa.mask("G2", raw.shape)
        rest = ~(m1 | m2)
        assert np.array_equal(z[m1, 1], sol["G1"][m1])
        assert np.array_equal(z[m2, 1], sol["G2"][m2])
        assert np.array_equal(z[rest, 1], (sol["G1"][rest] + sol["G2"][rest]) / 2)
        assert np.array_equal(z[..., 0], sol["R"])
        assert np.array_equal(z[..., 2], sol["B"])

    @pytest.mark.parametrize("mode", ["split", "joint"])
    def test_anchor(self, mode):
        rng = np.random.default_rng(3)
        raw = random_raw(rng, (16, 16), "RGGB")
        x = rng.random((16, 16, 3))
        z = zstep_mosaic_fft(raw, x, random_rgb_kernel(rng, 5), 1e8, green_mode=mode)
        assert np.max(np.abs(z - x)) < 1e-6

    @pytest.mark.parametrize("cfa", PATTERNS)
    def test_data_consistency_limit(self, cfa):
        rng = np.random.default_rng(4)
        raw = random_raw(rng, (16, 16), cfa)
        z = zstep_mosaic_fft(raw, np.zeros((16, 16, 3)), delta_kernel(1), 1e-6)
        masks = raw.cfa.channel_masks(raw.shape)
        observed = np.broadcast_to(raw.plane[..., None], z.shape)
        assert np.max(np.abs(z[masks] - observed[masks])) < 1e-3

    def test_odd_dimensions_rejected(self):
        with pytest.raises(ValueError):
            RawImage(np.zeros((5, 4)))

    def test_combine_joint_green(self):
        planes = {k: np.full((2, 2), v) for k, v in (("R", 1.0), ("G", 2.0), ("B", 3.0))}
        z = combine_sites(planes, CfaPattern(), (2, 2))
        assert z[0, 0].tolist() == [1.0, 2.0, 3.0]


class TestCg:
    def test_identity_blend(self):
        d = np.full((4, 4, 3), 1.0)
        z, _ = zstep_cg(d, np.zeros_like(d), delta_kernel(1), 1.0)
        assert np.allclose(z, 0.5, atol=1e-12)

    def test_energy_decreases(self):
        rng = np.random.default_rng(5)
        raw = random_raw(rng, (16, 16), "RGGB")
        _, infos = zstep_cg(raw, rng.random((16, 16, 3)), random_rgb_kernel(rng, 5), 1e-2)
        for info in infos.values():
            e = np.array(info.energies)
            assert np.all(np.diff(e) <= 1e-12 * np.abs(e[:-1]).max())
            assert info.converged

    def test_non_convergence_flagged(self):
        rng = np.random.default_rng(6)
        raw = random_raw(rng, (16, 16), "RGGB")
        _, infos = zstep_cg(raw, rng.random((16, 16, 3)), random_rgb_kernel(rng, 9), 1e-3,
                            max_iter=2)
        assert not any(i.converged for i in infos.values())
        assert all(i.iterations == 2 for i in infos.values())

    def test_small_spd_system(self):
        rng = np.random.default_rng(7)
        m = rng.random((6, 6))
        a = m @ m.T + 6 * np.eye(6)
        b = rng.random(6)
        v, info = conjugate_gradient(lambda u: a @ u, b, np.zeros(6))
        assert np.allclose(v, np.linalg.solve(a, b), atol=1e-9)
        assert info.iterations <= 6


class TestTikhonovProx:
    def test_identity_at_zero(self):
        z = np.random.default_rng(0).random((8, 8, 3))
        assert np.array_equal(prox_tikhonov(z, 0.0), z)

    def test_constant_unchanged(self):
        assert np.allclose(prox_tikhonov(np.full((8, 8, 3), 0.4), 5.0), 0.4, atol=1e-14)

    def test_dense_laplacian_oracle(self):
        rng = np.random.default_rng(1)
        z = rng.random((16, 16))
        gamma = 0.7
        n = 16
        d1 = np.roll(np.eye(n), 1, axis=1) - np.eye(n)  # forward difference, wrapping
        dy = np.kron(d1, np.eye(n))
        dx = np.kron(np.eye(n), d1)
        lap = dy.T @ dy + dx.T @ dx
        ref = np.linalg.solve(np.eye(n * n) + 2 * gamma * lap, z.ravel())
        assert np.max(np.abs(prox_tikhonov(z, gamma).ravel() - ref)) < 1e-8

    def test_non_expansive(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            a, b = rng.random((16, 16, 3)), rng.random((16, 16, 3))
            gap = np.linalg.norm(prox_tikhonov(a, 0.3) - prox_tikhonov(b, 0.3))
            assert gap <= np.linalg.norm(a - b) + 1e-9

    def test_negative_gamma(self):
        with pytest.raises(ValueError):
            prox_tikhonov(np.zeros((4, 4)), -1.0)


def taut_string_1d_circular_step(n, lo, hi, left, gamma):
    """Exact TV prox of a two-level periodic signal: each flat segment of
    length m moves towards the other level by 2 gamma / m, until they meet."""
    shift_lo = 2 * gamma / left
    shift_hi = 2 * gamma / (n - left)
    if shift_lo + shift_hi >= hi - lo:
        mean = (left * lo + (n - left) * hi) / n
        return np.full(n, mean)
    out = np.full(n, hi - shift_hi)
    out[:left] = lo + shift_lo
    return out


class TestTvProx:
    def test_identity_and_constant(self):
        z = np.random.default_rng(0).random((8, 8, 3))
        assert np.array_equal(prox_tv(z, 0.0), z)
        assert np.allclose(prox_tv(np.full((8, 8, 3), 0.3), 0.5), 0.3, atol=1e-12)

    def test_step_edge_matches_exact_1d(self):
        # a vertical step on a plane: rows are identical, so the 2-D prox
        # reduces to the 1-D prox of each row
        n, left, gamma = 32, 12, 0.02
        row = np.full(n, 0.7)
        row[:left] = 0.2
        z = np.tile(row, (16, 1))
        out = prox_tv(z, gamma, inner_iters=500)
        ref = taut_string_1d_circular_step(n, 0.2, 0.7, left, gamma)
        assert np.max(np.abs(out - ref[None, :])) < 1e-4
        # step preserved, flats stay flat
        assert np.ptp(out[:, :left]) < 1e-4 and np.ptp(out[:, left:]) < 1e-4
        assert out[0, left] - out[0, left - 1] > 0.4

    def test_energy_non_increasing(self):
        rng = np.random.default_rng(1)
        _, energies = prox_tv(rng.random((32, 32, 3)), 0.1, inner_iters=30,
                              return_energies=True)
        assert np.all(np.diff(energies) <= 0)

    def test_non_expansive(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            a = rng.random((32, 32))
            b = a + 0.1 * rng.standard_normal(a.shape)
            gap = np.linalg.norm(prox_tv(a, 0.05) - prox_tv(b, 0.05))
            assert gap <= np.linalg.norm(a - b) + 1e-3

    def test_lowers_tv(self):
        z = np.random.default_rng(3).random((16, 16))
        assert tv_energy(prox_tv(z, 0.1)) < tv_energy(z)

    def test_bad_args(self):
        with pytest.raises(ValueError):
            prox_tv(np.zeros((4, 4)), -0.1)
        with pytest.raises(ValueError):
            prox_tv(np.zeros((4, 4)), 0.1, inner_iters=0)


class TestProxOperators:
    @pytest.mark.parametrize("name", ["tikhonov", "tv"])
    @pytest.mark.parametrize("cw", [1.0, 4.0])
    def test_identity_at_zero(self, name, cw):
        z = np.random.default_rng(0).random((8, 8, 3))
        assert np.array_equal(make_prox(name, chroma_weight=cw)(z, 0.0), z)

    def test_opponent_basis_is_exact_prox(self):
        # the weighted Tikhonov prox minimizes its own objective
        rng = np.random.default_rng(1)
        z = rng.random((8, 8, 3))
        op = FourierTikhonov(chroma_weight=4.0)
        x = op(z, 0.2)

        def f(v):
            return 0.2 * op.prior(v) + 0.5 * np.sum((z - v) ** 2)

        for _ in range(5):
            assert f(x) <= f(x + 1e-3 * rng.standard_normal(x.shape))

    def test_grey_image_unaffected_by_chroma_weight(self):
        rng = np.random.default_rng(2)
        grey = np.repeat(rng.random((16, 16, 1)), 3, axis=2)
        a = FourierTikhonov()(grey, 0.5)
        b = FourierTikhonov(chroma_weight=10.0)(grey, 0.5)
        assert np.allclose(a, b, atol=1e-12)

    def test_unknown(self):
        with pytest.raises(ValueError):
            make_prox("bm3d")


class TestSchedule:
    def test_single_iteration(self):
        s = make_schedule(T=1, lam=0.1, beta_min=0.01, beta_max=1.0)
        assert s.betas == (0.01,)

    def test_log_spacing(self):
        s = make_schedule(T=6, lam=0.1, beta_min=1e-3, beta_max=1e2)
        ratios = np.array(s.betas[1:]) / np.array(s.betas[:-1])
        assert np.allclose(ratios, ratios[0], rtol=1e-9)
        assert s.betas[0] == pytest.approx(1e-3) and s.betas[-1] == pytest.approx(1e2)
        assert all(g * b == pytest.approx(0.1) for g, b in zip(s.gammas, s.betas))

    def test_default_t(self):
        assert DEFAULT_T == 6
        assert make_schedule(NoiseParams(1e-3, 1e-6)).T == 6

    def test_lambda_tracks_noise(self):
        lo = make_schedule(NoiseParams(1e-4, 1e-8)).lam
        hi = make_schedule(NoiseParams(3e-3, 1e-5)).lam
        assert 0 < lo < hi

    def test_invalid(self):
        with pytest.raises(ValueError):
            make_schedule(T=0)
        with pytest.raises(ValueError):
            make_schedule(beta_min=1.0, beta_max=0.1)
        with pytest.raises(ValueError):
            HqsSchedule((1.0,), (1.0,), 2.0)


def _problem(seed, size=32, shot=1e-3, ksize=7):
    rng = np.random.default_rng(seed)
    img = rng.random((size, size, 3))
    k = make_rgb_kernel(gen_motion_kernel(ksize, rng=rng), rng=rng)
    noise = NoiseParams(shot, 1e-6)
    return img, k, apply_noise(mosaic(blur_rgb(img, k)), noise, seed)


class TestHqs:
    def test_data_consistency_noiseless_delta(self):
        truth = srgb_to_linrgb(standard_scene(64))
        y = mosaic(truth)
        out = hqs_restore_joint(JointProblem(y, delta_kernel(1), make_schedule(y.noise)),
                                init=demosaic_bilinear(y)).data
        masks = y.cfa.channel_masks(y.shape)
        observed = np.broadcast_to(y.plane[..., None], out.shape)
        assert np.max(np.abs(out[masks] - observed[masks])) < 1e-3

    @pytest.mark.parametrize("seed", range(4))
    def test_fixed_beta_monotone(self, seed):
        _, k, y = _problem(seed)
        rec = []
        sched = HqsSchedule.constant((1e-3, 1e-2, 0.1, 1.0)[seed], 1e-2)
        hqs_restore_joint(JointProblem(y, k, sched), FourierTikhonov(),
                          callback=lambda r: rec.append(r["objective"]))
        assert len(rec) == 2 * sched.T
        obj = np.array(rec)
        assert np.all(obj[1:] <= obj[:-1] * (1 + 1e-8))

    def test_improves_on_init(self):
        truth = srgb_to_linrgb(standard_scene(128))
        rng = np.random.default_rng(3)
        k = make_rgb_kernel(gen_motion_kernel(25, rng=rng), rng=rng)
        noise = NoiseParams(1e-3, 1e-6)
        y = apply_noise(mosaic(blur_rgb(truth, k)), noise, 1)
        init = demosaic_bilinear(y)
        out = hqs_restore_joint(JointProblem(y, k, make_schedule(noise)), init=init)
        assert psnr(out, truth, 16) > psnr(init, truth, 16)

    def test_twostage_gamma_to_zero_returns_d(self):
        rng = np.random.default_rng(4)
        y = mosaic(rng.random((16, 16, 3)))
        sched = HqsSchedule.constant(1.0, 1e-12)
        out = hqs_restore_twostage(y, delta_kernel(1), sched, FourierTikhonov())
        assert np.max(np.abs(out.data - demosaic_bilinear(y).data)) < 1e-6

    def test_deterministic(self):
        _, k, y = _problem(5)
        sched = make_schedule(y.noise)
        for fn in (lambda: hqs_restore_joint(JointProblem(y, k, sched)),
                   lambda: hqs_restore_twostage(y, k, sched, demosaicker="classical")):
            assert np.array_equal(fn().data, fn().data)

    def test_init_shape_checked(self):
        _, k, y = _problem(6)
        with pytest.raises(ValueError):
            hqs_restore_joint(JointProblem(y, k, make_schedule()), init=np.zeros((8, 8, 3)))

    def test_returns_linrgb(self):
        _, k, y = _problem(7, size=16, ksize=3)
        out = hqs_restore_joint(JointProblem(y, k, make_schedule()), TvProx(inner_iters=5))
        assert isinstance(out, RgbImage) and out.colorspace == "linRGB"
