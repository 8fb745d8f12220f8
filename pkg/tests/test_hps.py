import numpy as np
import pytest

from hystharm.hps import (
    CouplingMatrixPair,
    HarmonicVector,
    PeriodicSignal,
    apply_fcm,
    differential_operator,
    hps_convolve,
    hps_forward,
    hps_inverse,
    invert_fcm,
    memoryless_linearize,
    pack_pair_from_block,
    split_real_imag,
    toeplitz_fcm,
)

OMEGA = 2.0 * np.pi * 50.0
PERIOD = 2.0 * np.pi / OMEGA


def make_signal(fn, n_samples=512, period=PERIOD):
    t = np.arange(n_samples) * (period / n_samples)
    return PeriodicSignal(fn(t), period / n_samples, period)


def random_harmonics(rng, order, scale=1.0):
    c = scale * (rng.standard_normal(order + 1) + 1j * rng.standard_normal(order + 1))
    c[0] = c[0].real
    return HarmonicVector(c, OMEGA)


def sanitize_dc_rows(y1, y2):
    """Give a random pair the reality structure of an actual device at DC."""
    y2[0, 1:] = np.conj(y1[0, 1:])
    y1[0, 0] = y1[0, 0].real
    y2[0, 0] = y2[0, 0].real
    y2[:, 0] = y1[:, 0]
    return y1, y2


def random_pair(rng, order):
    n = order + 1
    y1 = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    y2 = 0.3 * (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
    y1 += 3.0 * np.eye(n)  # keep well-conditioned
    y1, y2 = sanitize_dc_rows(y1, y2)
    return CouplingMatrixPair(y1, y2)


class TestForwardTransform:
    def test_constant_signal(self):
        sig = make_signal(lambda t: np.full_like(t, 2.5))
        coeffs = hps_forward(sig, 4).coefficients
        assert coeffs[0] == pytest.approx(2.5, abs=1e-14)
        assert np.max(np.abs(coeffs[1:])) < 1e-14

    def test_single_phasor(self):
        sig = make_signal(lambda t: 3.0 * np.cos(OMEGA * t + np.pi / 4))
        coeffs = hps_forward(sig, 5).coefficients
        assert coeffs[1] == pytest.approx(3.0 * np.exp(1j * np.pi / 4), abs=1e-12)
        others = np.delete(coeffs, 1)
        assert np.max(np.abs(others)) < 1e-12

    def test_square_wave_closed_form(self):
        # Closed-form series of the unit square wave: -4j/(n pi) for odd n.
        # Cross-checked with a fine-grid quadrature oracle (denser sampling).
        def square(t):
            return np.where(t < PERIOD / 2, 1.0, -1.0)

        order = 15
        coarse = hps_forward(make_signal(square, n_samples=20000), order).coefficients
        fine = hps_forward(make_signal(square, n_samples=200000), order).coefficients
        for n in range(1, order + 1):
            expected = -4j / (n * np.pi) if n % 2 else 0.0
            assert coarse[n] == pytest.approx(expected, abs=5e-4)
            assert fine[n] == pytest.approx(expected, abs=5e-5)

    def test_order_too_large_rejected(self):
        sig = make_signal(np.cos, n_samples=8)
        with pytest.raises(ValueError, match="Nyquist"):
            hps_forward(sig, 4)


class TestInverseTransform:
    def test_dc_only(self):
        sig = hps_inverse(HarmonicVector([2.5, 0.0], OMEGA), 16)
        assert np.allclose(sig.samples, 2.5)

    def test_single_cosine(self):
        sig = hps_inverse(HarmonicVector([0.0, 1.0], OMEGA), 100)
        assert np.allclose(sig.samples, np.cos(OMEGA * sig.times), atol=1e-13)

    def test_round_trip_band_limited(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            order = int(rng.integers(1, 20))
            hv = random_harmonics(rng, order)
            sig = hps_inverse(hv, 8 * (order + 1))
            back = hps_forward(sig, order)
            assert np.max(np.abs(back.coefficients - hv.coefficients)) < 1e-10

    def test_sample_count_guard(self):
        with pytest.raises(ValueError, match="Nyquist"):
            hps_inverse(HarmonicVector([0.0, 1.0, 0.5], OMEGA), 4)

    def test_parseval_energy(self):
        rng = np.random.default_rng(11)
        hv = random_harmonics(rng, 12)
        sig = hps_inverse(hv, 512)
        mean_square = np.mean(sig.samples**2)
        c = hv.coefficients
        expected = c[0].real ** 2 + 0.5 * np.sum(np.abs(c[1:]) ** 2)
        assert mean_square == pytest.approx(expected, rel=1e-9)


class TestApplyFcm:
    def test_identity_pair(self):
        rng = np.random.default_rng(3)
        dv = random_harmonics(rng, 4)
        pair = CouplingMatrixPair(np.eye(5, dtype=complex), np.zeros((5, 5), dtype=complex))
        out = apply_fcm(pair, dv)
        assert np.allclose(out.coefficients, dv.coefficients)

    def test_conjugation_pair(self):
        pair = CouplingMatrixPair(np.zeros((2, 2), dtype=complex), np.eye(2, dtype=complex))
        out = apply_fcm(pair, HarmonicVector([0.0, 1j], OMEGA))
        assert np.allclose(out.coefficients, [0.0, -1j])

    def test_dimension_mismatch(self):
        pair = CouplingMatrixPair(np.eye(3, dtype=complex), np.zeros((3, 3), dtype=complex))
        with pytest.raises(ValueError, match="mismatch"):
            apply_fcm(pair, HarmonicVector([1.0, 0.0], OMEGA))


class TestToeplitzFcm:
    def test_resistor_slope(self):
        g = 0.02
        pair = toeplitz_fcm(HarmonicVector([g, 0.0, 0.0, 0.0], OMEGA))
        rng = np.random.default_rng(5)
        dv = random_harmonics(rng, 3)
        out = apply_fcm(pair, dv)
        assert np.allclose(out.coefficients, g * dv.coefficients, atol=1e-14)

    def test_second_harmonic_layout(self):
        y2c = 0.7 - 0.2j
        pair = toeplitz_fcm(HarmonicVector([0.0, 0.0, y2c, 0.0], OMEGA))
        assert pair.y1[3, 1] == pytest.approx(y2c / 2)
        assert pair.y2[1, 1] == pytest.approx(y2c / 2)
        # halved first rows
        assert pair.y1[0, 2] == pytest.approx(np.conj(y2c) / 4)
        assert pair.y2[0, 2] == pytest.approx(y2c / 4)

    def test_matches_convolution(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            order = int(rng.integers(1, 9))
            yv = random_harmonics(rng, order)
            dv = random_harmonics(rng, order)
            via_matrix = apply_fcm(toeplitz_fcm(yv), dv).coefficients
            via_conv = hps_convolve(yv, dv).coefficients
            assert np.max(np.abs(via_matrix - via_conv)) < 1e-12


class TestConvolution:
    def test_dc_times_dc(self):
        out = hps_convolve(HarmonicVector([2.0], OMEGA), HarmonicVector([3.0], OMEGA))
        assert out.coefficients[0] == pytest.approx(6.0)

    def test_hand_evaluated_first_harmonic(self):
        y1c = 1.0 + 0.5j
        v1 = 0.3 - 0.8j
        yv = HarmonicVector([0.0, y1c, 0.0], OMEGA)
        dv = HarmonicVector([0.0, v1, 0.0], OMEGA)
        out = hps_convolve(yv, dv).coefficients
        assert out[0] == pytest.approx(0.5 * np.real(v1 * np.conj(y1c)))
        assert out[2] == pytest.approx(0.5 * v1 * y1c)

    def test_matches_time_domain_product(self):
        rng = np.random.default_rng(17)
        for _ in range(10):
            order = int(rng.integers(1, 8))
            yv = random_harmonics(rng, order)
            dv = random_harmonics(rng, order)
            n_samples = 16 * (order + 1)
            y_t = hps_inverse(yv, n_samples)
            v_t = hps_inverse(dv, n_samples)
            product = PeriodicSignal(
                y_t.samples * v_t.samples, y_t.sample_interval, y_t.period
            )
            expected = hps_forward(product, order).coefficients
            got = hps_convolve(yv, dv).coefficients
            assert np.max(np.abs(got - expected)) < 1e-10


class TestMemorylessLinearize:
    def test_linear_conductance(self):
        g = 0.5
        base = make_signal(lambda t: np.cos(OMEGA * t))
        pair = memoryless_linearize(lambda v, t: np.full_like(v, g), base, 4)
        assert np.allclose(np.diag(pair.y1)[1:], g)
        assert pair.y1[1, 1] == pytest.approx(g)
        assert np.max(np.abs(pair.y2 - pair.y2 * 0) - np.abs(pair.y2)) == 0

    def test_cubic_slope_coefficients(self):
        # y = v^3 about cos: slope 3cos^2 = 1.5 + 1.5 cos(2wt)
        base = make_signal(lambda t: np.cos(OMEGA * t))
        slope = hps_forward(
            PeriodicSignal(3.0 * base.samples**2, base.sample_interval, base.period), 4
        ).coefficients
        assert slope[0] == pytest.approx(1.5, abs=1e-12)
        assert slope[2] == pytest.approx(1.5, abs=1e-12)
        assert abs(slope[1]) < 1e-12 and abs(slope[3]) < 1e-12

    def test_against_finite_differences(self):
        # Central finite differences of the full nonlinear harmonic map.
        order = 5
        n_samples = 256
        base = make_signal(lambda t: np.cos(OMEGA * t), n_samples=n_samples)
        pair = memoryless_linearize(lambda v, t: 3.0 * v**2, base, order)

        def output_harmonics(v_coeffs):
            v_t = hps_inverse(HarmonicVector(v_coeffs, OMEGA), n_samples)
            i_t = PeriodicSignal(v_t.samples**3, v_t.sample_interval, v_t.period)
            return hps_forward(i_t, order).coefficients

        v_base = np.zeros(order + 1, dtype=complex)
        v_base[1] = 1.0
        step = 1e-5
        y1_fd = np.zeros((order + 1, order + 1), dtype=complex)
        y2_fd = np.zeros_like(y1_fd)
        for m in range(order + 1):
            e = np.zeros(order + 1, dtype=complex)
            e[m] = 1.0
            d_re = (output_harmonics(v_base + step * e) - output_harmonics(v_base - step * e)) / (
                2 * step
            )
            if m == 0:
                y1_fd[:, 0] = d_re / 2.0
                y2_fd[:, 0] = d_re / 2.0
                continue
            d_im = (
                output_harmonics(v_base + 1j * step * e) - output_harmonics(v_base - 1j * step * e)
            ) / (2 * step)
            y1_fd[:, m] = 0.5 * d_re - 0.5j * d_im
            y2_fd[:, m] = 0.5 * d_re + 0.5j * d_im

        scale = np.max(np.abs(y1_fd))
        assert np.max(np.abs(pair.y1 - y1_fd)) / scale < 1e-4
        assert np.max(np.abs(pair.y2 - y2_fd)) / scale < 1e-4

    def test_phase_dependency_circle_linear_limit(self):
        # For an exactly linear time-varying slope the apparent admittance
        # points lie on the circle (centre Y1, radius |Y2|) to roundoff.
        order = 4
        n_samples = 256
        base = make_signal(lambda t: np.cos(OMEGA * t), n_samples=n_samples)
        g = lambda t: 1.0 + 0.5 * np.cos(OMEGA * t) + 0.2 * np.sin(2 * OMEGA * t)  # noqa: E731
        pair = memoryless_linearize(lambda v, t: g(t), base, order)

        def output_harmonics(v_coeffs):
            v_t = hps_inverse(HarmonicVector(v_coeffs, OMEGA), n_samples)
            i_t = PeriodicSignal(g(v_t.times) * v_t.samples, v_t.sample_interval, v_t.period)
            return hps_forward(i_t, order).coefficients

        v_base = np.zeros(order + 1, dtype=complex)
        v_base[1] = 1.0
        i_base = output_harmonics(v_base)
        m, n = 2, 3
        eps = 1e-3
        for phi in np.linspace(0.0, 2 * np.pi, 9, endpoint=False):
            dv = eps * np.exp(1j * phi)
            e = np.zeros(order + 1, dtype=complex)
            e[m] = dv
            adm = (output_harmonics(v_base + e)[n] - i_base[n]) / dv
            assert abs(abs(adm - pair.y1[n, m]) - abs(pair.y2[n, m])) < 1e-8


class TestBlockSplit:
    def test_reactance_rotation_form(self):
        x = 2.5
        pair = CouplingMatrixPair(
            np.diag([0.0, 1j * x]).astype(complex), np.zeros((2, 2), dtype=complex)
        )
        block = split_real_imag(pair)
        assert block[1, 1] == pytest.approx(0.0)
        assert block[1, 3] == pytest.approx(-x)
        assert block[3, 1] == pytest.approx(x)

    def test_block_action_equals_apply(self):
        rng = np.random.default_rng(23)
        for _ in range(10):
            order = int(rng.integers(1, 7))
            pair = random_pair(rng, order)
            dv = random_harmonics(rng, order)
            block = split_real_imag(pair)
            stacked = np.concatenate([dv.coefficients.real, dv.coefficients.imag])
            out_stacked = block @ stacked
            n = order + 1
            out = out_stacked[:n] + 1j * out_stacked[n:]
            assert np.max(np.abs(out - apply_fcm(pair, dv).coefficients)) < 1e-14

    def test_pack_is_inverse_of_split(self):
        rng = np.random.default_rng(29)
        pair = random_pair(rng, 5)
        packed = pack_pair_from_block(split_real_imag(pair))
        assert np.allclose(packed.y1, pair.y1)
        assert np.allclose(packed.y2, pair.y2)


class TestInvertFcm:
    def test_diagonal_pair(self):
        # At DC the conjugate is the identity, so the inverse gain splits
        # equally between y1 and y2 (same convention as toeplitz_fcm).
        d = np.array([2.0, 1.0 + 1j, 3.0 - 0.5j])
        pair = CouplingMatrixPair(np.diag(d), np.zeros((3, 3), dtype=complex))
        inv = invert_fcm(pair)
        assert np.allclose(np.diag(inv.y1)[1:], 1.0 / d[1:])
        assert np.allclose(inv.y2[1:, 1:], 0.0, atol=1e-14)
        assert (inv.y1[0, 0] + inv.y2[0, 0]) == pytest.approx(1.0 / d[0].real)

    def test_conjugate_coupled_diagonal(self):
        # dI = d * conj(dV) inverts to dV = (1/conj(d)) * conj(dI)
        d = np.array([2.0, 0.5 + 0.5j, 1.0 - 2j])
        pair = CouplingMatrixPair(np.zeros((3, 3), dtype=complex), np.diag(d))
        inv = invert_fcm(pair)
        assert np.allclose(inv.y1[1:, 1:], 0.0, atol=1e-14)
        assert np.allclose(np.diag(inv.y2)[1:], 1.0 / np.conj(d[1:]))
        assert (inv.y1[0, 0] + inv.y2[0, 0]) == pytest.approx(1.0 / d[0].real)

    def test_round_trip_on_harmonic_vectors(self):
        rng = np.random.default_rng(31)
        for _ in range(10):
            order = int(rng.integers(1, 7))
            pair = random_pair(rng, order)
            inv = invert_fcm(pair)
            dv = random_harmonics(rng, order)
            back = apply_fcm(inv, apply_fcm(pair, dv))
            assert np.max(np.abs(back.coefficients - dv.coefficients)) < 1e-10

    def test_double_inversion_restores_pair(self):
        rng = np.random.default_rng(37)
        pair = random_pair(rng, 6)
        twice = invert_fcm(invert_fcm(pair))
        assert np.max(np.abs(twice.y1 - pair.y1)) < 1e-9
        assert np.max(np.abs(twice.y2 - pair.y2)) < 1e-9

    def test_singular_pair_rejected(self):
        pair = CouplingMatrixPair(np.zeros((3, 3), dtype=complex), np.zeros((3, 3), dtype=complex))
        with pytest.raises(np.linalg.LinAlgError, match="cond"):
            invert_fcm(pair)


class TestDifferentialOperator:
    def test_diagonal_values(self):
        op = differential_operator(2, 100.0 * np.pi)
        assert np.allclose(op.matrix_diagonal, [0.0, 1j * 100 * np.pi, 1j * 200 * np.pi])
        assert op.dc_unbounded

    def test_inverse_on_nonzero_harmonics(self):
        op = differential_operator(3, OMEGA)
        prod = op.matrix_diagonal[1:] * op.inverse_diagonal[1:]
        assert np.allclose(prod, 1.0)

    def test_flux_of_cosine_voltage(self):
        op = differential_operator(1, OMEGA)
        v = HarmonicVector([0.0, 1.0], OMEGA)
        flux = op.integrate(v)
        assert flux.coefficients[1] == pytest.approx(1.0 / (1j * OMEGA))
        assert flux.coefficients[0] == 0.0
