import numpy as np
import pytest

from rsmasim.channel import apply_channel, flat_channel
from rsmasim.transceiver import design_precoders
from rsmasim.waveform import (FrameGeometry, N_TX, PILOT_WEIGHTS, assemble_grid, data_cells,
                              estimate_channel, genie_estimate, ofdm_demodulate, ofdm_modulate)

G = FrameGeometry()


def _random_streams(rng, g=G):
    return [rng.standard_normal(g.data_cells) + 1j * rng.standard_normal(g.data_cells) for _ in range(3)]


def _precoders(rng, t=0.4):
    h1 = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    h2 = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    return design_precoders(h1, h2, t)


class TestGeometry:
    def test_counts(self):
        assert len(G.data_idx) == 48 and len(G.pilot_idx) == 4 and len(G.guard_idx) == 12
        assert G.data_cells == 48 * 40
        assert G.effective_bandwidth == 48 * G.subcarrier_spacing * 0.8

    def test_index_maps_partition(self):
        allidx = np.concatenate([G.data_idx, G.pilot_idx, G.guard_idx])
        assert np.array_equal(np.sort(allidx), np.arange(64))

    def test_dc_is_guard(self):
        assert 0 in G.guard_idx

    def test_inconsistent_counts(self):
        with pytest.raises(ValueError):
            FrameGeometry(n_data=47)


class TestAssemble:
    def test_zero_streams_only_pilots(self, rng):
        zeros = [np.zeros(G.data_cells)] * 3
        grid = assemble_grid(zeros, _precoders(rng), G)
        assert not grid[:, 1:, G.data_idx].any()
        assert np.allclose(grid[:, 1:, G.pilot_idx], PILOT_WEIGHTS[:, None, None] * G.pilot_sequence)

    def test_common_only(self, rng):
        P = _precoders(rng, t=1.0)
        s = _random_streams(rng)
        grid = assemble_grid(s, P, G)
        expected = P.p_c[:, None, None] * s[0].reshape(40, 48)[None]
        assert np.allclose(grid[:, 1:, G.data_idx], expected)

    def test_single_cell_three_term_sum(self, rng):
        P = _precoders(rng)
        s = _random_streams(rng)
        grid = assemble_grid(s, P, G)
        t, j = 17, 30
        i = t * 48 + j
        x = P.p_c * s[0][i] + P.p_1 * s[1][i] + P.p_2 * s[2][i]
        assert np.allclose(grid[:, t + 1, G.data_idx[j]], x, atol=1e-14)

    def test_guards_are_empty(self, rng):
        grid = assemble_grid(_random_streams(rng), _precoders(rng), G)
        assert not grid[:, :, G.guard_idx].any()

    def test_power_per_cell(self, rng):
        from rsmasim.constellation import build_constellation, modulate
        q = build_constellation("QPSK")
        s = [modulate(rng.integers(0, 2, 2 * G.data_cells), q) for _ in range(3)]
        P = _precoders(rng)
        grid = assemble_grid(s, P, G)
        power = np.mean(np.sum(np.abs(grid[:, 1:, G.data_idx]) ** 2, axis=0))
        assert power == pytest.approx(P.total_power, rel=0.02)

    def test_length_mismatch(self, rng):
        with pytest.raises(ValueError):
            assemble_grid([np.zeros(10)] * 3, _precoders(rng), G)


class TestOfdm:
    def test_zero_grid(self):
        assert not ofdm_modulate(np.zeros((2, 41, 64))).any()

    def test_output_length(self, rng):
        samples = ofdm_modulate(assemble_grid(_random_streams(rng), _precoders(rng)))
        assert samples.shape == (N_TX, 41 * 80)

    def test_single_tone_cyclic_prefix(self):
        grid = np.zeros((1, 41, 64), dtype=complex)
        grid[0, 3, 5] = 1.0
        sym = ofdm_modulate(grid)[0].reshape(41, 80)[3]
        n = np.arange(64)
        assert np.allclose(sym[16:], np.exp(2j * np.pi * 5 * n / 64) / 8)
        assert np.allclose(sym[:16], sym[-16:])

    def test_round_trip(self, rng):
        grid = rng.standard_normal((2, 41, 64)) + 1j * rng.standard_normal((2, 41, 64))
        assert np.max(np.abs(ofdm_demodulate(ofdm_modulate(grid)) - grid)) < 1e-9

    def test_cp_corruption_is_ignored(self, rng):
        grid = rng.standard_normal((41, 64)) + 1j * rng.standard_normal((41, 64))
        x = ofdm_modulate(grid).reshape(41, 80)
        x[:, :16] += 5.0
        assert np.max(np.abs(ofdm_demodulate(x.ravel()) - grid)) < 1e-9

    def test_flat_channel_scales_grid(self, rng):
        grid = rng.standard_normal((41, 64)) + 1j * rng.standard_normal((41, 64))
        h = 0.3 - 1.1j
        assert np.max(np.abs(ofdm_demodulate(h * ofdm_modulate(grid)) - h * grid)) < 1e-9

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            ofdm_demodulate(np.zeros(100))


class TestEstimation:
    def _rx(self, rng, ch):
        grid = assemble_grid(_random_streams(rng), _precoders(rng), G)
        return apply_channel(grid, ch, rng)

    def test_noiseless_flat_is_exact(self, rng):
        h1 = np.array([0.8 + 0.1j, -0.3 + 0.5j])
        h2 = np.array([0.2 - 0.4j, 1.0 + 0.2j])
        ch = flat_channel(h1, h2, 1e-30)
        y1, y2 = self._rx(rng, ch)
        est = estimate_channel(y1, G)
        assert np.allclose(est.h_hat[G.used_idx], h1, atol=1e-10)
        assert np.allclose(estimate_channel(y2, G).h_hat[G.pilot_idx], h2, atol=1e-10)

    def test_sigma2_calibration(self):
        rng = np.random.default_rng(11)
        h1 = np.array([0.8 + 0.1j, -0.3 + 0.5j])
        ch = flat_channel(h1, h1[::-1], 0.1)
        est = [estimate_channel(self._rx(rng, ch)[0], G).sigma2_hat for _ in range(75)]
        assert abs(np.mean(est) - 0.1) <= 0.02

    def test_genie_passthrough(self, rng):
        from rsmasim.channel import ScenarioTarget, generate_channel_pair
        ch = generate_channel_pair(ScenarioTarget(-3.0, 0.4), G, rng, sigma2=0.05)
        est = genie_estimate(ch, 2)
        assert est.h_hat is ch.h2 and est.sigma2_hat == 0.05

    def test_data_cells_shape(self, rng):
        y1, _ = self._rx(rng, flat_channel([1, 0], [0, 1], 0.1))
        assert data_cells(y1, G).shape == (40, 48)
