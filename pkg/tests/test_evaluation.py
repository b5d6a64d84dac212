"""Metric oracles, report serialization, and decomposition exports."""

import numpy as np
import pytest

from wavedae.data import WindowPairs, mix_noise
from wavedae.evaluation import (
    MetricsReport,
    decomposition_report,
    evaluate_model,
    prd,
    rmse,
    snr_improvement,
    write_decomposition_csv,
    write_decomposition_svg,
)


class IdentityNet:
    def forward(self, x, train=False):
        return x


class TestRmse:
    def test_identical_inputs(self):
        x = np.random.default_rng(0).standard_normal(64)
        assert rmse(x, x) == 0.0

    def test_constant_difference(self):
        x = np.zeros(50)
        assert rmse(x, x + 0.1) == pytest.approx(0.1, abs=1e-15)

    def test_matches_definition_oracle(self):
        rng = np.random.default_rng(1)
        a, b = rng.standard_normal(128), rng.standard_normal(128)
        oracle = float(np.sqrt(np.mean((a - b) ** 2)))
        assert abs(rmse(a, b) - oracle) < 1e-12

    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError):
            rmse(np.zeros(4), np.zeros(5))


class TestSnrImprovement:
    def test_no_improvement_is_exactly_zero(self):
        rng = np.random.default_rng(2)
        clean = rng.standard_normal(64)
        noisy = clean + 0.3 * rng.standard_normal(64)
        assert snr_improvement(clean, noisy, noisy) == 0.0

    def test_halved_noise_gains_six_db(self):
        rng = np.random.default_rng(3)
        clean = rng.standard_normal(64)
        noise = rng.standard_normal(64)
        improvement = snr_improvement(clean, clean + noise, clean + 0.5 * noise)
        assert improvement == pytest.approx(20 * np.log10(2), abs=1e-10)

    def test_matches_definition_oracle(self):
        rng = np.random.default_rng(4)
        clean = rng.standard_normal(64)
        noisy = clean + rng.standard_normal(64)
        denoised = clean + 0.2 * rng.standard_normal(64)

        def snr(x):
            return 10 * np.log10(np.sum(clean**2) / np.sum((x - clean) ** 2))

        assert abs(
            snr_improvement(clean, noisy, denoised) - (snr(denoised) - snr(noisy))
        ) < 1e-10

    def test_perfect_denoising_reports_infinity(self):
        clean = np.ones(16)
        noisy = clean + 0.1
        assert snr_improvement(clean, noisy, clean) == np.inf

    def test_rejects_noisy_equal_to_clean(self):
        clean = np.ones(16)
        with pytest.raises(ValueError):
            snr_improvement(clean, clean.copy(), clean + 0.1)


class TestPrd:
    def test_identical_inputs(self):
        x = np.random.default_rng(5).standard_normal(32)
        assert prd(x, x) == 0.0

    def test_zero_output_is_full_distortion(self):
        x = np.random.default_rng(6).standard_normal(32)
        assert prd(x, np.zeros(32)) == pytest.approx(100.0, abs=1e-10)

    def test_matches_definition_oracle(self):
        rng = np.random.default_rng(7)
        a, b = rng.standard_normal(64), rng.standard_normal(64)
        oracle = 100 * np.sqrt(np.sum((a - b) ** 2) / np.sum(a**2))
        assert abs(prd(a, b) - oracle) < 1e-10

    def test_rejects_zero_energy_clean(self):
        with pytest.raises(ValueError):
            prd(np.zeros(8), np.ones(8))


class TestMetricPermutationInvariance:
    def test_rmse_and_prd_are_pointwise_aggregates(self):
        rng = np.random.default_rng(8)
        a, b = rng.standard_normal(64), rng.standard_normal(64)
        perm = rng.permutation(64)
        assert rmse(a, b) == pytest.approx(rmse(a[perm], b[perm]), abs=1e-15)
        assert prd(a, b) == pytest.approx(prd(a[perm], b[perm]), abs=1e-12)


def make_test_groups(snrs, count=6, width=64, seed=9):
    rng = np.random.default_rng(seed)
    clean = rng.uniform(0.1, 0.9, (count, width))
    groups = {}
    for snr in snrs:
        noisy = np.array([mix_noise(c, rng.standard_normal(width), snr) for c in clean])
        groups[snr] = WindowPairs(
            noisy=noisy,
            clean=clean.copy(),
            snr_db=np.full(count, snr),
            provenance=tuple(("r", i) for i in range(count)),
        )
    return groups


class TestEvaluateModel:
    def test_identity_net_has_zero_improvement_everywhere(self):
        groups = make_test_groups([-10.0, 0.0, 10.0])
        row = evaluate_model(IdentityNet(), groups)
        for snr in groups:
            assert row[snr]["snr_improvement_db"] == 0.0
            assert row[snr]["rmse"] > 0.0

    def test_empty_group_errors(self):
        empty = WindowPairs(
            noisy=np.zeros((0, 8)),
            clean=np.zeros((0, 8)),
            snr_db=np.zeros(0),
            provenance=(),
        )
        with pytest.raises(ValueError, match="empty"):
            evaluate_model(IdentityNet(), {0.0: empty})


class TestMetricsReport:
    def build(self):
        report = MetricsReport(snrs=(-10.0, 0.0))
        run = {
            -10.0: {"rmse": 0.2, "snr_improvement_db": 18.0, "prd_percent": 40.0},
            0.0: {"rmse": 0.1, "snr_improvement_db": 15.0, "prd_percent": 20.0},
        }
        run2 = {
            -10.0: {"rmse": 0.22, "snr_improvement_db": 17.0, "prd_percent": 42.0},
            0.0: {"rmse": 0.12, "snr_improvement_db": 14.0, "prd_percent": 22.0},
        }
        report.add_run("fcn", "fcn", 0, run)
        report.add_run("fcn", "fcn", 0, run2)
        report.add_run("backward-1", "backward", 1, run)
        return report

    def test_mean_and_std_over_runs(self):
        report = self.build()
        mean, std, n = report.cell("fcn", -10.0, "rmse")
        assert mean == pytest.approx(0.21)
        assert std == pytest.approx(0.01)
        assert n == 2

    def test_csv_round_trip_is_field_exact(self):
        report = self.build()
        parsed = MetricsReport.from_csv_text(report.to_csv_text())
        assert parsed == report

    def test_table_text_layout(self):
        table = self.build().to_table_text("rmse")
        lines = table.splitlines()
        assert lines[0].startswith("rmse")
        assert any(line.startswith("backward-1") for line in lines)

    def test_rejects_mismatched_snr_set(self):
        report = MetricsReport(snrs=(-10.0, 0.0))
        with pytest.raises(ValueError):
            report.add_run("fcn", "fcn", 0, {0.0: {}})


class TestDecompositionReport:
    def test_series_lengths(self):
        report = decomposition_report(np.zeros(1024), levels=3)
        lengths = [len(b.coefficients) for b in report.bands]
        assert lengths == [512, 256, 128, 128]

    def test_band_annotations(self):
        report = decomposition_report(np.zeros(1024), levels=3, sampling_rate_hz=360.0)
        bands = {b.name: (b.low_hz, b.high_hz) for b in report.bands}
        assert bands["D3"] == (22.5, 45.0)
        assert bands["A"] == (0.0, 22.5)

    def test_pure_30hz_concentrates_in_d3(self):
        t = np.arange(1024) / 360.0
        signal = np.sin(2 * np.pi * 30.0 * t)
        report = decomposition_report(signal, levels=3, sampling_rate_hz=360.0)
        d3 = next(b for b in report.bands if b.name == "D3")
        fraction = np.sum(d3.reconstruction**2) / np.sum(signal**2)
        assert fraction > 0.9  # measured 0.9307, frozen as a regression floor

    def test_band_reconstructions_sum_to_signal(self):
        rng = np.random.default_rng(10)
        signal = rng.uniform(-1, 1, 512)
        report = decomposition_report(signal, levels=3)
        total = np.sum([b.reconstruction for b in report.bands], axis=0)
        np.testing.assert_allclose(total, signal, atol=1e-8)

    def test_rejects_bad_divisibility(self):
        with pytest.raises(ValueError):
            decomposition_report(np.zeros(1020), levels=3)

    def test_csv_and_svg_exports(self, tmp_path):
        report = decomposition_report(np.sin(np.arange(256) / 7.0), levels=3)
        files = write_decomposition_csv(report, tmp_path)
        assert len(files) == 4
        first = open(files[0]).read().splitlines()
        assert first[0].startswith("# band=D1")
        assert first[1] == "sample,reconstruction,coefficient"
        svg = tmp_path / "bands.svg"
        write_decomposition_svg(report, svg)
        content = svg.read_text()
        assert content.startswith("<svg") and "polyline" in content

    def test_svg_bytes_are_deterministic(self, tmp_path):
        report = decomposition_report(np.sin(np.arange(256) / 9.0), levels=2)
        write_decomposition_svg(report, tmp_path / "a.svg")
        write_decomposition_svg(report, tmp_path / "b.svg")
        assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
