import csv
import math

import numpy as np
import pytest

import ccmabeam as cb
from ccmabeam.wavefield import (
    AngularGrid,
    Direction,
    beampattern,
    beampattern_grid,
    build_steering_field,
    export_beampattern_csv,
    pattern_db,
    propagation_delay,
    snapped_range,
    steering_matrix,
    steering_vector,
)


class TestDirection:
    def test_validation(self):
        with pytest.raises(ValueError):
            Direction(-0.1, 0.0)
        with pytest.raises(ValueError):
            Direction(0.1, 2.0 * math.pi)

    def test_from_degrees_wraps_azimuth(self):
        d = Direction.from_degrees(45.0, 450.0)
        assert d.azimuth == pytest.approx(math.radians(90.0))

    def test_unit_vector(self):
        d = Direction.from_degrees(90.0, 0.0)
        assert np.allclose(d.unit_vector(), [1.0, 0.0, 0.0], atol=1e-15)
        z = Direction(0.0, 0.0)
        assert np.allclose(z.unit_vector(), [0.0, 0.0, 1.0])


class TestPropagationDelay:
    def test_broadside_is_zero(self, array_16k):
        d = Direction(0.0, 1.0)
        for r in range(array_16k.ring_count):
            assert propagation_delay(array_16k, r, 0, d) == 0.0

    def test_center_mic_is_zero(self, array_16k):
        d = Direction.from_degrees(70.0, 10.0)
        assert propagation_delay(array_16k, 0, 0, d) == 0.0

    def test_aligned_in_plane_value(self):
        g = cb.build_geometry(cb.ArrayConfig(ring_radii=(0.1,), sample_rate=16000.0))
        # arrival from the plane, along the first mic's azimuth
        d = Direction(math.pi / 2.0, g.rings[0].angles[0])
        tau = propagation_delay(g, 0, 0, d)
        assert tau == pytest.approx(-0.1 / 343.0, rel=1e-12)

    def test_index_validation(self, array_16k):
        with pytest.raises(IndexError):
            propagation_delay(array_16k, 1, 99, Direction(0.0, 0.0))


class TestSteering:
    def test_broadside_all_ones(self, array_16k):
        d = steering_vector(array_16k, 1000.0, Direction(0.0, 0.0))
        assert np.allclose(d, 1.0, atol=1e-15)

    def test_center_entry_always_one(self, array_16k, doa45):
        d = steering_vector(array_16k, 3333.0, doa45)
        assert d[0] == 1.0 + 0.0j

    def test_unit_modulus(self, array_16k, doa45):
        d = steering_vector(array_16k, 5000.0, doa45)
        assert np.max(np.abs(np.abs(d) - 1.0)) < 1e-12

    def test_conjugate_symmetry_across_azimuth_flip(self, array_16k):
        f = 2000.0
        a = steering_vector(array_16k, f, Direction(math.pi / 2.0, 0.3))
        b = steering_vector(array_16k, f, Direction(math.pi / 2.0, 0.3 + math.pi))
        assert np.allclose(a, np.conj(b), atol=1e-12)

    def test_frequency_range_enforced(self, array_16k, doa45):
        with pytest.raises(ValueError):
            steering_vector(array_16k, 0.0, doa45)
        with pytest.raises(ValueError):
            steering_vector(array_16k, 8000.1, doa45)

    def test_matrix_matches_vector(self, array_16k):
        f = 1500.0
        dirs = [(0.2, 1.1), (1.0, 4.0)]
        mat = steering_matrix(
            array_16k, f, np.array([d[0] for d in dirs]), np.array([d[1] for d in dirs])
        )
        for row, (el, az) in zip(mat, dirs):
            assert np.allclose(row, steering_vector(array_16k, f, Direction(el, az)))

    def test_steering_field_invariants(self, array_16k, doa45):
        grid = AngularGrid.build(math.radians(15.0), doa45)
        field = build_steering_field(array_16k, (1000.0, 2000.0), grid)
        for mat in field.values:
            assert mat.shape[0] == array_16k.total_mics
            assert np.max(np.abs(np.abs(mat) - 1.0)) < 1e-12
            assert np.all(mat[0] == 1.0 + 0.0j)  # center mic row


class TestBeampattern:
    def test_das_distortionless_at_doa(self, array_16k, doa45):
        f = 1000.0
        d = steering_vector(array_16k, f, doa45)
        h = d / array_16k.total_mics
        assert beampattern(h, d) == pytest.approx(1.0 + 0.0j, abs=1e-9)

    def test_single_mic_unity_everywhere(self):
        g = cb.build_geometry(cb.ArrayConfig(ring_radii=(0.0,), sample_rate=16000.0))
        grid = AngularGrid.build(math.radians(10.0), Direction(0.0, 0.0))
        b = beampattern_grid(g, np.array([1.0 + 0.0j]), 1000.0, grid)
        assert np.allclose(b, 1.0)

    def test_das_mainlobe_peaks_at_doa(self, array_16k, doa45):
        f = 1000.0
        h = cb.das_filter(array_16k, f, doa45)
        grid = AngularGrid.build(math.radians(1.0), doa45)
        b = np.abs(beampattern_grid(array_16k, h, f, grid))
        ei, ai = np.unravel_index(np.argmax(b), b.shape)
        assert (ei, ai) == grid.doa_indices(doa45)

    def test_magnitude_bounded_by_l1_norm(self, array_16k, doa45):
        rng = np.random.default_rng(5)
        h = rng.normal(size=array_16k.total_mics) + 1j * rng.normal(
            size=array_16k.total_mics
        )
        norm1 = np.sum(np.abs(h))
        grid = AngularGrid.build(math.radians(10.0), doa45)
        b = beampattern_grid(array_16k, h, 2000.0, grid)
        assert np.max(np.abs(b)) <= norm1 + 1e-9

    def test_global_phase_invariance(self, array_16k, doa45):
        f = 1200.0
        h = cb.das_filter(array_16k, f, doa45)
        grid = AngularGrid.build(math.radians(10.0), doa45)
        b1 = np.abs(beampattern_grid(array_16k, h, f, grid))
        b2 = np.abs(beampattern_grid(array_16k, h * np.exp(1j * 0.7), f, grid))
        assert np.allclose(b1, b2, atol=1e-12)

    def test_dimension_mismatch(self, array_16k, doa45):
        d = steering_vector(array_16k, 1000.0, doa45)
        with pytest.raises(ValueError):
            beampattern(np.ones(3), d)


class TestAngularGrid:
    def test_contains_doa_exactly(self):
        doa = Direction.from_degrees(45.3, 44.7)
        grid = AngularGrid.build(math.radians(1.0), doa)
        assert np.min(np.abs(grid.elevations - doa.elevation)) < 1e-12
        assert np.min(np.abs(grid.azimuths - doa.azimuth)) < 1e-12

    def test_uniform_spacing_and_coverage(self, doa45):
        res = math.radians(1.0)
        grid = AngularGrid.build(res, doa45)
        assert len(grid.elevations) == 91
        assert len(grid.azimuths) == 360
        assert np.allclose(np.diff(grid.elevations), res)
        assert np.allclose(np.diff(grid.azimuths), res)
        assert grid.elevations[0] >= 0.0 and grid.elevations[-1] <= math.pi / 2.0

    def test_snapped_range_anchor(self):
        pts = snapped_range(0.0, 1.0, 0.35, 0.1)
        assert np.min(np.abs(pts - 0.35)) < 1e-15
        assert pts[0] >= -1e-12 and pts[-1] <= 1.0 + 1e-12

    def test_rejects_bad_resolution(self, doa45):
        with pytest.raises(ValueError):
            AngularGrid.build(0.0, doa45)


class TestExport:
    def test_csv_round_trip(self, tmp_path):
        elevations = np.radians([0.0, 45.0, 90.0])
        azimuths = np.radians([0.0, 180.0])
        grid_db = pattern_db(np.array([[1.0, 0.5], [0.25, 1.0], [1.0, 0.1]]))
        path = tmp_path / "pattern.csv"
        export_beampattern_csv(path, elevations, azimuths, grid_db)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 4  # header + one per elevation
        assert rows[0][1:] == ["0.000", "180.000"]
        assert float(rows[1][1]) == pytest.approx(0.0, abs=1e-6)
        assert float(rows[2][1]) == pytest.approx(20.0 * math.log10(0.25), abs=1e-5)

    def test_shape_mismatch_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            export_beampattern_csv(
                tmp_path / "x.csv", np.zeros(2), np.zeros(2), np.zeros((3, 2))
            )
