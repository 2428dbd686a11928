"""Circuit-model tests: quadrature oracles, matrix validation, file I/O."""

import json
import math

import numpy as np
import pytest
from scipy.special import ellipe, ellipk

from wptopt.circuit import (
    MU0,
    GeometryError,
    GeometrySpec,
    ImpedanceMatrix,
    Loading,
    Loop,
    PassivityError,
    SchemaError,
    apply_loading,
    build_loop_system,
    load_geometry_file,
    load_impedance_file,
    loop_resistance,
    loop_self_inductance,
    matrix_from_json,
    matrix_to_json,
    mutual_inductance,
    partition,
    save_impedance_file,
)

LAM = 299792458.0 / 40.0e6
R_LOOP = LAM / 100.0
WIRE = R_LOOP / 10.0


def make_loop(x=0.0, y=0.0, z=0.0, r=R_LOOP, a=WIRE):
    return Loop((x, y, z), r, a)


# ---------------------------------------------------------------------------
# independent oracles
# ---------------------------------------------------------------------------

def neumann_2d_oracle(loop_a, loop_b, n=200):
    """Direct tensor Gauss-Legendre quadrature of the Neumann double line
    integral.  Accurate for well-separated pairs only."""
    ra, rb = loop_a.radius, loop_b.radius
    rho = math.hypot(
        loop_a.center[0] - loop_b.center[0], loop_a.center[1] - loop_b.center[1]
    )
    h = loop_a.center[2] - loop_b.center[2]
    x, w = np.polynomial.legendre.leggauss(n)
    p = np.pi * (x + 1.0)
    P1, P2 = p[:, None], p[None, :]
    dx = ra * np.cos(P1) - rho - rb * np.cos(P2)
    dy = ra * np.sin(P1) - rb * np.sin(P2)
    dist = np.sqrt(dx * dx + dy * dy + h * h)
    weights = np.outer(w, w) * np.pi**2
    return MU0 * ra * rb / (4 * np.pi) * float(np.sum(np.cos(P1 - P2) / dist * weights))


def maxwell_coaxial_oracle(ra, rb, h):
    """Maxwell's closed-form mutual inductance of coaxial circular loops."""
    k2 = 4 * ra * rb / ((ra + rb) ** 2 + h**2)
    k = math.sqrt(k2)
    return MU0 * math.sqrt(ra * rb) * ((2 / k - k) * ellipk(k2) - (2 / k) * ellipe(k2))


# ---------------------------------------------------------------------------
# mutual inductance
# ---------------------------------------------------------------------------

class TestMutualInductance:
    def test_coaxial_matches_maxwell_formula(self):
        for h in [WIRE, R_LOOP, 2 * R_LOOP, 10 * R_LOOP, 0.2 * LAM]:
            got = mutual_inductance(make_loop(), make_loop(z=h))
            want = maxwell_coaxial_oracle(R_LOOP, R_LOOP, h)
            assert got == pytest.approx(want, rel=1e-11)

    def test_general_offsets_match_2d_neumann_quadrature(self):
        cases = [
            (0.05 * LAM, 0.0866 * LAM),
            (3 * R_LOOP, R_LOOP),
            (10 * R_LOOP, 0.0),
            (2.5 * R_LOOP, 0.0),
            (R_LOOP, R_LOOP),
        ]
        for rho, h in cases:
            a, b = make_loop(), make_loop(x=rho, z=h)
            assert mutual_inductance(a, b) == pytest.approx(
                neumann_2d_oracle(a, b), rel=1e-9
            )

    def test_unequal_radii_match_2d_neumann_quadrature(self):
        a = make_loop(r=R_LOOP, a=WIRE)
        b = Loop((0.03 * LAM, 0.0, 0.04 * LAM), 0.6 * R_LOOP, 0.05 * R_LOOP)
        assert mutual_inductance(a, b) == pytest.approx(
            neumann_2d_oracle(a, b), rel=1e-9
        )

    def test_tangent_pair_is_finite_and_stable(self):
        # adjacent planar-preset loops touch exactly; the integral is finite
        a, b = make_loop(), make_loop(x=2 * R_LOOP)
        m1 = mutual_inductance(a, b, rtol=1e-9)
        m2 = mutual_inductance(a, b, rtol=1e-12)
        assert m1 < 0.0  # coplanar loops couple negatively
        assert m1 == pytest.approx(m2, rel=1e-9)

    def test_mirror_symmetry(self):
        left = mutual_inductance(make_loop(), make_loop(x=-0.03 * LAM, z=0.05 * LAM))
        right = mutual_inductance(make_loop(), make_loop(x=0.03 * LAM, z=0.05 * LAM))
        assert left == right

    def test_reciprocity_is_exact(self):
        a = make_loop()
        b = Loop((0.02 * LAM, 0.01 * LAM, 0.03 * LAM), 0.7 * R_LOOP, 0.05 * R_LOOP)
        assert mutual_inductance(a, b) == mutual_inductance(b, a)

    def test_coaxial_coupling_decays_monotonically(self):
        dists = np.linspace(0.05 * LAM, 0.2 * LAM, 25)
        values = [
            abs(mutual_inductance(make_loop(), make_loop(z=d))) for d in dists
        ]
        assert all(x > y for x, y in zip(values, values[1:]))


class TestLoopParameters:
    def test_self_inductance_matches_offset_neumann_integral(self):
        # thin-wire formula vs the loop integrated against itself displaced
        # by one wire radius
        loop = make_loop()
        formula = loop_self_inductance(loop)
        neumann = mutual_inductance(loop, make_loop(z=WIRE), rtol=1e-12)
        assert formula == pytest.approx(neumann, rel=0.02)

    def test_resistance_scales(self):
        omega = 2 * np.pi * 40e6
        loop = make_loop()
        r1 = loop_resistance(loop, omega, LAM)
        r4 = loop_resistance(loop, 4 * omega, LAM / 4)
        assert r1 > 0
        # skin term grows like sqrt(omega), radiation like f^4; quadrupling
        # the frequency must more than double the resistance
        assert r4 > 2 * r1


# ---------------------------------------------------------------------------
# impedance matrices
# ---------------------------------------------------------------------------

class TestBuildLoopSystem:
    def test_preset_shapes_and_exact_symmetry(self):
        for name, n in [("siso", 2), ("miso-2p", 3), ("miso-3p", 4),
                        ("miso-2c", 3), ("miso-3c", 4)]:
            z = build_loop_system(GeometrySpec.preset(name, 0.1 * LAM))
            assert z.n_ports == n
            assert np.array_equal(z.entries, z.entries.T)

    def test_quasi_static_real_part_is_diagonal(self):
        z = build_loop_system(GeometrySpec.preset("miso-3c", 0.1 * LAM, 0.3))
        off = z.entries.real - np.diag(np.diag(z.entries.real))
        assert np.all(off == 0.0)
        assert np.all(np.diag(z.entries.real) > 0.0)

    def test_diagonal_reactance_is_self_inductance(self):
        geom = GeometrySpec.preset("siso", 0.1 * LAM)
        z = build_loop_system(geom)
        omega = 2 * np.pi * geom.frequency
        want = omega * loop_self_inductance(geom.loops[0])
        assert z.entries[0, 0].imag == pytest.approx(want, rel=1e-12)

    def test_permutation_equivariance(self):
        lam = LAM
        loops = (
            make_loop(x=-0.02 * lam),
            make_loop(x=0.01 * lam, z=0.015 * lam),
            make_loop(z=0.002 * lam, y=0.03 * lam),
            make_loop(x=0.05 * lam, z=0.09 * lam),
        )
        z = build_loop_system(GeometrySpec(loops)).entries
        swapped = (loops[1], loops[0], loops[2], loops[3])
        z2 = build_loop_system(GeometrySpec(swapped)).entries
        perm = np.array([1, 0, 2, 3])
        assert np.array_equal(z2, z[np.ix_(perm, perm)])

    def test_passivity_on_presets(self):
        for name in ["siso", "miso-2p", "miso-3p", "miso-2c", "miso-3c"]:
            z = build_loop_system(GeometrySpec.preset(name, 0.05 * LAM, 1.0))
            assert np.linalg.eigvalsh(z.entries.real).min() > 0.0


class TestGeometryValidation:
    def test_tangent_loops_allowed(self):
        GeometrySpec((make_loop(), make_loop(x=2 * R_LOOP), make_loop(z=0.1 * LAM)))

    def test_intersecting_coplanar_loops_rejected(self):
        with pytest.raises(GeometryError, match="intersect"):
            GeometrySpec((make_loop(), make_loop(x=1.5 * R_LOOP)))

    def test_coincident_loops_rejected(self):
        with pytest.raises(GeometryError, match="coincident"):
            GeometrySpec((make_loop(), make_loop()))

    def test_wire_radius_must_be_smaller_than_loop(self):
        with pytest.raises(GeometryError):
            Loop((0, 0, 0), R_LOOP, R_LOOP)

    def test_preset_rejects_bad_distance(self):
        with pytest.raises(GeometryError):
            GeometrySpec.preset("siso", -1.0)

    def test_unknown_preset(self):
        with pytest.raises(GeometryError, match="unknown preset"):
            GeometrySpec.preset("miso-9x", 0.1 * LAM)


class TestImpedanceMatrixValidation:
    def test_rejects_nonsymmetric(self):
        z = np.array([[1.0 + 1j, 2j], [2.1j, 3.0 + 1j]])
        with pytest.raises(SchemaError, match="symmetric"):
            ImpedanceMatrix(z, 40e6)

    def test_rejects_nonpassive_naming_eigenvalue(self):
        z = np.array([[1.0, 3.0], [3.0, 1.0]], dtype=complex)
        with pytest.raises(PassivityError, match="eigenvalue"):
            ImpedanceMatrix(z, 40e6)

    def test_entries_are_immutable(self):
        z = build_loop_system(GeometrySpec.preset("siso", 0.1 * LAM))
        with pytest.raises(ValueError):
            z.entries[0, 0] = 0.0

    def test_partition_blocks(self):
        z = build_loop_system(GeometrySpec.preset("miso-2c", 0.1 * LAM))
        zt, ztr, zr = partition(z)
        assert zt.shape == (2, 2)
        assert ztr.shape == (2,)
        assert zr == z.entries[-1, -1]
        recon = np.block([[zt, ztr[:, None]], [ztr[None, :], zr]])
        assert np.array_equal(recon, z.entries)


class TestLoading:
    def test_apply_loading_adds_diagonal_terms(self):
        z = build_loop_system(GeometrySpec.preset("miso-2c", 0.1 * LAM))
        x = np.array([1.0, -2.0, -56.0])
        loaded = apply_loading(z, Loading(x, r_load=0.05))
        delta = loaded.entries - z.entries
        assert np.allclose(np.diag(delta), 1j * x + np.array([0, 0, 0.05]))
        assert np.all(delta - np.diag(np.diag(delta)) == 0.0)
        assert loaded.r_load == 0.05

    def test_loading_validation(self):
        z = build_loop_system(GeometrySpec.preset("siso", 0.1 * LAM))
        with pytest.raises(SchemaError):
            Loading(np.zeros(2), r_load=0.0)
        with pytest.raises(SchemaError):
            apply_loading(z, Loading(np.zeros(5), r_load=0.1))


# ---------------------------------------------------------------------------
# file I/O
# ---------------------------------------------------------------------------

class TestMatrixIO:
    def test_round_trip(self, tmp_path):
        z = build_loop_system(GeometrySpec.preset("miso-2p", 0.1 * LAM, 0.25))
        path = tmp_path / "z.json"
        save_impedance_file(z, path)
        back = load_impedance_file(path)
        assert back.frequency == z.frequency
        assert np.array_equal(back.entries, z.entries)

    def test_schema_fields_present(self):
        z = build_loop_system(GeometrySpec.preset("siso", 0.1 * LAM))
        doc = matrix_to_json(z)
        assert set(doc) == {"frequency_hz", "n_ports", "re", "im"}

    def test_slight_asymmetry_symmetrized_with_warning(self):
        doc = {
            "frequency_hz": 40e6,
            "n_ports": 2,
            "re": [[1.0, 0.0], [0.0, 1.0]],
            "im": [[0.0, 2.0], [2.0 * (1 + 3e-8), 0.0]],
        }
        with pytest.warns(RuntimeWarning, match="symmetrizing"):
            z = matrix_from_json(doc)
        assert z.entries[0, 1] == z.entries[1, 0]

    def test_gross_asymmetry_rejected(self):
        doc = {
            "frequency_hz": 40e6,
            "n_ports": 2,
            "re": [[1.0, 0.0], [0.0, 1.0]],
            "im": [[0.0, 2.0], [2.4, 0.0]],
        }
        with pytest.raises(SchemaError, match="asymmetry"):
            matrix_from_json(doc)

    def test_shape_mismatch_rejected(self):
        doc = {"frequency_hz": 40e6, "n_ports": 3,
               "re": [[1.0, 0.0], [0.0, 1.0]],
               "im": [[0.0, 0.0], [0.0, 0.0]]}
        with pytest.raises(SchemaError, match="n_ports"):
            matrix_from_json(doc)

    def test_missing_field_rejected(self):
        with pytest.raises(SchemaError):
            matrix_from_json({"n_ports": 2, "re": [[1, 0], [0, 1]], "im": [[0, 0], [0, 0]]})

    def test_invalid_json_rejected(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(SchemaError, match="JSON"):
            load_impedance_file(path)

    def test_geometry_round_trip(self, tmp_path):
        geom = GeometrySpec.preset("miso-3c", 0.1 * LAM, 0.1)
        path = tmp_path / "geom.json"
        path.write_text(json.dumps(geom.to_json()))
        back = load_geometry_file(path)
        assert back == geom
