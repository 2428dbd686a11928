"""Quasi-static circuit models of magnetically coupled loop systems.

A link made of N single-turn loops (N-1 transmitters plus one receiver,
receiver last) is described by its N-port impedance matrix::

    Z[n, n] = R_n + j omega L_n        loop resistance and self-inductance
    Z[n, m] = j omega M_nm             mutual coupling, n != m

Loop parameters come from standard thin-wire formulas (self-inductance,
skin-effect and radiation resistance); mutual inductances are Neumann
line integrals evaluated with the azimuthal integration done in closed
form (loop vector potential, complete elliptic integrals) and the
remaining integral by adaptive Gauss-Legendre panels.  Matrices can also
be ingested from JSON files, e.g. when they come from a full-wave solver.
"""

from __future__ import annotations

import functools
import heapq
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import ellipe, ellipkm1

MU0 = 4.0e-7 * np.pi
C0 = 299792458.0

#: preset names understood by :meth:`GeometrySpec.preset`
PRESETS = ("siso", "miso-2p", "miso-3p", "miso-2c", "miso-3c")

#: preset defaults: 40 MHz link, loop radius lambda/100, wire radius a tenth
#: of that, copper conductivity
PRESET_FREQUENCY = 40.0e6
PRESET_CONDUCTIVITY = 5.8e7


class GeometryError(ValueError):
    """Invalid loop geometry (overlapping or degenerate loops)."""


class PassivityError(ValueError):
    """Impedance matrix is not strictly passive."""


class SchemaError(ValueError):
    """Malformed impedance or geometry file."""


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Loop:
    """Circular wire loop parallel to the xy-plane.

    Parameters
    ----------
    center : tuple of float
        Loop center (x, y, z) in meters.
    radius : float
        Loop radius in meters.
    wire_radius : float
        Wire radius in meters; must be smaller than ``radius``.
    conductivity : float
        Wire conductivity in S/m.
    """

    center: tuple[float, float, float]
    radius: float
    wire_radius: float
    conductivity: float = PRESET_CONDUCTIVITY

    def __post_init__(self):
        if len(self.center) != 3:
            raise GeometryError("loop center must be a 3-vector")
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        if not (self.radius > 0.0 and math.isfinite(self.radius)):
            raise GeometryError(f"loop radius must be positive, got {self.radius}")
        if not (0.0 < self.wire_radius < self.radius):
            raise GeometryError(
                f"wire radius must lie in (0, radius), got {self.wire_radius}"
            )
        if not (self.conductivity > 0.0):
            raise GeometryError("conductivity must be positive")


@dataclass(frozen=True)
class GeometrySpec:
    """A set of transmitter loops plus one receiver loop (last entry).

    Use :meth:`preset` for the built-in arrangements or supply the loop
    list directly.  All loops are parallel to the xy-plane.
    """

    loops: tuple[Loop, ...]
    frequency: float = PRESET_FREQUENCY

    def __post_init__(self):
        object.__setattr__(self, "loops", tuple(self.loops))
        if len(self.loops) < 2:
            raise GeometryError("need at least one transmitter and one receiver loop")
        if not (self.frequency > 0.0):
            raise GeometryError("frequency must be positive")
        _check_no_overlap(self.loops)

    @property
    def n_ports(self) -> int:
        return len(self.loops)

    @property
    def wavelength(self) -> float:
        return C0 / self.frequency

    @classmethod
    def preset(
        cls,
        name: str,
        distance: float,
        angle: float = 0.0,
        frequency: float = PRESET_FREQUENCY,
    ) -> "GeometrySpec":
        """Build one of the canonical arrangements.

        Parameters
        ----------
        name : str
            One of ``siso`` (single transmitter), ``miso-2p``/``miso-3p``
            (2 or 3 transmitters side by side along x, spacing lambda/50)
            or ``miso-2c``/``miso-3c`` (coaxial stack along z, spacing
            lambda/100).
        distance : float
            Receiver distance from the array center, meters.
        angle : float
            Receiver direction measured from the z-axis (broadside),
            radians.  The receiver center sits at
            ``d (sin angle, 0, cos angle)``.
        frequency : float
            Operating frequency in Hz; sets the loop dimensions.
        """
        lam = C0 / frequency
        r_loop = lam / 100.0
        a = r_loop / 10.0
        dx = lam / 50.0
        dz = lam / 100.0
        centers = {
            "siso": [(0.0, 0.0, 0.0)],
            "miso-2p": [(-dx / 2, 0.0, 0.0), (dx / 2, 0.0, 0.0)],
            "miso-3p": [(-dx, 0.0, 0.0), (0.0, 0.0, 0.0), (dx, 0.0, 0.0)],
            "miso-2c": [(0.0, 0.0, -dz / 2), (0.0, 0.0, dz / 2)],
            "miso-3c": [(0.0, 0.0, -dz), (0.0, 0.0, 0.0), (0.0, 0.0, dz)],
        }
        if name not in centers:
            raise GeometryError(f"unknown preset {name!r}; choose from {PRESETS}")
        if not (distance > 0.0):
            raise GeometryError("receiver distance must be positive")
        rx = (distance * math.sin(angle), 0.0, distance * math.cos(angle))
        loops = [Loop(c, r_loop, a) for c in centers[name]] + [Loop(rx, r_loop, a)]
        return cls(tuple(loops), frequency)

    def to_json(self) -> dict:
        return {
            "frequency_hz": self.frequency,
            "loops": [
                {
                    "center": list(lp.center),
                    "radius": lp.radius,
                    "wire_radius": lp.wire_radius,
                    "conductivity": lp.conductivity,
                }
                for lp in self.loops
            ],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "GeometrySpec":
        try:
            loops = tuple(
                Loop(
                    tuple(entry["center"]),
                    float(entry["radius"]),
                    float(entry["wire_radius"]),
                    float(entry.get("conductivity", PRESET_CONDUCTIVITY)),
                )
                for entry in doc["loops"]
            )
            freq = float(doc["frequency_hz"])
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed geometry document: {exc}") from exc
        return cls(loops, freq)


def _check_no_overlap(loops) -> None:
    for i in range(len(loops)):
        for j in range(i + 1, len(loops)):
            a, b = loops[i], loops[j]
            dzij = a.center[2] - b.center[2]
            rho = math.hypot(a.center[0] - b.center[0], a.center[1] - b.center[1])
            scale = a.radius + b.radius
            if abs(dzij) > 1e-9 * scale:
                continue  # distinct planes never intersect
            if rho < 1e-9 * scale and abs(a.radius - b.radius) < 1e-9 * scale:
                raise GeometryError(
                    f"loops {i} and {j} are coincident (same center and radius)"
                )
            overlap = (a.radius + b.radius) - rho
            nested = abs(a.radius - b.radius) - rho
            # exact tangency is allowed (the planar presets need it), true
            # crossings are not
            if overlap > 1e-9 * scale and nested < -1e-9 * scale:
                raise GeometryError(
                    f"coplanar loops {i} and {j} intersect "
                    f"(center distance {rho:.6g} m, radii {a.radius:.6g}"
                    f"/{b.radius:.6g} m)"
                )


# ---------------------------------------------------------------------------
# loop electrical parameters
# ---------------------------------------------------------------------------

def loop_self_inductance(loop: Loop) -> float:
    """Thin-wire self-inductance mu0 r (ln(8r/a) - 2)."""
    return MU0 * loop.radius * (math.log(8.0 * loop.radius / loop.wire_radius) - 2.0)


def loop_resistance(loop: Loop, omega: float, wavelength: float) -> float:
    """Skin-effect plus radiation resistance of a single-turn loop."""
    surface = math.sqrt(omega * MU0 / (2.0 * loop.conductivity))
    r_ohmic = (loop.radius / loop.wire_radius) * surface
    circumference = 2.0 * np.pi * loop.radius
    r_rad = 20.0 * np.pi**2 * (circumference / wavelength) ** 4
    return r_ohmic + r_rad


# ---------------------------------------------------------------------------
# mutual inductance quadrature
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=64)
def _gl_nodes(n: int):
    return np.polynomial.legendre.leggauss(n)


def _series_coeffs(kmax: int = 14) -> np.ndarray:
    # w(m) = [(2-m)K - 2E]/m = (pi/2) sum_{k>=2} d_k m^{k-1}
    c = np.zeros(kmax + 1)
    c[0] = 1.0
    for k in range(1, kmax + 1):
        c[k] = c[k - 1] * ((2 * k - 1) / (2 * k)) ** 2
    d = np.zeros(kmax + 1)
    for k in range(2, kmax + 1):
        d[k] = c[k] * 4 * k / (2 * k - 1) - c[k - 1]
    return d


_WM_SERIES = _series_coeffs()


def _w_over_m(m: np.ndarray, one_minus_m: np.ndarray) -> np.ndarray:
    """[(2-m)K(m) - 2E(m)] / m**2, stable at both ends of m in [0, 1].

    The direct expression cancels catastrophically for small m and K(m)
    needs the complementary parameter near m = 1; both regimes matter
    (far pairs, tangent pairs).
    """
    out = np.empty_like(m)
    small = m < 0.05
    if np.any(small):
        ms = m[small]
        acc = np.zeros_like(ms)
        for k in range(len(_WM_SERIES) - 1, 1, -1):
            acc = acc * ms + _WM_SERIES[k]
        out[small] = 0.5 * np.pi * acc
    big = ~small
    if np.any(big):
        mb = m[big]
        p = np.maximum(one_minus_m[big], 5e-324)
        out[big] = ((2.0 - mb) * ellipkm1(p) - 2.0 * ellipe(mb)) / (mb * mb)
    return out


def _neumann_reduced(psi, ra, rb, rho, h):
    """Neumann integrand after closed-form azimuthal integration.

    ``psi`` is measured from the closest-approach azimuth of the field
    loop; the full mutual inductance is 2 * integral over [0, pi].
    """
    s2 = np.sin(0.5 * psi) ** 2
    rf = np.sqrt((rho - rb) ** 2 + 4.0 * rho * rb * s2)
    S2 = (ra + rf) ** 2 + h * h
    # ra - rf in product form: exact at tangency, no cancellation
    diff2 = (ra + rb - rho) * (ra + rho - rb) - 4.0 * rho * rb * s2
    one_minus_m = ((diff2 / (ra + rf)) ** 2 + h * h) / S2
    m = np.minimum(4.0 * ra * rf / S2, 1.0)
    wm = _w_over_m(m, one_minus_m)
    return (MU0 * ra * rb / np.pi) * wm * (4.0 * ra / S2) * (rb - rho * np.cos(psi)) / np.sqrt(S2)


def _adaptive_gauss(f, x0, x1, rtol, atol, n_lo=12, n_hi=24, max_panels=4000):
    """Globally adaptive Gauss-Legendre panels with embedded error estimate."""

    def one(a, b, n):
        x, w = _gl_nodes(n)
        xm, xr = 0.5 * (a + b), 0.5 * (b - a)
        return xr * float(np.dot(w, f(xm + xr * x)))

    heap = []
    uid = 0
    total = err = 0.0
    edges = np.linspace(x0, x1, 9)
    for i in range(8):
        a, b = edges[i], edges[i + 1]
        lo, hi = one(a, b, n_lo), one(a, b, n_hi)
        total += hi
        e = abs(hi - lo)
        err += e
        heapq.heappush(heap, (-e, uid, (a, b, hi, e)))
        uid += 1
    panels = 8
    while err > max(rtol * abs(total), atol) and panels < max_panels and heap:
        _, _, (a, b, hi, e) = heapq.heappop(heap)
        total -= hi
        err -= e
        mid = 0.5 * (a + b)
        for (s, t) in ((a, mid), (mid, b)):
            lo2, hi2 = one(s, t, n_lo), one(s, t, n_hi)
            total += hi2
            e2 = abs(hi2 - lo2)
            err += e2
            heapq.heappush(heap, (-e2, uid, (s, t, hi2, e2)))
            uid += 1
        panels += 1
    return total, err


@functools.lru_cache(maxsize=8192)
def _mutual_cached(ra: float, rb: float, rho: float, h: float, rtol: float) -> float:
    f = lambda psi: _neumann_reduced(psi, ra, rb, rho, h)
    atol = 1e-15 * MU0 * min(ra, rb)
    rf0 = abs(rho - rb)
    p0 = ((ra - rf0) ** 2 + h * h) / ((ra + rf0) ** 2 + h * h)
    if p0 < 1e-5:
        # near-tangent pair: graded substitution tames the log singularity
        # at psi = 0
        delta = 0.5
        g = lambda s: f(delta * s**4) * 4.0 * delta * s**3
        i_sing, e_sing = _adaptive_gauss(g, 0.0, 1.0, rtol, 0.5 * atol)
        i_rest, e_rest = _adaptive_gauss(f, delta, np.pi, rtol, 0.5 * atol)
        total, err = i_sing + i_rest, e_sing + e_rest
    else:
        total, err = _adaptive_gauss(f, 0.0, np.pi, rtol, atol)
    value = 2.0 * total
    if 2.0 * err > max(10.0 * rtol * abs(value), 10.0 * atol):
        warnings.warn(
            f"mutual inductance quadrature stopped at estimated relative error "
            f"{2.0 * err / max(abs(value), atol):.2e}",
            RuntimeWarning,
            stacklevel=3,
        )
    return value


def mutual_inductance(loop_a: Loop, loop_b: Loop, rtol: float = 1e-10) -> float:
    """Mutual inductance of two parallel circular loops, in henries.

    Evaluates the Neumann double line integral with the inner (source
    loop) integral in closed form and the outer one by adaptive
    Gauss-Legendre quadrature to relative tolerance ``rtol``.
    """
    dz = abs(loop_a.center[2] - loop_b.center[2])
    rho = math.hypot(
        loop_a.center[0] - loop_b.center[0], loop_a.center[1] - loop_b.center[1]
    )
    ra, rb = sorted((loop_a.radius, loop_b.radius))
    # canonical argument order keeps Z exactly symmetric and makes the
    # mirror/rotation symmetries structural
    return _mutual_cached(ra, rb, rho, dz, rtol)


# ---------------------------------------------------------------------------
# impedance matrices
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ImpedanceMatrix:
    """Symmetric N-port impedance matrix of an unloaded link.

    The last port is the receiver.  ``entries`` is complex, exactly
    symmetric as stored, with positive-definite real part (strictly
    passive, lossy).
    """

    entries: np.ndarray
    frequency: float

    def __post_init__(self):
        z = np.array(self.entries, dtype=complex)
        if z.ndim != 2 or z.shape[0] != z.shape[1]:
            raise SchemaError(f"impedance matrix must be square, got shape {z.shape}")
        if z.shape[0] < 2:
            raise SchemaError("need at least 2 ports (one transmitter, one receiver)")
        if not np.array_equal(z, z.T):
            raise SchemaError("impedance matrix must be symmetric as stored")
        if not np.all(np.isfinite(z.view(float))):
            raise SchemaError("impedance matrix contains non-finite entries")
        _require_passive(z)
        z.flags.writeable = False
        object.__setattr__(self, "entries", z)
        object.__setattr__(self, "frequency", float(self.frequency))
        if not self.frequency > 0.0:
            raise SchemaError("frequency must be positive")

    @property
    def n_ports(self) -> int:
        return self.entries.shape[0]

    @property
    def n_tx(self) -> int:
        return self.n_ports - 1

    @property
    def omega(self) -> float:
        return 2.0 * np.pi * self.frequency


def _require_passive(z: np.ndarray) -> None:
    sym = 0.5 * (z + z.T)
    eigs = np.linalg.eigvalsh(sym.real)
    if eigs[0] <= 0.0:
        raise PassivityError(
            f"impedance matrix is not strictly passive: Re(Z) has eigenvalue "
            f"{eigs[0]:.6g} <= 0"
        )


def partition(z: ImpedanceMatrix | np.ndarray):
    """Split Z into (Z_t, z_tr, z_r): transmit block, coupling column,
    receiver self-impedance."""
    m = z.entries if isinstance(z, ImpedanceMatrix) else np.asarray(z)
    return m[:-1, :-1], m[:-1, -1], m[-1, -1]


@dataclass(frozen=True)
class Loading:
    """Per-port series compensation reactances plus the load resistance.

    ``reactances`` has one entry per port (receiver last); ``r_load`` is
    the load resistance at the receiver port, in ohms.
    """

    reactances: np.ndarray
    r_load: float

    def __post_init__(self):
        x = np.array(self.reactances, dtype=float)
        if x.ndim != 1:
            raise SchemaError("reactance vector must be 1-D")
        x.flags.writeable = False
        object.__setattr__(self, "reactances", x)
        object.__setattr__(self, "r_load", float(self.r_load))
        if not self.r_load > 0.0:
            raise SchemaError(f"load resistance must be positive, got {self.r_load}")


@dataclass(frozen=True)
class LoadedImpedanceMatrix:
    """Loaded matrix Z + j diag(x) + R_L e_N e_N^T with its provenance."""

    entries: np.ndarray
    frequency: float
    loading: Loading

    @property
    def n_ports(self) -> int:
        return self.entries.shape[0]

    @property
    def r_load(self) -> float:
        return self.loading.r_load


def apply_loading(z: ImpedanceMatrix, loading: Loading) -> LoadedImpedanceMatrix:
    """Terminate every port with its series reactance and the receiver
    with R_L."""
    n = z.n_ports
    if loading.reactances.shape != (n,):
        raise SchemaError(
            f"loading has {loading.reactances.shape[0]} reactances for {n} ports"
        )
    zhat = z.entries + 1j * np.diag(loading.reactances)
    zhat[-1, -1] += loading.r_load
    zhat.flags.writeable = False
    return LoadedImpedanceMatrix(zhat, z.frequency, loading)


def build_loop_system(geom: GeometrySpec, rtol: float = 1e-10) -> ImpedanceMatrix:
    """Impedance matrix of a loop arrangement at its design frequency."""
    omega = 2.0 * np.pi * geom.frequency
    lam = geom.wavelength
    n = geom.n_ports
    z = np.zeros((n, n), dtype=complex)
    for i, loop in enumerate(geom.loops):
        z[i, i] = loop_resistance(loop, omega, lam) + 1j * omega * loop_self_inductance(loop)
    for i in range(n):
        for j in range(i + 1, n):
            m = mutual_inductance(geom.loops[i], geom.loops[j], rtol)
            z[i, j] = z[j, i] = 1j * omega * m
    try:
        return ImpedanceMatrix(z, geom.frequency)
    except PassivityError as exc:
        raise PassivityError(f"constructed loop system failed validation: {exc}") from exc


# ---------------------------------------------------------------------------
# file I/O
# ---------------------------------------------------------------------------

def matrix_to_json(z: ImpedanceMatrix) -> dict:
    return {
        "frequency_hz": z.frequency,
        "n_ports": z.n_ports,
        "re": z.entries.real.tolist(),
        "im": z.entries.imag.tolist(),
    }


def matrix_from_json(doc: dict) -> ImpedanceMatrix:
    """Build an ImpedanceMatrix from its JSON document.

    Slight asymmetry (relative magnitude above 1e-9) is symmetrized with
    a warning; gross asymmetry (above 1e-3) is rejected.
    """
    try:
        freq = float(doc["frequency_hz"])
        n = int(doc["n_ports"])
        re = np.array(doc["re"], dtype=float)
        im = np.array(doc["im"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed impedance document: {exc}") from exc
    if re.shape != (n, n) or im.shape != (n, n):
        raise SchemaError(
            f"impedance entries must be {n}x{n} to match n_ports, got "
            f"{re.shape} and {im.shape}"
        )
    z = re + 1j * im
    scale = np.abs(z).max() or 1.0
    asym = np.abs(z - z.T).max() / scale
    if asym > 1e-3:
        raise SchemaError(
            f"impedance matrix asymmetry {asym:.3e} exceeds 1e-3; refusing to "
            f"symmetrize a non-reciprocal matrix"
        )
    if asym > 1e-9:
        warnings.warn(
            f"symmetrizing impedance matrix with relative asymmetry {asym:.3e}",
            RuntimeWarning,
            stacklevel=2,
        )
    if asym > 0.0:
        # averaging an already-symmetric matrix would still flip the signs
        # of negative zeros, breaking bit-stable round trips
        z = 0.5 * (z + z.T)
    return ImpedanceMatrix(z, freq)


def load_impedance_file(path) -> ImpedanceMatrix:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not valid JSON: {exc}") from exc
    return matrix_from_json(doc)


def save_impedance_file(z: ImpedanceMatrix, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(matrix_to_json(z), fh, indent=1)
        fh.write("\n")


def load_geometry_file(path) -> GeometrySpec:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not valid JSON: {exc}") from exc
    return GeometrySpec.from_json(doc)
