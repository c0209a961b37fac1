"""Forward-scattering EFIE method-of-moments solver over terrain profiles.

The 2D TM^z electric field integral equation is discretized with pulse
basis functions and point matching on a piecewise-linear terrain surface.
Backscatter is neglected (the system matrix is treated as lower triangular
in range order), so the current follows from back substitution.  Two
drivers are provided:

* ``solve_exact``   - O(N^2) reference back substitution.
* ``solve_faffa``   - fast far-field approximation: interactions between
  well separated groups of basis functions are aggregated at the source
  group and translated to each observer through a single phase factor,
  while intra-group coupling (a triangular Toeplitz system, since basis
  functions are uniformly spaced along each straight segment) is solved
  with FFT-accelerated block convolution.

Path gain is referenced to the free-space field of the same line source at
1 m, with the field scaled by 1/sqrt(R) so free space decays 20 dB/decade.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal, special

from .emcore import ETA0, EULER_GAMMA, RadioConfig, hankel2_0, incident_field, wavenumber
from .terrain import TerrainProfile

DB_FLOOR = -300.0          # clamp for vanishing fields, keeps dataset vectors finite
_COLUMN_CHUNK = 8192       # column blocking for dense kernel sweeps


@dataclass(frozen=True)
class SolverConfig:
    radio: RadioConfig = field(default_factory=RadioConfig)
    samples_per_wavelength: float = 10.0
    method: str = "faffa"            # "faffa" or "exact"
    groups_per_segment: int = 1      # split each terrain segment into this many groups
    near_group_factor: float = 2.0   # group pairs closer than factor*group length are exact
    direct_block: int = 64           # intra-group solve goes direct below this size

    def __post_init__(self):
        if self.samples_per_wavelength < 2:
            raise ValueError("samples_per_wavelength must be at least 2 "
                             "(pulse width above lambda/2 is not resolvable)")
        if self.method not in ("exact", "faffa"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.groups_per_segment < 1:
            raise ValueError("groups_per_segment must be >= 1")
        if self.near_group_factor < 0:
            raise ValueError("near_group_factor must be >= 0")
        if self.direct_block < 1:
            raise ValueError("direct_block must be >= 1")


@dataclass(frozen=True)
class BasisSet:
    """Pulse-basis discretization of a terrain surface.

    Basis functions are numbered in range order and partitioned into
    contiguous groups, one (or more) per straight terrain segment; within a
    group the match points are uniformly spaced along the segment.
    """

    midpoints: np.ndarray      # (N, 2) match points on the surface
    seg_len_m: float           # mean quadrature segment length
    group_index: np.ndarray    # (N,) group id per basis function
    group_centres: np.ndarray  # (M, 2)
    group_offsets: np.ndarray  # (M+1,) basis index range of each group
    group_spacing: np.ndarray  # (M,) uniform intra-group spacing
    group_length: np.ndarray   # (M,) spatial extent of each group

    @property
    def n_unknowns(self) -> int:
        return self.midpoints.shape[0]

    @property
    def n_groups(self) -> int:
        return self.group_centres.shape[0]

    @property
    def delta(self) -> np.ndarray:
        """Quadrature length of each basis function."""
        return self.group_spacing[self.group_index]


@dataclass(frozen=True)
class SurfaceCurrent:
    """Complex pulse expansion coefficients of the induced surface current."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.complex128)
        object.__setattr__(self, "coeffs", c)
        if not np.all(np.isfinite(c)):
            raise ValueError("surface current coefficients must be finite")


@dataclass(frozen=True)
class PathLossProfile:
    """Path gain in dB at each receiver, referenced to free space at 1 m."""

    values_db: np.ndarray
    rx_positions: np.ndarray


def discretize(profile: TerrainProfile, cfg: SolverConfig) -> BasisSet:
    """Subdivide each terrain segment into pulse basis functions.

    A segment of length L is split into ceil(L*spl/lambda) equal pieces per
    group, so the pulse width never exceeds lambda/samples_per_wavelength.
    Group centres sit at the segment midpoints.
    """
    k0 = wavenumber(cfg.radio.frequency_hz)
    lam = 2.0 * np.pi / k0
    spl = cfg.samples_per_wavelength
    if spl < 2:
        raise ValueError("samples_per_wavelength must be at least 2")
    xs = profile.ranges_m
    ys = profile.heights_m
    gps = cfg.groups_per_segment

    mids, centres, spacings, lengths, counts = [], [], [], [], []
    for i in range(profile.n_points - 1):
        p0 = np.array([xs[i], ys[i]])
        v = np.array([xs[i + 1] - xs[i], ys[i + 1] - ys[i]])
        seg_len = float(np.hypot(v[0], v[1]))
        for c in range(gps):
            glen = seg_len / gps
            # small slack keeps exact multiples from rounding up a pulse
            nsub = max(1, int(np.ceil(glen * spl / lam - 1e-9)))
            t = (c + (np.arange(nsub) + 0.5) / nsub) / gps
            mids.append(p0 + t[:, None] * v)
            centres.append(p0 + (c + 0.5) / gps * v)
            spacings.append(glen / nsub)
            lengths.append(glen)
            counts.append(nsub)

    counts = np.asarray(counts, dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    midpoints = np.concatenate(mids)
    gidx = np.repeat(np.arange(len(counts)), counts)
    total_len = float(np.sum(np.asarray(lengths)))
    return BasisSet(
        midpoints=midpoints,
        seg_len_m=total_len / midpoints.shape[0],
        group_index=gidx,
        group_centres=np.asarray(centres),
        group_offsets=offsets,
        group_spacing=np.asarray(spacings),
        group_length=np.asarray(lengths),
    )


def _kernel(arg: np.ndarray) -> np.ndarray:
    """H0^(2) evaluated from its Bessel components (fast path, arg > 0)."""
    return special.j0(arg) - 1j * special.y0(arg)


def _source_coefs(basis: BasisSet, k0: float, eta0: float) -> np.ndarray:
    """Per-basis midpoint-rule weight (k0*eta0/4)*delta_n."""
    return (k0 * eta0 / 4.0) * basis.delta


def _self_terms(basis: BasisSet, k0: float, eta0: float) -> np.ndarray:
    """Diagonal matrix entries for every basis function."""
    delta = basis.delta
    gamma = np.exp(EULER_GAMMA)
    with np.errstate(invalid="ignore", divide="ignore"):
        return (k0 * eta0 / 4.0) * delta * (
            1.0 - 1j * (2.0 / np.pi) * np.log(gamma * k0 * delta / (4.0 * np.e)))


def z_element(m: int, n: int, basis: BasisSet, k0: float, eta0: float = ETA0) -> complex:
    """Off-diagonal impedance element: midpoint-rule quadrature of the
    Hankel kernel over basis n observed at match point m."""
    if m == n:
        raise ValueError("use z_self for the diagonal")
    rm = basis.midpoints[m]
    rn = basis.midpoints[n]
    dist = float(np.hypot(rm[0] - rn[0], rm[1] - rn[1]))
    delta = float(basis.group_spacing[basis.group_index[n]])
    return (k0 * eta0 / 4.0) * delta * hankel2_0(k0 * dist)


def z_self(m: int, basis: BasisSet, k0: float, eta0: float = ETA0) -> complex:
    """Diagonal impedance element from the small-argument expansion of the
    Hankel kernel integrated across the pulse."""
    delta = float(basis.group_spacing[basis.group_index[m]])
    gamma = np.exp(EULER_GAMMA)
    return (k0 * eta0 / 4.0) * delta * (
        1.0 - 1j * (2.0 / np.pi) * np.log(gamma * k0 * delta / (4.0 * np.e)))


def _forward_rows(xs, ys, coefs, zdiag, w, out, k0):
    """Sequential back substitution over a run of basis functions.

    `w` must already contain the right-hand side minus any contribution of
    basis functions outside the run.  Solved coefficients land in `out`;
    returns the coefficient-weighted currents for reuse by callers.
    """
    q = np.empty(w.size, dtype=np.complex128)
    for i in range(w.size):
        acc = w[i]
        if i:
            d = np.hypot(xs[:i] - xs[i], ys[:i] - ys[i])
            acc = acc - np.dot(_kernel(k0 * d), q[:i])
        out[i] = acc / zdiag[i]
        q[i] = coefs[i] * out[i]
    return q


def _check_diagonal(zdiag: np.ndarray) -> None:
    mag = np.abs(zdiag)
    if np.any(~np.isfinite(mag) | (mag < 1e-300)):
        raise ValueError("singular diagonal: a quadrature segment has vanishing length")


def solve_exact(basis: BasisSet, rhs, k0: float, eta0: float = ETA0) -> SurfaceCurrent:
    """Plain O(N^2) back substitution of the lower-triangular system."""
    rhs = np.asarray(rhs, dtype=np.complex128)
    n = basis.n_unknowns
    if rhs.size != n:
        raise ValueError(f"rhs length {rhs.size} != {n} unknowns")
    coefs = _source_coefs(basis, k0, eta0)
    zdiag = _self_terms(basis, k0, eta0)
    _check_diagonal(zdiag)
    x = basis.midpoints[:, 0]
    y = basis.midpoints[:, 1]
    j = np.zeros(n, dtype=np.complex128)
    q = np.zeros(n, dtype=np.complex128)
    block = 256
    for b0 in range(0, n, block):
        b1 = min(b0 + block, n)
        w = rhs[b0:b1].copy()
        for c0 in range(0, b0, _COLUMN_CHUNK):
            c1 = min(c0 + _COLUMN_CHUNK, b0)
            d = np.hypot(x[b0:b1, None] - x[None, c0:c1],
                         y[b0:b1, None] - y[None, c0:c1])
            w -= _kernel(k0 * d) @ q[c0:c1]
        q[b0:b1] = _forward_rows(x[b0:b1], y[b0:b1], coefs[b0:b1],
                                 zdiag[b0:b1], w, j[b0:b1], k0)
    return SurfaceCurrent(j)


def _tri_toeplitz_solve(xs, ys, coefs, zdiag, w, out, k0, kern_lags, base):
    """Back substitution within one group, exploiting uniform spacing.

    Divide and conquer on the (lower-triangular Toeplitz) intra-group
    system: solve the leading half, push its influence onto the trailing
    half with one zero-padded FFT linear convolution of the lag kernel
    (sliced to the strictly-causal terms), and recurse.  Runs direct below
    `base` unknowns.
    """
    g = w.size
    if g <= base:
        _forward_rows(xs, ys, coefs, zdiag, w, out, k0)
        return
    h = g // 2
    _tri_toeplitz_solve(xs[:h], ys[:h], coefs[:h], zdiag[:h], w[:h], out[:h],
                        k0, kern_lags, base)
    q = coefs[:h] * out[:h]
    conv = signal.fftconvolve(q, kern_lags[:g - 1])
    w[h:] -= conv[h - 1:g - 1]
    _tri_toeplitz_solve(xs[h:], ys[h:], coefs[h:], zdiag[h:], w[h:], out[h:],
                        k0, kern_lags, base)


def solve_faffa(basis: BasisSet, rhs, k0: float, eta0: float = ETA0, *,
                near_group_factor: float = 2.0,
                direct_block: int = 64) -> SurfaceCurrent:
    """Back substitution accelerated with the fast far-field approximation.

    Groups are processed in range order.  For each group, the field
    scattered from every earlier far group is computed once at the group
    centre and fanned out to the group's match points by the plane-wave
    phase factor exp(j*k0*r_ml . rhat); group pairs closer than
    ``near_group_factor`` group lengths are evaluated element-exactly, and
    the intra-group interactions are solved with FFT convolution.
    """
    rhs = np.asarray(rhs, dtype=np.complex128)
    n = basis.n_unknowns
    if rhs.size != n:
        raise ValueError(f"rhs length {rhs.size} != {n} unknowns")
    if basis.n_groups < 1:
        raise ValueError("basis has no groups")
    coefs = _source_coefs(basis, k0, eta0)
    zdiag = _self_terms(basis, k0, eta0)
    _check_diagonal(zdiag)
    x = basis.midpoints[:, 0]
    y = basis.midpoints[:, 1]
    offs = basis.group_offsets
    cen = basis.group_centres
    glen = basis.group_length
    spacing = basis.group_spacing
    sizes = np.diff(offs)
    m_groups = basis.n_groups

    j = np.zeros(n, dtype=np.complex128)
    q = np.zeros(n, dtype=np.complex128)
    for l in range(m_groups):
        s, e = int(offs[l]), int(offs[l + 1])
        g = e - s
        w = rhs[s:e].copy()
        if l:
            seps = np.hypot(cen[:l, 0] - cen[l, 0], cen[:l, 1] - cen[l, 1])
            near = seps < near_group_factor * np.maximum(glen[:l], glen[l])
            far_ids = np.nonzero(~near)[0]
            near_ids = np.nonzero(near)[0]
            if far_ids.size:
                sel = ~near[basis.group_index[:s]]
                pts_x = x[:s][sel]
                pts_y = y[:s][sel]
                dist = np.hypot(pts_x - cen[l, 0], pts_y - cen[l, 1])
                aggr = _kernel(k0 * dist) * q[:s][sel]
                starts = np.concatenate([[0], np.cumsum(sizes[far_ids])[:-1]])
                s_far = np.add.reduceat(aggr, starts)
                unit = (cen[far_ids] - cen[l]) / seps[far_ids, None]
                r_ml = basis.midpoints[s:e] - cen[l]
                w -= np.exp(1j * k0 * (r_ml @ unit.T)) @ s_far
            if near_ids.size:
                nsel = np.concatenate([np.arange(offs[i], offs[i + 1]) for i in near_ids])
                d = np.hypot(x[s:e, None] - x[None, nsel],
                             y[s:e, None] - y[None, nsel])
                w -= _kernel(k0 * d) @ q[nsel]
        kern_lags = _kernel(k0 * spacing[l] * np.arange(1, g)) if g > 1 \
            else np.empty(0, dtype=np.complex128)
        _tri_toeplitz_solve(x[s:e], y[s:e], coefs[s:e], zdiag[s:e], w, j[s:e],
                            k0, kern_lags, direct_block)
        q[s:e] = coefs[s:e] * j[s:e]
    return SurfaceCurrent(j)


def scattered_field(current: SurfaceCurrent, basis: BasisSet, obs, k0: float,
                    eta0: float = ETA0) -> np.ndarray:
    """Scattered field radiated by the surface current at observation points
    above the terrain.  Rejects points within half a pulse width of any
    match point, where the midpoint-rule kernel is near singular."""
    obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
    q = _source_coefs(basis, k0, eta0) * current.coeffs
    half_delta = 0.5 * basis.delta
    x = basis.midpoints[:, 0]
    y = basis.midpoints[:, 1]
    out = np.zeros(obs.shape[0], dtype=np.complex128)
    for c0 in range(0, basis.n_unknowns, _COLUMN_CHUNK):
        c1 = min(c0 + _COLUMN_CHUNK, basis.n_unknowns)
        d = np.hypot(obs[:, 0, None] - x[None, c0:c1],
                     obs[:, 1, None] - y[None, c0:c1])
        if np.any(d < half_delta[None, c0:c1]):
            raise ValueError("observation point within half a pulse width of the "
                             "surface: field evaluation is near singular there")
        out -= _kernel(k0 * d) @ q[c0:c1]
    return out


def free_space_db(distance_m, k0: float):
    """Free-space path gain on the package dB reference: the line-source
    field scaled by 1/sqrt(R) and normalized to its own value at 1 m."""
    r = np.asarray(distance_m, dtype=np.float64)
    if np.any(r <= 0):
        raise ValueError("distance must be positive")
    ref = np.abs(hankel2_0(k0 * 1.0))
    out = 20.0 * np.log10(np.abs(hankel2_0(k0 * r)) / np.sqrt(r) / ref)
    return float(out) if out.ndim == 0 else out


def path_gain(total_fields, rx_positions, tx_position, k0: float,
              eta0: float = ETA0) -> PathLossProfile:
    """Convert total fields at the receivers to dB path gain.

    The 2D field is scaled by 1/sqrt(R) (R = distance from the transmitter)
    so power decays as 1/R^2 in free space, and referenced to the incident
    field at 1 m, which puts free space at 0 dB there.  Vanishing fields
    clamp at DB_FLOOR; receivers exactly at the transmitter (R = 0) are
    excluded as NaN.
    """
    fields = np.asarray(total_fields, dtype=np.complex128)
    rx = np.atleast_2d(np.asarray(rx_positions, dtype=np.float64))
    tx = np.asarray(tx_position, dtype=np.float64)
    r = np.hypot(rx[:, 0] - tx[0], rx[:, 1] - tx[1])
    ref = (k0 * eta0 / 4.0) * np.abs(hankel2_0(k0 * 1.0))
    vals = np.full(r.size, np.nan)
    ok = r > 0
    with np.errstate(divide="ignore"):
        vals[ok] = 20.0 * np.log10(np.abs(fields[ok]) / np.sqrt(r[ok]) / ref)
    vals[ok] = np.maximum(vals[ok], DB_FLOOR)
    return PathLossProfile(values_db=vals, rx_positions=rx)


def transmitter_position(profile: TerrainProfile, radio: RadioConfig) -> np.ndarray:
    """Transmitter sits above the leftmost terrain point."""
    return np.array([0.0, profile.heights_m[0] + radio.tx_height_m])


def receiver_positions(profile: TerrainProfile, radio: RadioConfig) -> np.ndarray:
    """One receiver above each terrain sample at the configured height."""
    return np.column_stack([profile.ranges_m,
                            profile.heights_m + radio.rx_height_m])


def solve_profile(profile: TerrainProfile, cfg: SolverConfig) -> PathLossProfile:
    """End-to-end solve: discretize, back substitute (exact or FAFFA),
    radiate to the receivers and convert to dB path gain."""
    radio = cfg.radio
    if profile.n_points != radio.n_points:
        raise ValueError(f"profile has {profile.n_points} points, "
                         f"radio config expects {radio.n_points}")
    if profile.spacing_m != radio.rx_spacing_m:
        raise ValueError("profile spacing does not match receiver spacing")
    k0 = wavenumber(radio.frequency_hz)
    basis = discretize(profile, cfg)
    tx = transmitter_position(profile, radio)
    rhs = incident_field(tx, basis.midpoints, k0)
    if cfg.method == "exact":
        current = solve_exact(basis, rhs, k0)
    else:
        current = solve_faffa(basis, rhs, k0,
                              near_group_factor=cfg.near_group_factor,
                              direct_block=cfg.direct_block)
    rx = receiver_positions(profile, radio)
    total = incident_field(tx, rx, k0) + scattered_field(current, basis, rx, k0)
    return path_gain(total, rx, tx, k0)


def collocation_residual(basis: BasisSet, current: SurfaceCurrent, rhs,
                         k0: float, eta0: float = ETA0) -> np.ndarray:
    """Residual of the lower-triangular system at the match points,
    i.e. incident plus (forward) scattered field on the surface."""
    rhs = np.asarray(rhs, dtype=np.complex128)
    n = basis.n_unknowns
    q = _source_coefs(basis, k0, eta0) * current.coeffs
    zdiag = _self_terms(basis, k0, eta0)
    x = basis.midpoints[:, 0]
    y = basis.midpoints[:, 1]
    res = rhs - zdiag * current.coeffs
    block = 512
    for b0 in range(0, n, block):
        b1 = min(b0 + block, n)
        d = np.hypot(x[b0:b1, None] - x[None, :b1],
                     y[b0:b1, None] - y[None, :b1])
        kern = _kernel(k0 * np.where(d > 0, d, 1.0))
        mask = np.tri(b1 - b0, b1, k=b0 - 1, dtype=bool)
        res[b0:b1] -= np.where(mask, kern, 0.0) @ q[:b1]
    return res
