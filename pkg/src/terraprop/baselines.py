"""Reference propagation models.

* Deygout multiple knife-edge diffraction with the ITU-R P.526 single-edge
  approximation J(v) - the classical comparison baseline.
* A two-ray image-theory oracle for a flat perfectly reflecting plane,
  used to validate the integral-equation solver.

Both report dB on the same reference as ``mom.path_gain`` (free space at
1 m is 0 dB); the knife-edge result is expressed as a positive total path
loss.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .emcore import RadioConfig, hankel2_0, wavenumber
from .mom import DB_FLOOR, free_space_db
from .terrain import TerrainProfile

V_THRESHOLD = -0.78  # below this diffraction parameter an edge contributes nothing


@dataclass(frozen=True)
class KnifeEdgeResult:
    loss_db: float                       # total path loss, positive
    dominant_edge_index: Optional[int]   # terrain sample index of the main edge
    sub_losses_db: Tuple[float, float]   # diffraction loss of the two sub-paths


def fresnel_v(tx, rx, edge, wavelength_m: float) -> float:
    """Dimensionless knife-edge diffraction parameter.

    v = h * sqrt(2*(d1+d2)/(lambda*d1*d2)) with h the signed clearance of
    the edge above the straight tx-rx line and d1, d2 the horizontal
    distances to it.  The edge must lie strictly between tx and rx.
    """
    tx = np.asarray(tx, dtype=np.float64)
    rx = np.asarray(rx, dtype=np.float64)
    edge = np.asarray(edge, dtype=np.float64)
    d1 = edge[0] - tx[0]
    d2 = rx[0] - edge[0]
    if d1 <= 0 or d2 <= 0:
        raise ValueError("edge must lie strictly between tx and rx in range")
    line_y = tx[1] + (rx[1] - tx[1]) * d1 / (d1 + d2)
    h = edge[1] - line_y
    return float(h * np.sqrt(2.0 * (d1 + d2) / (wavelength_m * d1 * d2)))


def knife_edge_loss(v: float) -> float:
    """Single knife-edge diffraction loss in dB (ITU-R P.526 approximation)."""
    if not np.isfinite(v):
        raise ValueError("diffraction parameter must be finite")
    if v <= V_THRESHOLD:
        return 0.0
    return float(6.9 + 20.0 * np.log10(np.sqrt((v - 0.1) ** 2 + 1.0) + v - 0.1))


def _deygout_recurse(points: np.ndarray, lo: int, hi: int,
                     wavelength_m: float, depth: int) -> Tuple[float, Optional[int]]:
    """Diffraction loss between points[lo] and points[hi] over the candidate
    edges strictly between them.  `depth` counts remaining edge levels."""
    if depth == 0 or hi - lo < 2:
        return 0.0, None
    a, b = points[lo], points[hi]
    best_v = -np.inf
    best_i = None
    for i in range(lo + 1, hi):
        v = fresnel_v(a, b, points[i], wavelength_m)
        if v > best_v:
            best_v = v
            best_i = i
    if best_i is None or best_v <= V_THRESHOLD:
        return 0.0, None
    loss = knife_edge_loss(best_v)
    left, _ = _deygout_recurse(points, lo, best_i, wavelength_m, depth - 1)
    right, _ = _deygout_recurse(points, best_i, hi, wavelength_m, depth - 1)
    return loss + left + right, best_i


def deygout_loss(profile: TerrainProfile, radio: RadioConfig,
                 rx_index: int) -> KnifeEdgeResult:
    """Deygout construction over the terrain samples between the transmitter
    and receiver `rx_index`: the dominant edge (largest diffraction
    parameter) plus one recursion level on each sub-path, at most 3 edges.
    Total loss is free-space loss plus the accumulated edge losses.
    """
    if rx_index < 1 or rx_index >= profile.n_points:
        raise ValueError("rx_index must address a receiver right of the transmitter")
    lam = 2.0 * np.pi / wavenumber(radio.frequency_hz)
    xs = profile.ranges_m
    hs = profile.heights_m
    points = np.empty((rx_index + 1, 2))
    points[:, 0] = xs[:rx_index + 1]
    points[:, 1] = hs[:rx_index + 1]
    points[0, 1] = hs[0] + radio.tx_height_m
    points[rx_index, 1] = hs[rx_index] + radio.rx_height_m

    k0 = wavenumber(radio.frequency_hz)
    r_direct = float(np.hypot(points[rx_index, 0] - points[0, 0],
                              points[rx_index, 1] - points[0, 1]))
    fs_loss = -free_space_db(r_direct, k0)

    main_loss = 0.0
    main_idx = None
    sub = (0.0, 0.0)
    if rx_index >= 2:
        best_v = -np.inf
        for i in range(1, rx_index):
            v = fresnel_v(points[0], points[rx_index], points[i], lam)
            if v > best_v:
                best_v = v
                main_idx = i
        if best_v > V_THRESHOLD:
            main_loss = knife_edge_loss(best_v)
            left, _ = _deygout_recurse(points, 0, main_idx, lam, 1)
            right, _ = _deygout_recurse(points, main_idx, rx_index, lam, 1)
            sub = (left, right)
        else:
            main_idx = None
    total = fs_loss + main_loss + sub[0] + sub[1]
    return KnifeEdgeResult(loss_db=float(total), dominant_edge_index=main_idx,
                           sub_losses_db=sub)


def two_ray_reference(distance_m: float, h_tx_m: float, h_rx_m: float,
                      k0: float) -> float:
    """Image-theory path gain over a flat perfectly reflecting plane.

    Direct and ground-reflected line-source fields interfere with a -1
    reflection coefficient; the result is converted to dB with the same
    1/sqrt(R) scaling and 1 m free-space reference as the solver.
    """
    if distance_m <= 0 or h_tx_m < 0 or h_rx_m < 0:
        raise ValueError("distance must be positive and heights non-negative")
    r_direct = np.hypot(distance_m, h_tx_m - h_rx_m)
    r_reflect = np.hypot(distance_m, h_tx_m + h_rx_m)
    mag = np.abs(hankel2_0(k0 * r_direct) - hankel2_0(k0 * r_reflect))
    ref = np.abs(hankel2_0(k0 * 1.0))
    if mag == 0.0:
        return DB_FLOOR
    return float(max(20.0 * np.log10(mag / np.sqrt(r_direct) / ref), DB_FLOOR))
