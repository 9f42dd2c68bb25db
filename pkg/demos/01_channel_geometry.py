"""Near-field wideband channel anatomy.

Walks through the pieces of the channel simulator: per-path geometry,
the quadratic (spherical-wavefront) phase across the array, the
frequency-dependent phase ramp across subcarriers, and how multipath
energy clusters once the channel is moved to the angular-delay basis.

Run:  python demos/01_channel_geometry.py
"""

import numpy as np

from xlce.channel import (
    PathParams,
    SystemConfig,
    assemble_channel,
    draw_paths,
    steering_space,
    subarray_slice,
)
from xlce.numerics import unitary_dft

cfg = SystemConfig(n_t=64, m_sub=4, k_sc=8, f_c=30e9, f_s=1.6e9, n_rf=1, p_slots=8)
print(f"array: {cfg.n_t} antennas in {cfg.m_sub} subarrays of {cfg.n_sub}, "
      f"{cfg.k_sc} pilot subcarriers at {cfg.f_c/1e9:.0f} GHz")

# --- one path, close to the array: the wavefront curvature is visible as
# a quadratic phase term that far-field models would miss
near = PathParams.from_geometry(alpha=1.0, theta=0.9, r=10.0, cfg=cfg)
far = PathParams.from_geometry(alpha=1.0, theta=0.9, r=1e6, cfg=cfg)
print(f"\npath at r=10 m:   psi={near.psi:+.4f}  phi={near.phi:.3e} (curvature)")
print(f"path at r=1e6 m:  psi={far.psi:+.4f}  phi={far.phi:.3e} (vanishes far away)")

b_near = steering_space(near.psi, near.phi, cfg)
b_far = steering_space(near.psi, 0.0, cfg)
drift = np.angle(b_near * b_far.conj())
print(f"curvature-induced phase drift across the array: "
      f"{np.degrees(drift[-1]):+.1f} deg at the last antenna")

# --- a full channel draw and its energy in the angular-delay basis
chan = assemble_channel(draw_paths(cfg, g_paths=4, seed=7), cfg)
f_a, f_d = unitary_dft(cfg.n_t), unitary_dft(cfg.k_sc)
coeffs = f_a @ chan.h @ f_d.conj().T
energy = np.sort(np.abs(coeffs.ravel()) ** 2)[::-1]
frac = np.cumsum(energy) / energy.sum()
for pct in (1, 5, 10, 25):
    k = max(1, int(pct / 100 * energy.size))
    print(f"top {pct:2d}% of angular-delay coefficients hold {frac[k-1]*100:5.1f}% of the energy")

# --- subarrays are row blocks; their slices tile the full channel
tiles = [subarray_slice(chan, m, cfg) for m in range(1, cfg.m_sub + 1)]
assert np.array_equal(np.vstack(tiles), chan.h)
print(f"\nsubarray slices tile the full {chan.h.shape} channel exactly")
