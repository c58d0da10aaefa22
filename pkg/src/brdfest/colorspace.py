"""Color conversions shared across the toolkit.

Linear RGB uses sRGB/Rec.709 primaries with a D65 white point. The gamma
pair is the pure power law with exponent 2.4 (not the piecewise sRGB
curve), which is what the 8-bit input convention of the rest of the
pipeline assumes.
"""

import numpy as np

GAMMA = 2.4

def _srgb_matrix():
    """Derive linear RGB -> XYZ from the sRGB chromaticities and the D65
    white at full float precision, so that (1,1,1) maps to Y=1 exactly."""
    xy = np.array([[0.64, 0.33], [0.30, 0.60], [0.15, 0.06]])
    white_xy = np.array([0.3127, 0.3290])
    prim = np.stack(
        [xy[:, 0] / xy[:, 1], np.ones(3), (1.0 - xy[:, 0] - xy[:, 1]) / xy[:, 1]], axis=0
    )
    white = np.array(
        [white_xy[0] / white_xy[1], 1.0, (1.0 - white_xy[0] - white_xy[1]) / white_xy[1]]
    )
    scale = np.linalg.solve(prim, white)
    return prim * scale


# Rec.709 / sRGB primaries, linear RGB -> XYZ (D65).
RGB_TO_XYZ = _srgb_matrix()
XYZ_TO_RGB = np.linalg.inv(RGB_TO_XYZ)

# White point of (1,1,1) linear RGB under the matrix above; using the row
# sums (rather than tabulated D65 values) makes white map to L=100, a=b=0
# exactly and keeps the roundtrip closed.
WHITE_XYZ = RGB_TO_XYZ.sum(axis=1)

# Rec.709 luminance weights (the Y row of the matrix).
LUMINANCE_WEIGHTS = RGB_TO_XYZ[1].copy()

_LAB_DELTA = 6.0 / 29.0


def srgb_encode(linear):
    """Power-law encode: clamp(x, 0, 1) ** (1/2.4)."""
    x = np.clip(np.asarray(linear, dtype=np.float64), 0.0, 1.0)
    return x ** (1.0 / GAMMA)


def srgb_decode(encoded):
    """Inverse of :func:`srgb_encode` on [0, 1]: x ** 2.4."""
    x = np.asarray(encoded, dtype=np.float64)
    return x ** GAMMA


def quantize_8bit(values):
    """Round to the 255-level grid and renormalize back to [0, 1]."""
    x = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    return np.round(x * 255.0) / 255.0


def luminance(rgb):
    """Rec.709 luminance of linear RGB (scalar per color)."""
    return np.asarray(rgb, dtype=np.float64) @ LUMINANCE_WEIGHTS


def _lab_f(t):
    t = np.asarray(t, dtype=np.float64)
    cube = _LAB_DELTA**3
    return np.where(t > cube, np.cbrt(np.maximum(t, 0.0)), t / (3.0 * _LAB_DELTA**2) + 4.0 / 29.0)


def _lab_f_inv(ft):
    ft = np.asarray(ft, dtype=np.float64)
    return np.where(ft > _LAB_DELTA, ft**3, 3.0 * _LAB_DELTA**2 * (ft - 4.0 / 29.0))


def rgb_to_lab(rgb):
    """Linear RGB in [0,1]^3 -> CIE Lab (D65). Supports leading batch axes."""
    rgb = np.asarray(rgb, dtype=np.float64)
    xyz = rgb @ RGB_TO_XYZ.T
    f = _lab_f(xyz / WHITE_XYZ)
    fx, fy, fz = f[..., 0], f[..., 1], f[..., 2]
    lab = np.stack([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)], axis=-1)
    return lab


def lab_to_rgb(lab):
    """Inverse of :func:`rgb_to_lab`; exact on the RGB gamut."""
    lab = np.asarray(lab, dtype=np.float64)
    L, a, b = lab[..., 0], lab[..., 1], lab[..., 2]
    fy = (L + 16.0) / 116.0
    fx = fy + a / 500.0
    fz = fy - b / 200.0
    xyz = np.stack([_lab_f_inv(fx), _lab_f_inv(fy), _lab_f_inv(fz)], axis=-1) * WHITE_XYZ
    return xyz @ XYZ_TO_RGB.T
