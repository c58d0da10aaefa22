"""Binary PPM read/write for image dumps and rendered comparisons."""

import numpy as np


def write_ppm(path, image):
    """Write an (H, W, 3) float image in [0, 1] as binary PPM."""
    data = np.clip(np.asarray(image), 0.0, 1.0)
    pixels = (np.round(data * 255.0)).astype(np.uint8)
    h, w = pixels.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(pixels.tobytes())


def read_ppm(path):
    """Read a binary PPM back to (H, W, 3) float in [0, 1]."""
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"P6":
            raise ValueError(f"not a binary PPM: {magic!r}")
        line = fh.readline()
        while line.startswith(b"#"):
            line = fh.readline()
        w, h = (int(v) for v in line.split())
        maxval = int(fh.readline())
        raw = np.frombuffer(fh.read(w * h * 3), dtype=np.uint8)
    return raw.reshape(h, w, 3).astype(np.float64) / maxval
