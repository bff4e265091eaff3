"""Regenerates the JPEG fixtures and their reference pixel dumps.

Reference dumps come from Pillow's libjpeg-turbo decoder with its default
settings (islow IDCT, fancy upsampling):
  *.rgb  raw interleaved RGB output
  *.ycc  raw interleaved decoded YCbCr samples at full resolution (no colour
         conversion), i.e. the output of dequantize -> IDCT -> +128 -> clamp
         -> chroma upsampling
Source photographs are the ones bundled with scikit-image.
"""
import numpy as np
import skimage.data as d
from PIL import Image


def save(name, arr, **kw):
    Image.fromarray(arr).save(name + ".jpg", format="JPEG", **kw)
    dec = np.asarray(Image.open(name + ".jpg").convert("RGB"))
    open(name + ".rgb", "wb").write(dec.tobytes())
    im = Image.open(name + ".jpg")
    if im.mode == "RGB":
        im.draft("YCbCr", im.size)
        open(name + ".ycc", "wb").write(np.asarray(im).tobytes())


def rs(a, w, h):
    return np.asarray(Image.fromarray(a).resize((w, h), Image.LANCZOS))


save("astronaut_444_q90", rs(d.astronaut()[40:300, 120:450], 67, 53), quality=90, subsampling=0)
save("coffee_444_q50", rs(d.coffee(), 96, 72), quality=50, subsampling=0)
save("chelsea_420_q75", rs(d.chelsea(), 80, 61), quality=75, subsampling=2)
save("rocket_420_q85", rs(d.rocket(), 59, 45), quality=85, subsampling=2)
save("chelsea_444_rst", rs(d.chelsea(), 72, 40), quality=80, subsampling=0, restart_marker_blocks=5)

g = rs(np.stack([d.camera()] * 3, -1), 40, 33)[:, :, 0]
Image.fromarray(g).save("camera_gray_q80.jpg", quality=80)
dec = np.asarray(Image.open("camera_gray_q80.jpg").convert("RGB"))
open("camera_gray_q80.rgb", "wb").write(dec.tobytes())

Image.fromarray(rs(d.coffee(), 48, 32)).save("coffee_progressive.jpg", quality=80, progressive=True)
Image.fromarray(np.full((16, 16, 3), (90, 160, 40), np.uint8)).save("flat_16x16.jpg", quality=75, subsampling=0)
