"""The DCT baseline codec on a few synthetic textures: rate vs distortion."""

from scait.baseline_codec import bits_per_pixel, decode_image, encode_image, psnr
from scait.dataset import CLASS_NAMES, build_dataset

split = build_dataset(per_class=20)
picks = [split.test_x[split.test_y == c][0] for c in range(len(CLASS_NAMES))]

print(f"{'class':16s}" + "".join(f"   q={q:<3d}" for q in (10, 50, 75, 100)))
for name, img in zip(CLASS_NAMES, picks):
    cells = []
    for q in (10, 50, 75, 100):
        stream = encode_image(img, q)
        cells.append(f"{bits_per_pixel(stream):4.2f}/{psnr(img, decode_image(stream)):4.1f}")
    print(f"{name:16s} " + " ".join(cells))
print("(bpp / PSNR dB)")
