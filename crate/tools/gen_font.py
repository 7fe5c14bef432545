"""Rasterize DejaVu Sans Mono into an 8x16 bitmap glyph font file."""
from PIL import Image, ImageFont, ImageDraw

CW, CH = 8, 16
font = ImageFont.truetype("/usr/share/fonts/truetype/dejavu/DejaVuSansMono.ttf", 13)
lines = [f"font {CW} {CH}"]
for cp in range(0x20, 0x7F):
    ch = chr(cp)
    img = Image.new("L", (CW, CH), 0)
    d = ImageDraw.Draw(img)
    d.text((0, 1), ch, fill=255, font=font)
    lines.append(f"glyph U+{cp:04X}")
    px = img.load()
    for y in range(CH):
        lines.append("".join("#" if px[x, y] >= 128 else "." for x in range(CW)))
open("/root/crate/crates/glyphnet/src/raster/default8x16.font", "w").write("\n".join(lines) + "\n")
print("ok")
