"""Parameter count of the mini residual network by hand arithmetic.

Deliberately independent of the package: it walks the architecture on paper
(stem conv + bn, two 3x3 convs + two bns per block, 1x1 projection when the
width or stride changes, linear head) and prints the total.

    python3 tools/count_params.py --widths 16,32,64 --blocks 2
"""
import argparse


def count(widths, blocks, in_ch=1, classes=5):
    total = in_ch * widths[0] * 9 + 2 * widths[0]
    prev = widths[0]
    for si, w in enumerate(widths):
        for bi in range(blocks):
            stride = 2 if si > 0 and bi == 0 else 1
            total += prev * w * 9 + 2 * w      # conv1, bn1
            total += w * w * 9 + 2 * w         # conv2, bn2
            if prev != w or stride != 1:
                total += prev * w              # projection
            prev = w
    return total + prev * classes + classes


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--widths", default="16,32,64")
    ap.add_argument("--blocks", type=int, default=2)
    a = ap.parse_args()
    print(count([int(w) for w in a.widths.split(",")], a.blocks))
