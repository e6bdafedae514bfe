"""Brute-force element count of the graded tensor grid: walk outward from each
design edge layer by layer, growing the layer width geometrically, and count
cells of the resulting grid."""
import sys


def layers(cell, distance, ratio):
    if distance <= 0:
        return 0
    widths = [cell]
    while sum(widths) < distance:
        widths.append(widths[-1] * ratio)
    if len(widths) > 1 and sum(widths) - distance > 0.5 * widths[-1]:
        widths.pop()
    return len(widths)


def count(nx, ny, size, factor, ratio):
    d = (factor - 1) * 0.5 * size
    lx = layers(size / nx, d, ratio)
    ly = layers(size / ny, d, ratio)
    cells = 0
    for i in range(nx + 2 * lx):
        for j in range(ny + 2 * ly):
            cells += 1
    return cells, (nx + 2 * lx + 1) * (ny + 2 * ly + 1) * 2


if __name__ == "__main__":
    for args in [(2, 2, 1.0, 1.0, 1.0), (4, 4, 1.0, 5.0, 1.3), (8, 8, 1.0, 3.0, 1.3), (60, 60, 1.0, 5.0, 1.3)]:
        print(args, "-> elements, nodes =", count(*args))
