#!/usr/bin/env python3
"""Regenerate the bundled drum samples and the face test frame.

  python3 tools/make_assets.py

Samples: data/samples/{brow,eye,cheek,mouth}.wav, 44.1 kHz 16-bit mono.
Face frame: 320x240 PGM cut from scikit-image's astronaut picture, plus the
OpenCV reference detection of the same cascade in tests/data/face_roi.txt
(needs an OpenCV 4.x cv2 module; 5.x dropped CascadeClassifier).
"""
import os
import wave

import numpy as np

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
RATE = 44100


def write_wav(path, x):
    x = np.clip(x, -1.0, 1.0)
    pcm = np.round(x * 32767).astype("<i2")
    with wave.open(path, "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(RATE)
        w.writeframes(pcm.tobytes())


def samples():
    rng = np.random.default_rng(7)
    t = np.arange(int(0.4 * RATE)) / RATE
    # brow: high click, eye: hat-like noise, cheek: tom, mouth: kick
    brow = np.sin(2 * np.pi * 1800 * t) * np.exp(-t * 60)
    eye = rng.uniform(-1, 1, t.size) * np.exp(-t * 35)
    eye = np.convolve(eye, [1, -1], mode="same") * 0.5
    tom_f = 180 * np.exp(-t * 4) + 90
    cheek = np.sin(2 * np.pi * np.cumsum(tom_f) / RATE) * np.exp(-t * 12)
    kick_f = 120 * np.exp(-t * 25) + 45
    mouth = np.sin(2 * np.pi * np.cumsum(kick_f) / RATE) * np.exp(-t * 9)
    out = os.path.join(ROOT, "data", "samples")
    for name, x in (("brow", brow), ("eye", eye), ("cheek", cheek), ("mouth", mouth)):
        write_wav(os.path.join(out, name + ".wav"), 0.9 * x / np.max(np.abs(x)))


def to_gray(rgb):
    r, g, b = (rgb[..., i].astype(np.int64) for i in range(3))
    return ((299 * r + 587 * g + 114 * b + 500) // 1000).astype(np.uint8)


def write_pgm(path, g):
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (g.shape[1], g.shape[0]))
        f.write(g.tobytes())


def face_frame():
    import cv2
    from skimage import data

    rgb = data.astronaut()[0:270, 60:420]
    rgb = cv2.resize(rgb, (320, 240), interpolation=cv2.INTER_AREA)
    g = to_gray(rgb)
    write_pgm(os.path.join(ROOT, "tests", "data", "face.pgm"), g)
    write_pgm(os.path.join(ROOT, "data", "bench", "face.pgm"), g)
    xml = os.path.join(ROOT, "data", "cascades", "haarcascade_frontalface_default.xml")
    faces = cv2.CascadeClassifier(xml).detectMultiScale(g, 1.1, 5, minSize=(60, 60))
    if len(faces) != 1:
        raise SystemExit("expected one reference face, got %r" % (faces,))
    x, y, w, h = faces[0]
    with open(os.path.join(ROOT, "tests", "data", "face_roi.txt"), "w") as f:
        f.write("%d %d %d %d\n" % (x, y, w, h))
    print("face", x, y, w, h)


if __name__ == "__main__":
    samples()
    face_frame()
