"""Dataset ingestion: CIFAR-10 binary records and synthetic temporal tasks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CIFAR_RECORD_BYTES = 3073  # 1 label byte + 3*32*32 pixel bytes
_DICTIONARY_SEED = 0x5EED  # fixed so train/test splits share class patterns


class DataFormatError(Exception):
    pass


def load_cifar10_binary(path):
    """Parse one CIFAR-10 binary batch file.

    Records are 3073 bytes: label byte, then 1024 R + 1024 G + 1024 B bytes
    row-major. Returns (images [n,3,32,32] float64 in [0,1], labels [n]).
    """
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) % CIFAR_RECORD_BYTES:
        full = len(raw) // CIFAR_RECORD_BYTES
        raise DataFormatError(
            f"{path}: size {len(raw)} is not a multiple of {CIFAR_RECORD_BYTES} "
            f"(trailing fragment starts at offset {full * CIFAR_RECORD_BYTES}, "
            f"expected {(full + 1) * CIFAR_RECORD_BYTES} bytes)"
        )
    n = len(raw) // CIFAR_RECORD_BYTES
    buf = np.frombuffer(raw, dtype=np.uint8).reshape(n, CIFAR_RECORD_BYTES)
    labels = buf[:, 0].astype(np.int64)
    images = buf[:, 1:].reshape(n, 3, 32, 32).astype(np.float64) / 255.0
    return images, labels


def write_cifar10_binary(path, images, labels):
    """Inverse of :func:`load_cifar10_binary` (fixture/round-trip helper)."""
    images = np.asarray(images)
    labels = np.asarray(labels)
    n = len(labels)
    buf = np.empty((n, CIFAR_RECORD_BYTES), dtype=np.uint8)
    buf[:, 0] = labels
    buf[:, 1:] = np.round(images * 255.0).astype(np.uint8).reshape(n, -1)
    with open(path, "wb") as f:
        f.write(buf.tobytes())


@dataclass
class SyntheticDataset:
    inputs: np.ndarray  # [n, T, 1, S] values in {0,1}
    labels: np.ndarray  # [n] ints
    dictionary: np.ndarray  # [num_classes-2, S] fixed class patterns
    num_classes: int
    timesteps: int
    noise: float


def class_dictionary(num_classes, spatial):
    """Fixed spatial patterns for the dictionary classes (0..num_classes-3).

    Deterministic regardless of the dataset seed, so independently generated
    train and test splits agree on what each class looks like.
    """
    rng = np.random.default_rng(_DICTIONARY_SEED)
    pats = []
    while len(pats) < num_classes - 2:
        p = rng.integers(0, 2, spatial).astype(np.float64)
        if 0 < p.sum() < spatial and not any(np.array_equal(p, q) for q in pats):
            pats.append(p)
    return np.stack(pats)


def gen_synthetic_temporal(num_classes, T, noise, seed, num_samples=512,
                           spatial=16, density=0.25, pair_weight=0.15):
    """Temporal-dependency classification task, deterministic per seed.

    Classes 0..K-3 are marked by a fixed spatial pattern appearing at two or
    more timesteps: recognizable from single timesteps alone. The last two
    classes share identical per-timestep statistics (fresh random patterns
    every step) and differ only across timesteps: class K-2 cycles a
    per-sample motif of max(3, T//4) frames, so every frame recurs at
    temporal distance >= 3 (too far for a leaky membrane to bridge), while
    class K-1 keeps all T frames distinct. Spatial-only processing is
    information-starved on that pair by construction, so its accuracy
    ceiling is roughly 1 - pair_weight; telling the pair apart requires
    cross-timestep content comparison. Background frames are sparse
    (``density``) so that the spike overlap between two occurrences of the
    same frame stands far above the overlap of unrelated frames (ratio
    ~1/density). The temporal pair is sampled ``pair_weight`` each so the
    easy dictionary classes do not drown out its training signal. Bayes
    accuracy is ~1 minus the noise-induced confusion (bits flip
    independently with probability ``noise``).
    """
    if num_classes < 3:
        raise ValueError("need at least 3 classes (K-2 dictionary + temporal pair)")
    if T < 4:
        raise ValueError("need at least 4 timesteps")
    rng = np.random.default_rng(seed)
    dictionary = class_dictionary(num_classes, spatial)

    def background():
        # sparse random pattern, rejecting dictionary collisions so the
        # per-step marginals of the temporal pair carry no class information
        while True:
            p = (rng.random(spatial) < density).astype(np.float64)
            if p.sum() > 0 and not any(np.array_equal(p, q) for q in dictionary):
                return p

    period = max(3, T // 4)
    probs = np.full(num_classes, (1 - 2 * pair_weight) / (num_classes - 2))
    probs[-2:] = pair_weight
    inputs = np.zeros((num_samples, T, 1, spatial))
    labels = rng.choice(num_classes, num_samples, p=probs)
    for i, c in enumerate(labels):
        if c < num_classes - 2:
            frames = [background() for _ in range(T)]
            slots = np.flatnonzero(rng.random(T) < 0.5)
            if len(slots) < 2:
                slots = rng.choice(T, 2, replace=False)
            for t in slots:
                frames[t] = dictionary[c].copy()
        elif c == num_classes - 2:
            motif = [background() for _ in range(period)]
            frames = [motif[t % period].copy() for t in range(T)]
        else:
            # enforce all-distinct timesteps for exact separability
            frames = [background() for _ in range(T)]
            for t in range(T):
                while any(np.array_equal(frames[t], frames[u]) for u in range(t)):
                    frames[t] = background()
        inputs[i, :, 0, :] = np.stack(frames)
    if noise > 0:
        flips = rng.random(inputs.shape) < noise
        inputs = np.abs(inputs - flips.astype(np.float64))
    return SyntheticDataset(inputs, labels, dictionary, num_classes, T, noise)


def rule_classify(sample, dictionary, num_classes):
    """Hand-coded separability oracle; exact on noise-free samples.

    Dictionary pattern present at any timestep -> that class; otherwise a
    repeated timestep -> the repeating-motif class, else the all-distinct
    class.
    """
    frames = np.asarray(sample)[:, 0, :]
    for c, pat in enumerate(dictionary):
        if any(np.array_equal(f, pat) for f in frames):
            return c
    t = len(frames)
    for a in range(t):
        for b in range(a + 1, t):
            if np.array_equal(frames[a], frames[b]):
                return num_classes - 2
    return num_classes - 1
