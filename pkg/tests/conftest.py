"""Shared fixture builders for the test suite."""

import numpy as np

import tensorfill as tf


def rank1_spread_fixture(seed, dims=(8, 8, 4), n_lost=3):
    """Rank-1 positive tensor plus a mask losing n_lost rows, spread so no
    spatial row or channel loses more than once (the recoverable regime)."""
    h, w, c = dims
    rng = np.random.default_rng(seed)
    u = rng.uniform(0.5, 1.5, h)
    v = rng.uniform(0.5, 1.5, w)
    wf = rng.uniform(0.5, 1.5, c)
    clean = tf.FeatureTensor(np.einsum("i,j,k->ijk", u, v, wf).astype(np.float32))
    rows = rng.choice(h, size=n_lost, replace=False)
    chans = rng.choice(c, size=n_lost, replace=False)
    mask = np.ones(dims, dtype=bool)
    for r, ch in zip(rows, chans):
        mask[r, :, ch] = False
    m = tf.ObservationMask(mask)
    return clean, tf.masked_fill(clean, m, 0.0), m


def random_loss_fixture(seed, dims=(8, 8, 4), p_loss=0.2, stream=31337):
    """Random dense tensor with a channel-sim drawn row-loss mask."""
    rng = np.random.default_rng(seed)
    clean = tf.FeatureTensor(rng.standard_normal(dims).astype(np.float32))
    scheme = tf.PacketizationScheme()
    pattern = tf.draw_loss(tf.packet_count(clean.dims, scheme),
                           tf.ChannelConfig(p_loss, tf.derive_seed(stream, seed)))
    damaged, mask = tf.apply_loss(clean, pattern, scheme)
    return clean, damaged, mask


def missing_rel_mse(result_tensor, clean, mask):
    """Relative MSE over missing entries: error energy / ground-truth energy."""
    miss = ~mask.data
    if not miss.any():
        return 0.0
    diff = result_tensor.data[miss].astype(np.float64) - clean.data[miss].astype(np.float64)
    denom = np.mean(clean.data[miss].astype(np.float64) ** 2)
    return float(np.mean(diff * diff) / denom) if denom > 0 else float(np.mean(diff * diff))


def correlated_training_set(seed, n_tensors=6, dims=(8, 8, 4)):
    """Training tensors where every channel is a copy of channel 0."""
    h, w, c = dims
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_tensors):
        base = rng.standard_normal((h, w, 1)).astype(np.float32)
        out.append(tf.FeatureTensor(np.repeat(base, c, axis=2)))
    return out
