"""Continuous input features derived from discrete concept annotations.

Concept samples are one-hot encoded and flattened, an autoencoder is trained
to reconstruct them, and the input features are a half-and-half mix of the
encoder output and standard normal noise, standardized with statistics from
the training split.  The noise forces downstream models to actually learn
concept recovery rather than reading concepts off the input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import AdamState, Mlp, Tensor, load_tensors, save_tensors


class EmptyDataset(Exception):
    """Fitting requires at least two samples."""


class NotFitted(Exception):
    """The feature spec has no standardization statistics yet."""


def one_hot_flatten(samples: np.ndarray, cardinalities) -> np.ndarray:
    """Concatenate per-column one-hot encodings into one float32 row vector."""
    samples = np.asarray(samples)
    blocks = []
    for col, card in enumerate(cardinalities):
        block = np.zeros((samples.shape[0], card), dtype=np.float32)
        block[np.arange(samples.shape[0]), samples[:, col]] = 1.0
        blocks.append(block)
    return np.concatenate(blocks, axis=1)


@dataclass
class FeatureSpec:
    """A fitted featurization: autoencoder plus mixing and scaling settings."""

    latent_dim: int
    cardinalities: tuple
    encoder: Mlp
    decoder: Mlp
    noise_fraction: float = 0.5
    standardize: bool = True
    latent_scale: float = 0.19
    mean: np.ndarray | None = None
    std: np.ndarray | None = None

    def __post_init__(self):
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if self.encoder.widths[-1] != self.latent_dim:
            raise ValueError("encoder output width must equal latent_dim")
        if self.decoder.widths[0] != self.latent_dim:
            raise ValueError("decoder input width must equal latent_dim")
        if not 0.0 <= self.noise_fraction <= 1.0:
            raise ValueError("noise_fraction must lie in [0, 1]")


def fit_autoencoder(
    samples: np.ndarray,
    cardinalities,
    latent_dim: int,
    seed: int = 0,
    lr: float = 1e-3,
    epochs: int = 200,
    patience: int = 20,
    noise_fraction: float = 0.5,
    standardize: bool = True,
    latent_scale: float = 0.19,
) -> FeatureSpec:
    """Train the reconstruction autoencoder and freeze standardization stats.

    The encoder is input -> 2*latent -> latent and the decoder mirrors it;
    training minimizes mean squared reconstruction error with Adam, stopping
    early when the loss has not improved for ``patience`` epochs.

    An autoencoder's latent space is only defined up to a per-coordinate
    affine change of basis (rescaling the encoder output and inverting the
    rescale inside the decoder leaves reconstruction untouched), yet that
    free scale decides how much signal survives the noise mixing.  After
    training, the gauge is therefore fixed: the encoder output is rebased to
    zero mean and per-coordinate standard deviation ``latent_scale`` on the
    fitting data, with the decoder's first layer compensated, making the
    mixed features' signal-to-noise ratio deterministic.

    The saved mean/std describe the mixed features of the fitting data under
    noise seed ``seed``, so featurizing the same rows with that seed yields
    exactly zero-mean unit-variance columns.
    """
    samples = np.asarray(samples)
    if samples.shape[0] < 2:
        raise EmptyDataset("need at least 2 samples to fit the autoencoder")
    x = one_hot_flatten(samples, cardinalities)
    width = x.shape[1]

    encoder = Mlp([width, 2 * latent_dim, latent_dim], seed=seed)
    decoder = Mlp([latent_dim, 2 * latent_dim, width], seed=seed + 1)
    params = encoder.parameters() + decoder.parameters()
    opt = AdamState(params, lr=lr)

    inp = Tensor(x)
    best, stale = np.inf, 0
    for _ in range(epochs):
        opt.zero_grad()
        recon = decoder(encoder(inp))
        diff = recon - inp
        loss = (diff * diff).mean()
        loss.backward()
        opt.step()
        value = float(loss.data)
        if value < best - 1e-9:
            best, stale = value, 0
        else:
            stale += 1
            if stale >= patience:
                break

    _rebase_latent(encoder, decoder, Tensor(x), latent_scale)

    spec = FeatureSpec(latent_dim=latent_dim, cardinalities=tuple(cardinalities),
                       encoder=encoder, decoder=decoder,
                       noise_fraction=noise_fraction, standardize=standardize,
                       latent_scale=latent_scale)
    raw = _mix(spec, samples, seed)
    spec.mean = raw.mean(axis=0)
    spec.std = raw.std(axis=0)
    spec.std[spec.std == 0] = 1.0
    return spec


def _rebase_latent(encoder: Mlp, decoder: Mlp, x: Tensor, scale: float) -> None:
    """Fix the latent gauge: encoder output gets mean 0 and per-coordinate
    std ``scale`` on the fitting data, the decoder absorbs the inverse."""
    z = encoder(x).data
    mu = z.mean(axis=0)
    sd = z.std(axis=0)
    sd[sd == 0] = 1.0
    gain = scale / sd
    w_enc, b_enc = encoder.weights[-1], encoder.biases[-1]
    w_enc.data = w_enc.data * gain
    b_enc.data = (b_enc.data - mu) * gain
    w_dec, b_dec = decoder.weights[0], decoder.biases[0]
    b_dec.data = b_dec.data + mu @ w_dec.data
    w_dec.data = w_dec.data / gain[:, None]


def _mix(spec: FeatureSpec, samples: np.ndarray, seed: int) -> np.ndarray:
    x = one_hot_flatten(samples, spec.cardinalities)
    z = spec.encoder(Tensor(x)).data
    if spec.noise_fraction == 0.0:
        return z
    rng = np.random.Generator(np.random.PCG64(seed))
    noise = rng.standard_normal(z.shape).astype(z.dtype)
    return (1.0 - spec.noise_fraction) * z + spec.noise_fraction * noise


def featurize(spec: FeatureSpec, samples: np.ndarray, seed: int = 0) -> np.ndarray:
    """Encode samples, mix in noise, and apply the saved standardization."""
    raw = _mix(spec, np.asarray(samples), seed)
    if not spec.standardize:
        return raw
    if spec.mean is None or spec.std is None:
        raise NotFitted("feature spec has no standardization statistics")
    return (raw - spec.mean) / spec.std


def reconstruction_mse(spec: FeatureSpec, samples: np.ndarray) -> float:
    x = one_hot_flatten(np.asarray(samples), spec.cardinalities)
    recon = spec.decoder(spec.encoder(Tensor(x))).data
    return float(((recon - x) ** 2).mean())


def save_spec(spec: FeatureSpec) -> bytes:
    """Serialize a fitted spec into the shared tensor container format."""
    named = {
        "meta": np.array([spec.latent_dim, spec.noise_fraction,
                          1.0 if spec.standardize else 0.0,
                          spec.latent_scale], dtype=np.float32),
        "cardinalities": np.asarray(spec.cardinalities, dtype=np.float32),
        "mean": np.asarray(spec.mean, dtype=np.float32),
        "std": np.asarray(spec.std, dtype=np.float32),
    }
    for tag, mlp in (("enc", spec.encoder), ("dec", spec.decoder)):
        for k, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
            named[f"{tag}.w{k}"] = w.data
            named[f"{tag}.b{k}"] = b.data
    return save_tensors(named)


def load_spec(blob: bytes) -> FeatureSpec:
    named = load_tensors(blob)
    latent, noise_fraction, std_flag, latent_scale = (float(v) for v in named["meta"])
    latent = int(latent)
    cards = tuple(int(c) for c in named["cardinalities"])
    width = int(sum(cards))
    encoder = Mlp([width, 2 * latent, latent])
    decoder = Mlp([latent, 2 * latent, width])
    for tag, mlp in (("enc", encoder), ("dec", decoder)):
        for k in range(len(mlp.weights)):
            mlp.weights[k].data = named[f"{tag}.w{k}"]
            mlp.biases[k].data = named[f"{tag}.b{k}"]
    return FeatureSpec(latent_dim=latent, cardinalities=cards,
                       encoder=encoder, decoder=decoder,
                       noise_fraction=noise_fraction,
                       standardize=bool(std_flag), latent_scale=latent_scale,
                       mean=named["mean"], std=named["std"])
