"""Two-feature XOR / NOT benchmark datasets with known feature importance.

Features are drawn from a bivariate normal with unit variances and
correlation ``rho``; labels are a Boolean function of the features
thresholded at zero, then flipped at rate ``epsilon``.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data import CONTINUOUS, Dataset, save_csv

FUNCTIONS = ("XOR", "NOT")
GRID_RHOS = (0.0, 0.1, 0.9, 1.0)
GRID_EPSILONS = (0.0, 0.25, 0.5)
DEFAULT_MU = {"XOR": (0.0, 1.0), "NOT": (1.0, 0.0)}
PAPER_LITERAL = "paper-literal"
SIGNAL_SCALED = "signal-scaled"


@dataclass(frozen=True)
class SyntheticSpec:
    function: str
    mu: tuple[float, float]
    rho: float
    epsilon: float
    n: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.function not in FUNCTIONS:
            raise ValueError(f"function must be one of {FUNCTIONS}, got {self.function!r}")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        object.__setattr__(self, "mu", tuple(float(m) for m in self.mu))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mu"] = list(self.mu)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> SyntheticSpec:
        return cls(d["function"], tuple(d["mu"]), float(d["rho"]), float(d["epsilon"]), int(d["n"]), int(d["seed"]))

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @property
    def name(self) -> str:
        return f"{self.function}_rho{self.rho:.2f}_eps{self.epsilon:.2f}"


@dataclass(frozen=True)
class GroundTruthAttribution:
    raw: tuple[float, float]
    normalized: tuple[float, float]
    mode: str
    degenerate: bool = False


def _streams(seed: int):
    feat_ss, noise_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(feat_ss), noise_ss


def sample_features(spec: SyntheticSpec, rng: np.random.Generator | None = None) -> np.ndarray:
    """Draw ``n`` rows with unit marginal variances and correlation ``rho``.

    Built as ``x2 = mu2 + rho (x1 - mu1) + sqrt(1 - rho^2) z`` so that
    ``rho = 1`` needs no factorisation of a singular covariance.
    """
    if rng is None:
        rng, _ = _streams(spec.seed)
    mu1, mu2 = spec.mu
    x1 = mu1 + rng.standard_normal(spec.n)
    z = rng.standard_normal(spec.n)
    if spec.rho == 1.0:
        x2 = mu2 + (x1 - mu1)
    else:
        x2 = mu2 + spec.rho * (x1 - mu1) + np.sqrt(1.0 - spec.rho**2) * z
    return np.column_stack([x1, x2])


def label(features: np.ndarray, function: str) -> np.ndarray:
    features = np.asarray(features)
    if features.ndim != 2 or features.shape[1] != 2:
        raise ValueError(f"expected an n x 2 matrix, got shape {features.shape}")
    b = (features > 0).astype(np.int64)
    if function == "XOR":
        return b[:, 0] ^ b[:, 1]
    if function == "NOT":
        return 1 - b[:, 0]
    raise ValueError(f"function must be one of {FUNCTIONS}, got {function!r}")


def apply_noise(labels: np.ndarray, epsilon: float, seed) -> np.ndarray:
    """Flip each label independently with probability ``epsilon``."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    labels = np.asarray(labels, dtype=np.int64)
    mask = (np.random.default_rng(seed).random(labels.shape[0]) < epsilon).astype(np.int64)
    return labels * (1 - mask) + (1 - labels) * mask


def generate(spec: SyntheticSpec) -> Dataset:
    rng, noise_ss = _streams(spec.seed)
    X = sample_features(spec, rng)
    y = apply_noise(label(X, spec.function), spec.epsilon, noise_ss)
    return Dataset(X, y, ("X1", "X2"), (CONTINUOUS, CONTINUOUS), provenance=f"synthetic:{spec.digest()}")


def ground_truth(spec: SyntheticSpec, mode: str = PAPER_LITERAL) -> GroundTruthAttribution:
    if spec.function == "XOR":
        raw = (0.5, 0.5)
    else:
        raw = (1.0, spec.rho)
    if spec.epsilon != 0.0:
        if mode == PAPER_LITERAL:
            scale = spec.epsilon
        elif mode == SIGNAL_SCALED:
            scale = 1.0 - spec.epsilon
        else:
            raise ValueError(f"unknown ground-truth mode {mode!r}")
        raw = (raw[0] * scale, raw[1] * scale)
    total = raw[0] + raw[1]
    if total == 0.0:
        return GroundTruthAttribution(raw, raw, mode, degenerate=True)
    return GroundTruthAttribution(raw, (raw[0] / total, raw[1] / total), mode)


def derive_seed(base_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([base_seed, index]).generate_state(1)[0])


def enumerate_grid(n: int = 1000, base_seed: int = 0, mu: dict | None = None,
                   functions=FUNCTIONS, rhos=GRID_RHOS, epsilons=GRID_EPSILONS) -> list[SyntheticSpec]:
    """The 2 x 4 x 3 benchmark grid, ordered function, epsilon, rho."""
    mus = dict(DEFAULT_MU)
    if mu:
        mus.update({k: tuple(v) for k, v in mu.items()})
    specs = []
    for fn in functions:
        for eps in epsilons:
            for rho in rhos:
                idx = len(specs)
                specs.append(SyntheticSpec(fn, mus[fn], float(rho), float(eps), n, derive_seed(base_seed, idx)))
    return specs


def write_grid(specs, out_dir) -> Path:
    """Write one CSV per spec plus ``manifest.json``; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for spec in specs:
        fname = f"{spec.name}_{spec.digest()}.csv"
        save_csv(generate(spec), out_dir / fname)
        entries.append({"name": spec.name, "digest": spec.digest(), "file": fname, "spec": spec.to_dict()})
    manifest = out_dir / "manifest.json"
    manifest.write_text(json.dumps({"version": 1, "datasets": entries}, indent=2, sort_keys=True) + "\n")
    return manifest
