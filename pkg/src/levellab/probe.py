"""Linear level-identity probe over the agent's recurrent representation.

The probe is a softmax classifier p(i | h) trained with its own Adam
state on detached representations, so nothing it does can reach the
policy network. It backs three quantities:

  * an information estimate  log|L| + (1/N) sum_n log p(i_n | h_n),
    which is log|L| for a perfect classifier and 0 for a uniform one;
  * a per-trajectory score  I_i = sum_t log p(i | h_t)  (always <= 0),
    exposed with a sign flag so either direction can drive sampling;
  * plain argmax accuracy on held-out batches.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import Adam, Tensor, gather, log_softmax, no_grad

PROBE_LR = 1e-3
REPR_BUFFER_CAPACITY = 4096


@dataclass
class ProbeState:
    """Classifier weights plus the optimizer that owns them."""

    weight: Tensor  # (num_levels, dim)
    bias: Tensor  # (num_levels,)
    opt: Adam

    @property
    def num_levels(self) -> int:
        return self.weight.data.shape[0]

    @property
    def dim(self) -> int:
        return self.weight.data.shape[1]

    def state_dict(self) -> dict:
        out = {"weight": self.weight.data.copy(), "bias": self.bias.data.copy()}
        for k, v in self.opt.state_dict().items():
            out[f"opt.{k}"] = v
        return out

    def load_state_dict(self, state: dict) -> None:
        self.weight.data = np.asarray(state["weight"], dtype=np.float32).copy()
        self.bias.data = np.asarray(state["bias"], dtype=np.float32).copy()
        self.opt.load_state_dict(
            {k[4:]: v for k, v in state.items() if k.startswith("opt.")}
        )


@dataclass(frozen=True)
class MiEstimate:
    raw: float
    clamped: float


def make_probe(num_levels: int, dim: int, seed: int = 0,
               lr: float = PROBE_LR) -> ProbeState:
    if num_levels < 2:
        raise ValueError("probe needs at least two levels")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(90,)))
    bound = 1.0 / np.sqrt(dim)
    w = rng.uniform(-bound, bound, size=(num_levels, dim)).astype(np.float32)
    weight = Tensor(w, requires_grad=True)
    bias = Tensor(np.zeros(num_levels, dtype=np.float32), requires_grad=True)
    opt = Adam({"weight": weight, "bias": bias}, lr=lr)
    return ProbeState(weight=weight, bias=bias, opt=opt)


def _log_probs(probe: ProbeState, h: np.ndarray, dtype=None) -> Tensor:
    x = Tensor(np.asarray(h, dtype=dtype or probe.weight.data.dtype))
    logits = x @ probe.weight.transpose(1, 0) + probe.bias
    return log_softmax(logits, axis=-1)


def probe_log_probs(probe: ProbeState, h) -> np.ndarray:
    """(N, |L|) log p(i|h), no gradient tracking.

    Evaluated in float64 so the trivial classifier cases hit their
    endpoints exactly; training itself stays in float32.
    """
    with no_grad():
        return _log_probs(probe, np.atleast_2d(np.asarray(h)),
                          dtype=np.float64).data


def probe_train_step(probe: ProbeState, h, labels) -> float:
    """One Adam step on softmax cross-entropy over a detached batch."""
    h = np.atleast_2d(np.asarray(h))
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1 or labels.shape[0] != h.shape[0]:
        raise ValueError("labels must align with the representation batch")
    if labels.size == 0:
        raise ValueError("empty probe batch")
    if labels.min() < 0 or labels.max() >= probe.num_levels:
        raise ValueError("level index out of range for this probe")
    logp = _log_probs(probe, h)
    loss = -gather(logp, labels, axis=-1).mean()
    probe.opt.zero_grad()
    loss.backward()
    probe.opt.step()
    return float(loss.data)


def mi_estimate(probe: ProbeState, h, labels) -> MiEstimate:
    """log|L| + mean log p(i|h) over a batch drawn uniformly from levels.

    The raw value can leave [0, log|L|] for an uncalibrated probe; the
    clamped field pins it back for reporting and both are returned.
    """
    labels = np.asarray(labels, dtype=np.int64)
    logp = probe_log_probs(probe, h)
    picked = np.take_along_axis(logp, labels[:, None], axis=-1)
    raw = float(np.log(probe.num_levels) + picked.mean())
    clamped = float(np.clip(raw, 0.0, np.log(probe.num_levels)))
    return MiEstimate(raw=raw, clamped=clamped)


def score_mi(probe: ProbeState, h_seq, level_index: int, sign: float = 1.0) -> float:
    """sign * I_i with I_i = sum_t log p(level_index | h_t), I_i <= 0."""
    if not 0 <= level_index < probe.num_levels:
        raise ValueError("trajectory level outside the probe's label set")
    if sign not in (1.0, -1.0, 1, -1):
        raise ValueError("sign must be +1 or -1")
    logp = probe_log_probs(probe, h_seq)
    return float(sign) * float(logp[:, level_index].sum())


def probe_accuracy(probe: ProbeState, h, labels) -> float:
    labels = np.asarray(labels, dtype=np.int64)
    logp = probe_log_probs(probe, h)
    return float((logp.argmax(axis=-1) == labels).mean())


class ReprBuffer:
    """Ring buffer of the most recent uniform-rollout representations."""

    def __init__(self, dim: int, capacity: int = REPR_BUFFER_CAPACITY):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self._h = np.zeros((capacity, dim), dtype=np.float32)
        self._labels = np.zeros(capacity, dtype=np.int64)
        self._size = 0
        self._next = 0

    def __len__(self) -> int:
        return self._size

    @property
    def capacity(self) -> int:
        return self._h.shape[0]

    def add(self, h, labels) -> None:
        h = np.atleast_2d(np.asarray(h, dtype=np.float32))
        labels = np.asarray(labels, dtype=np.int64)
        if h.shape[0] != labels.shape[0]:
            raise ValueError("representations and labels must align")
        if h.shape[1] != self._h.shape[1]:
            raise ValueError("representation width mismatch")
        cap = self.capacity
        for row, lab in zip(h, labels):
            self._h[self._next] = row
            self._labels[self._next] = lab
            self._next = (self._next + 1) % cap
            self._size = min(self._size + 1, cap)

    def sample(self, rng: np.random.Generator, n: int):
        if self._size == 0:
            raise ValueError("sampling from an empty representation buffer")
        idx = rng.integers(0, self._size, size=n)
        return self._h[idx].copy(), self._labels[idx].copy()
