"""Dueling double-DQN in plain numpy.

The network is a ReLU trunk followed by a value head and an advantage head,
aggregated as ``Q = V + A - mean(A)``. Gradients are hand-derived; they are
checked against central finite differences in the test suite.
"""
from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CHECKPOINT_VERSION = 1


class InsufficientExperience(RuntimeError):
    pass


def _init_layer(rng: np.random.Generator, fan_in: int, fan_out: int):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, (fan_in, fan_out)), rng.uniform(-bound, bound, fan_out)


class QNetwork:
    def __init__(self, input_dim: int, n_actions: int = 9, hidden=(128, 128), head_hidden: int = 64,
                 rng: np.random.Generator | int | None = 0):
        self.input_dim = int(input_dim)
        self.n_actions = int(n_actions)
        self.hidden = tuple(int(h) for h in hidden)
        self.head_hidden = int(head_hidden)
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.params: dict[str, np.ndarray] = {}
        width = self.input_dim
        for i, h in enumerate(self.hidden):
            self.params[f"trunk.{i}.W"], self.params[f"trunk.{i}.b"] = _init_layer(rng, width, h)
            width = h
        for head, out in (("value", 1), ("adv", self.n_actions)):
            w = width
            if self.head_hidden:
                self.params[f"{head}.0.W"], self.params[f"{head}.0.b"] = _init_layer(rng, w, self.head_hidden)
                w = self.head_hidden
            self.params[f"{head}.out.W"], self.params[f"{head}.out.b"] = _init_layer(rng, w, out)

    @property
    def arch(self) -> dict:
        return {"input_dim": self.input_dim, "n_actions": self.n_actions, "hidden": list(self.hidden),
                "head_hidden": self.head_hidden}

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def clone(self) -> "QNetwork":
        net = QNetwork.__new__(QNetwork)
        net.input_dim, net.n_actions = self.input_dim, self.n_actions
        net.hidden, net.head_hidden = self.hidden, self.head_hidden
        net.params = {k: v.copy() for k, v in self.params.items()}
        return net

    def load_state(self, other: "QNetwork") -> None:
        for k, v in other.params.items():
            self.params[k][...] = v

    # -- forward / backward -------------------------------------------------

    def _check(self, obs: np.ndarray) -> np.ndarray:
        x = np.asarray(obs, dtype=float)
        if x.shape[-1] != self.input_dim:
            raise ValueError(f"observation length {x.shape[-1]} != network input {self.input_dim}")
        return x

    def _head(self, name: str, h: np.ndarray, cache: list | None):
        p = self.params
        if self.head_hidden:
            z = h @ p[f"{name}.0.W"] + p[f"{name}.0.b"]
            a = np.maximum(z, 0.0)
            if cache is not None:
                cache.append((f"{name}.0", h, z))
            h = a
        out = h @ p[f"{name}.out.W"] + p[f"{name}.out.b"]
        if cache is not None:
            cache.append((f"{name}.out", h, None))
        return out

    def _forward(self, x: np.ndarray, cache: list | None):
        h = x
        p = self.params
        for i in range(len(self.hidden)):
            z = h @ p[f"trunk.{i}.W"] + p[f"trunk.{i}.b"]
            if cache is not None:
                cache.append((f"trunk.{i}", h, z))
            h = np.maximum(z, 0.0)
        v_cache = [] if cache is not None else None
        a_cache = [] if cache is not None else None
        v = self._head("value", h, v_cache)
        a = self._head("adv", h, a_cache)
        q = v + a - a.mean(axis=-1, keepdims=True)
        if cache is not None:
            cache.append(("heads", v_cache, a_cache))
        return q, v, a

    def value_advantage(self, obs):
        x = self._check(obs)
        _, v, a = self._forward(np.atleast_2d(x), None)
        return v[:, 0], a

    def forward(self, obs) -> np.ndarray:
        """Q values, shape (A,) for one observation or (B, A) for a batch."""
        x = self._check(obs)
        q, _, _ = self._forward(np.atleast_2d(x), None)
        return q[0] if x.ndim == 1 else q

    __call__ = forward

    def forward_train(self, obs):
        x = self._check(obs)
        cache: list = []
        q, _, _ = self._forward(np.atleast_2d(x), cache)
        return q, cache

    def backward(self, cache: list, dq: np.ndarray) -> dict[str, np.ndarray]:
        grads: dict[str, np.ndarray] = {}
        _, v_cache, a_cache = cache[-1]
        dv = dq.sum(axis=-1, keepdims=True)
        da = dq - dq.mean(axis=-1, keepdims=True)
        dh = self._head_backward(v_cache, dv, grads) + self._head_backward(a_cache, da, grads)
        for name, h_in, z in reversed(cache[:-1]):
            dz = dh * (z > 0)
            grads[f"{name}.W"] = h_in.T @ dz
            grads[f"{name}.b"] = dz.sum(axis=0)
            dh = dz @ self.params[f"{name}.W"].T
        return grads

    def _head_backward(self, hcache: list, dout: np.ndarray, grads: dict) -> np.ndarray:
        name, h_in, _ = hcache[-1]
        grads[f"{name}.W"] = h_in.T @ dout
        grads[f"{name}.b"] = dout.sum(axis=0)
        dh = dout @ self.params[f"{name}.W"].T
        if len(hcache) > 1:
            name, h_in, z = hcache[0]
            dz = dh * (z > 0)
            grads[f"{name}.W"] = h_in.T @ dz
            grads[f"{name}.b"] = dz.sum(axis=0)
            dh = dz @ self.params[f"{name}.W"].T
        return dh


def q_forward(net: QNetwork, obs) -> np.ndarray:
    return net.forward(obs)


def greedy_action(net: QNetwork, obs) -> int:
    """argmax Q; np.argmax already returns the lowest index on ties."""
    return int(np.argmax(net.forward(obs)))


# ---------------------------------------------------------------------------


@dataclass
class Adam:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")

    def update(self, params: dict, grads: dict) -> None:
        self.step_count += 1
        t = self.step_count
        c1 = 1 - self.beta1 ** t
        c2 = 1 - self.beta2 ** t
        for k, g in grads.items():
            if k not in self.m:
                self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class ReplayBuffer:
    """Fixed-capacity FIFO store of (o, a, r, o', terminal).

    Observations are stored as float32 to keep large advisor buffers small.
    """

    def __init__(self, capacity: int, obs_dim: int, dtype=np.float32):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.obs = np.zeros((capacity, obs_dim), dtype=dtype)
        self.next_obs = np.zeros((capacity, obs_dim), dtype=dtype)
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.terminal = np.zeros(capacity, dtype=bool)
        self.cursor = 0
        self.size = 0
        self.total_added = 0

    def __len__(self) -> int:
        return self.size

    def add(self, o, a, r, o2, terminal) -> None:
        i = self.cursor
        self.obs[i] = o
        self.actions[i] = a
        self.rewards[i] = r
        self.next_obs[i] = o2
        self.terminal[i] = terminal
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.total_added += 1

    def add_batch(self, obs, actions, rewards, next_obs, terminal) -> None:
        for row in zip(obs, actions, np.broadcast_to(rewards, len(actions)), next_obs,
                       np.broadcast_to(terminal, len(actions))):
            self.add(*row)

    def sample_indices(self, k: int, rng: np.random.Generator) -> np.ndarray:
        if self.size < k:
            raise InsufficientExperience(f"insufficient experience: {self.size} < batch {k}")
        return rng.integers(0, self.size, size=k)

    def batch(self, idx: np.ndarray):
        return self.obs[idx], self.actions[idx], self.rewards[idx], self.next_obs[idx], self.terminal[idx]


def compute_targets(rewards, next_obs, terminal, online: QNetwork, target: QNetwork, gamma: float) -> np.ndarray:
    """Double-DQN targets: the online net picks a', the target net scores it."""
    if not 0 <= gamma < 1:
        raise ValueError("gamma must be in [0, 1)")
    next_obs = np.atleast_2d(next_obs)
    a_next = np.argmax(online.forward(next_obs), axis=1)
    q_next = target.forward(next_obs)[np.arange(len(a_next)), a_next]
    return np.asarray(rewards, dtype=float) + gamma * np.where(terminal, 0.0, q_next)


def compute_target(record, online: QNetwork, target: QNetwork, gamma: float) -> float:
    """Target for one (o, a, r, o', terminal) record."""
    _, _, r, o2, term = record
    return float(compute_targets([r], [o2], [term], online, target, gamma)[0])


def loss_and_grads(net: QNetwork, obs, actions, targets):
    q, cache = net.forward_train(obs)
    idx = np.arange(len(actions))
    err = q[idx, actions] - targets
    loss = float(np.mean(err ** 2))
    dq = np.zeros_like(q)
    dq[idx, actions] = 2 * err / len(actions)
    return loss, net.backward(cache, dq)


def train_step(net: QNetwork, target: QNetwork, buf: ReplayBuffer, opt: Adam, batch_size: int,
               gamma: float, rng: np.random.Generator) -> float:
    """One Adam step on a uniformly drawn batch; returns the pre-update loss."""
    idx = buf.sample_indices(batch_size, rng)
    o, a, r, o2, term = buf.batch(idx)
    y = compute_targets(r, o2, term, net, target, gamma)
    loss, grads = loss_and_grads(net, o, a, y)
    opt.update(net.params, grads)
    return loss


def sync_target(net: QNetwork, target: QNetwork, counter: int, period: int) -> bool:
    if period < 1:
        raise ValueError("sync period must be >= 1")
    if counter % period == 0:
        target.load_state(net)
        return True
    return False


class DQNLearner:
    """Online/target pair with its optimizer, buffer and update counter."""

    def __init__(self, obs_dim: int, n_actions: int, hidden, head_hidden: int, lr: float, capacity: int,
                 batch_size: int, gamma: float, sync_period: int, rng: np.random.Generator):
        self.online = QNetwork(obs_dim, n_actions, hidden, head_hidden, rng)
        self.target = self.online.clone()
        self.opt = Adam(lr=lr)
        self.buffer = ReplayBuffer(capacity, obs_dim)
        self.batch_size = batch_size
        self.gamma = gamma
        self.sync_period = sync_period
        self.updates = 0
        self.last_loss = float("nan")

    def ready(self) -> bool:
        return len(self.buffer) >= self.batch_size

    def learn(self, rng: np.random.Generator) -> float | None:
        if not self.ready():
            return None
        self.last_loss = train_step(self.online, self.target, self.buffer, self.opt, self.batch_size,
                                    self.gamma, rng)
        self.updates += 1
        sync_target(self.online, self.target, self.updates, self.sync_period)
        return self.last_loss

    def save(self, path: str | Path) -> None:
        save_checkpoint(path, self.online, self.opt, self.target, extra={"updates": self.updates})


# ---------------------------------------------------------------------------
# checkpoints: npz with every tensor plus a JSON header


def save_checkpoint(path: str | Path, net: QNetwork, opt: Adam | None = None, target: QNetwork | None = None,
                    extra: dict | None = None) -> None:
    arrays = {f"param/{k}": v for k, v in net.params.items()}
    if target is not None:
        arrays.update({f"target/{k}": v for k, v in target.params.items()})
    meta = {"version": CHECKPOINT_VERSION, "arch": net.arch, "extra": extra or {}}
    if opt is not None:
        meta["adam"] = {"lr": opt.lr, "beta1": opt.beta1, "beta2": opt.beta2, "eps": opt.eps,
                        "step_count": opt.step_count}
        arrays.update({f"adam_m/{k}": v for k, v in opt.m.items()})
        arrays.update({f"adam_v/{k}": v for k, v in opt.v.items()})
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path: str | Path):
    """Returns (net, optimizer or None, target or None, extra)."""
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        arch = meta["arch"]
        net = QNetwork(arch["input_dim"], arch["n_actions"], arch["hidden"], arch["head_hidden"], rng=0)
        for k in net.params:
            net.params[k] = data[f"param/{k}"].copy()
        target = None
        if any(key.startswith("target/") for key in data.files):
            target = net.clone()
            for k in target.params:
                target.params[k] = data[f"target/{k}"].copy()
        opt = None
        if "adam" in meta:
            a = meta["adam"]
            opt = Adam(lr=a["lr"], beta1=a["beta1"], beta2=a["beta2"], eps=a["eps"], step_count=a["step_count"])
            for key in data.files:
                if key.startswith("adam_m/"):
                    opt.m[key[7:]] = data[key].copy()
                elif key.startswith("adam_v/"):
                    opt.v[key[7:]] = data[key].copy()
    return net, opt, target, meta.get("extra", {})
