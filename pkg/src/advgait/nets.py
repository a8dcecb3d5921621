"""Actor-critic networks: ELU MLPs with a diagonal Gaussian head.

The actor sees the regular observation; the critic sees the privileged
observation (regular + base linear velocity), per the asymmetric
actor-critic design.  The Gaussian head uses a state-independent log-std
initialized at log(0.8).  An optional single-step recurrent feature cell
can be enabled; its hidden state is treated as an input (no backprop
through time), which keeps every gradient exactly checkable.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Adam, Tensor, concat, param

LOG2PI = float(np.log(2.0 * np.pi))


def _mlp_params(rng, sizes: list, prefix: str) -> dict:
    params = {}
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        params[f"{prefix}_w{i}"] = param(None, rng, shape=(n_in, n_out))
        params[f"{prefix}_b{i}"] = param(np.zeros(n_out))
    return params


def _mlp_forward(params: dict, prefix: str, x: Tensor, n_layers: int,
                 final_linear: bool = True) -> Tensor:
    h = x
    for i in range(n_layers):
        h = h @ params[f"{prefix}_w{i}"] + params[f"{prefix}_b{i}"]
        if i < n_layers - 1 or not final_linear:
            h = h.elu()
    return h


class MlpPolicy:
    """Gaussian policy + privileged-observation value function."""

    def __init__(self, obs_dim: int, priv_dim: int, act_dim: int,
                 hidden=(64, 32), init_std: float = 0.8, seed: int = 0,
                 recurrent: bool = False, recurrent_size: int = 32):
        self.obs_dim = obs_dim
        self.priv_dim = priv_dim
        self.act_dim = act_dim
        self.hidden = tuple(hidden)
        self.init_std = init_std
        self.recurrent = recurrent
        self.recurrent_size = recurrent_size
        rng = np.random.default_rng(seed)
        feat_dim = obs_dim + (recurrent_size if recurrent else 0)
        self.params = {}
        self.params.update(_mlp_params(rng, [feat_dim, *hidden, act_dim], "actor"))
        self.params.update(_mlp_params(rng, [priv_dim, *hidden, 1], "critic"))
        self.params["log_std"] = param(np.full(act_dim, np.log(init_std)))
        if recurrent:
            self.params["rec_wx"] = param(None, rng, shape=(obs_dim, recurrent_size))
            self.params["rec_wh"] = param(None, rng, shape=(recurrent_size, recurrent_size))
            self.params["rec_b"] = param(np.zeros(recurrent_size))

    # -- parameter plumbing ----------------------------------------------
    def parameter_names(self) -> list:
        return sorted(self.params.keys())

    def parameters(self) -> list:
        return [self.params[k] for k in self.parameter_names()]

    def get_flat(self) -> np.ndarray:
        return np.concatenate([self.params[k].data.ravel()
                               for k in self.parameter_names()])

    def set_flat(self, flat: np.ndarray) -> None:
        i = 0
        for k in self.parameter_names():
            p = self.params[k]
            n = p.data.size
            p.data = flat[i:i + n].reshape(p.data.shape).copy()
            i += n
        if i != flat.size:
            raise ValueError("flat parameter size mismatch")

    def clone(self) -> "MlpPolicy":
        twin = MlpPolicy(self.obs_dim, self.priv_dim, self.act_dim, self.hidden,
                         self.init_std, seed=0, recurrent=self.recurrent,
                         recurrent_size=self.recurrent_size)
        twin.set_flat(self.get_flat())
        return twin

    # -- forward passes ----------------------------------------------------
    def features(self, obs: Tensor, hidden: np.ndarray | None) -> Tensor:
        if not self.recurrent:
            return obs
        if hidden is None:
            hidden = np.zeros((obs.data.shape[0], self.recurrent_size))
        h = (obs @ self.params["rec_wx"] + Tensor(hidden) @ self.params["rec_wh"]
             + self.params["rec_b"]).tanh()
        return concat([obs, h], axis=-1)

    def next_hidden(self, obs_np: np.ndarray, hidden: np.ndarray | None) -> np.ndarray:
        if not self.recurrent:
            return None
        if hidden is None:
            hidden = np.zeros((obs_np.shape[0], self.recurrent_size))
        return np.tanh(obs_np @ self.params["rec_wx"].data
                       + hidden @ self.params["rec_wh"].data
                       + self.params["rec_b"].data)

    def forward(self, obs, priv_obs, hidden: np.ndarray | None = None):
        """(action mean, std, value); inputs are (N, dim) arrays or Tensors."""
        obs_t = obs if isinstance(obs, Tensor) else Tensor(np.atleast_2d(obs))
        priv_t = priv_obs if isinstance(priv_obs, Tensor) else Tensor(np.atleast_2d(priv_obs))
        n_layers = len(self.hidden) + 1
        mean = _mlp_forward(self.params, "actor", self.features(obs_t, hidden), n_layers)
        value = _mlp_forward(self.params, "critic", priv_t, n_layers)
        std = self.params["log_std"].exp()
        return mean, std, value

    def act(self, obs_np: np.ndarray, priv_np: np.ndarray,
            rng: np.random.Generator, hidden: np.ndarray | None = None):
        """Sample actions for rollout; returns plain arrays."""
        mean, std, value = self.forward(obs_np, priv_np, hidden)
        m, s = mean.data, std.data
        noise = rng.standard_normal(m.shape)
        actions = m + s * noise
        logp = gaussian_logp_np(actions, m, s)
        return actions, logp, value.data[:, 0], m, np.broadcast_to(s, m.shape).copy()

    def act_deterministic(self, obs_np: np.ndarray, priv_np: np.ndarray,
                          hidden: np.ndarray | None = None) -> np.ndarray:
        mean, _, _ = self.forward(obs_np, priv_np, hidden)
        return mean.data


def gaussian_logp_np(actions, mean, std) -> np.ndarray:
    z = (actions - mean) / std
    return -0.5 * (z ** 2).sum(axis=-1) - np.log(std).sum(axis=-1) \
        - 0.5 * actions.shape[-1] * LOG2PI


def gaussian_logp(actions_np: np.ndarray, mean: Tensor, std: Tensor) -> Tensor:
    """Log-density of fixed actions under the tape'd Gaussian."""
    a = Tensor(actions_np)
    z = (a - mean) / std
    return ((z ** 2).sum(axis=-1) * -0.5
            - std.log().sum(axis=-1)
            - 0.5 * actions_np.shape[-1] * LOG2PI)


def gaussian_entropy(std: Tensor, batch: int) -> Tensor:
    """Mean diagonal-Gaussian entropy: sum_j (log sigma_j + 0.5 log(2 pi e))."""
    per = std.log().sum() + 0.5 * std.data.size * (LOG2PI + 1.0)
    return per  # state-independent std: identical for every sample


def gaussian_kl_np(mean_old, std_old, mean_new, std_new) -> float:
    """Mean KL(old || new) over the batch for diagonal Gaussians."""
    var_o, var_n = std_old ** 2, std_new ** 2
    kl = (np.log(std_new / std_old) + (var_o + (mean_old - mean_new) ** 2)
          / (2.0 * var_n) - 0.5)
    return float(kl.sum(axis=-1).mean())
