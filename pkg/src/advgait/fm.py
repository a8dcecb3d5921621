"""Text-conditioned autoregressive whole-body controller.

A small causal-attention decoder reads a learned embedding of the template
text at position 0 followed by embedded (state, action) pairs, and predicts
the next action at every position.  Closed-loop (CL) control executes the
latest prediction, observes the surrogate, and slides an H-step window;
open-loop (OL) control first groups 4 pairs into one latent token with a
learned encoder/decoder, autoregressively generates the whole latent
sequence from the text alone, then executes the decoded actions without
feedback.

The text encoder is a learned bag-of-words embedding over the closed
template vocabulary (the annotation grammar is generated by this package,
so a pretrained sentence encoder would add nothing checkable).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Adam, Tensor, clip_grad_norm, concat, param, zero_grads
from .checkpoint import load_blob, save_blob
from .dataset import (COMMAND_LEVELS, DIRECTIONS, LEVEL_WORDS, TrajectoryRecord,
                      state_features)
from .env import EnvConfig, N_LOWER_ACT, N_UPPER_ACT, SurrogateBatch
from .motions import MotionLibrary

STATE_FEATS = 21     # 10 compact features + 11 joint positions
ACT_DIM = N_LOWER_ACT + N_UPPER_ACT


class UnknownTokenError(KeyError):
    pass


@dataclass
class Vocab:
    words: list

    def __post_init__(self):
        self.index = {w: i for i, w in enumerate(self.words)}

    def __len__(self):
        return len(self.words)

    def tokenize(self, text: str) -> list:
        ids = []
        for w in text.strip().split():
            if w not in self.index:
                raise UnknownTokenError(f"unknown token {w!r}")
            ids.append(self.index[w])
        if not ids:
            raise UnknownTokenError("empty text")
        return ids


def template_vocabulary(labels) -> Vocab:
    """Every word the annotation grammar can produce for the given motions."""
    words = set()
    for mode, phrase, _ in DIRECTIONS.values():
        words.update(mode.split())
        words.update(phrase.split())
    words.update(w for w in LEVEL_WORDS.values() if w)
    words.add("and")
    for label in labels:
        words.update(label.split())
    return Vocab(sorted(words))


@dataclass
class FmConfig:
    context: int = 20              # H; presets 20 and 400
    width: int = 64
    layers: int = 2
    heads: int = 2
    mlp_mult: int = 4
    latent_dim: int = 16           # OL tokenizer latent size
    ol_group: int = 4              # pairs per OL token
    ol_max_seq: int = 700          # max open-loop action steps
    lr: float = 3e-4
    batch_windows: int = 32
    grad_clip: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.context < 1:
            raise ValueError("context must be >= 1")
        if self.width % self.heads != 0:
            raise ValueError("width must be divisible by heads")


def _layer_norm(x: Tensor, g: Tensor, b: Tensor) -> Tensor:
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc ** 2).mean(axis=-1, keepdims=True)
    return xc / (var + 1e-6).sqrt() * g + b


class FmModel:
    """Decoder-only causal transformer over [text, pair_1, ..., pair_T]."""

    def __init__(self, cfg: FmConfig, vocab: Vocab,
                 feat_mean=None, feat_std=None):
        self.cfg = cfg
        self.vocab = vocab
        d = cfg.width
        rng = np.random.default_rng(cfg.seed)
        self.params = {}
        P = self.params
        P["tok_emb"] = param(None, rng, shape=(len(vocab), d), scale=0.3)
        P["pos_emb"] = param(rng.standard_normal((cfg.context + 1, d)) * 0.02)
        P["pair_w"] = param(None, rng, shape=(STATE_FEATS + ACT_DIM, d))
        P["pair_b"] = param(np.zeros(d))
        for l in range(cfg.layers):
            P[f"l{l}_ln1_g"] = param(np.ones(d))
            P[f"l{l}_ln1_b"] = param(np.zeros(d))
            P[f"l{l}_qkv_w"] = param(None, rng, shape=(d, 3 * d))
            P[f"l{l}_qkv_b"] = param(np.zeros(3 * d))
            P[f"l{l}_proj_w"] = param(None, rng, shape=(d, d))
            P[f"l{l}_proj_b"] = param(np.zeros(d))
            P[f"l{l}_ln2_g"] = param(np.ones(d))
            P[f"l{l}_ln2_b"] = param(np.zeros(d))
            P[f"l{l}_mlp_w1"] = param(None, rng, shape=(d, cfg.mlp_mult * d))
            P[f"l{l}_mlp_b1"] = param(np.zeros(cfg.mlp_mult * d))
            P[f"l{l}_mlp_w2"] = param(None, rng, shape=(cfg.mlp_mult * d, d))
            P[f"l{l}_mlp_b2"] = param(np.zeros(d))
        P["lnf_g"] = param(np.ones(d))
        P["lnf_b"] = param(np.zeros(d))
        P["head_w"] = param(None, rng, shape=(d, ACT_DIM))
        P["head_b"] = param(np.zeros(ACT_DIM))
        # Feature standardization, frozen at training time.
        self.feat_mean = (np.zeros(STATE_FEATS + ACT_DIM)
                          if feat_mean is None else np.asarray(feat_mean))
        self.feat_std = (np.ones(STATE_FEATS + ACT_DIM)
                         if feat_std is None else np.asarray(feat_std))

    # -- parameter plumbing -------------------------------------------------
    def parameter_names(self):
        return sorted(self.params.keys())

    def parameters(self):
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

    # -- forward -------------------------------------------------------------
    def encode_text(self, text: str) -> np.ndarray:
        """Deterministic bag-of-words embedding (mean of token vectors)."""
        ids = self.vocab.tokenize(text)
        return self.params["tok_emb"].data[ids].mean(axis=0)

    def _encode_text_t(self, texts: list) -> Tensor:
        rows = []
        for text in texts:
            ids = self.vocab.tokenize(text)
            rows.append(self.params["tok_emb"].take_rows(np.asarray(ids)).mean(axis=0))
        stacked = concat([r.reshape(1, -1) for r in rows], axis=0)
        return stacked

    def _block(self, x: Tensor, l: int, mask: np.ndarray) -> Tensor:
        P = self.params
        cfg = self.cfg
        B, T, d = x.shape
        h = cfg.heads
        dh = d // h
        xn = _layer_norm(x, P[f"l{l}_ln1_g"], P[f"l{l}_ln1_b"])
        qkv = xn @ P[f"l{l}_qkv_w"] + P[f"l{l}_qkv_b"]
        q = qkv[:, :, :d].reshape(B, T, h, dh).swapaxes(1, 2)
        k = qkv[:, :, d:2 * d].reshape(B, T, h, dh).swapaxes(1, 2)
        v = qkv[:, :, 2 * d:].reshape(B, T, h, dh).swapaxes(1, 2)
        scores = (q @ k.swapaxes(2, 3)) * (1.0 / np.sqrt(dh)) + Tensor(mask)
        att = scores.softmax(axis=-1)
        out = (att @ v).swapaxes(1, 2).reshape(B, T, d)
        x = x + out @ P[f"l{l}_proj_w"] + P[f"l{l}_proj_b"]
        xn = _layer_norm(x, P[f"l{l}_ln2_g"], P[f"l{l}_ln2_b"])
        mlp = (xn @ P[f"l{l}_mlp_w1"] + P[f"l{l}_mlp_b1"]).elu()
        return x + mlp @ P[f"l{l}_mlp_w2"] + P[f"l{l}_mlp_b2"]

    def forward_full(self, texts: list, pairs: np.ndarray) -> Tensor:
        """Predictions at every position: (B, T+1, ACT_DIM).

        Position 0 (text) predicts the window's first action; pair position
        j predicts the action after pair j.  ``pairs`` is (B, T, feats)
        un-normalized; standardization happens here.
        """
        cfg = self.cfg
        B, T, _ = pairs.shape
        if T > cfg.context:
            raise ValueError(f"history length {T} exceeds context {cfg.context}")
        norm = (pairs - self.feat_mean) / self.feat_std
        x_text = self._encode_text_t(texts).reshape(B, 1, cfg.width)
        x_pairs = Tensor(norm) @ self.params["pair_w"] + self.params["pair_b"]
        x = concat([x_text, x_pairs], axis=1) + self.params["pos_emb"][:T + 1]
        n = T + 1
        mask = np.triu(np.full((n, n), -1e9), k=1)
        for l in range(cfg.layers):
            x = self._block(x, l, mask)
        x = _layer_norm(x, self.params["lnf_g"], self.params["lnf_b"])
        return x @ self.params["head_w"] + self.params["head_b"]

    def predict(self, text: str, pairs: np.ndarray) -> np.ndarray:
        """Next-action predictions for the pair positions only: (T, ACT_DIM)."""
        pairs = np.asarray(pairs, dtype=np.float64)
        out = self.forward_full([text], pairs[None])
        return out.data[0, 1:]

    def first_action(self, text: str) -> np.ndarray:
        out = self.forward_full([text], np.zeros((1, 0, STATE_FEATS + ACT_DIM)))
        return out.data[0, 0]


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def record_features(rec: TrajectoryRecord):
    states = np.concatenate([np.asarray(rec.states), np.asarray(rec.dof_pos)],
                            axis=1)
    actions = np.asarray(rec.actions)
    return states, actions


def corpus_arrays(records: list):
    feats = []
    for rec in records:
        states, actions = record_features(rec)
        feats.append(np.concatenate([states, actions], axis=1))
    return feats


def fit_normalization(model: FmModel, records: list) -> None:
    stacked = np.concatenate(corpus_arrays(records), axis=0)
    model.feat_mean = stacked.mean(axis=0)
    model.feat_std = stacked.std(axis=0) + 1e-6


@dataclass
class TrainFmResult:
    losses: list
    updates: int


def train(model: FmModel, records: list, updates: int,
          rng: np.random.Generator | None = None) -> TrainFmResult:
    """Window-MSE behavior cloning over the record corpus."""
    cfg = model.cfg
    rng = rng or np.random.default_rng(cfg.seed)
    feats = corpus_arrays(records)
    fit_normalization(model, records)
    opt = Adam(model.parameters(), lr=cfg.lr)
    act_slice = slice(STATE_FEATS, STATE_FEATS + ACT_DIM)
    # One shared window length keeps batches rectangular without padding;
    # shorter-than-context records shrink the window instead.
    win = min(cfg.context, min(f.shape[0] for f in feats) - 1)
    if win < 1:
        raise ValueError("records too short to form training windows")
    losses = []
    for step in range(updates):
        pairs = np.empty((cfg.batch_windows, win, STATE_FEATS + ACT_DIM))
        targets = np.empty((cfg.batch_windows, win + 1, ACT_DIM))
        texts = []
        for b in range(cfg.batch_windows):
            ri = int(rng.integers(len(records)))
            seq = feats[ri]
            off = int(rng.integers(seq.shape[0] - win))
            pairs[b] = seq[off:off + win]
            texts.append(records[ri].text)
            targets[b, 0] = seq[off, act_slice]
            targets[b, 1:] = seq[off + 1:off + win + 1, act_slice]
        out = model.forward_full(texts, pairs)
        loss = ((out - Tensor(targets)) ** 2).mean()
        params = model.parameters()
        zero_grads(params)
        loss.backward()
        clip_grad_norm(params, cfg.grad_clip)
        opt.step()
        losses.append(float(loss.data))
    return TrainFmResult(losses=losses, updates=updates)


# ---------------------------------------------------------------------------
# Open-loop tokenizer and prior
# ---------------------------------------------------------------------------

class OlTokenizer:
    """Groups ol_group consecutive pairs into one latent via an autoencoder."""

    def __init__(self, cfg: FmConfig, feat_mean, feat_std):
        self.cfg = cfg
        self.feat_mean = np.asarray(feat_mean)
        self.feat_std = np.asarray(feat_std)
        rng = np.random.default_rng(cfg.seed + 1)
        fin = cfg.ol_group * (STATE_FEATS + ACT_DIM)
        self.params = {
            "enc_w1": param(None, rng, shape=(fin, 64)),
            "enc_b1": param(np.zeros(64)),
            "enc_w2": param(None, rng, shape=(64, cfg.latent_dim)),
            "enc_b2": param(np.zeros(cfg.latent_dim)),
            "dec_w1": param(None, rng, shape=(cfg.latent_dim, 64)),
            "dec_b1": param(np.zeros(64)),
            "dec_w2": param(None, rng, shape=(64, fin)),
            "dec_b2": param(np.zeros(fin)),
        }

    def parameters(self):
        return [self.params[k] for k in sorted(self.params)]

    def encode_t(self, groups: np.ndarray) -> Tensor:
        norm = (groups - np.tile(self.feat_mean, self.cfg.ol_group)) \
            / np.tile(self.feat_std, self.cfg.ol_group)
        h = (Tensor(norm) @ self.params["enc_w1"] + self.params["enc_b1"]).elu()
        return h @ self.params["enc_w2"] + self.params["enc_b2"]

    def decode_t(self, z: Tensor) -> Tensor:
        h = (z @ self.params["dec_w1"] + self.params["dec_b1"]).elu()
        return h @ self.params["dec_w2"] + self.params["dec_b2"]

    def decode_np(self, z: np.ndarray) -> np.ndarray:
        out = self.decode_t(Tensor(z)).data
        return out * np.tile(self.feat_std, self.cfg.ol_group) \
            + np.tile(self.feat_mean, self.cfg.ol_group)

    def train_reconstruction(self, records: list, updates: int,
                             rng: np.random.Generator) -> list:
        cfg = self.cfg
        feats = corpus_arrays(records)
        opt = Adam(self.parameters(), lr=cfg.lr)
        losses = []
        g = cfg.ol_group
        for _ in range(updates):
            batch = np.empty((cfg.batch_windows, g * (STATE_FEATS + ACT_DIM)))
            for b in range(cfg.batch_windows):
                seq = feats[int(rng.integers(len(records)))]
                off = int(rng.integers(max(seq.shape[0] - g, 0) + 1))
                chunk = seq[off:off + g]
                if chunk.shape[0] < g:
                    chunk = np.concatenate([chunk, np.tile(chunk[-1:],
                                                           (g - chunk.shape[0], 1))])
                batch[b] = chunk.reshape(-1)
            z = self.encode_t(batch)
            recon = self.decode_t(z)
            norm = (batch - np.tile(self.feat_mean, g)) / np.tile(self.feat_std, g)
            loss = ((recon - Tensor(norm)) ** 2).mean()
            params = self.parameters()
            zero_grads(params)
            loss.backward()
            clip_grad_norm(params, cfg.grad_clip)
            opt.step()
            losses.append(float(loss.data))
        return losses


class OlModel:
    """Text -> latent-token sequence prior + tokenizer decode, open loop."""

    def __init__(self, cfg: FmConfig, vocab: Vocab, tokenizer: OlTokenizer):
        n_tokens = int(np.ceil(cfg.ol_max_seq / cfg.ol_group))
        prior_cfg = FmConfig(context=n_tokens, width=cfg.width, layers=cfg.layers,
                             heads=cfg.heads, mlp_mult=cfg.mlp_mult,
                             latent_dim=cfg.latent_dim, ol_group=cfg.ol_group,
                             ol_max_seq=cfg.ol_max_seq, lr=cfg.lr,
                             batch_windows=cfg.batch_windows,
                             grad_clip=cfg.grad_clip, seed=cfg.seed + 2)
        self.cfg = cfg
        self.tokenizer = tokenizer
        self.vocab = vocab
        d = cfg.width
        rng = np.random.default_rng(cfg.seed + 3)
        self.prior = FmModel(prior_cfg, vocab)
        # Reuse the transformer body but swap pair embedding and head for latents.
        self.prior.params["pair_w"] = param(None, rng, shape=(cfg.latent_dim, d))
        self.prior.params["pair_b"] = param(np.zeros(d))
        self.prior.params["head_w"] = param(None, rng, shape=(d, cfg.latent_dim))
        self.prior.params["head_b"] = param(np.zeros(cfg.latent_dim))

    def _prior_forward(self, texts, latents: np.ndarray) -> Tensor:
        m = self.prior
        cfg = m.cfg
        B, T, _ = latents.shape
        x_text = m._encode_text_t(texts).reshape(B, 1, cfg.width)
        x_pairs = Tensor(latents) @ m.params["pair_w"] + m.params["pair_b"]
        x = concat([x_text, x_pairs], axis=1) + m.params["pos_emb"][:T + 1]
        n = T + 1
        mask = np.triu(np.full((n, n), -1e9), k=1)
        for l in range(cfg.layers):
            x = m._block(x, l, mask)
        x = _layer_norm(x, m.params["lnf_g"], m.params["lnf_b"])
        return x @ m.params["head_w"] + m.params["head_b"]

    def train_prior(self, records: list, updates: int,
                    rng: np.random.Generator) -> list:
        cfg = self.cfg
        g = cfg.ol_group
        feats = corpus_arrays(records)
        # Pre-encode every record's latent sequence (tokenizer frozen here).
        latents = []
        for seq in feats:
            n_tok = seq.shape[0] // g
            groups = seq[:n_tok * g].reshape(n_tok, -1)
            z = self.tokenizer.encode_t(groups).data
            latents.append(z)
        opt = Adam(self.prior.parameters(), lr=cfg.lr)
        losses = []
        n_ctx = self.prior.cfg.context
        for _ in range(updates):
            texts, z_in, z_tgt = [], [], []
            for b in range(cfg.batch_windows):
                ri = int(rng.integers(len(records)))
                z = latents[ri]
                T = min(z.shape[0], n_ctx)
                zi = np.zeros((n_ctx, cfg.latent_dim))
                zt = np.zeros((n_ctx + 1, cfg.latent_dim))
                zi[:T] = z[:T]
                zt[0] = z[0]
                upto = min(T + 1, z.shape[0])
                zt[1:upto] = z[1:upto]
                if upto <= n_ctx:
                    zt[upto:] = z[upto - 1]
                texts.append(records[ri].text)
                z_in.append(zi)
                z_tgt.append(zt)
            out = self._prior_forward(texts, np.stack(z_in))
            loss = ((out - Tensor(np.stack(z_tgt))) ** 2).mean()
            params = self.prior.parameters()
            zero_grads(params)
            loss.backward()
            clip_grad_norm(params, cfg.grad_clip)
            opt.step()
            losses.append(float(loss.data))
        return losses

    def generate_actions(self, text: str, n_steps: int | None = None) -> np.ndarray:
        """Decode the whole action sequence from the text alone."""
        cfg = self.cfg
        n_steps = min(n_steps or cfg.ol_max_seq, cfg.ol_max_seq)
        n_tok = int(np.ceil(n_steps / cfg.ol_group))
        z_seq = np.zeros((0, cfg.latent_dim))
        for t in range(n_tok):
            out = self._prior_forward([text], z_seq[None]) if z_seq.shape[0] \
                else self._prior_forward([text], np.zeros((1, 0, cfg.latent_dim)))
            z_next = out.data[0, z_seq.shape[0]]
            z_seq = np.concatenate([z_seq, z_next[None]], axis=0)
        acts = []
        for z in z_seq:
            flat = self.tokenizer.decode_np(z[None])[0]
            pairs = flat.reshape(cfg.ol_group, STATE_FEATS + ACT_DIM)
            acts.append(pairs[:, STATE_FEATS:])
        return np.concatenate(acts, axis=0)[:n_steps]


# ---------------------------------------------------------------------------
# Text -> command parsing (the grammar is ours, so parsing is exact)
# ---------------------------------------------------------------------------

def parse_text_command(text: str):
    """Recover (direction key, level, command 3-vector midpoint) from a text."""
    body = text.split(" and ")[0].strip()
    if body == "keep standing":
        return "stand", None, np.zeros(3)
    for key, (mode, phrase, signs) in DIRECTIONS.items():
        if key == "stand":
            continue
        prefix = f"{mode} {phrase}"
        if body == prefix:
            level = "fix"
        elif body.startswith(prefix + " "):
            word = body[len(prefix) + 1:]
            level = {v: k for k, v in LEVEL_WORDS.items() if v}.get(word)
            if level is None:
                continue
        else:
            continue
        (vxr, vyr, yr) = COMMAND_LEVELS[level]
        sx, sy, syaw = signs
        return key, level, np.array([sx * np.mean(vxr), sy * np.mean(vyr),
                                     syaw * np.mean(yr)])
    raise ValueError(f"unparseable command text {text!r}")


# ---------------------------------------------------------------------------
# Rollouts
# ---------------------------------------------------------------------------

@dataclass
class FmEpisode:
    text: str
    survival_steps: int
    max_steps: int
    mean_vel: np.ndarray           # [vx, vy, yaw_rate] means while alive
    direction_ok: bool
    upper_ok: bool | None          # None when undefined for the motion family
    states: np.ndarray
    actions: np.ndarray

    @property
    def survival_seconds(self) -> float:
        return self.survival_steps * 0.02


def _upper_success(text: str, dof_pos: np.ndarray) -> bool | None:
    """Wave-family check: the commanded hand's shoulder oscillates most."""
    label = text.split(" and ", 1)[1] if " and " in text else ""
    amp_l = float(dof_pos[:, 6].max() - dof_pos[:, 6].min())
    amp_r = float(dof_pos[:, 8].max() - dof_pos[:, 8].min())
    if "wave left" in label:
        return amp_l >= 0.3 and amp_l >= 2.0 * amp_r
    if "wave right" in label:
        return amp_r >= 0.3 and amp_r >= 2.0 * amp_l
    if "wave both" in label:
        return amp_l >= 0.3 and amp_r >= 0.3
    return None


def _direction_success(direction: str, states: np.ndarray, trans: np.ndarray,
                       heading: np.ndarray) -> bool:
    sx, sy, syaw = DIRECTIONS[direction][2]
    disp = trans[-1] - trans[0]
    if direction == "stand":
        return bool(np.linalg.norm(disp) < 0.25)
    if syaw:
        return bool(syaw * (heading[-1] - heading[0]) > 0)
    return bool(disp[0] * sx + disp[1] * sy > 0)


def _run_episode(actions_fn, text: str, env_cfg: EnvConfig, max_steps: int,
                 seed: int) -> FmEpisode:
    """Shared CL/OL execution: actions_fn(t, state_feats_row) -> 11 actions."""
    from .env import (IDX_HEADING, IDX_PX, IDX_PY, IDX_QLEG, IDX_QU)
    direction, level, cmd3 = parse_text_command(text)
    batch = SurrogateBatch(env_cfg, 1)
    batch.reset_env(0, seed, dr_enabled=False)
    cmd = np.concatenate([cmd3, [0.0, 0.0]])[None]
    states_log = np.empty((max_steps, STATE_FEATS))
    acts_log = np.empty((max_steps, ACT_DIM))
    trans_log = np.empty((max_steps, 2))
    head_log = np.empty(max_steps)
    vel_log = np.empty((max_steps, 3))
    surv = max_steps
    for t in range(max_steps):
        st = batch.state[0]
        feats = np.concatenate([state_features(st[None])[0],
                                np.concatenate([st[IDX_QLEG:IDX_QLEG + 6],
                                                st[IDX_QU:IDX_QU + 5]])])
        a = actions_fn(t, feats)
        if a is None:
            surv = t
            break
        _, info = batch.step(a[None, :N_LOWER_ACT], a[None, N_LOWER_ACT:], cmd)
        st = batch.state[0]
        states_log[t] = feats
        acts_log[t] = a
        trans_log[t] = st[[IDX_PX, IDX_PY]]
        head_log[t] = st[IDX_HEADING]
        vel_log[t] = [st[3], st[4], st[5]]
        if info[0, 0] > 0.5:
            surv = t + 1
            break
    n = max(surv, 1)
    dof = states_log[:n, 10:21]
    ep = FmEpisode(
        text=text, survival_steps=surv, max_steps=max_steps,
        mean_vel=vel_log[:n].mean(axis=0),
        direction_ok=_direction_success(direction, states_log[:n],
                                        trans_log[:n], head_log[:n]),
        upper_ok=_upper_success(text, dof),
        states=states_log[:n].copy(), actions=acts_log[:n].copy())
    return ep


def closed_loop_rollout(model: FmModel, text: str, env_cfg: EnvConfig,
                        max_steps: int = 400, seed: int = 0) -> FmEpisode:
    """Execute the latest prediction each step, sliding the H-window."""
    H = model.cfg.context
    history = []

    def actions_fn(t, feats):
        if not history:
            a = model.first_action(text)
        else:
            window = np.stack([h for h in history[-H:]])
            a = model.predict(text, window)[min(len(history), H) - 1]
        history.append(np.concatenate([feats, a]))
        return a

    return _run_episode(actions_fn, text, env_cfg, max_steps, seed)


def open_loop_rollout(ol: OlModel, text: str, env_cfg: EnvConfig,
                      max_steps: int = 400, seed: int = 0) -> FmEpisode:
    """Decode the whole sequence from text, then execute without feedback."""
    plan = ol.generate_actions(text, n_steps=max_steps)

    def actions_fn(t, feats):
        if t >= plan.shape[0]:
            return None
        return plan[t]

    return _run_episode(actions_fn, text, env_cfg, max_steps, seed)


def episodes_table(episodes: list) -> list:
    """Rows shaped like the survival/success summary tables."""
    rows = []
    for ep in episodes:
        rows.append({
            "command": ep.text,
            "SR_low": 1.0 if ep.direction_ok else 0.0,
            "SR_up": ("" if ep.upper_ok is None else (1.0 if ep.upper_ok else 0.0)),
            "SD": round(ep.survival_seconds, 3),
            "vbar_x": round(float(ep.mean_vel[0]), 4),
            "vbar_y": round(float(ep.mean_vel[1]), 4),
            "omegabar": round(float(ep.mean_vel[2]), 4),
        })
    return rows


def write_episodes_csv(path, episodes: list) -> None:
    import csv
    rows = episodes_table(episodes)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["command", "SR_low", "SR_up", "SD",
                                           "vbar_x", "vbar_y", "omegabar"])
        w.writeheader()
        for r in rows:
            w.writerow(r)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_fm(path, model: FmModel) -> None:
    meta = {"cfg": model.cfg.__dict__, "vocab": model.vocab.words}
    save_blob(path, "fm-model", meta,
              {"flat": model.get_flat(), "feat_mean": model.feat_mean,
               "feat_std": model.feat_std})


def load_fm(path) -> FmModel:
    meta, arrays = load_blob(path, "fm-model")
    model = FmModel(FmConfig(**meta["cfg"]), Vocab(meta["vocab"]),
                    feat_mean=arrays["feat_mean"], feat_std=arrays["feat_std"])
    model.set_flat(arrays["flat"])
    return model
