"""Per-episode simulation state: vehicles, their shards, channels, CPUs.

Every random quantity is drawn from a named substream of the run seed, and
the environment streams (partition, positions, fading, compute draws) are
kept apart from the training streams.  Two runs with the same seed therefore
see identical roads, channels and data *no matter which vehicles they
select*, which is what makes scheme comparisons paired.

The realisation digest folds in everything the environment draws, so tests
can assert that two schemes really did face the same world.
"""

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .channel import (ChannelState, LinkBudget, Position3, advance_position,
                      channel_correlation, complex_gaussian,
                      cos_bearing_angle, distance_to_antenna, doppler_freq,
                      evolve_channel, transmission_rate)
from .config import SimConfig
from .data import DataShard, LabeledBatch, partition, synthetic_blobs, load_csv
from .rng import substream


@dataclass
class VehicleSim:
    vid: int
    start_x: float
    x: float
    channel: ChannelState
    compute_hz: float
    shard: DataShard
    bad: bool


def build_dataset(cfg: SimConfig, seed: int) -> LabeledBatch:
    """The run's dataset: a CSV if configured, else seeded synthetic blobs."""
    if cfg.dataset_path:
        return load_csv(cfg.dataset_path)
    return synthetic_blobs(cfg.dataset_size, cfg.feature_dim,
                           substream(seed, "data"), cfg.blob_spread)


class World:
    """State of one episode, advanced slot by slot."""

    def __init__(self, cfg: SimConfig, dataset: LabeledBatch, seed: int,
                 phase: str, episode: int):
        self.cfg = cfg
        self.seed = seed
        self.phase = phase
        self.episode = episode
        self.slot = 0
        self.antenna = Position3(0.0, 0.0, cfg.rsu_height_m)
        self.link = LinkBudget(cfg.bandwidth_hz, cfg.tx_power_w,
                               cfg.noise_power_w, cfg.path_loss_exp)
        self._hash = hashlib.sha256()

        sizes = [cfg.shard_size] * cfg.vehicle_count
        if cfg.bad_vehicle >= 0:
            sizes[cfg.bad_vehicle] = max(1, cfg.shard_size
                                         // cfg.bad_shard_divisor)
        shards, rsu_batch, rest = partition(
            dataset, sizes, cfg.rsu_shard_size,
            substream(seed, "world", phase, episode, "partition"))
        self.rsu_batch = rsu_batch
        self.eval_batch = LabeledBatch(rest.inputs[:cfg.eval_size],
                                       rest.labels[:cfg.eval_size])
        self._rsu_digest = self._batch_digest(rsu_batch)

        pos_rng = substream(seed, "world", phase, episode, "positions")
        starts = pos_rng.uniform(cfg.start_x_min_m, cfg.start_x_max_m,
                                 size=cfg.vehicle_count)
        self._compute_rng = substream(seed, "world", phase, episode, "compute")
        self._channel_rngs = [
            substream(seed, "world", phase, episode, "channel", vid)
            for vid in range(cfg.vehicle_count)]

        computes = self._draw_computes()
        self.vehicles = []
        for vid in range(cfg.vehicle_count):
            bad = vid == cfg.bad_vehicle
            x = float(starts[vid])
            state = ChannelState(
                gain=complex_gaussian(self._channel_rngs[vid]),
                rho=self._rho_at(x), doppler_hz=self._doppler_at(x))
            shard = DataShard(owner=vid, batch=shards[vid], bad_node=bad)
            self.vehicles.append(VehicleSim(vid, x, x, state,
                                            float(computes[vid]), shard, bad))
            self._hash.update(shards[vid].labels.tobytes())
        self._hash.update(rsu_batch.labels.tobytes())
        self._hash.update(self.eval_batch.labels.tobytes())
        self._fold_slot_draws()

    # -- randomness ------------------------------------------------------

    def _draw_computes(self) -> np.ndarray:
        cfg = self.cfg
        a = (cfg.compute_min_hz - cfg.compute_mean_hz) / cfg.compute_std_hz
        b = (cfg.compute_max_hz - cfg.compute_mean_hz) / cfg.compute_std_hz
        draws = stats.truncnorm.rvs(a, b, loc=cfg.compute_mean_hz,
                                    scale=cfg.compute_std_hz,
                                    size=cfg.vehicle_count,
                                    random_state=self._compute_rng)
        if cfg.bad_vehicle >= 0:
            # a scaled truncated normal is again truncated normal, so the
            # weak vehicle's CPU keeps the divided statistics exactly
            draws[cfg.bad_vehicle] /= cfg.bad_compute_divisor
        return draws

    def train_rng(self, vid: int) -> np.random.Generator:
        """Minibatch shuffling stream, fresh per (slot, vehicle)."""
        return substream(self.seed, "train", self.phase, self.episode,
                         self.slot, vid)

    def rsu_train_rng(self) -> np.random.Generator:
        return substream(self.seed, "train", self.phase, self.episode,
                         self.slot, "rsu")

    def degrade_rng(self, vid: int) -> np.random.Generator:
        return substream(self.seed, "degrade", self.phase, self.episode,
                         self.slot, vid)

    # -- geometry and channel ---------------------------------------------

    def _vehicle_position(self, x: float) -> Position3:
        return Position3(x, self.cfg.lane_offset_m, 0.0)

    def _doppler_at(self, x: float) -> float:
        cos_theta = cos_bearing_angle(self._vehicle_position(x), self.antenna)
        return doppler_freq(self.cfg.speed_mps, self.cfg.wavelength_m,
                            cos_theta)

    def _rho_at(self, x: float) -> float:
        return channel_correlation(self._doppler_at(x), self.cfg.slot_seconds)

    def advance(self) -> None:
        """Move one slot: positions, fading and CPU draws all refresh."""
        self.slot += 1
        for veh in self.vehicles:
            veh.x = advance_position(veh.start_x, self.cfg.speed_mps,
                                     self.slot, self.cfg.slot_seconds)
            doppler = self._doppler_at(veh.x)
            rho = channel_correlation(doppler, self.cfg.slot_seconds)
            veh.channel = ChannelState(veh.channel.gain, rho, doppler)
            veh.channel = evolve_channel(
                veh.channel, complex_gaussian(self._channel_rngs[veh.vid]))
        computes = self._draw_computes()
        for veh, mu in zip(self.vehicles, computes):
            veh.compute_hz = float(mu)
        self._fold_slot_draws()

    def rates(self) -> np.ndarray:
        out = np.empty(self.cfg.vehicle_count)
        for veh in self.vehicles:
            dist = distance_to_antenna(self._vehicle_position(veh.x),
                                       self.antenna)
            out[veh.vid] = transmission_rate(self.link, veh.channel.gain,
                                             dist)
        return out

    def computes(self) -> np.ndarray:
        return np.array([v.compute_hz for v in self.vehicles])

    def positions(self) -> np.ndarray:
        return np.array([v.x for v in self.vehicles])

    def data_counts(self) -> np.ndarray:
        return np.array([len(v.shard.batch) for v in self.vehicles])

    # -- data views ---------------------------------------------------------

    def set_attacks(self, attacked_ids, kind: str) -> None:
        for vid in attacked_ids:
            self.vehicles[vid].shard.attack = kind
            self.vehicles[vid].shard.attacked = None
        self._hash.update(("attack:" + kind + ":"
                           + ",".join(str(v) for v in sorted(attacked_ids)))
                          .encode())

    def training_batch(self, vid: int) -> LabeledBatch:
        """What the vehicle trains on this slot, tampering included."""
        shard = self.vehicles[vid].shard
        if shard.attack != "none" and not self.cfg.attack_persistent \
                and self.slot % 2 == 1:
            return shard.batch  # transient tampering skips odd slots
        return shard.training_view()

    def rsu_batch_intact(self) -> bool:
        """Trusted shard must never pass through an attack path."""
        return self._batch_digest(self.rsu_batch) == self._rsu_digest

    @staticmethod
    def _batch_digest(batch: LabeledBatch) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(batch.inputs).tobytes())
        h.update(np.ascontiguousarray(batch.labels).tobytes())
        return h.hexdigest()

    # -- realisation digest ---------------------------------------------------

    def _fold_slot_draws(self) -> None:
        self._hash.update(np.array([v.x for v in self.vehicles]).tobytes())
        gains = np.array([v.channel.gain for v in self.vehicles],
                         dtype=complex)
        self._hash.update(gains.tobytes())
        self._hash.update(self.computes().tobytes())

    def digest(self) -> str:
        """Hash of everything the environment has drawn so far."""
        return self._hash.hexdigest()
