"""Master-slave polling over 2.4 GHz with adaptive channel hopping.

One master beacons on three fixed sync channels, polls each wearable in
a fixed TDMA order on the current data channel, and hops along a seeded
permutation of the data channels when a streak of losses coincides with
a busy carrier. Slaves never transmit unsolicited: each answers its own
poll slot, follows announced hops, probes forward along the shared hop
chain when the master goes quiet, and falls back to scanning the sync
channels after the resync timeout.

A connection-based baseline in the style of a BLE link layer runs the
same sensors as independent links with per-event retries and supervision
resets; it is the comparison point for the polling design.

All state advances through the discrete-event scheduler in radio.py, so
two runs with equal seeds produce byte-identical results.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Callable, Sequence

from . import radio
from . import randomness as rnd
from .pipeline import RecordingFrame, rate_series
from .quatmath import Quaternion
from .radio import ChannelPlan, InterferenceField, Transmission

Sampler = Callable[[int, float], Quaternion]


class ConfigError(ValueError):
    """Session configuration that cannot run."""


@dataclass(frozen=True)
class TimingProfile:
    """Air and turnaround times of the polling link.

    The radio runs at 2 Mbps, so one byte takes 4 us of air. A complete
    successful slot is poll + response + ack with three turnarounds and
    a guard: 708 us, followed by the host-side cost of ingesting the
    sample. The poll cap bounds the per-sensor rate from above.
    """

    us_per_byte: float = 4.0
    poll_bytes: int = 12
    response_bytes: int = 32
    beacon_bytes: int = 16
    hop_bytes: int = 12
    ack_bytes: int = 8
    turnaround_us: float = 150.0
    guard_us: float = 50.0
    host_cost_us: float = 1400.0
    poll_cap_hz: float = 60.0
    beacon_interval_ms: float = 20.0
    resync_timeout_ms: float = 200.0

    def __post_init__(self) -> None:
        if self.poll_cap_hz <= 0 or self.us_per_byte <= 0:
            raise ValueError("poll_cap_hz and us_per_byte must be positive")

    def airtime_us(self, nbytes: int) -> float:
        return self.us_per_byte * nbytes

    @property
    def poll_air_us(self) -> float:
        return self.airtime_us(self.poll_bytes)

    @property
    def response_air_us(self) -> float:
        return self.airtime_us(self.response_bytes)

    @property
    def beacon_air_us(self) -> float:
        return self.airtime_us(self.beacon_bytes)

    @property
    def hop_air_us(self) -> float:
        return self.airtime_us(self.hop_bytes)

    @property
    def ack_air_us(self) -> float:
        return self.airtime_us(self.ack_bytes)

    @property
    def slot_us(self) -> float:
        return (self.poll_air_us + self.turnaround_us + self.response_air_us
                + self.turnaround_us + self.ack_air_us + self.turnaround_us
                + self.guard_us)

    @property
    def cap_period_us(self) -> float:
        return 1e6 / self.poll_cap_hz

    @property
    def resync_us(self) -> float:
        return self.resync_timeout_ms * 1000.0

    @property
    def scan_dwell_us(self) -> float:
        # Twice the beacon interval, so a full dwell on one sync channel
        # always contains at least one beacon burst.
        return 2.0 * self.beacon_interval_ms * 1000.0


@dataclass(frozen=True)
class HopPolicy:
    """When and where the master changes data channel."""

    loss_threshold: int = 3
    loss_window: int = 8
    blacklist_size: int = 8
    announce_repeats: int = 3
    assess_us: float = 2000.0
    probe_gap_ms: float = 35.0
    walk_dwell_ms: float = 20.0

    def __post_init__(self) -> None:
        if not 1 <= self.loss_threshold <= self.loss_window:
            raise ValueError("loss_threshold must be within the loss window")
        if self.announce_repeats < 1:
            raise ValueError("announce_repeats must be at least 1")


@dataclass(frozen=True)
class TraceRow:
    """One transmission as seen by the session log."""

    time_us: float
    duration_us: float
    source: str
    channel: int
    kind: str
    frame_type: str
    sensor_id: int
    outcome: str


class HopSequencer:
    """Walks a seeded permutation of the data channels.

    Both ends derive the same chain from the session seed, so a slave
    that knows the master's last position can predict the next channels.
    A short blacklist keeps recently abandoned channels out of play.
    """

    def __init__(self, plan: ChannelPlan, policy: HopPolicy, seed: int) -> None:
        order = rnd.stream(seed, rnd.PROTOCOL).permutation(len(plan.data))
        self.chain: list[int] = [plan.data[i] for i in order]
        self._pos = {ch: i for i, ch in enumerate(self.chain)}
        self.cursor = -1
        self.current: int | None = None
        self.blacklist: deque[int] = deque(maxlen=policy.blacklist_size)

    def seek(self, channel: int) -> None:
        """Align the cursor with an externally chosen starting channel."""
        if channel not in self._pos:
            raise ConfigError(f"channel {channel} is not a data channel")
        self.cursor = self._pos[channel]
        self.current = channel

    def position(self, channel: int) -> int:
        return self._pos[channel]

    def _select(self) -> tuple[int, int]:
        n = len(self.chain)
        for step in range(1, n + 1):
            pos = (self.cursor + step) % n
            cand = self.chain[pos]
            if cand != self.current and cand not in self.blacklist:
                return pos, cand
        raise RuntimeError("hop chain exhausted")

    def preview(self) -> int:
        return self._select()[1]

    def advance(self) -> int:
        pos, cand = self._select()
        if self.current is not None:
            self.blacklist.append(self.current)
        self.cursor, self.current = pos, cand
        return cand


def select_next_channel(sequencer: HopSequencer) -> int:
    """Next data channel under the blacklist rule; never a sync channel."""
    return sequencer.advance()


class SlaveUnit:
    """Receiver-side state of one wearable.

    Slaves hold no timers of their own; the channel they listen on is a
    pure function of the last master frame they heard and the current
    time, so the simulation evaluates them lazily at each transmission.
    """

    def __init__(self, sensor_id: int, plan: ChannelPlan, timing: TimingProfile,
                 policy: HopPolicy, chain: Sequence[int]) -> None:
        self.sensor_id = sensor_id
        self._sync = plan.sync
        self._chain = list(chain)
        self._dwell = timing.scan_dwell_us
        self._resync = timing.resync_us
        self._probe_gap = policy.probe_gap_ms * 1000.0
        self._walk = policy.walk_dwell_ms * 1000.0
        self.phase = "scanning"
        self.scan_start_us = 0.0
        self.channel: int | None = None
        self.chain_pos = 0
        self.last_heard_us = 0.0
        # True once a data-channel frame arrived; a fresh joiner has no
        # polling rhythm to lose, so it holds the announced channel
        # instead of probing when its first poll is slow to come.
        self.rhythm = False
        self.seq = 0
        self.resyncs = 0

    def listening_channel(self, t_us: float) -> int:
        if self.phase == "synced":
            silence = t_us - self.last_heard_us
            if silence > self._resync:
                # Gave up on the data channel; rescan for beacons.
                self.phase = "scanning"
                self.scan_start_us = self.last_heard_us + self._resync
                self.resyncs += 1
            elif silence <= self._probe_gap or not self.rhythm:
                return self.channel
            else:
                # Assume a missed hop: walk forward along the chain.
                steps = 1 + int((silence - self._probe_gap) // self._walk)
                return self._chain[(self.chain_pos + steps) % len(self._chain)]
        idx = int((t_us - self.scan_start_us) // self._dwell) % len(self._sync)
        return self._sync[idx]

    def hears(self, start_us: float, end_us: float, channel: int) -> bool:
        """Tuned to this channel for the whole frame."""
        return (self.listening_channel(start_us) == channel
                and self.listening_channel(end_us) == channel)

    def heard_master(self, channel: int, chain_pos: int, t_end_us: float,
                     rhythm: bool = True) -> None:
        self.phase = "synced"
        self.channel = channel
        self.chain_pos = chain_pos
        self.last_heard_us = t_end_us
        self.rhythm = rhythm


@dataclass
class SessionResult:
    """Everything a protocol run produced."""

    protocol: str
    duration_us: float
    roster: tuple[int, ...]
    frames: list[RecordingFrame]
    trace: list[TraceRow]
    hop_count: int
    resync_count: int
    host_dropped: dict[int, int]
    channel_history: list[tuple[float, int]]


def _check_roster(roster: Sequence[int], limit: int) -> tuple[int, ...]:
    ids = tuple(int(s) for s in roster)
    if not 1 <= len(ids) <= limit:
        raise ConfigError(f"roster size {len(ids)} outside 1..{limit}")
    if len(set(ids)) != len(ids):
        raise ConfigError(f"roster {ids} repeats a sensor id")
    for s in ids:
        if not 1 <= s <= 12:
            raise ConfigError(f"sensor id {s} outside 1..12")
    return ids


def master_run(roster: Sequence[int], duration_s: float, sampler: Sampler,
               field: InterferenceField, seed: int, *,
               plan: ChannelPlan | None = None,
               timing: TimingProfile | None = None,
               policy: HopPolicy | None = None,
               p_floor: float = 0.0,
               initial_channel: int = 40) -> SessionResult:
    """Run one polling session and return its frames, trace, and counters."""
    plan = plan or ChannelPlan.default()
    timing = timing or TimingProfile()
    policy = policy or HopPolicy()
    ids = _check_roster(roster, 12)
    if duration_s <= 0:
        raise ConfigError(f"duration_s must be positive, got {duration_s}")
    duration_us = duration_s * 1e6

    seq = HopSequencer(plan, policy, seed)
    seq.seek(initial_channel)
    slaves = {s: SlaveUnit(s, plan, timing, policy, seq.chain) for s in ids}
    joined = {s: False for s in ids}
    last_ok = {s: -math.inf for s in ids}
    loss: deque[bool] = deque(maxlen=policy.loss_window)
    floor_rng = rnd.stream(seed, rnd.FLOOR) if p_floor > 0 else None

    sched = radio.EventScheduler()
    frames: list[RecordingFrame] = []
    trace: list[TraceRow] = []
    channel_history: list[tuple[float, int]] = [(0.0, seq.current)]
    counters = {"hops": 0}

    def tx(source: str, start: float, dur: float, ch: int,
           frame_type: str, sensor_id: int) -> str:
        t = Transmission(source, start, dur, plan.band(ch), channel=ch)
        outcome = radio.arbitrate(t, field, (), p_floor, floor_rng)
        trace.append(TraceRow(start, dur, source, ch, "cw", frame_type,
                              sensor_id, outcome))
        return outcome

    def poll_exchange(s: int):
        slave = slaves[s]
        ch = seq.current
        start = sched.now
        p_out = tx("master", start, timing.poll_air_us, ch, "poll", s)
        heard = (p_out == radio.DELIVERED
                 and slave.hears(start, start + timing.poll_air_us, ch))
        if heard:
            slave.heard_master(ch, seq.cursor, start + timing.poll_air_us)
        yield timing.poll_air_us + timing.turnaround_us
        delivered = False
        if heard:
            slave.seq += 1
            q = sampler(s, sched.now)
            r_out = tx(f"sensor:{s}", sched.now, timing.response_air_us, ch,
                       "response", s)
            yield timing.response_air_us
            if r_out == radio.DELIVERED:
                delivered = True
                frames.append(RecordingFrame.quantized(
                    int(round(sched.now)), s, slave.seq, q, 3))
                last_ok[s] = sched.now
        else:
            # Nothing came back; the master still waits out the slot.
            yield timing.response_air_us
        loss.append(delivered)
        if delivered:
            yield timing.turnaround_us
            a_start = sched.now
            a_out = tx("master", a_start, timing.ack_air_us, ch, "ack", s)
            if (a_out == radio.DELIVERED
                    and slaves[s].hears(a_start, a_start + timing.ack_air_us, ch)):
                slaves[s].heard_master(ch, seq.cursor, a_start + timing.ack_air_us)
            yield (timing.ack_air_us + timing.turnaround_us + timing.guard_us
                   + timing.host_cost_us)
        else:
            yield timing.guard_us
            yield from maybe_hop()

    def maybe_hop():
        # Hop only when the loss window tripped AND the carrier is
        # actually busy; transient losses never cause a hop.
        if sum(1 for ok in loss if not ok) < policy.loss_threshold:
            return
        busy = field.busy(plan.band(seq.current), sched.now,
                          sched.now + policy.assess_us)
        yield policy.assess_us
        if not busy:
            return
        nxt = seq.preview()
        nxt_pos = seq.position(nxt)
        for _ in range(policy.announce_repeats):
            h_start = sched.now
            h_out = tx("master", h_start, timing.hop_air_us, seq.current, "hop", 0)
            if h_out == radio.DELIVERED:
                for slave in slaves.values():
                    if slave.hears(h_start, h_start + timing.hop_air_us, seq.current):
                        slave.heard_master(nxt, nxt_pos, h_start + timing.hop_air_us)
            yield timing.hop_air_us + timing.turnaround_us
        yield timing.guard_us
        seq.advance()
        counters["hops"] += 1
        channel_history.append((sched.now, seq.current))

    def beacon_burst():
        pending = [s for s in ids if not joined[s]]
        for c in plan.sync:
            b_start = sched.now
            b_out = tx("master", b_start, timing.beacon_air_us, c, "beacon", 0)
            responders = set()
            if b_out == radio.DELIVERED:
                for s in pending:
                    if slaves[s].hears(b_start, b_start + timing.beacon_air_us, c):
                        slaves[s].heard_master(seq.current, seq.cursor,
                                               b_start + timing.beacon_air_us,
                                               rhythm=False)
                        responders.add(s)
            yield timing.beacon_air_us
            for s in pending:
                yield timing.turnaround_us
                if s in responders:
                    j_start = sched.now
                    j_out = tx(f"sensor:{s}", j_start, timing.response_air_us, c,
                               "join", s)
                    if j_out == radio.DELIVERED:
                        joined[s] = True
                        last_ok[s] = j_start + timing.response_air_us
                yield timing.response_air_us
            yield timing.guard_us

    def master():
        # Leave a channel that is busy right now before inviting anyone.
        for _ in range(len(seq.chain)):
            busy = field.busy(plan.band(seq.current), sched.now,
                              sched.now + policy.assess_us)
            yield policy.assess_us
            if not busy:
                break
            seq.advance()
            counters["hops"] += 1
            channel_history.append((sched.now, seq.current))
        last_burst = -math.inf
        while sched.now < duration_us:
            cycle_start = sched.now
            for s in ids:
                if not joined[s]:
                    continue
                if sched.now - last_ok[s] > timing.resync_us:
                    joined[s] = False
                    continue
                yield from poll_exchange(s)
                if sched.now >= duration_us:
                    return
            if (not all(joined.values())
                    and sched.now - last_burst >= timing.beacon_interval_ms * 1000.0):
                last_burst = sched.now
                yield from beacon_burst()
            yield max(cycle_start + timing.cap_period_us - sched.now, 0.0)

    sched.spawn(0, master())
    sched.run_until(duration_us)
    resyncs = sum(sl.resyncs for sl in slaves.values())
    return SessionResult("cw", duration_us, ids, frames, trace,
                         counters["hops"], resyncs, {s: 0 for s in ids},
                         channel_history)


# Connection-based baseline ------------------------------------------------

_BLE_CHANNELS = 37
_BLE_INTERVAL_US = 15_000.0
_BLE_TX_US = 128.0
_BLE_RECONNECT_US = 1_000_000.0
_BLE_FAIL_LIMIT = 8
_HOST_RATE_HZ = 60.0
_HOST_BURST = 2.0


def csa1_next(channel: int, increment: int) -> int:
    """Next data channel of a link: (channel + increment) mod 37."""
    return (channel + increment) % _BLE_CHANNELS


def ble_center_mhz(channel: int) -> int:
    """Center frequency of a data channel, skipping the advertising gaps."""
    if not 0 <= channel < _BLE_CHANNELS:
        raise ValueError(f"data channel {channel} outside 0..36")
    if channel <= 10:
        return 2404 + 2 * channel
    return 2428 + 2 * (channel - 11)


def _ble_band(channel: int) -> tuple[float, float]:
    c = ble_center_mhz(channel)
    return (c - 1.0, c + 1.0)


def ble_baseline_run(roster: Sequence[int], duration_s: float, sampler: Sampler,
                     field: InterferenceField, seed: int, *,
                     p_floor: float = 0.0) -> SessionResult:
    """Run the same sensors as independent connection-based links.

    Each link holds a 15 ms connection event cadence: a fresh sample is
    enqueued every event, the head of the queue gets one transmission
    attempt on the next channel of its hop sequence, and eight straight
    failures drop the link for a one-second reconnect that flushes the
    queue. Delivered samples pass a 60 Hz token-bucket host cap.
    """
    ids = _check_roster(roster, 5)
    if duration_s <= 0:
        raise ConfigError(f"duration_s must be positive, got {duration_s}")
    duration_us = duration_s * 1e6

    sched = radio.EventScheduler()
    frames: list[RecordingFrame] = []
    trace: list[TraceRow] = []
    host_dropped = {s: 0 for s in ids}
    counters = {"resyncs": 0}
    ledger: deque[Transmission] = deque()
    floor_rng = rnd.stream(seed, rnd.FLOOR) if p_floor > 0 else None

    def node(s: int):
        rng = rnd.stream(seed, rnd.BLE, s)
        channel = int(rng.integers(0, _BLE_CHANNELS))
        increment = int(rng.integers(5, 17))
        queue: deque[tuple[int, Quaternion]] = deque()
        seq = 0
        fails = 0
        tokens = _HOST_BURST
        last_refill = 0.0
        yield float(rng.uniform(0.0, _BLE_INTERVAL_US))
        while sched.now < duration_us:
            seq += 1
            queue.append((seq, sampler(s, sched.now)))
            channel = csa1_next(channel, increment)
            start = sched.now
            t = Transmission(f"sensor:{s}", start, _BLE_TX_US,
                             _ble_band(channel), channel=channel)
            while ledger and ledger[0].end_us <= start:
                ledger.popleft()
            ledger.append(t)
            yield _BLE_TX_US
            outcome = radio.arbitrate(t, field, ledger, p_floor, floor_rng)
            trace.append(TraceRow(start, _BLE_TX_US, f"sensor:{s}", channel,
                                  "ble", "data", s, outcome))
            if outcome == radio.DELIVERED:
                fails = 0
                q_seq, q = queue.popleft()
                now = sched.now
                tokens = min(_HOST_BURST,
                             tokens + (now - last_refill) * _HOST_RATE_HZ / 1e6)
                last_refill = now
                if tokens >= 1.0:
                    tokens -= 1.0
                    frames.append(RecordingFrame.quantized(
                        int(round(now)), s, q_seq, q, 3))
                else:
                    host_dropped[s] += 1
                yield _BLE_INTERVAL_US - _BLE_TX_US
            else:
                fails += 1
                if fails >= _BLE_FAIL_LIMIT:
                    counters["resyncs"] += 1
                    queue.clear()
                    fails = 0
                    yield _BLE_RECONNECT_US - _BLE_TX_US
                else:
                    yield _BLE_INTERVAL_US - _BLE_TX_US

    for s in ids:
        sched.spawn(s, node(s))
    sched.run_until(duration_us)
    frames.sort(key=lambda f: (f.timestamp_us, f.sensor_id))
    return SessionResult("ble", duration_us, ids, frames, trace, 0,
                         counters["resyncs"], host_dropped, [])


# Metrics -------------------------------------------------------------------

_OUTCOME_KEYS = {radio.DELIVERED: "delivered", radio.COLLIDED: "collided",
                 radio.FLOOR_LOST: "floor_lost"}


def source_counts(trace: Sequence[TraceRow]) -> dict[str, dict[str, int]]:
    """Per-source conservation ledger: sent splits into the three outcomes."""
    out: dict[str, dict[str, int]] = {}
    for r in trace:
        c = out.setdefault(r.source, {"sent": 0, "delivered": 0,
                                      "collided": 0, "floor_lost": 0})
        c["sent"] += 1
        c[_OUTCOME_KEYS[r.outcome]] += 1
    return out


def session_metrics(result: SessionResult) -> dict:
    """Summary statistics of one session.

    Mean rate is (n-1)/span of each sensor's recorded frames; the
    minimum window rate slides a 1 s half-open window from the first
    delivery to the session end.
    """
    per_sensor: dict[str, dict] = {}
    data_kinds = ("response", "data")
    by_sensor_rows: dict[int, list[TraceRow]] = {s: [] for s in result.roster}
    for r in result.trace:
        if r.frame_type in data_kinds and r.sensor_id in by_sensor_rows:
            by_sensor_rows[r.sensor_id].append(r)
    for s in result.roster:
        fs = [f for f in result.frames if f.sensor_id == s]
        rows = by_sensor_rows[s]
        delivered = sum(1 for r in rows if r.outcome == radio.DELIVERED)
        mean = 0.0
        if len(fs) >= 2:
            span = (fs[-1].timestamp_us - fs[0].timestamp_us) / 1e6
            if span > 0:
                mean = (len(fs) - 1) / span
        if fs:
            series = rate_series(fs, 1.0, end_us=int(result.duration_us))[s]
            min_window = min((v for _, v in series), default=float(len(fs)))
        else:
            min_window = 0.0
        per_sensor[str(s)] = {
            "recorded": len(fs),
            "sent": len(rows),
            "delivered": delivered,
            "pdr": delivered / len(rows) if rows else 0.0,
            "mean_rate_hz": mean,
            "min_window_rate_hz": min_window,
            "host_dropped": result.host_dropped.get(s, 0),
        }
    lasts = [max(f.timestamp_us for f in result.frames if f.sensor_id == s)
             for s in result.roster
             if any(f.sensor_id == s for f in result.frames)]
    skew = max(lasts) - min(lasts) if lasts else 0
    return {
        "protocol": result.protocol,
        "duration_s": result.duration_us / 1e6,
        "hop_count": result.hop_count,
        "resync_count": result.resync_count,
        "max_skew_us": skew,
        "per_sensor": per_sensor,
        "sources": source_counts(result.trace),
    }
