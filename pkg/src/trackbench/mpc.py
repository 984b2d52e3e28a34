"""Receding-horizon control over the kinematic bicycle model.

Each control step builds p reference states by arc-length lookahead along
the track, then minimizes a quadratic tracking cost over an m-step control
sequence with a derivative-free compass (pattern) search: coordinate probes
with shrinking steps, every iterate projected onto the hard input bounds.
The search draws no random numbers, so results are bit-for-bit
reproducible; the opt.seed config key is accepted for interface
compatibility but unused.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .models import VehicleParams, clamp
from .track import Track


@dataclass(frozen=True)
class MpcWeights:
    pos: float = 1.0
    head: float = 3.0
    vel: float = 0.3
    d_accel: float = 0.05
    d_steer: float = 1.0

    def __post_init__(self) -> None:
        for name in ("pos", "head", "vel", "d_accel", "d_steer"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"weight {name} must be >= 0")


@dataclass(frozen=True)
class MpcBounds:
    """Hard input bounds plus soft (penalized) envelope bounds.

    Rate bounds and v_max are soft: violations cost soft_penalty*excess^2.
    A non-positive soft bound disables that term.
    """

    accel_min: float = -6.0
    accel_max: float = 3.0
    steer_max: float = math.radians(35.0)
    accel_rate: float = 0.0
    steer_rate: float = 0.0
    v_max: float = 0.0
    soft_penalty: float = 10.0

    def __post_init__(self) -> None:
        if not self.accel_min < self.accel_max:
            raise ValueError("accel_min must be < accel_max")
        if not self.steer_max > 0.0:
            raise ValueError("steer_max must be > 0")
        if self.soft_penalty < 0.0:
            raise ValueError("soft_penalty must be >= 0")


@dataclass(frozen=True)
class OptSettings:
    max_iter: int = 60
    tol: float = 1e-4
    seed: int = 0

    def __post_init__(self) -> None:
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.tol > 0.0:
            raise ValueError("tol must be > 0")


@dataclass(frozen=True)
class MpcConfig:
    ts: float = 0.05
    p: int = 20
    m: int = 4
    weights: MpcWeights = field(default_factory=MpcWeights)
    bounds: MpcBounds = field(default_factory=MpcBounds)
    opt: OptSettings = field(default_factory=OptSettings)
    latency_steps: int = 0

    def __post_init__(self) -> None:
        if not self.ts > 0.0:
            raise ValueError("ts must be > 0")
        if not 1 <= self.m <= self.p:
            raise ValueError("need 1 <= m <= p")
        if self.latency_steps < 0:
            raise ValueError("latency_steps must be >= 0")


@dataclass
class OptResult:
    seq: np.ndarray
    pred: np.ndarray
    cost: float
    status: str  # converged | iteration-capped
    iterations: int
    evaluations: int


def control_at(seq: np.ndarray, i: int) -> tuple[float, float]:
    """Sequence entry with the hold-last rule beyond m."""
    j = min(i, seq.shape[0] - 1)
    return float(seq[j, 0]), float(seq[j, 1])


def predict(
    state: tuple[float, float, float, float],
    seq: np.ndarray,
    cfg: MpcConfig,
    params: VehicleParams,
) -> np.ndarray:
    """Roll the kinematic plant p steps at Ts; rows are (x, y, theta, v)."""
    out = np.empty((cfg.p, 4))
    kernels.kin_rollout(
        state[0], state[1], state[2], state[3],
        np.ascontiguousarray(seq, dtype=np.float64),
        cfg.ts, params.wheelbase, params.dist_rear, out,
    )
    return out


def stage_cost(
    pred: np.ndarray,
    refs: np.ndarray,
    seq: np.ndarray,
    prev_u: tuple[float, float],
    cfg: MpcConfig,
) -> float:
    """Reference cost evaluation (readable numpy form).

    The optimizer uses the fused kernel; this function states the same sum
    and the tests pin their agreement.
    """
    p = pred.shape[0]
    if refs.shape[0] != p:
        raise ValueError(f"need {p} reference states, got {refs.shape[0]}")
    w = cfg.weights
    b = cfg.bounds
    cost = 0.0
    pa, pd = prev_u
    for i in range(p):
        a, d = control_at(seq, i)
        da = a - pa
        dd = d - pd
        cost += w.d_accel * da * da + w.d_steer * dd * dd
        if b.accel_rate > 0.0:
            ex = abs(da) - b.accel_rate * cfg.ts
            if ex > 0.0:
                cost += b.soft_penalty * ex * ex
        if b.steer_rate > 0.0:
            ex = abs(dd) - b.steer_rate * cfg.ts
            if ex > 0.0:
                cost += b.soft_penalty * ex * ex
        pa, pd = a, d
        dx = pred[i, 0] - refs[i, 0]
        dy = pred[i, 1] - refs[i, 1]
        eh = kernels.wrap_angle(pred[i, 2] - refs[i, 2])
        ev = refs[i, 3] - pred[i, 3]
        cost += w.pos * (dx * dx + dy * dy) + w.head * eh * eh + w.vel * ev * ev
        if b.v_max > 0.0:
            over = pred[i, 3] - b.v_max
            if over > 0.0:
                cost += b.soft_penalty * over * over
    return float(cost)


def _project(seq: np.ndarray, b: MpcBounds) -> np.ndarray:
    np.clip(seq[:, 0], b.accel_min, b.accel_max, out=seq[:, 0])
    np.clip(seq[:, 1], -b.steer_max, b.steer_max, out=seq[:, 1])
    return seq


def optimize(
    state: tuple[float, float, float, float],
    refs: np.ndarray,
    prev_u: tuple[float, float],
    cfg: MpcConfig,
    params: VehicleParams,
    warm: np.ndarray | None = None,
) -> OptResult:
    """Compass search over the (m, 2) control sequence."""
    b = cfg.bounds
    w = cfg.weights
    refs = np.ascontiguousarray(refs, dtype=np.float64)
    x, y, theta, v = state

    def cost_of(seq: np.ndarray) -> float:
        return kernels.mpc_cost(
            x, y, theta, v, seq, prev_u[0], prev_u[1], refs,
            cfg.ts, params.wheelbase, params.dist_rear,
            w.pos, w.head, w.vel, w.d_accel, w.d_steer,
            b.v_max, b.accel_rate, b.steer_rate, b.soft_penalty,
        )

    if warm is not None and warm.shape == (cfg.m, 2):
        seq = warm.astype(np.float64).copy()
    else:
        seq = np.tile(np.array(prev_u, dtype=np.float64), (cfg.m, 1))
    _project(seq, b)

    # per-channel probe steps: a quarter of each admissible range
    step_a = 0.25 * (b.accel_max - b.accel_min)
    step_d = 0.5 * b.steer_max
    min_a = 1e-4 * (b.accel_max - b.accel_min)
    min_d = 2e-4 * b.steer_max

    best = cost_of(seq)
    evals = 1
    status = "iteration-capped"
    iterations = 0
    for _ in range(cfg.opt.max_iter):
        iterations += 1
        swept_from = best
        improved = False
        for row in range(cfg.m):
            for col in range(2):
                step = step_a if col == 0 else step_d
                base = seq[row, col]
                for sign in (1.0, -1.0):
                    cand = base + sign * step
                    if col == 0:
                        cand = clamp(cand, b.accel_min, b.accel_max)
                    else:
                        cand = clamp(cand, -b.steer_max, b.steer_max)
                    if cand == seq[row, col]:
                        continue
                    old = seq[row, col]
                    seq[row, col] = cand
                    c = cost_of(seq)
                    evals += 1
                    if c < best:
                        best = c
                        improved = True
                        break
                    seq[row, col] = old
        at_floor = step_a <= min_a and step_d <= min_d
        if improved:
            # improvement below tolerance only counts once probes are at
            # their finest resolution; stopping at coarse steps undershoots
            if at_floor and swept_from - best < cfg.opt.tol:
                status = "converged"
                break
        else:
            if at_floor:
                status = "converged"
                break
            step_a = max(0.5 * step_a, min_a)
            step_d = max(0.5 * step_d, min_d)

    pred = predict(state, seq, cfg, params)
    return OptResult(seq=seq, pred=pred, cost=float(best), status=status,
                     iterations=iterations, evaluations=evals)


def build_reference(
    track: Track,
    state: tuple[float, float, float, float],
    cfg: MpcConfig,
    hint: int | None = None,
) -> tuple[np.ndarray, int, bool]:
    """p reference rows (x, y, theta, v_ref) spaced v_ref*Ts along the arc.

    Returns (refs, nearest segment index, end_of_track flag); on open tracks
    the reference clamps to the final waypoint once the end is reached.
    """
    near = track.nearest(state[0], state[1], hint)
    refs = np.empty((cfg.p, 4))
    s = near.s
    end = False
    for i in range(cfg.p):
        v_here = track.v_ref_at_s(s)
        s_next = s + max(v_here, 0.1) * cfg.ts
        clamped = False
        if not track.closed and s_next >= track.length:
            s_next = track.length
            end = True
            clamped = True
        px, py = track.point_at_s(s_next)
        refs[i, 0] = px
        refs[i, 1] = py
        refs[i, 2] = track.tangent_at_s(s_next)
        # past the final waypoint the reference asks for a stop
        refs[i, 3] = 0.0 if clamped else track.v_ref_at_s(s_next)
        s = s_next
    return refs, near.index, end


class MpcController:
    """Stateful receding-horizon controller: warm start + latency queue."""

    def __init__(self, cfg: MpcConfig, params: VehicleParams):
        self.cfg = cfg
        self.params = params
        self.prev_u = (0.0, 0.0)
        self._warm: np.ndarray | None = None
        self._hint: int | None = None
        self._pending: list[tuple[float, float]] = []
        self.last_result: OptResult | None = None
        self.end_of_track = False

    def reset(self) -> None:
        self.prev_u = (0.0, 0.0)
        self._warm = None
        self._hint = None
        self._pending = []
        self.last_result = None
        self.end_of_track = False

    def step(self, state: tuple[float, float, float, float], track: Track) -> tuple[float, float]:
        cfg = self.cfg
        # latency compensation: forward-simulate through the commands already
        # issued but not yet acting on the plant
        sim = state
        for a, d in self._pending:
            sim = kernels.kin_step(
                sim[0], sim[1], sim[2], sim[3], a, d, cfg.ts,
                self.params.wheelbase, self.params.dist_rear,
            )
        refs, self._hint, end = build_reference(track, sim, cfg, self._hint)
        self.end_of_track = end
        result = optimize(sim, refs, self.prev_u, cfg, self.params, self._warm)
        self.last_result = result
        u = (float(result.seq[0, 0]), float(result.seq[0, 1]))
        # shift one step for the next warm start
        warm = np.empty_like(result.seq)
        warm[:-1] = result.seq[1:]
        warm[-1] = result.seq[-1]
        self._warm = warm
        self.prev_u = u
        if cfg.latency_steps > 0:
            self._pending.append(u)
            if len(self._pending) > cfg.latency_steps:
                self._pending.pop(0)
        return u


def design_params(t_r: float, t_s: float) -> dict[str, tuple[float, float]]:
    """Design-rule ranges for (Ts, p, m) from rise and settling times.

    Ts spans 5-10% of the rise time; p spans [t_s/Ts, 1.5*t_s/Ts] evaluated
    at the low end of the Ts range; m spans 10-20% of p evaluated at the low
    end of the p range (rounded up, floor 1).
    """
    if not (t_r > 0.0 and t_s > 0.0):
        raise ValueError("rise and settling times must be > 0")
    ts_lo = 0.05 * t_r
    ts_hi = 0.10 * t_r
    p_lo = int(round(t_s / ts_lo))
    p_hi = int(round(1.5 * t_s / ts_lo))
    m_lo = max(math.ceil(0.1 * p_lo), 1)
    m_hi = max(math.ceil(0.2 * p_lo), 1)
    return {"ts": (ts_lo, ts_hi), "p": (p_lo, p_hi), "m": (m_lo, m_hi)}
