"""Scenario configuration and the closed bilateral teleoperation loop.

A scenario file (JSON, ``format: 1``) describes both arms, their plants, the
channel between them, the oscillation observer, the scripted human motion and
any contact planes. Running a scenario advances operator side, channel and
avatar side in lockstep 1 ms ticks and writes one CSV row per tick per
stream plus a JSON summary. Runs are deterministic: identical config and seed
produce byte-identical logs.

Intra-tick order: the operator consumes feedback delivered up to this tick,
computes and sends its command, then the avatar consumes commands (same-tick
delivery is possible at zero configured delay), computes its torque and sends
feedback readable by the operator from the next tick on.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .avatar_arm import AvatarArmController, ImpedanceGains, SafetyThresholds
from .ftcal import FtCalibration, compensate, predicted_wrench
from .geometry import Pose, matrix_to_quat, quat_conj, quat_rotate
from .kinematics import (
    IkParams,
    KinematicChain,
    damped_pinv,
    default_chain,
    link_frame,
    point_jacobian,
)
from .operator_arm import AvatarFeedback, OperatorArmController, OperatorGains
from .sigproc import ObserverConfig, OscillationObserver
from .sim import ArmPlant, Channel, ContactPlane, HumanHandModel, LatestWins, PoseScript, plant_hand_state


class ConfigError(ValueError):
    """Bad scenario file; the message carries file/key context."""


class NumericFault(RuntimeError):
    def __init__(self, tick, detail):
        super().__init__(f"non-finite state at tick {tick}: {detail}")
        self.tick = tick
        self.detail = detail


class SinusoidScript:
    """Axis sinusoid around a center pose, holding still before start_delay."""

    def __init__(self, center: Pose, axis, amplitude: float, frequency_hz: float,
                 start_delay_s: float = 0.0):
        self.center = center
        self.axis = np.asarray(axis, dtype=float)
        self.axis /= np.linalg.norm(self.axis)
        self.amplitude = amplitude
        self.frequency_hz = frequency_hz
        self.start_delay_s = start_delay_s

    def sample(self, t: float) -> Pose:
        if t <= self.start_delay_s:
            return self.center
        phase = 2.0 * np.pi * self.frequency_hz * (t - self.start_delay_s)
        offset = self.amplitude * np.sin(phase) * self.axis
        return Pose(self.center.translation + offset, self.center.rotation)


def _get(d: dict, key: str, default):
    return d[key] if key in d else default


def _require(d: dict, key: str, ctx: str):
    if key not in d:
        raise ConfigError(f"{ctx}: missing required key '{key}'")
    return d[key]


def _chain_from_cfg(side_cfg: dict, ctx: str) -> KinematicChain:
    name = _get(side_cfg, "chain", "panda")
    try:
        chain = KinematicChain.load(name) if name.endswith(".json") else default_chain(name)
    except FileNotFoundError as exc:
        raise ConfigError(f"{ctx}: chain '{name}' not found") from exc
    mount = _get(side_cfg, "mount", None)
    if mount is not None:
        chain = chain.with_mount(Pose(mount.get("translation", (0, 0, 0)),
                                      mount.get("rotation_quaternion", (0, 0, 0, 1))))
    return chain


@dataclass
class ScenarioConfig:
    name: str
    duration_s: float
    dt: float
    seed: int
    op_chain: KinematicChain
    av_chain: KinematicChain
    op_q0: np.ndarray
    av_q0: np.ndarray
    op_inertia: np.ndarray
    op_viscous: np.ndarray
    av_inertia: np.ndarray
    av_viscous: np.ndarray
    gains: OperatorGains
    impedance: ImpedanceGains
    safety: SafetyThresholds
    auto_restart_s: float
    sensor_calib: FtCalibration
    sensor_noise_sigma: float
    ch_op_to_av_ticks: int
    ch_av_to_op_ticks: int
    ch_jitter_ticks: int
    ch_drop_rate: float
    observer_enabled: bool
    observer: ObserverConfig
    script_cfg: dict
    human_cfg: dict
    contacts: list
    probe_joint: int
    probe_offset: Pose
    watchdog_s: float
    fade_s: float
    summary_settle_s: float
    raw: dict = field(default_factory=dict, repr=False)

    @staticmethod
    def from_file(path) -> "ScenarioConfig":
        text = Path(path).read_text()
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
        try:
            return ScenarioConfig.from_dict(d)
        except ConfigError as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    @staticmethod
    def from_dict(d: dict) -> "ScenarioConfig":
        if d.get("format") != 1:
            raise ConfigError(f"unsupported scenario format {d.get('format')!r}")
        name = _get(d, "name", "scenario")
        duration_s = float(_require(d, "duration_s", name))
        dt = float(_get(d, "dt_ms", 1)) / 1000.0
        if dt <= 0 or duration_s <= 0:
            raise ConfigError(f"{name}: duration and dt must be positive")
        seed = int(_get(d, "seed", 0))

        op = _get(d, "operator", {})
        av = _get(d, "avatar", {})
        op_chain = _chain_from_cfg(op, f"{name}.operator")
        av_chain = _chain_from_cfg(av, f"{name}.avatar")

        op_q0 = np.asarray(_get(op, "q0", op_chain.mid_position()), dtype=float)
        av_q0_cfg = _get(av, "q0", "same_as_operator")
        if isinstance(av_q0_cfg, str):
            if av_q0_cfg != "same_as_operator":
                raise ConfigError(f"{name}.avatar.q0: unknown keyword {av_q0_cfg!r}")
            av_q0 = op_q0.copy()
        else:
            av_q0 = np.asarray(av_q0_cfg, dtype=float)

        def plant_arrays(side, defaults_i, defaults_v, ctx):
            p = _get(side, "plant", {})
            inertia = np.asarray(_get(p, "inertia", defaults_i), dtype=float)
            viscous = np.asarray(_get(p, "viscous", defaults_v), dtype=float)
            if inertia.shape != (7,) or viscous.shape != (7,):
                raise ConfigError(f"{ctx}.plant: inertia/viscous need 7 entries")
            return inertia, viscous

        op_inertia, op_viscous = plant_arrays(op, np.full(7, 0.7), np.full(7, 1.5), f"{name}.operator")
        av_inertia, av_viscous = plant_arrays(av, np.full(7, 1.0), np.full(7, 2.0), f"{name}.avatar")

        gains_cfg = dict(_get(op, "gains", {}))
        ik_cfg = gains_cfg.pop("ik", {})
        known = set(OperatorGains.__dataclass_fields__)
        bad = set(gains_cfg) - known
        if bad:
            raise ConfigError(f"{name}.operator.gains: unknown keys {sorted(bad)}")
        gains = OperatorGains(**{k: v for k, v in gains_cfg.items()},
                              ik=IkParams(**ik_cfg) if ik_cfg else IkParams(max_iters=10, restarts=0))

        imp_cfg = dict(_get(av, "impedance", {}))
        bad = set(imp_cfg) - set(ImpedanceGains.__dataclass_fields__)
        if bad:
            raise ConfigError(f"{name}.avatar.impedance: unknown keys {sorted(bad)}")
        impedance = ImpedanceGains(**imp_cfg)

        saf_cfg = _get(av, "safety", {})
        safety = SafetyThresholds(force_n=_get(saf_cfg, "force_n", 40.0),
                                  torque_nm=_get(saf_cfg, "torque_nm", 20.0),
                                  joint_velocity=_get(saf_cfg, "joint_velocity", 2.6))

        sens = _get(av, "sensor", {})
        sensor_calib = FtCalibration(
            force_bias=_get(sens, "force_bias", (0.0, 0.0, 0.0)),
            torque_bias=_get(sens, "torque_bias", (0.0, 0.0, 0.0)),
            mass=_get(sens, "mass", 0.0),
            com=_get(sens, "com", (0.0, 0.0, 0.0)),
        )

        ch = _get(d, "channel", {})
        to_ticks = lambda ms: int(round(float(ms) / (dt * 1000.0)))
        ch_op_av = to_ticks(_get(ch, "operator_to_avatar_ms", 0))
        ch_av_op = to_ticks(_get(ch, "avatar_to_operator_ms", 0))
        ch_jitter = to_ticks(_get(ch, "jitter_ms", 0))
        drop = float(_get(ch, "drop_rate", 0.0))

        obs_cfg = dict(_get(d, "observer", {}))
        observer_enabled = bool(obs_cfg.pop("enabled", True))
        observer = ObserverConfig.from_dict(obs_cfg)

        script_cfg = _get(d, "script", {"mode": "hold"})
        human_cfg = _get(op, "human", {})

        contacts = []
        for i, c in enumerate(_get(d, "contacts", [])):
            try:
                contacts.append(ContactPlane(
                    point=_require(c, "point", f"{name}.contacts[{i}]"),
                    normal=_require(c, "normal", f"{name}.contacts[{i}]"),
                    stiffness=_get(c, "stiffness", 20000.0),
                    damping=_get(c, "damping", 50.0),
                    attachment=_get(c, "attachment", "hand"),
                ))
            except ValueError as exc:
                raise ConfigError(f"{name}.contacts[{i}]: {exc}") from exc

        probe_cfg = _get(d, "forearm_probe", {})
        probe_joint = int(_get(probe_cfg, "joint_index", 5))
        probe_offset = Pose(_get(probe_cfg, "offset", (0.0, 0.0, 0.15)))

        return ScenarioConfig(
            name=name, duration_s=duration_s, dt=dt, seed=seed,
            op_chain=op_chain, av_chain=av_chain, op_q0=op_q0, av_q0=av_q0,
            op_inertia=op_inertia, op_viscous=op_viscous,
            av_inertia=av_inertia, av_viscous=av_viscous,
            gains=gains, impedance=impedance, safety=safety,
            auto_restart_s=float(_get(av, "auto_restart_s", 0.5)),
            sensor_calib=sensor_calib,
            sensor_noise_sigma=float(_get(sens, "noise_sigma", 0.0)),
            ch_op_to_av_ticks=ch_op_av, ch_av_to_op_ticks=ch_av_op,
            ch_jitter_ticks=ch_jitter, ch_drop_rate=drop,
            observer_enabled=observer_enabled, observer=observer,
            script_cfg=script_cfg, human_cfg=human_cfg, contacts=contacts,
            probe_joint=probe_joint, probe_offset=probe_offset,
            watchdog_s=float(_get(av, "watchdog_s", 0.1)),
            fade_s=float(_get(av, "fade_s", 3.0)),
            summary_settle_s=float(_get(d, "summary_settle_s", 0.0)),
            raw=d,
        )


def _build_script(cfg: ScenarioConfig, start_pose: Pose):
    sc = cfg.script_cfg
    mode = _get(sc, "mode", "hold")
    if mode == "hold":
        return PoseScript([(0.0, start_pose)])
    if mode == "sinusoid":
        return SinusoidScript(
            start_pose,
            _get(sc, "axis", (0.0, 0.0, 1.0)),
            float(_require(sc, "amplitude_m", f"{cfg.name}.script")),
            float(_require(sc, "frequency_hz", f"{cfg.name}.script")),
            float(_get(sc, "start_delay_s", 0.0)),
        )
    if mode == "waypoints":
        pts = _require(sc, "points", f"{cfg.name}.script")
        waypoints = []
        for p in pts:
            t = float(_require(p, "t", f"{cfg.name}.script.points"))
            if "offset" in p:
                pose = Pose(start_pose.translation + np.asarray(p["offset"], dtype=float),
                            start_pose.rotation)
            else:
                pose = Pose(_require(p, "pos", f"{cfg.name}.script.points"),
                            _get(p, "quat", (0, 0, 0, 1)))
            waypoints.append((t, pose))
        return PoseScript(waypoints)
    raise ConfigError(f"{cfg.name}.script: unknown mode {mode!r}")


class _Log:
    """Column-labelled row accumulator written as CSV at the end of a run."""

    def __init__(self, columns):
        self.columns = columns
        self.rows = []

    def append(self, values):
        self.rows.append(values)

    def write(self, path):
        with open(path, "w") as f:
            f.write(",".join(self.columns) + "\n")
            for row in self.rows:
                f.write(",".join(repr(float(v)) for v in row) + "\n")


def _cols(prefix, n):
    return [f"{prefix}{i}" for i in range(n)]


OPERATOR_COLUMNS = (
    ["tick"] + _cols("q", 7) + _cols("qd", 7) + _cols("ft", 6)
    + _cols("alpha", 7) + ["beta"]
    + _cols("tau_cmd", 7) + _cols("tau_f", 7) + _cols("tau_lo", 7)
    + _cols("tau_la", 7) + _cols("tau_no", 7) + _cols("tau_co", 7)
    + _cols("tau_total", 7)
    + ["cmd_px", "cmd_py", "cmd_pz", "cmd_qx", "cmd_qy", "cmd_qz", "cmd_qw"]
    + _cols("qpred", 7) + ["fb_age"] + _cols("fb_q", 7)
)

AVATAR_COLUMNS = (
    ["tick", "mode", "fade"] + _cols("q", 7) + _cols("qd", 7)
    + ["px", "py", "pz", "qx", "qy", "qz", "qw"]
    + ["goal_px", "goal_py", "goal_pz", "goal_qx", "goal_qy", "goal_qz", "goal_qw"]
    + _cols("sensor_w", 6) + _cols("fpanda", 3) + _cols("contact_f", 3)
    + ["safety_stops"] + _cols("tau", 7)
)

OBSERVER_COLUMNS = ["tick", "amp_x", "amp_y", "amp_z", "v_raw", "beta_computed", "beta_used"]

CHANNEL_COLUMNS = ["tick", "direction", "send_tick", "delivery_tick", "accepted"]


class BilateralLoop:
    """Wires operator controller, avatar controller, plants and channel."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        seeds = np.random.SeedSequence(cfg.seed).spawn(4)
        self.ch_op_av = Channel(cfg.ch_op_to_av_ticks, cfg.ch_jitter_ticks,
                                cfg.ch_drop_rate, np.random.default_rng(seeds[0]))
        self.ch_av_op = Channel(cfg.ch_av_to_op_ticks, cfg.ch_jitter_ticks,
                                cfg.ch_drop_rate, np.random.default_rng(seeds[1]))
        self.human_rng = np.random.default_rng(seeds[2])
        self.sensor_rng = np.random.default_rng(seeds[3])

        self.op_plant = ArmPlant(cfg.op_chain, cfg.op_q0, inertia=cfg.op_inertia,
                                 viscous=cfg.op_viscous)
        self.av_plant = ArmPlant(cfg.av_chain, cfg.av_q0, inertia=cfg.av_inertia,
                                 viscous=cfg.av_viscous)
        rate = 1.0 / cfg.dt
        self.op_ctrl = OperatorArmController(cfg.op_chain, cfg.av_chain, cfg.gains,
                                             sample_rate_hz=rate)
        self.av_ctrl = AvatarArmController(cfg.av_chain, cfg.impedance, cfg.safety,
                                           sample_rate_hz=rate,
                                           watchdog_s=cfg.watchdog_s, fade_s=cfg.fade_s)
        self.observer = OscillationObserver(cfg.observer)

        start_pose, _, _, _, _ = plant_hand_state(self.op_plant)
        script = _build_script(cfg, start_pose)
        hm = cfg.human_cfg
        self.human = HumanHandModel(
            script,
            stiffness_trans=_get(hm, "stiffness_trans", 300.0),
            stiffness_rot=_get(hm, "stiffness_rot", 10.0),
            damping_trans=_get(hm, "damping_trans", 15.0),
            damping_rot=_get(hm, "damping_rot", 0.8),
            noise_sigma=_get(hm, "noise_sigma", 0.0),
            rng=self.human_rng,
        )
        self.op_mailbox = LatestWins()
        self.av_mailbox = LatestWins()
        self.brake_entry_tick = None
        self.restart_ticks = int(round(cfg.auto_restart_s / cfg.dt))
        # with an all-zero sensor model and no noise the bias/gravity model and
        # its compensation cancel identically; skip that round trip
        self._sensor_trivial = (cfg.sensor_noise_sigma == 0.0
                                and cfg.sensor_calib.mass == 0.0
                                and not np.any(cfg.sensor_calib.force_bias)
                                and not np.any(cfg.sensor_calib.torque_bias))

        self.log_operator = _Log(OPERATOR_COLUMNS)
        self.log_avatar = _Log(AVATAR_COLUMNS)
        self.log_observer = _Log(OBSERVER_COLUMNS)
        self.log_channel = _Log(CHANNEL_COLUMNS)

    # -- avatar-side sensing -------------------------------------------------

    def _avatar_contacts(self, pose, twist, J, R, p):
        """Hand-frame sensor wrench, world contact force and external torques."""
        cfg = self.cfg
        tau_ext = np.zeros(7)
        f_hand_world = np.zeros(3)
        for plane in cfg.contacts:
            if plane.attachment == "hand":
                vel_world = R @ twist[:3]
                f = plane.force_world(p, vel_world)
                if np.any(f):
                    f_hand_world += f
                    w_hand = np.concatenate([R.T @ f, np.zeros(3)])
                    tau_ext += J.T @ w_hand
            else:
                probe_R, probe_p = link_frame(cfg.av_chain, self.av_plant.q,
                                              cfg.probe_joint, cfg.probe_offset)
                Jp = point_jacobian(cfg.av_chain, self.av_plant.q, cfg.probe_joint, probe_p)
                probe_vel = Jp @ self.av_plant.qdot
                f = plane.force_world(probe_p, probe_vel)
                if np.any(f):
                    tau_ext += Jp.T @ f
        w_contact_sensor = np.concatenate([R.T @ f_hand_world, np.zeros(3)])
        return w_contact_sensor, f_hand_world, tau_ext

    # -- main loop -------------------------------------------------------------

    def run(self, out_dir=None, realtime: bool = False) -> dict:
        cfg = self.cfg
        dt = cfg.dt
        n_ticks = int(round(cfg.duration_s / dt))
        quat_hand = np.array([0.0, 0.0, 0.0, 1.0])
        wall_start = time.monotonic()

        for tick in range(n_ticks):
            # ---------------- operator side ----------------
            for delivery, send_tick, payload in self.ch_av_op.poll(tick):
                accepted = self.op_mailbox.offer(send_tick, payload)
                self.log_channel.append([tick, 1, send_tick, delivery, int(accepted)])
            fb = self.op_mailbox.payload

            fb_force = fb.wrench[:3] if fb is not None else np.zeros(3)
            beta_computed = self.observer.step(fb_force, dt)
            beta_used = beta_computed if cfg.observer_enabled else 1.0

            op_pose, op_twist, J_op, R_op, p_op = plant_hand_state(self.op_plant)
            t_now = tick * dt
            w_human = self.human.wrench(t_now, op_pose, op_twist)
            ft_reading = self.human.sensor_reading(w_human)

            breakdown, goal_pose = self.op_ctrl.tick(
                self.op_plant.q, self.op_plant.qdot, ft_reading, fb, beta_used, tick,
                frames=(J_op, op_pose))
            self.ch_op_av.send(goal_pose, tick)
            tau_ext_op = J_op.T @ w_human
            self.op_plant.step(breakdown.tau_total, tau_ext_op, dt)

            # ---------------- avatar side ----------------
            fresh_cmd = False
            for delivery, send_tick, payload in self.ch_op_av.poll(tick):
                accepted = self.av_mailbox.offer(send_tick, payload)
                fresh_cmd |= accepted
                self.log_channel.append([tick, 0, send_tick, delivery, int(accepted)])
            cmd = self.av_mailbox.payload if fresh_cmd else None

            av_pose, av_twist, J_av, R_av, p_av = plant_hand_state(self.av_plant)
            w_contact_sensor, f_contact_world, tau_ext_av = self._avatar_contacts(
                av_pose, av_twist, J_av, R_av, p_av)

            # raw sensor reading includes the modeled bias and attached mass,
            # which the calibration-based compensation removes again
            g_sensor = quat_rotate(quat_conj(av_pose.rotation), np.array([0.0, 0.0, -9.81]))
            raw = w_contact_sensor + predicted_wrench(cfg.sensor_calib, g_sensor)
            if cfg.sensor_noise_sigma > 0.0:
                raw = raw + self.sensor_rng.normal(0.0, cfg.sensor_noise_sigma, size=6)
            w_sensor = compensate(raw, av_pose.rotation, cfg.sensor_calib)

            A = J_av @ J_av.T
            A[np.diag_indices_from(A)] += 1e-6
            f_panda = np.linalg.solve(A, J_av @ tau_ext_av)[:3]

            tau_av = self.av_ctrl.tick(tick, cmd, self.av_plant.q, self.av_plant.qdot,
                                       w_sensor, frames=(J_av, av_pose))
            feedback = AvatarFeedback(wrench=w_sensor, ee_force=f_panda,
                                      q=self.av_plant.q.copy(), qdot=self.av_plant.qdot.copy(),
                                      mode=int(self.av_ctrl.mode), stamp=tick)
            self.ch_av_op.send(feedback, tick)

            if self.av_ctrl.brake_engaged:
                if self.brake_entry_tick is None:
                    self.brake_entry_tick = tick
                self.av_plant.brake()
                if tick - self.brake_entry_tick >= self.restart_ticks:
                    self.av_ctrl.request_restart(av_pose)
                    self.brake_entry_tick = None
            else:
                self.av_plant.step(tau_av, tau_ext_av, dt)

            # ---------------- checks and logging ----------------
            if not (np.isfinite(self.op_plant.q).all() and np.isfinite(self.op_plant.qdot).all()
                    and np.isfinite(self.av_plant.q).all() and np.isfinite(self.av_plant.qdot).all()
                    and np.isfinite(breakdown.tau_total).all() and np.isfinite(tau_av).all()):
                raise NumericFault(tick, "plant or torque state")

            bd = breakdown
            qpred = self.op_ctrl.predictor.q_pred
            self.log_operator.append(
                [tick, *self.op_plant.q, *self.op_plant.qdot, *ft_reading,
                 *bd.alpha, bd.beta,
                 *bd.tau_cmd, *bd.tau_f, *bd.tau_lo, *bd.tau_la, *bd.tau_no, *bd.tau_co,
                 *bd.tau_total,
                 *goal_pose.translation, *goal_pose.rotation,
                 *(qpred if qpred is not None else np.zeros(7)),
                 (tick - fb.stamp) if fb is not None else -1.0,
                 *(fb.q if fb is not None else np.zeros(7))])
            goal = self.av_ctrl.effective_goal
            self.log_avatar.append(
                [tick, int(self.av_ctrl.mode), self.av_ctrl.fade_progress,
                 *self.av_plant.q, *self.av_plant.qdot,
                 *av_pose.translation, *av_pose.rotation,
                 *(goal.translation if goal is not None else np.zeros(3)),
                 *(goal.rotation if goal is not None else quat_hand),
                 *w_sensor, *f_panda, *f_contact_world,
                 self.av_ctrl.safety_stop_count, *tau_av])
            self.log_observer.append(
                [tick, *self.observer.amplitudes, self.observer.v_raw,
                 beta_computed, beta_used])

            if realtime:
                lag = (tick + 1) * dt - (time.monotonic() - wall_start)
                if lag > 0:
                    time.sleep(lag)

        if out_dir is not None:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            self.log_operator.write(out / "operator.csv")
            self.log_avatar.write(out / "avatar.csv")
            self.log_observer.write(out / "observer.csv")
            self.log_channel.write(out / "channel.csv")
            summary = summarize_run(out, settle_s=cfg.summary_settle_s, dt=dt,
                                    name=cfg.name)
            (out / "summary.json").write_text(json.dumps(summary, indent=2))
            return summary
        return {}


def run_scenario(config_path, out_dir, seed=None, realtime=False) -> dict:
    """Load, run and summarize one scenario; returns the summary dict."""
    cfg = ScenarioConfig.from_file(config_path)
    if seed is not None:
        cfg.seed = int(seed)
    loop = BilateralLoop(cfg)
    return loop.run(out_dir=out_dir, realtime=realtime)


def load_csv(path) -> dict:
    """CSV written by _Log back into {column: float array}."""
    with open(path) as f:
        header = f.readline().strip().split(",")
        data = np.loadtxt(f, delimiter=",", ndmin=2)
    if data.size == 0:
        data = data.reshape(0, len(header))
    return {c: data[:, i] for i, c in enumerate(header)}


def summarize_run(out_dir, settle_s: float = 0.0, dt: float = 0.001, name: str = "") -> dict:
    """Pure function of the CSV logs: tracking errors, beta stats, safety events."""
    out = Path(out_dir)
    op = load_csv(out / "operator.csv")
    av = load_csv(out / "avatar.csv")
    obs = load_csv(out / "observer.csv")

    cmd = np.stack([op["cmd_px"], op["cmd_py"], op["cmd_pz"]], axis=1)
    pos = np.stack([av["px"], av["py"], av["pz"]], axis=1)
    err = np.linalg.norm(pos - cmd, axis=1)
    skip = min(int(round(settle_s / dt)), len(err))
    err_settled = err[skip:] if skip < len(err) else err

    return {
        "name": name,
        "ticks": int(len(err)),
        "dt": dt,
        "tracking": {
            "mean_translation_error_m": float(np.mean(err)) if len(err) else 0.0,
            "settled_mean_translation_error_m": float(np.mean(err_settled)) if len(err_settled) else 0.0,
            "settled_p95_translation_error_m": float(np.percentile(err_settled, 95)) if len(err_settled) else 0.0,
            "settle_skip_s": settle_s,
        },
        "beta": {
            "min": float(np.min(obs["beta_used"])) if len(obs["beta_used"]) else 1.0,
            "mean": float(np.mean(obs["beta_used"])) if len(obs["beta_used"]) else 1.0,
            "final": float(obs["beta_used"][-1]) if len(obs["beta_used"]) else 1.0,
        },
        "observer": {
            "peak_v_raw": float(np.max(obs["v_raw"])) if len(obs["v_raw"]) else 0.0,
        },
        "safety_stop_count": int(av["safety_stops"][-1]) if len(av["safety_stops"]) else 0,
        "final_mode": int(av["mode"][-1]) if len(av["mode"]) else 0,
    }
