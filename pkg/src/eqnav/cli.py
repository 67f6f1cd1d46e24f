"""Command-line entry point: simulate, run, verify, observability.

Configuration is a flat ``key=value`` text file; command-line flags and
repeated ``--set key=value`` arguments override file values (later wins).
Unknown keys are rejected.  All floating-point output uses 17 significant
digits so identical seeds give byte-identical files.

Exit codes: 0 success, 1 verification failure, 2 usage or I/O error.
Set ``EQNAV_LOG`` to a logging level name for diagnostics.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errordyn import Convention, LeverArm, NoiseParams
from .filter import FilterState, GnssFix, run
from .kinematics import EarthModel, ImuSample
from .liegroup import FrameTag, GroupElement, so3_log
from .sim import SensorErrorSpec, TrajectorySpec, generate_truth, synthesize_gnss, synthesize_imu
from .verify import heave_observability, run_all_checks

log = logging.getLogger("eqnav")

IMU_HEADER = "t,gx,gy,gz,ax,ay,az"
GNSS_HEADER = "t,x,y,z,sxx,syy,szz,sxy,sxz,syz"
TRUTH_HEADER = "t,c11,c12,c13,c21,c22,c23,c31,c32,c33,vx,vy,vz,x,y,z"


@dataclass
class RunConfig:
    """Flat run configuration; field names are the config-file keys."""

    convention: str = "left"
    # earth constants
    omega_ie: float = 7.292115e-5
    mu: float = 3.986004418e14
    # scenario
    scenario: str = "constant-turn"
    lat_deg: float = 45.0
    lon_deg: float = 7.0
    height: float = 400.0
    speed: float = 10.0
    turn_rate: float = 0.02
    duration: float = 60.0
    imu_rate: float = 200.0
    gnss_rate: float = 1.0
    gnss_sigma: float = 1.0
    # sensor errors for simulation
    sim_gyro_bias_x: float = 0.0
    sim_gyro_bias_y: float = 0.0
    sim_gyro_bias_z: float = 0.0
    sim_accel_bias_x: float = 0.0
    sim_accel_bias_y: float = 0.0
    sim_accel_bias_z: float = 0.0
    gyro_psd: float = 4.0e-8
    accel_psd: float = 4.0e-6
    gyro_bias_psd: float = 1.0e-16
    accel_bias_psd: float = 1.0e-14
    # initial covariance standard deviations
    init_att_std: float = 1.0e-4
    init_vel_std: float = 1.0e-2
    init_pos_std: float = 1.0
    init_bg_std: float = 1.0e-5
    init_ba_std: float = 1.0e-4
    # lever arm
    lever_x: float = 0.0
    lever_y: float = 0.0
    lever_z: float = 0.0
    # misc
    seed: int = 0
    time_slop: float = 1.0e-6
    # verification tolerances
    tol_group_affine: float = 1.0e-9
    tol_equivariance: float = 1.0e-10
    tol_gamma_series: float = 1.0e-12
    tol_gamma_integrals: float = 1.0e-11
    tol_phi_left: float = 1.0e-9
    tol_phi_right: float = 1.0e-8
    tol_null_angle: float = 1.0e-3
    svd_cutoff: float = 1.0e-8

    def earth(self) -> EarthModel:
        return EarthModel(omega_ie=self.omega_ie, mu=self.mu)

    def trajectory(self) -> TrajectorySpec:
        return TrajectorySpec(
            profile=self.scenario,
            lat_deg=self.lat_deg,
            lon_deg=self.lon_deg,
            height=self.height,
            speed=self.speed,
            turn_rate=self.turn_rate,
            duration=self.duration,
            imu_rate=self.imu_rate,
            gnss_rate=self.gnss_rate,
        )

    def noise(self) -> NoiseParams:
        return NoiseParams(
            self.gyro_psd, self.accel_psd, self.gyro_bias_psd, self.accel_bias_psd
        )

    def lever(self) -> LeverArm:
        return LeverArm(np.array([self.lever_x, self.lever_y, self.lever_z]))

    def conv(self) -> Convention:
        if self.convention == "left":
            return Convention.LEFT_INVARIANT
        if self.convention == "right":
            return Convention.RIGHT_INVARIANT
        raise ValueError(f"convention must be left or right, got {self.convention!r}")

    def initial_cov(self) -> np.ndarray:
        stds = (
            [self.init_att_std] * 3
            + [self.init_vel_std] * 3
            + [self.init_pos_std] * 3
            + [self.init_bg_std] * 3
            + [self.init_ba_std] * 3
        )
        return np.diag(np.square(stds))

    def tolerances(self) -> dict:
        return {
            name: getattr(self, name)
            for name in (
                "tol_group_affine",
                "tol_equivariance",
                "tol_gamma_series",
                "tol_gamma_integrals",
                "tol_phi_left",
                "tol_phi_right",
                "tol_null_angle",
            )
        }


class ConfigError(ValueError):
    pass


def _coerce(name: str, raw: str, default):
    try:
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(default, int) and not isinstance(default, bool):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"invalid value for {name}: {raw!r}") from exc


def parse_config(path: str | None, overrides: list[str]) -> RunConfig:
    """Load the key=value config file and apply overrides (later wins)."""
    cfg = RunConfig()
    fields = {f.name: f for f in dataclasses.fields(RunConfig)}

    def apply(name: str, raw: str, where: str):
        if name not in fields:
            raise ConfigError(f"unknown config key {name!r} in {where}")
        setattr(cfg, name, _coerce(name, raw, getattr(RunConfig(), name)))

    if path is not None:
        text = Path(path).read_text()
        for lineno, line in enumerate(text.splitlines(), start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = stripped.partition("=")
            apply(key.strip(), value.strip(), f"{path}:{lineno}")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        apply(key.strip(), value.strip(), "--set")
    return cfg


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _write_csv(path: Path, header: str, rows) -> None:
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _read_csv(path: Path, expect_header: str) -> list[list[float]]:
    rows = []
    with open(path) as fh:
        header = fh.readline().rstrip("\n")
        if header != expect_header:
            raise ConfigError(f"{path}:1: expected header {expect_header!r}")
        want = len(expect_header.split(","))
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.split(",")
            if len(parts) != want:
                raise ConfigError(f"{path}:{lineno}: expected {want} columns")
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad float: {exc}") from exc
    return rows


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    """Write imu.csv, gnss.csv and truth.csv for the configured scenario."""
    if not out.is_dir():
        raise ConfigError(f"output directory does not exist: {out}")
    earth = cfg.earth()
    truth = generate_truth(cfg.trajectory(), earth)
    errors = SensorErrorSpec(
        np.array([cfg.sim_gyro_bias_x, cfg.sim_gyro_bias_y, cfg.sim_gyro_bias_z]),
        np.array([cfg.sim_accel_bias_x, cfg.sim_accel_bias_y, cfg.sim_accel_bias_z]),
        cfg.gyro_psd,
        cfg.accel_psd,
        seed=cfg.seed,
    )
    imu = synthesize_imu(truth, earth, errors)
    cov = cfg.gnss_sigma**2 * np.eye(3)
    gnss = synthesize_gnss(truth, cfg.lever().l_b, cfg.gnss_rate, cov, seed=cfg.seed + 1)

    _write_csv(
        out / "imu.csv",
        IMU_HEADER,
        ([s.t, *s.gyro, *s.accel] for s in imu),
    )
    _write_csv(
        out / "gnss.csv",
        GNSS_HEADER,
        (
            [
                f.t,
                *f.pos_ecef,
                f.cov[0, 0],
                f.cov[1, 1],
                f.cov[2, 2],
                f.cov[0, 1],
                f.cov[0, 2],
                f.cov[1, 2],
            ]
            for f in gnss
        ),
    )
    _write_csv(
        out / "truth.csv",
        TRUTH_HEADER,
        ([t, *x.rot.reshape(9), *x.vel, *x.pos] for t, x in truth.samples),
    )
    log.info("wrote %d IMU, %d GNSS, %d truth rows", len(imu), len(gnss), len(truth.samples))
    return 0


def _load_streams(cfg: RunConfig, out: Path):
    imu_rows = _read_csv(out / "imu.csv", IMU_HEADER)
    imu = [ImuSample(r[0], np.array(r[1:4]), np.array(r[4:7])) for r in imu_rows]
    gnss_rows = _read_csv(out / "gnss.csv", GNSS_HEADER)
    gnss = []
    for r in gnss_rows:
        cov = np.array(
            [
                [r[4], r[7], r[8]],
                [r[7], r[5], r[9]],
                [r[8], r[9], r[6]],
            ]
        )
        gnss.append(GnssFix(r[0], np.array(r[1:4]), cov))
    truth = None
    truth_path = out / "truth.csv"
    if truth_path.exists():
        rows = _read_csv(truth_path, TRUTH_HEADER)
        truth = [
            (
                r[0],
                GroupElement(
                    np.array(r[1:10]).reshape(3, 3),
                    np.array(r[10:13]),
                    np.array(r[13:16]),
                    FrameTag.ECEF_IB,
                ),
            )
            for r in rows
        ]
    return imu, gnss, truth


def cmd_run(cfg: RunConfig, out: Path) -> int:
    """Run the filter on previously simulated (or ingested) CSV streams."""
    earth = cfg.earth()
    imu, gnss, truth = _load_streams(cfg, out)

    if truth is not None:
        x0 = truth[0][1]
    else:
        # dead-reckon start from the first fix, level attitude
        lat, lon, h = earth.ecef_to_geodetic(gnss[0].pos_ecef)
        x0 = GroupElement(
            earth.ned_rotation(lat, lon),
            np.cross(earth.omega_vec, gnss[0].pos_ecef),
            gnss[0].pos_ecef,
            FrameTag.ECEF_IB,
        )
    state0 = FilterState(x0, np.zeros(3), np.zeros(3), cfg.initial_cov(), imu[0].t, cfg.conv())
    records = run(
        imu,
        gnss,
        state0,
        cfg.noise(),
        earth,
        cfg.lever(),
        truth=truth,
        time_slop=cfg.time_slop,
    )

    nav_header = (
        TRUTH_HEADER
        + ",bgx,bgy,bgz,bax,bay,baz,"
        + ",".join(f"p{i+1}" for i in range(15))
    )
    _write_csv(
        out / "nav_out.csv",
        nav_header,
        (
            [r.t, *r.state.x.rot.reshape(9), *r.state.x.vel, *r.state.x.pos,
             *r.state.bg, *r.state.ba, *r.p_diag]
            for r in records
        ),
    )

    nis_vals = [r.nis for r in records if r.nis is not None]
    summary = {"epochs": len(records), "updates": len(nis_vals)}
    if nis_vals:
        summary["mean_nis"] = float(np.mean(nis_vals))

    if truth is not None:
        err_header = (
            "t," + ",".join(f"e{i+1}" for i in range(15)) + ",nees,inx,iny,inz,nis"
        )
        rows = []
        tm = dict(truth)
        pos_se = vel_se = att_se = 0.0
        count = 0
        for r in records:
            if r.t in tm:
                xt = tm[r.t]
                pos_se += float(np.sum((r.state.x.pos - xt.pos) ** 2))
                vel_se += float(np.sum((r.state.x.vel - xt.vel) ** 2))
                att_se += float(
                    np.sum(so3_log(r.state.x.rot @ xt.rot.T) ** 2)
                )
                count += 1
            if r.nis is None or r.error is None:
                continue
            rows.append([r.t, *r.error, r.nees, *r.innovation, r.nis])
        _write_csv(out / "err_out.csv", err_header, rows)
        nees_vals = [r.nees for r in records if r.nees is not None and r.nis is not None]
        summary.update(
            rms_pos=math.sqrt(pos_se / count),
            rms_vel=math.sqrt(vel_se / count),
            rms_att=math.sqrt(att_se / count),
        )
        if nees_vals:
            summary["mean_nees"] = float(np.mean(nees_vals))

    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_verify(cfg: RunConfig, out: Path | None) -> int:
    """Run the property suite; nonzero exit on any failed check."""
    results = run_all_checks(cfg.earth(), cfg.tolerances(), seed=cfg.seed)
    report = [
        {
            "check": r.name,
            "max_residual": r.residual,
            "tolerance": r.tolerance,
            "passed": r.passed,
        }
        for r in results
    ]
    text = json.dumps({"checks": report, "passed": all(r.passed for r in results)}, indent=2)
    print(text)
    if out is not None and out.is_dir():
        (out / "verify.json").write_text(text + "\n")
    return 0 if all(r.passed for r in results) else 1


def cmd_observability(cfg: RunConfig) -> int:
    """Print the rank analysis of both conventions on the heave scenario."""
    earth = cfg.earth()
    report = {}
    for conv in (Convention.LEFT_INVARIANT, Convention.RIGHT_INVARIANT):
        rep, angle = heave_observability(earth, conv, svd_cutoff=cfg.svd_cutoff)
        report[conv.value] = {
            "rank": rep.rank,
            "null_dim": int(rep.null_space.shape[1]),
            "singular_values": [float(s) for s in rep.singular_values],
            "null_phi_gravity_angle_rad": angle,
        }
    print(json.dumps(report, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eqnav", description=__doc__)
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--out", default=".", help="input/output directory")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--convention", choices=["left", "right"])
    p.add_argument("--scenario", choices=["static", "constant-turn", "figure-eight"])
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key (repeatable, later wins)")
    p.add_argument("command", choices=["simulate", "run", "verify", "observability"])
    return p


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("EQNAV_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config, args.set)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.convention is not None:
            cfg.convention = args.convention
        if args.scenario is not None:
            cfg.scenario = args.scenario
        out = Path(args.out)
        if args.command == "simulate":
            return cmd_simulate(cfg, out)
        if args.command == "run":
            return cmd_run(cfg, out)
        if args.command == "verify":
            return cmd_verify(cfg, out)
        return cmd_observability(cfg)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
