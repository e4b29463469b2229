"""Command-line entry point.

Usage::

    fwmsqueeze simulate  --config run.json --out results/
    fwmsqueeze sweep     --config run.json --out results/ --threads 4
    fwmsqueeze detect    --config run.json --out results/ --seed 7
    fwmsqueeze calibrate --config run.json --out results/

The config is one JSON object whose sections mirror the library types; every
section and field is optional and defaults to the library defaults. All
quantities are SI with angular frequencies in rad/s. Unknown keys are
rejected with their field path. Exit codes: 0 success, 2 configuration
error, 3 model or physicality error, 4 numerical convergence failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .detection import (
    DetectionChain,
    PulseShape,
    band_average_gain,
    record_variance,
    rolling_average_subtract,
    simulate_records,
    squeezing_report,
    time_resolved_variance,
)
from .errors import ConfigError, DomainError, FWMError
from .gaussian import db, loss_correct, noise_spectrum, split_coherent
from .medium import RAMAN_RATIO, TWO_PI, MediumConfig, cw_gain
from .serial import canonical_json, config_hash, to_plain
from .sweep import Setup, SweepSpec, calibrate_coupling, run_sweep


@dataclass(frozen=True)
class SpectrumSection:
    omega_max: float = TWO_PI * 50e6
    n_points: int = 101


@dataclass(frozen=True)
class CalibrateSection:
    target_gain: float = 4.2
    raman_ratio: float = RAMAN_RATIO


@dataclass(frozen=True)
class InputSection:
    probe_photons: float = 1e8
    excess_noise_db: float = 0.0
    detection_omega: float = TWO_PI * 2e6
    seed_powers: tuple = (1e6, 2e6, 4e6, 8e6)


@dataclass(frozen=True)
class SweepSection:
    target: str
    parameter: str
    grid: object


@dataclass(frozen=True)
class RunConfig:
    medium: MediumConfig = field(default_factory=MediumConfig)
    pulse: PulseShape = field(default_factory=PulseShape)
    detection: DetectionChain = field(default_factory=DetectionChain)
    input: InputSection = field(default_factory=InputSection)
    spectrum: SpectrumSection = field(default_factory=SpectrumSection)
    calibrate: CalibrateSection = field(default_factory=CalibrateSection)
    sweep: SweepSection | None = None
    seed: int | None = None
    out_dir: str | None = None

    def setup(self) -> Setup:
        return Setup(medium=self.medium, pulse=self.pulse, detection=self.detection,
                     **dataclasses.asdict(self.input))

    def to_dict(self) -> dict:
        return to_plain(self)


_SECTIONS = {
    "medium": MediumConfig,
    "pulse": PulseShape,
    "detection": DetectionChain,
    "input": InputSection,
    "spectrum": SpectrumSection,
    "calibrate": CalibrateSection,
    "sweep": SweepSection,
}


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _coerce(value, default, path):
    """Check ``value`` against the type of the field's default."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError("expected true or false", path=path)
        return value
    if isinstance(default, int):
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError("expected an integer", path=path)
        return value
    if isinstance(default, float):
        if not _is_number(value):
            raise ConfigError("expected a number", path=path)
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError("expected a string", path=path)
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list) or not all(_is_number(v) for v in value):
            raise ConfigError("expected a list of numbers", path=path)
        return tuple(float(v) for v in value)
    return value


def _parse_section(name, cls, raw):
    if not isinstance(raw, dict):
        raise ConfigError("expected an object", path=name)
    fields = {f.name: f for f in dataclasses.fields(cls)}
    for key in raw:
        if key not in fields:
            raise ConfigError("unknown key", path=f"{name}.{key}")
    kwargs = {}
    for fname, f in fields.items():
        path = f"{name}.{fname}"
        has_default = f.default is not dataclasses.MISSING or f.default_factory is not dataclasses.MISSING
        if fname not in raw:
            if not has_default:
                raise ConfigError("missing required field", path=path)
            continue
        if f.default is not dataclasses.MISSING:
            kwargs[fname] = _coerce(raw[fname], f.default, path)
        else:
            kwargs[fname] = raw[fname]
    if cls is SweepSection:
        for key in ("target", "parameter"):
            if not isinstance(kwargs[key], str):
                raise ConfigError("expected a string", path=f"{name}.{key}")
        grid = kwargs["grid"]
        if not (isinstance(grid, dict) or (isinstance(grid, list) and all(_is_number(v) for v in grid))):
            raise ConfigError("expected a list of numbers or {min, max, n}", path=f"{name}.grid")
        if isinstance(grid, dict):
            for key in grid:
                if key not in ("min", "max", "n"):
                    raise ConfigError("unknown key", path=f"{name}.grid.{key}")
            for key in ("min", "max", "n"):
                if key not in grid:
                    raise ConfigError("missing required field", path=f"{name}.grid.{key}")
                if not _is_number(grid[key]):
                    raise ConfigError("expected a number", path=f"{name}.grid.{key}")
            kwargs["grid"] = dict(grid)
        else:
            kwargs["grid"] = tuple(float(v) for v in grid)
    try:
        return cls(**kwargs)
    except DomainError as exc:
        raise ConfigError(str(exc), path=name) from None


def parse_run_config(raw) -> RunConfig:
    """Build a :class:`RunConfig` from decoded JSON, failing with a field path."""
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a JSON object", path="<root>")
    top = set(_SECTIONS) | {"seed", "out_dir"}
    for key in raw:
        if key not in top:
            raise ConfigError("unknown key", path=key)
    kwargs = {name: _parse_section(name, cls, raw[name]) for name, cls in _SECTIONS.items() if name in raw}
    if "seed" in raw:
        seed = raw["seed"]
        if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
            raise ConfigError("expected an unsigned 64-bit integer", path="seed")
        kwargs["seed"] = seed
    if "out_dir" in raw:
        if not isinstance(raw["out_dir"], str):
            raise ConfigError("expected a string", path="out_dir")
        kwargs["out_dir"] = raw["out_dir"]
    return RunConfig(**kwargs)


def load_run_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path=str(path)) from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}", path=str(path)) from None
    return parse_run_config(raw)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _header(seed, digest):
    return f"# seed: {seed}\n# config_hash: {digest}\n"


def cmd_simulate(cfg: RunConfig, out: Path, seed: int | None, threads: int | None) -> list[Path]:
    """Noise spectrum CSV and a summary of gains and pulse variances."""
    digest = config_hash(cfg)
    setup = cfg.setup()
    state = setup.input_state()
    grid = np.linspace(0.0, cfg.spectrum.omega_max, cfg.spectrum.n_points)
    spectrum = noise_spectrum(cfg.medium, state, grid)
    lines = [_header(seed, digest), "omega,S\n"]
    lines += [f"{float(w)!r},{float(s)!r}\n" for w, s in zip(spectrum.omega_grid, spectrum.S)]
    v = time_resolved_variance(cfg.medium, state, cfg.pulse, cfg.detection)
    v_corr = loss_correct(v, cfg.detection.eta)
    summary = {
        "cw_gain": cw_gain(cfg.medium),
        "pulse_gain": band_average_gain(cfg.medium, cfg.pulse),
        "V": v,
        "V_corrected": v_corr,
        "V_db": db(v),
        "V_corrected_db": db(v_corr),
        "eta": cfg.detection.eta,
        "seed": seed,
        "config_hash": digest,
        "config": cfg.to_dict(),
    }
    paths = [out / "spectrum.csv", out / "summary.json"]
    _write(paths[0], "".join(lines))
    _write(paths[1], canonical_json(summary, indent=2) + "\n")
    return paths


def cmd_sweep(cfg: RunConfig, out: Path, seed: int | None, threads: int | None) -> list[Path]:
    """Sweep CSV (interior minimum flagged) and JSON with per-point errors."""
    if cfg.sweep is None:
        raise ConfigError("missing section required by the sweep command", path="sweep")
    grid = cfg.sweep.grid if isinstance(cfg.sweep.grid, dict) else list(cfg.sweep.grid)
    try:
        spec = SweepSpec(target=cfg.sweep.target, parameter=cfg.sweep.parameter, grid=grid,
                         fixed=cfg.setup(), seed=0 if seed is None else seed)
    except ConfigError as exc:
        raise ConfigError(str(exc), path="sweep") from None
    result = run_sweep(spec, threads=threads)
    paths = [out / "sweep.csv", out / "sweep.json"]
    _write(paths[0], result.to_csv())
    _write(paths[1], result.to_json())
    return paths


def cmd_detect(cfg: RunConfig, out: Path, seed: int | None, threads: int | None) -> list[Path]:
    """FWM and matched shot-noise records plus a squeezing report."""
    if seed is None:
        raise ConfigError("detect needs a seed (config 'seed' or --seed)", path="seed")
    setup = cfg.setup()
    chain = cfg.detection.replace(rng_seed=seed)
    fwm = simulate_records(cfg.medium, setup.input_state(), cfg.pulse, chain)
    # reference beam: split coherent light with the FWM output photon number
    photons = fwm.metadata["mean_total_charge"] / (chain.eta * cfg.pulse.integration_fraction(chain.amp_response))
    snl_chain = chain.replace(rng_seed=seed + 1)
    snl = simulate_records(MediumConfig(coupling_C=0.0, raman_A=0.0), split_coherent(photons), cfg.pulse, snl_chain)
    fwm_f = rolling_average_subtract(fwm, chain.rolling_window)
    snl_f = rolling_average_subtract(snl, chain.rolling_window)
    report = squeezing_report(snl_f, fwm_f, chain.eta)
    v_spec = time_resolved_variance(cfg.medium, setup.input_state(), cfg.pulse, chain)
    summary = {
        "report": dataclasses.asdict(report),
        "fwm_variance_per_charge": record_variance(fwm_f) / fwm.metadata["mean_total_charge"],
        "snl_variance_per_charge": record_variance(snl_f) / snl.metadata["mean_total_charge"],
        "spectral_V": v_spec,
        "spectral_V_db": db(v_spec),
        "seed": seed,
        "config_hash": config_hash(cfg),
        "config": cfg.to_dict(),
    }
    paths = [out / "fwm_record.csv", out / "fwm_record.bin", out / "snl_record.csv",
             out / "snl_record.bin", out / "report.json"]
    _write(paths[0], fwm.to_csv())
    paths[1].write_bytes(fwm.to_bytes())
    _write(paths[2], snl.to_csv())
    paths[3].write_bytes(snl.to_bytes())
    _write(paths[4], canonical_json(summary, indent=2) + "\n")
    return paths


def cmd_calibrate(cfg: RunConfig, out: Path, seed: int | None, threads: int | None,
                  config_path: Path | None = None) -> list[Path]:
    """Calibrated config written to a new file, plus a short report."""
    target = out / "calibrated_config.json"
    if config_path is not None and target.resolve() == Path(config_path).resolve():
        raise ConfigError("calibrate never overwrites its input; choose another --out", path="out_dir")
    calibrated = calibrate_coupling(cfg.calibrate.target_gain, cfg.pulse, cfg.medium, cfg.calibrate.raman_ratio)
    new_cfg = dataclasses.replace(cfg, medium=calibrated)
    raw = new_cfg.to_dict()
    if raw["sweep"] is None:
        del raw["sweep"]
    if raw["seed"] is None:
        del raw["seed"]
    if raw["out_dir"] is None:
        del raw["out_dir"]
    report = {
        "target_gain": cfg.calibrate.target_gain,
        "pulse_gain": band_average_gain(calibrated, cfg.pulse),
        "coupling_C": calibrated.coupling_C,
        "raman_A": calibrated.raman_A,
        "seed": seed,
        "config_hash": config_hash(new_cfg),
    }
    _write(target, canonical_json(raw, indent=2) + "\n")
    _write(out / "calibration.json", canonical_json(report, indent=2) + "\n")
    return [target, out / "calibration.json"]


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "detect": cmd_detect,
    "calibrate": cmd_calibrate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fwmsqueeze", description=__doc__.split("\n\n")[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", help="output directory (default: config out_dir or ./out)")
    parser.add_argument("--seed", type=int, help="RNG seed, overrides the config")
    parser.add_argument("--threads", type=int, help="maximum sweep worker threads")
    return parser


def main(argv: typing.Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_run_config(args.config)
        seed = args.seed if args.seed is not None else cfg.seed
        if seed is not None and not 0 <= seed < 2**64:
            raise ConfigError("expected an unsigned 64-bit integer", path="--seed")
        if args.threads is not None and args.threads < 1:
            raise ConfigError("must be >= 1", path="--threads")
        out = Path(args.out or cfg.out_dir or "out")
        if args.command == "calibrate":
            paths = cmd_calibrate(cfg, out, seed, args.threads, config_path=Path(args.config))
        else:
            paths = COMMANDS[args.command](cfg, out, seed, args.threads)
    except FWMError as exc:
        print(f"fwmsqueeze {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
