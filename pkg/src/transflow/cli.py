"""Command line front end: ``transflow run | resume | verify | eig``.

Exit codes: 0 success, 1 verification failure, 2 metric blow-up,
3 solver did not converge, 4 mode unsupported (eigen backend on a non-taut
model), 5 invalid configuration, 6 output directory locked or unusable
checkpoint.  Every nonzero exit also writes a JSON diagnostic record.
"""

import argparse
import contextlib
import dataclasses
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import checkpoint as ckpt
from . import entropy, flow, scenarios, verify
from .errors import CheckpointError, ConfigError, ModeUnsupported, NoConvergence, NonPositive, SingularMetric, UnknownScenario
from .grid import SCHEMES

EXIT_OK, EXIT_VERIFY, EXIT_BLOWUP, EXIT_NOCONV, EXIT_MODE, EXIT_CONFIG, EXIT_IO = range(7)
LOCK_NAME = ".transflow.lock"
SERIES_NAME = "series.csv"
CONFIG_NAME = "config.json"
DIAGNOSTIC_NAME = "diagnostic.json"


@dataclass
class RunConfig:
    """Validated settings of a flow run; keys match the config file."""

    scenario: str = None
    input: str = None
    dims: int = 64
    flow: str = "ricci"
    T: float = 0.1
    cfl: float = None
    lambda_every: int = 10
    output: str = "out"
    checkpoint_every: int = 0
    seed: int = 0
    backend: str = "auto"
    scheme: str = "spectral"

    def validate(self):
        if (self.scenario is None) == (self.input is None):
            raise ConfigError("scenario", "give exactly one of scenario or input")
        if self.scenario is not None and self.scenario not in scenarios.NAMES:
            raise ConfigError("scenario", f"unknown scenario {self.scenario!r}")
        if self.input is not None and not Path(self.input).is_file():
            raise ConfigError("input", f"no such file {self.input!r}")
        _check_type("dims", self.dims, int)
        if self.dims < 8:
            raise ConfigError("dims", "must be at least 8")
        if self.flow not in flow.FLOW_KINDS:
            raise ConfigError("flow", f"must be one of {', '.join(flow.FLOW_KINDS)}")
        _check_type("T", self.T, float)
        if not self.T > 0:
            raise ConfigError("T", "horizon must be positive")
        if self.cfl is not None:
            _check_type("cfl", self.cfl, float)
            if not 0 < self.cfl <= 1:
                raise ConfigError("cfl", "must lie in (0, 1]")
        _check_type("lambda_every", self.lambda_every, int)
        if self.lambda_every < 1:
            raise ConfigError("lambda_every", "must be at least 1")
        _check_type("checkpoint_every", self.checkpoint_every, int)
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every", "must be non-negative")
        _check_type("seed", self.seed, int)
        if self.backend not in ("auto", "eigen", "minimize"):
            raise ConfigError("backend", "must be auto, eigen or minimize")
        if self.scheme not in SCHEMES:
            raise ConfigError("scheme", f"must be one of {', '.join(SCHEMES)}")
        return self


def _check_type(name, value, kind):
    ok = isinstance(value, (int, float)) and not isinstance(value, bool) if kind is float else (
        isinstance(value, int) and not isinstance(value, bool))
    if not ok:
        raise ConfigError(name, f"expected {kind.__name__}, got {value!r}")


def parse_config_text(text):
    """Flat ``key = value`` config (TOML); keys must be RunConfig fields."""
    fields = {f.name for f in dataclasses.fields(RunConfig)}
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError("config", f"cannot parse: {e}") from None
    for key, value in data.items():
        if key not in fields:
            raise ConfigError(key, "unknown key")
        if isinstance(value, (dict, list)):
            raise ConfigError(key, "tables and arrays are not supported")
    return data


def build_config(file_values, overrides):
    values = dict(file_values)
    values.update({k: v for k, v in overrides.items() if v is not None})
    if isinstance(values.get("T"), int):
        values["T"] = float(values["T"])
    if isinstance(values.get("cfl"), int):
        values["cfl"] = float(values["cfl"])
    return RunConfig(**values).validate()


# -- helpers -------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError("arguments", message)


@contextlib.contextmanager
def output_lock(directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lock = directory / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise CheckpointError(f"output directory {directory} is locked by another run ({lock})") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield directory
    finally:
        lock.unlink(missing_ok=True)


@contextlib.contextmanager
def thread_limit():
    value = os.environ.get("TRANSFLOW_THREADS")
    if not value:
        yield
        return
    try:
        n = int(value)
        if n < 1:
            raise ValueError
    except ValueError:
        raise ConfigError("TRANSFLOW_THREADS", f"must be a positive integer, got {value!r}") from None
    from threadpoolctl import threadpool_limits
    with threadpool_limits(limits=n):
        yield


def _fmt(x):
    return repr(float(x))


def _row_line(row):
    return ",".join(_fmt(v) for v in row.as_tuple()) + "\n"


def _write_diagnostic(directory, record):
    text = json.dumps(record, indent=2, sort_keys=True)
    if directory is not None:
        Path(directory).mkdir(parents=True, exist_ok=True)
        (Path(directory) / DIAGNOSTIC_NAME).write_text(text + "\n")
    print(text, file=sys.stderr)


def _load_problem(cfg):
    """Initial metric, model, ``f`` and scenario digest for a config."""
    if cfg.scenario is not None:
        sc = scenarios.build(cfg.scenario, cfg.dims, cfg.scheme)
        digest = ckpt.scenario_digest(cfg.scenario, sc.grid.dims, cfg.scheme)
        return sc.g0, sc.model, None, digest
    data = Path(cfg.input).read_bytes()
    field = ckpt.decode(data)
    return field.g, field.model, field.f, ckpt.scenario_digest("file", data)


def _backend(cfg, model):
    if cfg.backend == "auto":
        return "eigen" if model.is_taut else "minimize"
    return cfg.backend


def _checkpoint_path(directory, step):
    return Path(directory) / f"checkpoint_{step:08d}.tfck"


# -- commands --------------------------------------------------------------------

def _execute_run(cfg, state, n_steps, directory, digest, resume):
    backend = _backend(cfg, state.model)
    entropy.check_backend(state.model, backend)
    series = Path(directory) / SERIES_NAME
    mode = "a" if resume else "w"
    with open(series, mode, newline="") as fh:
        if not resume:
            fh.write(",".join(flow.SERIES_HEADER) + "\n")

        def on_row(row):
            fh.write(_row_line(row))
            fh.flush()

        def on_checkpoint(st):
            ck = ckpt.Checkpoint(g=st.g, model=st.model, f=st.f, t=st.t, step=st.step, dt=st.dt,
                                 kind=st.kind, scenario_hash=digest)
            ckpt.save(_checkpoint_path(directory, st.step), ck)

        result = flow.run(state, n_steps, lambda_every=cfg.lambda_every, backend=backend,
                          checkpoint_every=cfg.checkpoint_every, on_checkpoint=on_checkpoint, on_row=on_row)
    final = result.state
    ckpt.save(Path(directory) / "final.tfck", ckpt.Checkpoint(
        g=final.g, model=final.model, f=final.f, t=final.t, step=final.step, dt=final.dt,
        kind=final.kind, scenario_hash=digest))
    if result.status == "blowup":
        _write_diagnostic(directory, dict(result.diagnostic, exit_code=EXIT_BLOWUP))
        return EXIT_BLOWUP
    return EXIT_OK


def cmd_run(cfg):
    with output_lock(cfg.output) as directory:
        g, model, f, digest = _load_problem(cfg)
        state = flow.initial_state(cfg.flow, g, model, f=f, cfl=cfg.cfl)
        n_steps = flow.n_steps_for(cfg.T, state.dt)
        state = dataclasses.replace(state, dt=cfg.T / n_steps)
        (directory / CONFIG_NAME).write_text(json.dumps(dataclasses.asdict(cfg), indent=2, sort_keys=True) + "\n")
        return _execute_run(cfg, state, n_steps, directory, digest, resume=False)


def cmd_resume(checkpoint_path, output=None, T=None):
    ck = ckpt.load(checkpoint_path)
    directory = Path(output) if output else Path(checkpoint_path).parent
    cfg_file = directory / CONFIG_NAME
    if not cfg_file.is_file():
        raise ConfigError("output", f"no {CONFIG_NAME} in {directory}; cannot resume")
    values = json.loads(cfg_file.read_text())
    if T is not None:
        values["T"] = float(T)
    cfg = RunConfig(**values)
    if ck.kind != cfg.flow:
        raise CheckpointError(f"checkpoint flow kind {ck.kind!r} does not match config {cfg.flow!r}")
    with output_lock(directory):
        series = directory / SERIES_NAME
        _truncate_series(series, ck.t)
        state = flow.FlowState(kind=ck.kind, g=ck.g, model=ck.model, f=ck.f, t=ck.t, step=ck.step, dt=ck.dt)
        n_steps = flow.n_steps_for(cfg.T, ck.dt)
        return _execute_run(cfg, state, n_steps, directory, ck.scenario_hash, resume=True)


def _truncate_series(series, t_max):
    """Keep the header and the rows with ``t <= t_max``."""
    if not series.is_file():
        series.write_text(",".join(flow.SERIES_HEADER) + "\n")
        return
    lines = series.read_text().splitlines(keepends=True)
    kept = lines[:1] + [ln for ln in lines[1:] if float(ln.split(",", 1)[0]) <= t_max]
    series.write_text("".join(kept))


def cmd_verify(suite, dims, seed, scheme, output, scenario=None):
    refine = dims[1] if len(dims) > 1 else None
    checks = verify.run_suite(suite, dims[0], seed, scheme, scenario, refine)
    print(f"{'suite':10s} {'check':48s} {'value':>13s}  {'tolerance':22s} result")
    for c in checks:
        print(c.row())
    report = verify.report_dict(checks, suite, list(dims), seed, scheme)
    Path(output).mkdir(parents=True, exist_ok=True)
    (Path(output) / "verify.json").write_text(json.dumps(report, indent=2) + "\n")
    if report["passed"]:
        return EXIT_OK
    failed = [c.name for c in checks if not c.passed]
    _write_diagnostic(output, {"error": "VerificationFailed", "failed": failed, "exit_code": EXIT_VERIFY})
    return EXIT_VERIFY


def cmd_eig(scenario, dims, backend, output, scheme="spectral"):
    sc = scenarios.build(scenario, dims, scheme)
    rep = entropy.compute_lambda(sc.g0, sc.model, backend)
    print(f"lambda     = {rep.lambda_!r}")
    print(f"lambda_bar = {rep.lambda_bar!r}")
    print(f"Vol        = {rep.volume!r}")
    print(f"residual   = {rep.residual!r}")
    if output:
        out = Path(output)
        out.parent.mkdir(parents=True, exist_ok=True)
        ckpt.save(out, ckpt.Checkpoint(g=sc.g0, model=sc.model, f=rep.f_min, kind="field",
                                       scenario_hash=ckpt.scenario_digest(scenario, sc.grid.dims, scheme)))
    return EXIT_OK


def make_parser():
    p = _Parser(prog="transflow", description="Transverse entropy and flow laboratory.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="integrate a flow and write series.csv and checkpoints")
    r.add_argument("--config", help="key = value config file")
    r.add_argument("--scenario")
    r.add_argument("--input", help="field file (checkpoint format) with the initial data")
    r.add_argument("--dims", type=int)
    r.add_argument("--flow", dest="flow")
    r.add_argument("--T", type=float)
    r.add_argument("--cfl", type=float)
    r.add_argument("--lambda-every", dest="lambda_every", type=int)
    r.add_argument("--output", "-o")
    r.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--backend")
    r.add_argument("--scheme")

    s = sub.add_parser("resume", help="continue a run from a checkpoint")
    s.add_argument("checkpoint")
    s.add_argument("--output", "-o", help="run directory (default: the checkpoint's directory)")
    s.add_argument("--T", type=float, help="new horizon")

    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("--suite", default="all", choices=verify.SUITES + ("all",))
    v.add_argument("--dims", type=int, action="append", help="grid size; give twice for convergence rows")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--scheme", default="spectral", choices=SCHEMES)
    v.add_argument("--scenario", help="scenario for the operators suite")
    v.add_argument("--output", "-o", default=".")

    e = sub.add_parser("eig", help="compute lambda for a scenario")
    e.add_argument("--scenario", required=True)
    e.add_argument("--dims", type=int)
    e.add_argument("--backend", default="eigen", choices=("eigen", "minimize"))
    e.add_argument("--scheme", default="spectral", choices=SCHEMES)
    e.add_argument("--output", "-o", help="field file for f_min")
    return p


def dispatch(args):
    if args.command == "run":
        file_values = parse_config_text(Path(args.config).read_text()) if args.config else {}
        keys = [f.name for f in dataclasses.fields(RunConfig)]
        cfg = build_config(file_values, {k: getattr(args, k, None) for k in keys})
        return cmd_run(cfg)
    if args.command == "resume":
        return cmd_resume(args.checkpoint, args.output, args.T)
    if args.command == "verify":
        dims = args.dims or [32]
        if len(dims) > 2:
            raise ConfigError("dims", "give at most two sizes")
        return cmd_verify(args.suite, dims, args.seed, args.scheme, args.output, args.scenario)
    return cmd_eig(args.scenario, args.dims, args.backend, args.output, args.scheme)


def main(argv=None):
    output = None
    try:
        parser = make_parser()
        args = parser.parse_args(argv)
        output = getattr(args, "output", None)
        with thread_limit():
            return dispatch(args)
    except ConfigError as e:
        code, record = EXIT_CONFIG, {"error": "ConfigError", "field": e.field, "message": str(e)}
        output = None
    except UnknownScenario as e:
        code, record = EXIT_CONFIG, {"error": "UnknownScenario", "field": "scenario", "message": str(e.args[0])}
        output = None
    except ModeUnsupported as e:
        code, record = EXIT_MODE, {"error": "ModeUnsupported", "message": str(e)}
    except NoConvergence as e:
        code, record = EXIT_NOCONV, {"error": "NoConvergence", "message": str(e)}
    except (SingularMetric, NonPositive) as e:
        code, record = EXIT_BLOWUP, {"error": type(e).__name__, "message": str(e)}
    except CheckpointError as e:
        code, record = EXIT_IO, {"error": "CheckpointError", "message": str(e)}
        output = None
    record["exit_code"] = code
    _write_diagnostic(output if output and Path(output).suffix == "" else None, record)
    return code


if __name__ == "__main__":
    sys.exit(main())
