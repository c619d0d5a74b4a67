"""INI-style run configuration: [problem] [policy] [scheme] [study] [probe] [probe.<label>]."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional

from . import problems
from .expr import ExprError, parse
from .harness import StudyPlan
from .model import ModelError, ProblemSpec, TimeGrid, TruncationPolicy
from .probe import AssumptionCase, ProbeConfigError
from .scheme import SchemeConfig, SchemeConfigError


class ConfigError(ValueError):
    def __init__(self, message, where=""):
        self.where = where
        super().__init__(f"[{where}] {message}" if where else message)


@dataclass
class RunConfig:
    spec: ProblemSpec
    policy: TruncationPolicy
    scheme: SchemeConfig
    plan: StudyPlan
    dt: Optional[Fraction] = None
    path: int = 0
    method: str = "milstein"
    reference: str = "self"
    cases: list = field(default_factory=list)
    lambda_w: tuple = ()
    lambda_samples: int = 10_000

    def grid(self) -> TimeGrid:
        if self.dt is None:
            raise ConfigError("study.dt is required for simulate", "study")
        return TimeGrid.build(self.dt, self.spec.delay, self.spec.horizon)

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, plan=replace(self.plan, seed=seed))


def _unquote(v: str) -> str:
    v = v.strip()
    if len(v) >= 2 and v[0] == v[-1] and v[0] in "\"'":
        return v[1:-1]
    return v


class _Section:
    def __init__(self, parser, name):
        self.name = name
        self.data = parser[name] if parser.has_section(name) else {}
        self.used = set()

    def __contains__(self, key):
        return key in self.data

    def raw(self, key, default=None):
        if key not in self.data:
            return default
        self.used.add(key)
        return _unquote(self.data[key])

    def number(self, key, default=None) -> Optional[float]:
        v = self.raw(key)
        if v is None:
            return default
        try:
            return float(parse(v)())
        except (ExprError, ValueError) as e:
            raise ConfigError(f"{key}: {e}", self.name) from e

    def integer(self, key, default=None) -> Optional[int]:
        v = self.number(key)
        if v is None:
            return default
        if v != int(v):
            raise ConfigError(f"{key} must be an integer, got {v}", self.name)
        return int(v)

    def numbers(self, key, default=None):
        v = self.raw(key)
        if v is None:
            return default
        out = []
        for part in v.split(","):
            if part.strip():
                try:
                    out.append(float(parse(part)()))
                except ExprError as e:
                    raise ConfigError(f"{key}: {e}", self.name) from e
        return out

    def boolean(self, key, default=False) -> bool:
        v = self.raw(key)
        if v is None:
            return default
        if v.lower() in ("1", "true", "yes", "on"):
            return True
        if v.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key} must be a boolean, got {v!r}", self.name)

    def expression(self, key, variables, required=True):
        v = self.raw(key)
        if v is None:
            if required:
                raise ConfigError(f"missing expression '{key}'", self.name)
            return None
        try:
            e = parse(v)
        except ExprError as err:
            raise ConfigError(f"{key}: {err}", self.name) from err
        extra = e.variables - set(variables)
        if extra:
            raise ConfigError(f"{key}: variables {sorted(extra)} not allowed here", self.name)
        return e


def _coef(e):
    return lambda t, x, y: e(t, x, y)


def _initial(e):
    return lambda t: e(t, 0.0, 0.0)


def _problem(sec: _Section):
    name = sec.raw("name", "paper_example")
    delay = sec.number("delay")
    init = sec.expression("initial", ("t",), required=False)
    initial = _initial(init) if init is not None else None
    kw = {}
    if delay is not None:
        kw["delay"] = delay
    if name == "paper_example":
        spec = problems.paper_example(initial=initial, **kw)
        defaults = dict(policy=problems.example_policy(), theta=problems.EXAMPLE_THETA, k1=problems.EXAMPLE_K1)
    elif name == "gbm":
        for k in ("mu", "sigma", "x0", "horizon"):
            if k in sec:
                kw[k] = sec.number(k)
        spec = problems.gbm(**kw)
        defaults = dict(policy=TruncationPolicy.none(), theta=0.5, k1=1.0)
    elif name == "linear_delay":
        for k in ("a", "b", "c", "d", "horizon"):
            if k in sec:
                kw[k] = sec.number(k)
        spec = problems.linear_delay(initial=initial, **kw)
        defaults = dict(policy=TruncationPolicy.none(), theta=0.5, k1=1.0)
    elif name == "custom":
        xyz = ("t", "x", "y")
        if init is None:
            raise ConfigError("custom problems need 'initial'", sec.name)
        partials = {}
        fdx = sec.expression("drift_dx", xyz, required=False)
        if fdx is not None:
            partials["f1"] = _coef(fdx)
        fd = sec.boolean("finite_difference")
        gdx = sec.expression("diffusion_dx", xyz, required=not fd)
        gdy = sec.expression("diffusion_dy", xyz, required=not fd)
        spec = ProblemSpec(
            drift=_coef(sec.expression("drift", xyz)),
            diffusion=_coef(sec.expression("diffusion", xyz)),
            diffusion_dx=_coef(gdx) if gdx is not None else None,
            diffusion_dy=_coef(gdy) if gdy is not None else None,
            delay=delay if delay is not None else 0.25,
            horizon=sec.number("horizon", 1.0),
            initial_segment=initial,
            growth_beta=sec.number("growth_beta", 0.0),
            partials=partials,
            finite_difference=fd,
            name="custom",
        )
        defaults = dict(policy=TruncationPolicy.none(), theta=0.5, k1=1.0)
    else:
        raise ConfigError(f"unknown problem {name!r}", sec.name)
    return spec, defaults


def _policy(sec: _Section, default):
    if sec.raw("truncation", "").lower() == "none":
        return TruncationPolicy.none()
    if not any(k in sec for k in ("lambda_coef", "lambda_exp", "alpha_exp", "k0")):
        return default
    return TruncationPolicy.power(
        sec.number("lambda_coef", 1.0), sec.number("lambda_exp", 1.0),
        sec.number("alpha_exp", 0.125), sec.number("k0"),
    )


def _cases(parser, probe: _Section, default_seed):
    labels = [s.strip() for s in (probe.raw("cases", "") or "").split(",") if s.strip()]
    cases = []
    for label in labels:
        name = f"probe.{label}"
        if not parser.has_section(name):
            raise ConfigError(f"case {label!r} has no [{name}] section", "probe")
        sec = _Section(parser, name)
        consts = {k: sec.number(k) for k in ("K", "beta", "q", "p", "sigma", "gamma") if k in sec}
        u = sec.expression("u", ("x", "y"), required=False)
        t_range = sec.numbers("t_range", [0.0, 1.0])
        x_range = sec.numbers("x_range", [-5.0, 5.0])
        if len(t_range) != 2 or len(x_range) != 2:
            raise ConfigError("t_range and x_range need two values", name)
        cases.append(AssumptionCase(
            kind=sec.raw("kind", label),
            constants=consts,
            u_functional=(lambda m, n, e=u: e(0.0, m, n)) if u is not None else None,
            t_range=tuple(t_range), x_range=tuple(x_range),
            samples=sec.integer("samples", 100_000),
            seed=sec.integer("seed", default_seed),
            label=label,
        ))
    return cases


def _check_unknown(secs):
    for s in secs:
        unknown = set(s.data) - s.used
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}", s.name)


def load_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError(str(e).replace("\n", " ")) from e
    known = {"problem", "policy", "scheme", "study", "probe"}
    for s in parser.sections():
        if s not in known and not s.startswith("probe."):
            raise ConfigError(f"unknown section [{s}]")
    prob = _Section(parser, "problem")
    pol = _Section(parser, "policy")
    sch = _Section(parser, "scheme")
    stu = _Section(parser, "study")
    prb = _Section(parser, "probe")
    try:
        spec, defaults = _problem(prob)
        policy = _policy(pol, defaults["policy"])
        scheme = SchemeConfig(
            theta=sch.number("theta", defaults["theta"]),
            k1_bound=sch.number("k1", defaults["k1"]),
            newton_tol=sch.number("newton_tol", 1e-12),
            newton_rtol=sch.number("newton_rtol", 1e-12),
            newton_max_iter=sch.integer("newton_max_iter", 50),
        )
        method = sch.raw("method", "milstein")
        if method not in ("milstein", "em"):
            raise ConfigError(f"method must be milstein or em, got {method!r}", "scheme")
        seed = stu.integer("seed", 0)
        levels = stu.numbers("levels", [2.0**-6, 2.0**-7, 2.0**-8, 2.0**-9])
        plan = StudyPlan(
            levels=tuple(Fraction(v) for v in levels),
            reference_dt=Fraction(stu.number("reference", 2.0**-11)),
            num_paths=stu.integer("paths", 2000),
            q_bars=tuple(stu.numbers("q_bars", [2.0])),
            seed=seed,
            substeps=stu.integer("substeps", 1),
        )
        dt = stu.number("dt")
        reference = stu.raw("reference_mode", "self")
        if reference not in ("self", "exact"):
            raise ConfigError(f"reference_mode must be self or exact, got {reference!r}", "study")
        if reference == "exact" and spec.exact_solution is None:
            raise ConfigError(f"problem {spec.name!r} has no exact solution", "study")
        cfg = RunConfig(
            spec=spec, policy=policy, scheme=scheme, plan=plan,
            dt=Fraction(dt) if dt is not None else None,
            path=stu.integer("path", 0), method=method, reference=reference,
            cases=_cases(parser, prb, seed),
            lambda_w=tuple(prb.numbers("lambda_w", [])),
            lambda_samples=prb.integer("lambda_samples", 10_000),
        )
    except ConfigError:
        raise
    except (ModelError, SchemeConfigError, ProbeConfigError, ValueError) as e:
        raise ConfigError(str(e)) from e
    _check_unknown([prob, pol, sch, stu, prb])
    return cfg
