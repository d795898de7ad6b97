"""
Run configuration: every CLI field with its default, INI file loading and
the defaults < file < flags resolution.

INI files use one section per area::

    [ipad]
    c_x = 1
    eta1 = 4, 3, 2.5
    max_outer = 300

    [synthetic]
    n = 64
    m = 600

    [denoise]
    image = barbara.pgm
    sigma = 20

    [run]
    variant = ipad-admm
    output = out
"""
import configparser
import dataclasses
from dataclasses import dataclass, field
from typing import Optional

from ipad.baselines import PRESETS, get_preset
from ipad.data import DenoiseSpec, SyntheticSpec
from ipad.error import ConfigError
from ipad.framework import STALL_POLICIES, STOP_MODES, IpadConfig
from ipad.inner import AdmmConfig, PithConfig

MODES = ('synth', 'denoise', 'audit')

MODE_DEFAULTS = {
    'synth': {'stop_mode': 'synthetic', 'outer_tol': 1e-4, 'lam': 0.1},
    'denoise': {'stop_mode': 'real', 'outer_tol': 1e-2, 'lam': None},
    'audit': {'stop_mode': 'synthetic', 'outer_tol': 1e-4, 'lam': None},
}


def parse_bool(value):
    if isinstance(value, bool):
        return value
    lowered = str(value).strip().lower()
    if lowered in ('1', 'yes', 'true', 'on'):
        return True
    if lowered in ('0', 'no', 'false', 'off'):
        return False
    raise ValueError('not a boolean: %r' % (value,))


def parse_schedule(value):
    """``'4'`` -> 4.0, ``'4, 3'`` -> [4.0, 3.0]."""
    if value is None or isinstance(value, (int, float)):
        return value
    if isinstance(value, (list, tuple)):
        values = [float(v) for v in value]
    else:
        values = [float(v) for v in str(value).replace(',', ' ').split()]
    return values[0] if len(values) == 1 else values


def _optional(convert):
    def parse(value):
        if value is None or str(value).strip().lower() in ('', 'none'):
            return None
        return convert(value)
    return parse


@dataclass
class RunConfig:
    mode: str = 'synth'
    variant: str = 'ipad-admm'
    output: str = 'output'

    c_x: float = 1.0
    c_y: float = 1.0
    eta1: object = None
    eta2: object = None
    max_outer: int = 500
    max_inner: int = 20
    outer_tol: Optional[float] = None
    stop_mode: Optional[str] = None
    abs_error_floor: float = 1e-12
    stall_policy: Optional[str] = None
    record_time: bool = True
    seed: int = 0

    n: int = 64
    m: int = 600
    p: int = 4000
    k: int = 5
    noise_sigma: float = 0.01
    lam: Optional[float] = None

    image: Optional[str] = None
    sigma: float = 20.0
    stride: int = 4
    atoms: int = 256
    bound: float = 10.0
    crop: Optional[int] = None
    noise_seed: Optional[int] = None

    pith_step_scale: float = 1.01
    pith_max_steps: Optional[int] = None
    admm_rho: Optional[float] = None
    admm_max_steps: Optional[int] = None

    trace: Optional[str] = None
    a: Optional[float] = None
    rel_tol: float = 1e-8

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError('unknown mode %r, expected one of: %s'
                              % (self.mode, ', '.join(MODES)))
        self.variant = self.variant.lower()
        preset = get_preset(self.variant)
        for name, value in MODE_DEFAULTS[self.mode].items():
            if getattr(self, name) is None:
                setattr(self, name, value)
        if self.stall_policy is None:
            self.stall_policy = preset.stall_policy
        if self.noise_seed is None:
            self.noise_seed = self.seed
        if self.stop_mode not in STOP_MODES:
            raise ConfigError('unknown stop mode %r' % (self.stop_mode,))
        if self.stall_policy not in STALL_POLICIES:
            raise ConfigError('unknown stall policy %r'
                              % (self.stall_policy,))
        if self.mode == 'denoise' and not self.image:
            raise ConfigError('denoise mode needs an image')
        if self.mode == 'audit' and not self.trace:
            raise ConfigError('audit mode needs a trace file')
        # fail early on solver settings
        self.ipad_config()
        self.pith_config()
        self.admm_config()

    @property
    def preset(self):
        return PRESETS[self.variant]

    def ipad_config(self):
        return IpadConfig(c_x=self.c_x, c_y=self.c_y, eta1=self.eta1,
                          eta2=self.eta2, max_outer=self.max_outer,
                          max_inner=self.max_inner, outer_tol=self.outer_tol,
                          stop_mode=self.stop_mode,
                          abs_error_floor=self.abs_error_floor,
                          stall_policy=self.stall_policy,
                          record_time=self.record_time, seed=self.seed)

    def synthetic_spec(self):
        return SyntheticSpec(n=self.n, m=self.m, p=self.p, k=self.k,
                             noise_sigma=self.noise_sigma, lam=self.lam,
                             seed=self.seed)

    def denoise_spec(self):
        return DenoiseSpec(sigma=self.sigma, stride=self.stride,
                           lam=self.lam, atoms=self.atoms, bound=self.bound,
                           crop=self.crop, noise_seed=self.noise_seed)

    def pith_config(self):
        return PithConfig(step_scale=self.pith_step_scale,
                          max_steps=self.pith_max_steps)

    def admm_config(self):
        return AdmmConfig(rho=self.admm_rho, max_steps=self.admm_max_steps)

    def to_dict(self):
        return dataclasses.asdict(self)


_optional_float = _optional(float)
_optional_int = _optional(int)

CONVERTERS = {
    'mode': str, 'variant': str, 'output': str,
    'c_x': float, 'c_y': float, 'eta1': _optional(parse_schedule),
    'eta2': _optional(parse_schedule), 'max_outer': int, 'max_inner': int,
    'outer_tol': _optional_float, 'stop_mode': _optional(str),
    'abs_error_floor': float, 'stall_policy': _optional(str),
    'record_time': parse_bool, 'seed': int,
    'n': int, 'm': int, 'p': int, 'k': int, 'noise_sigma': float,
    'lam': _optional_float,
    'image': _optional(str), 'sigma': float, 'stride': int, 'atoms': int,
    'bound': float, 'crop': _optional_int, 'noise_seed': _optional_int,
    'pith_step_scale': float, 'pith_max_steps': _optional_int,
    'admm_rho': _optional_float, 'admm_max_steps': _optional_int,
    'trace': _optional(str), 'a': _optional_float, 'rel_tol': float,
}

SECTIONS = {
    'ipad': ('c_x', 'c_y', 'eta1', 'eta2', 'max_outer', 'max_inner',
             'outer_tol', 'stop_mode', 'abs_error_floor', 'stall_policy',
             'record_time', 'seed'),
    'synthetic': ('n', 'm', 'p', 'k', 'noise_sigma', 'lam', 'seed'),
    'denoise': ('image', 'sigma', 'lam', 'stride', 'atoms', 'bound', 'crop',
                'noise_seed'),
    'run': ('mode', 'variant', 'output', 'pith_step_scale', 'pith_max_steps',
            'admm_rho', 'admm_max_steps', 'trace', 'a', 'rel_tol'),
}

# "lambda" is the name users know the penalty by
ALIASES = {'lambda': 'lam'}


def convert(name, value):
    try:
        return CONVERTERS[name](value)
    except (TypeError, ValueError) as e:
        raise ConfigError('invalid value %r for %s: %s' % (value, name, e))


def load_ini(path):
    """
    Reads an INI file into a flat ``{field: value}`` dict.
    """
    parser = configparser.ConfigParser()
    try:
        with open(path) as f:
            parser.read_file(f)
    except configparser.Error as e:
        raise ConfigError('%s: %s' % (path, e))

    values = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError('%s: unknown section [%s]' % (path, section))
        for key, raw in parser.items(section):
            name = ALIASES.get(key, key)
            if name not in SECTIONS[section]:
                raise ConfigError('%s: unknown key %r in [%s]'
                                  % (path, key, section))
            values[name] = convert(name, raw)
    return values


@dataclass
class Overrides:
    """Values picked from the INI file and from the command line."""
    file: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)


def resolve(overrides):
    values = dict(overrides.file)
    values.update((k, v) for k, v in overrides.flags.items() if v is not None)
    unknown = set(values) - set(CONVERTERS)
    if unknown:
        raise ConfigError('unknown settings: %s' % ', '.join(sorted(unknown)))
    try:
        return RunConfig(**values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e))


def expand_members(overrides, variants, seeds):
    """
    One `RunConfig` per (variant, seed) pair, variants outermost, in the
    order given. Settings derived from the variant or the seed are
    resolved per member.
    """
    members = []
    for variant in variants:
        for seed in seeds or [None]:
            flags = dict(overrides.flags, variant=variant)
            if seed is not None:
                flags['seed'] = seed
            members.append(resolve(Overrides(overrides.file, flags)))
    return members
