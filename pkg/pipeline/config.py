"""
Run configuration: settings defaults, an optional flat key=value file and
command-line overrides, merged in that order and validated by
RunConfigForm.
"""

import dataclasses
import logging
from dataclasses import dataclass
from pathlib import Path

from django.conf import settings

from datasets.scenes import SceneSpec
from depthlab.exceptions import ConfigError, DataError, ParseError
from fusion.fusion import FusionConfig
from propagation.propagate import PropagationConfig
from refinement.gauss_newton import GNConfig

from .forms import RunConfigForm

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunConfig:
    scene_dir: str
    checkpoint: str
    output_dir: str

    n_planes: int
    prop_window: int
    prop_mode: str
    sigma_spatial: float
    sigma_range: float
    gn_iterations: int
    gn_damping: float
    gn_min_views: int
    gn_max_step_fraction: float
    gn_reject_uphill: bool
    fusion_eta: float
    fusion_min_views: int
    fusion_prob_thresh: float

    lr: float
    lr_decay: float
    lr_decay_every: int
    rmsprop_decay: float
    rmsprop_eps: float
    refine_weight: float
    pretrain_epochs: int
    e2e_epochs: int
    seed: int

    width_scale: float
    image_size: int
    num_views: int
    num_scenes: int
    surface: str
    trace: bool
    random_init: bool

    @property
    def epochs(self):
        return self.pretrain_epochs + self.e2e_epochs

    def replace(self, **changes):
        """A copy with `changes` applied and re-validated."""
        return resolve_config(overrides={**self.as_dict(), **changes}, use_settings=False)

    def as_dict(self):
        return dataclasses.asdict(self)

    def propagation(self):
        return PropagationConfig(k=self.prop_window, mode=self.prop_mode,
                                 sigma_spatial=self.sigma_spatial, sigma_range=self.sigma_range)

    def gauss_newton(self):
        return GNConfig(iterations=self.gn_iterations, damping=self.gn_damping,
                        min_views=self.gn_min_views, max_step_fraction=self.gn_max_step_fraction,
                        reject_uphill=self.gn_reject_uphill)

    def fusion(self):
        return FusionConfig(prob_thresh=self.fusion_prob_thresh, eta=self.fusion_eta,
                            min_views=self.fusion_min_views)

    def scene_spec(self, index=0):
        """SceneSpec of the index-th synthetic scene; each scene gets its own seed."""
        return SceneSpec(surface=self.surface, height=self.image_size, width=self.image_size,
                         num_views=self.num_views, seed=self.seed + index)


FIELDS = tuple(f.name for f in dataclasses.fields(RunConfig))


def read_config_file(path):
    """
    Parse a flat `key = value` file into a dict of strings.

    Blank lines and lines starting with `#` are skipped. Unknown keys and
    lines without `=` are rejected with their line number.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f'Cannot read config file {path}: {exc}') from exc

    values = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith('#'):
            continue
        if '=' not in line:
            raise ParseError(path, 'expected "key = value"', line=number)
        key, value = (part.strip() for part in line.split('=', 1))
        key = key.replace('-', '_')
        if key not in FIELDS:
            raise ConfigError(f'{path}:{number}: unknown config key "{key}".')
        values[key] = value
    return values


def _form_value(value):
    # optional float fields read an empty string as None
    return '' if value is None else value


def resolve_config(overrides=None, config_file=None, use_settings=True):
    """
    Merge defaults < config file < overrides and return a validated RunConfig.

    Override values of None are ignored, so unset command-line flags fall
    through to the file and the settings.
    """
    data = dict(settings.DEPTHLAB) if use_settings else {}
    unknown = sorted(set(data) - set(FIELDS))
    if unknown:
        raise ConfigError(f'settings.DEPTHLAB has unknown keys {unknown}.')
    if config_file:
        data.update(read_config_file(config_file))
    for key, value in (overrides or {}).items():
        if key not in FIELDS:
            raise ConfigError(f'Unknown config key "{key}".')
        if value is not None:
            data[key] = value

    form = RunConfigForm(data={key: _form_value(value) for key, value in data.items()})
    if not form.is_valid():
        problems = '; '.join(f'{field}: {" ".join(errors)}' for field, errors in form.errors.items())
        raise ConfigError(f'Invalid configuration: {problems}')
    cfg = RunConfig(**{name: form.cleaned_data[name] for name in FIELDS})
    logger.debug('Resolved %s', cfg)
    return cfg
