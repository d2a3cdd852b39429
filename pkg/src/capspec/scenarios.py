"""Scenario files and shipped channel-table fixtures.

Scenarios are plain INI files with a [scenario] section plus one
[user.K] section per active user.  Bands are stored in normalized
frequency on [0, 1) (channel tables quoted in rad/sample convert by
dividing by 2*pi and wrapping negatives); power densities stay in dBm
per rad/sample.
"""

from __future__ import annotations

import configparser
from dataclasses import replace
from importlib import resources

from .analysis import DetectorSpec
from .patterns import CosetPattern, PatternFamily, design_pair_cover_family
from .sensing import ScenarioConfig, UserSpec

# Extra cosets activating a milder compression on top of the base ruler,
# in activation order (fixture data for the reconstruction experiments).
EXPERIMENT1_EXTRA_COSETS = (2, 12, 14)

# Two fixture sets of (base ruler, activation order of extra cosets) per period.
PATTERN_SETS = {
    1: {
        18: ((0, 1, 4, 7, 9), (17, 2, 13, 12, 15, 6)),
        14: ((0, 1, 2, 4, 7), (10, 6, 12, 5)),
        10: ((0, 1, 3, 5), (8, 4)),
    },
    2: {
        18: ((0, 1, 4, 7, 9), (5, 2, 6, 17, 15, 14)),
        14: ((0, 1, 2, 4, 7), (12, 10, 13, 11)),
        10: ((0, 1, 3, 5), (4, 6)),
    },
}

# Extra-coset orders used by the white-noise variance study at period 18.
VARIANCE_EXTRA_PATTERNS = {
    "pattern1": (17, 11, 2, 6),
    "pattern2": (3, 5, 6, 8),
    "pattern3": (2, 3, 5, 6),
}

# Fixed single-pattern baseline for the correlated-bins comparison at N=40.
CORRELATED_UB_BASELINE = (0, 1, 2, 3, 4, 9, 10, 15, 16, 18, 20, 30, 33, 37)


def extend_pattern(base: CosetPattern, extras, count: int) -> CosetPattern:
    """Activate the first ``count`` extra cosets on top of ``base``."""
    if count > len(extras):
        raise ValueError(f"only {len(extras)} extra cosets available, asked {count}")
    return CosetPattern(base.period, base.marks + tuple(extras[:count]))


def fixture_path(name: str):
    return resources.files("capspec") / "fixtures" / name


def load_scenario(source) -> ScenarioConfig:
    """Read a scenario INI file (path, or file-like via .read_string)."""
    parser = configparser.ConfigParser()
    if hasattr(source, "read"):
        parser.read_string(source.read())
    else:
        with open(source, "r", encoding="utf-8") as f:
            parser.read_string(f.read())
    return scenario_from_parser(parser)


def load_fixture(name: str) -> ScenarioConfig:
    parser = configparser.ConfigParser()
    parser.read_string(fixture_path(name).read_text(encoding="utf-8"))
    return scenario_from_parser(parser)


def _parse_marks(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.replace(" ", "").split(",") if tok)


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in text.replace(" ", "").split(",") if tok)


def scenario_from_parser(parser: configparser.ConfigParser) -> ScenarioConfig:
    if "scenario" not in parser:
        raise ValueError("scenario file is missing its [scenario] section")
    sec = parser["scenario"]
    period = sec.getint("period")
    users = []
    for name in parser.sections():
        if not name.startswith("user"):
            continue
        usec = parser[name]
        band = _parse_floats(usec.get("band"))
        users.append(
            UserSpec(
                band=(band[0], band[1]),
                power_dbm=usec.getfloat("power_dbm"),
                path_loss_db=_parse_floats(usec.get("path_loss_db")),
            )
        )
    bin_mode = sec.get("bin_mode", "uncorrelated")
    pattern = None
    family = None
    if bin_mode == "uncorrelated":
        pattern = CosetPattern(period, _parse_marks(sec.get("marks")))
    else:
        if sec.get("family", None):
            groups = [
                _parse_marks(chunk) for chunk in sec.get("family").split("|") if chunk.strip()
            ]
            family = PatternFamily(
                period, tuple(CosetPattern(period, g) for g in groups)
            )
        else:
            family = design_pair_cover_family(
                period, sec.getint("family_marks_per_pattern")
            )
    return ScenarioConfig(
        period=period,
        samples_per_coset=sec.getint("samples_per_coset"),
        users=tuple(users),
        noise_dbm=sec.getfloat("noise_dbm"),
        pattern=pattern,
        family=family,
        clusters=sec.getint("clusters", fallback=1),
        sensors_per_cluster=sec.getint("sensors_per_cluster", fallback=1),
        sensors_per_group=sec.getint("sensors_per_group", fallback=1),
        sync=sec.get("sync", "unsynchronized"),
        bin_mode=bin_mode,
        seed=sec.getint("seed", fallback=0),
    )


def with_overrides(config: ScenarioConfig, **fields) -> ScenarioConfig:
    """Dataclass replace with scenario-level validation re-run."""
    return replace(config, **fields)


def multiband_detector() -> DetectorSpec:
    """Threshold detector of the detection experiments: 11-point block
    averages, 121 centered points per active band, 363 quiet points in a
    far-off band."""
    return DetectorSpec(
        active_bands=((0.205, 0.245), (0.155, 0.195), (0.105, 0.145)),
        quiet_bands=((0.615, 0.735),),
        avg_width=11,
        points_per_band=121,
        quiet_points=363,
    )
