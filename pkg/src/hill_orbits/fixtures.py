"""Published table rows shipped as seed fixtures."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

from .symmetries import OrbitSeed

#: shooting template per family: start set, target set, planar flag
FAMILIES = {
    "g": ("rho1", "rho2", True),
    "g'": ("rho1", "rho1", True),
    "f": ("rho1", "rho2", True),
    "g3": ("rho1", "rho2", True),
    "g2v": ("rho1", "rho2", False),
    "g1v": ("rhobar1", "rho1", False),
    "fg23": ("rhobar1", "rhobar2", False),
    "fg'23": ("rhobar1", "rhobar1", False),
    "fg2cut3": ("rho1", "rho2", False),
    "fg'2cut3": ("rho1", "rho1", False),
    "fg'14": ("rhobar1", "rho1", False),
    "fg'1cut4": ("rhobar1", "rho1", False),
}


@dataclass(frozen=True)
class FixtureRow:
    """One tabulated orbit: shooting data plus the displayed reference values."""

    family: str
    gamma: float
    start: str
    target: str
    sign: int
    planar: bool
    t_hint: float
    params: dict
    expected: dict = field(default_factory=dict)

    def seed(self) -> OrbitSeed:
        return OrbitSeed(self.start, self.target, self.gamma, dict(self.params), sign=self.sign,
                         planar=self.planar, family=self.family)

    def value(self, key: str) -> float | None:
        """Numeric reading of a displayed value, ``None`` when absent or symbolic."""
        raw = self.expected.get(key)
        if raw is None:
            return None
        try:
            return float(raw.replace("~", ""))
        except ValueError:
            return None

    def half_unit(self, key: str) -> float | None:
        """Half a unit of the last displayed digit of ``key``."""
        raw = self.expected.get(key)
        if raw is None:
            return None
        s = raw.lstrip("-~")
        dec = len(s.split(".")[1]) if "." in s else 0
        return 0.5 * 10.0 ** (-dec)


def _parse(line: str) -> FixtureRow:
    parts = line.split()
    fam, g, start, target, sign, planar, hint, params = parts[:8]
    exp = {}
    if len(parts) > 8:
        for tok in parts[8].split(";"):
            k, _, v = tok.partition("=")
            exp[k] = v.replace("_", " ")
    pv = {}
    for tok in params.split(","):
        k, _, v = tok.partition("=")
        pv[k] = float(v)
    return FixtureRow(fam, float(g), start, target, int(sign), planar == "1", float(hint), pv, exp)


@lru_cache(maxsize=1)
def load_fixtures() -> tuple:
    text = resources.files("hill_orbits").joinpath("data/seeds.txt").read_text()
    return tuple(_parse(l) for l in text.splitlines() if l.strip() and not l.startswith("#"))


def fixture_rows(family: str) -> list:
    return [r for r in load_fixtures() if r.family == family]


def fixture_row(family: str, gamma: float, tol: float = 1e-9, index: int = 0) -> FixtureRow:
    """Row of ``family`` at ``gamma``; ``index`` picks among rows sharing a Γ value (folds)."""
    rows = [r for r in fixture_rows(family) if math.isclose(r.gamma, gamma, abs_tol=tol)]
    if not rows:
        raise KeyError(f"no fixture row for family {family!r} at gamma={gamma}")
    return rows[index]
