"""Tabulated fit parameters of four reference nanodiamonds (ND1 to ND4).

Values are in the units used at the file boundary: MHz (ordinary
frequency) for rates. ``lifetime_ns`` is the measured 1/e lifetime each
parameter set should reproduce.
"""
from __future__ import annotations

from dataclasses import dataclass

from .ensemble import DomainEnsemble, domain_ensemble
from .errors import ValidationError
from .fitting import BULK_ISC_0, BULK_ISC_1
from .ladder import RateParams
from .units import mhz_to_rate


@dataclass(frozen=True)
class SampleParams:
    name: str
    n_max: int
    gamma_d_0_mhz: float
    gamma_d_1_mhz: float
    gamma_mhz: float
    p0: float
    lifetime_ns: float

    def rate_params(self) -> RateParams:
        return RateParams(
            mhz_to_rate(self.gamma_mhz),
            BULK_ISC_0,
            BULK_ISC_1,
            mhz_to_rate(self.gamma_d_0_mhz),
            mhz_to_rate(self.gamma_d_1_mhz),
        )

    def ensemble(self) -> DomainEnsemble:
        return domain_ensemble(self.n_max, self.p0)


REFERENCE_SAMPLES = {
    s.name: s
    for s in (
        SampleParams("ND1", 2, 27.0, 270.0, 2.5, 0.56, 25.0),
        SampleParams("ND2", 7, 20.0, 260.0, 4.8, 0.51, 3.6),
        SampleParams("ND3", 10, 39.0, 420.0, 3.3, 0.50, 2.2),
        SampleParams("ND4", 50, 20.0, 450.0, 7.9, 0.50, 1.1),
    )
}


def reference_sample(name: str) -> SampleParams:
    key = name.upper().replace("#", "").replace("-", "")
    try:
        return REFERENCE_SAMPLES[key]
    except KeyError:
        raise ValidationError(f"unknown sample {name!r}; choose from {sorted(REFERENCE_SAMPLES)}") from None
