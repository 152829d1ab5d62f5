"""Unit conversion at the file/CLI boundary.

Files and command-line flags use ns, MHz (ordinary frequency, nu = gamma / 2 pi)
and nm. Everything inside the package works in SI units with angular rates.
"""
import math

TWO_PI = 2.0 * math.pi


def mhz_to_rate(nu_mhz):
    """Ordinary frequency in MHz -> angular rate in rad/s."""
    return TWO_PI * 1e6 * nu_mhz


def rate_to_mhz(gamma):
    """Angular rate in rad/s -> ordinary frequency in MHz."""
    return gamma / (TWO_PI * 1e6)


def ns_to_s(t_ns):
    return t_ns * 1e-9


def s_to_ns(t_s):
    return t_s * 1e9


def ps_to_s(t_ps):
    return t_ps * 1e-12


def nm_to_m(x_nm):
    return x_nm * 1e-9
