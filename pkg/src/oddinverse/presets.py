"""Bundled systems.

Nonlinear terms are written in divergence form ``sum_j (-1)**j d^j g_j``,
so ``u u_x = d(u**2 / 2)`` enters as ``g_1 = -u**2 / 2``.
"""

from .model import Coefficient, NonlinearitySpec, SystemSpec


def kdv(a=1.0, nonlinear=True):
    """``u_t + a u_xxx + u u_x = f``."""
    nl = NonlinearitySpec.from_exprs(1, 1, {1: ["-y0_1**2/2"]}, {(1, 0, 0): (1, 1)}, name="kdv")
    return SystemSpec(1, 1, (a,), (0.0,), nonlinearity=nl if nonlinear else None, name="kdv" if nonlinear else "airy")


def airy(a=1.0):
    """``u_t + a u_xxx = f``."""
    return kdv(a, nonlinear=False)


def kawahara(a5=1.0, a3=1.0, nonlinear=True):
    """``u_t - a5 u_xxxxx + a3 u_xxx + u u_x = f``."""
    nl = NonlinearitySpec.from_exprs(2, 1, {1: ["-y0_1**2/2"]}, {(1, 0, 0): (1, 1)}, name="kawahara")
    lower = {3: Coefficient.constant([[a3]])} if a3 else {}
    return SystemSpec(2, 1, (a5,), (0.0,), lower, nl if nonlinear else None, name="kawahara")


def majda_biello(alpha=0.5):
    """``u_t + u_xxx + v v_x = f_1``, ``v_t + alpha v_xxx + (u v)_x = f_2``."""
    nl = NonlinearitySpec.from_exprs(
        1, 2, {1: ["-y0_2**2/2", "-y0_1*y0_2"]}, {(1, 0, 0): (1, 1)}, name="majda_biello"
    )
    return SystemSpec(1, 2, (1.0, alpha), (0.0, 0.0), nonlinearity=nl, name="majda_biello")


def mb_general(alpha=0.5, c=1.0, c1=1.0, c2=1.0):
    """Cubic coupling ``g_1 = -(c v**3, c1 u**2 v + c2 u v**2)``; growth exponent 2."""
    nl = NonlinearitySpec.from_exprs(
        1,
        2,
        {1: ["-c*y0_2**3", "-(c1*y0_1**2*y0_2 + c2*y0_1*y0_2**2)"]},
        {(1, 0, 0): (2, 2)},
        params={"c": c, "c1": c1, "c2": c2},
        name="mb_general",
    )
    return SystemSpec(1, 2, (1.0, alpha), (0.0, 0.0), nonlinearity=nl, name="mb_general")


PRESETS = {
    "airy": airy,
    "kdv": kdv,
    "kawahara": kawahara,
    "majda_biello": majda_biello,
    "mb_general": mb_general,
}


def preset(name, **params):
    try:
        factory = PRESETS[name]
    except KeyError:
        raise KeyError("unknown preset %r (available: %s)" % (name, ", ".join(sorted(PRESETS)))) from None
    return factory(**params)
