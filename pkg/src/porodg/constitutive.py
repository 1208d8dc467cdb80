"""Pointwise physics: capillarity, relative permeabilities, storage coefficients.

All functions accept scalars or numpy arrays and broadcast; they are pure and
safe for concurrent use.  Units are SI throughout (Pa, Pa*s, m^2).
Incompressible phases and rigid grains are encoded by storing *inverse* bulk
moduli, so an exact zero is representable.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class PhysicalParams:
    """Constant physical inputs shared by the whole medium.

    `inv_kw`, `inv_ko`, `inv_ks` are the inverse bulk moduli (1/Pa) of the
    wetting phase, non-wetting phase and solid grains; zero means
    incompressible.  `lam` and `mu` are the Lame parameters.
    """

    mu_w: float  # Pa s
    mu_o: float  # Pa s
    inv_kw: float  # 1/Pa
    inv_ko: float  # 1/Pa
    inv_ks: float  # 1/Pa
    lam: float  # Pa
    mu: float  # Pa
    alpha: float  # Biot-Willis coefficient
    eps_cut: float = 1e-8  # saturation cut-off half-width

    def __post_init__(self):
        if self.mu_w <= 0.0 or self.mu_o <= 0.0:
            raise ValueError("phase viscosities must be positive")
        if min(self.inv_kw, self.inv_ko, self.inv_ks) < 0.0:
            raise ValueError("inverse bulk moduli must be >= 0")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0.0 < self.eps_cut < 0.5:
            raise ValueError(f"eps_cut must be in (0, 0.5), got {self.eps_cut}")


@dataclass(frozen=True)
class RockProps:
    """Per-rock material constants."""

    K: float  # absolute permeability, m^2
    phi: float  # porosity
    p_d: float  # entry pressure, Pa
    rock_id: int = 0

    def __post_init__(self):
        if self.K <= 0.0:
            raise ValueError("permeability must be positive")
        if not 0.0 < self.phi < 1.0:
            raise ValueError(f"porosity must be in (0, 1), got {self.phi}")
        if self.p_d <= 0.0:
            raise ValueError("entry pressure must be positive")


@dataclass
class MaterialField:
    """Per-element material arrays, supporting discontinuous media."""

    K: np.ndarray
    phi: np.ndarray
    p_d: np.ndarray
    rock_id: np.ndarray = field(default=None)

    @classmethod
    def uniform(cls, rock, num_elements):
        one = np.ones(num_elements)
        return cls(
            K=rock.K * one,
            phi=rock.phi * one,
            p_d=rock.p_d * one,
            rock_id=np.full(num_elements, rock.rock_id, dtype=np.int64),
        )


def saturation_of_pc(pc, p_d):
    """Brooks-Corey wetting saturation (p_d / pc)^2 for pc > 0."""
    pc = np.asarray(pc, dtype=float)
    if np.any(pc <= 0.0):
        raise ValueError("capillary pressure must be positive; apply the cut-off policy first")
    return (p_d / pc) ** 2


def dsw_dpc(pc, p_d):
    """Derivative of saturation_of_pc with respect to pc: -2 p_d^2 / pc^3 (< 0)."""
    pc = np.asarray(pc, dtype=float)
    if np.any(pc <= 0.0):
        raise ValueError("capillary pressure must be positive")
    return -2.0 * p_d**2 / pc**3


def capillary_pressure(sw, p_d):
    """Inverse of saturation_of_pc: pc = p_d / sqrt(sw) for sw in (0, 1]."""
    sw = np.asarray(sw, dtype=float)
    if np.any(sw <= 0.0):
        raise ValueError("saturation must be positive")
    return p_d / np.sqrt(sw)


def cutoff(q, eps):
    """Hard clamp to [eps, 1 - eps], identity inside."""
    if not 0.0 < eps < 0.5:
        raise ValueError(f"cut-off width must be in (0, 0.5), got {eps}")
    return np.clip(q, eps, 1.0 - eps)


def truncated_saturation(pw, po, p_d, eps):
    """Clamped saturation from a pressure pair; total for any real inputs.

    Non-positive capillary pressure (po <= pw) means the state is below entry
    pressure and maps to full wetting saturation 1 - eps.
    """
    if not 0.0 < eps < 0.5:
        raise ValueError(f"cut-off width must be in (0, 0.5), got {eps}")
    pc = np.asarray(po, dtype=float) - np.asarray(pw, dtype=float)
    positive = pc > 0.0
    safe_pc = np.where(positive, pc, 1.0)
    raw = (p_d / safe_pc) ** 2
    sat = np.where(positive, np.clip(raw, eps, 1.0 - eps), 1.0 - eps)
    return sat if sat.shape else float(sat)


def rel_perms(sw):
    """Relative permeabilities (k_rw, k_ro) = (sw^4, (1-sw)^2 (1-sw^2)) on [0, 1]."""
    sw = np.asarray(sw, dtype=float)
    if np.any((sw < 0.0) | (sw > 1.0)):
        raise ValueError("saturation outside [0, 1]")
    return sw**4, (1.0 - sw) ** 2 * (1.0 - sw**2)


def mobilities(sw, params):
    """Phase mobilities (k_rw/mu_w, k_ro/mu_o); strictly positive on the cut-off range."""
    krw, kro = rel_perms(sw)
    return krw / params.mu_w, kro / params.mu_o


def linear_mobilities(sw, params):
    """Mobility override lambda_w = sw, lambda_o = 1 - sw (viscosities absorbed)."""
    sw = np.asarray(sw, dtype=float)
    return sw, 1.0 - sw


MOBILITY_MODELS = {
    "brooks_corey": mobilities,
    "linear": linear_mobilities,
}


def storage_coefficients(pw, po, rock, params, cutoff_saturation=True):
    """The four storage coefficients multiplying the pressure time derivatives.

    Saturation, capillary pressure and its slope are all evaluated from the
    same clamped saturation: pc is recomputed as p_d / sqrt(S_w) so every
    constitutive quantity stays on the Brooks-Corey curve and bounded.  With
    `cutoff_saturation=False` the raw relation is used (smooth verification
    runs where po - pw stays safely positive).

    `rock` needs `.phi` and `.p_d` attributes; scalars (RockProps) and
    per-element arrays (MaterialField) both work.

    Returns (C1, C2, C3, C4) in 1/Pa.
    """
    p_d = rock.p_d
    phi = rock.phi
    if cutoff_saturation:
        s = truncated_saturation(pw, po, p_d, params.eps_cut)
        pc = p_d / np.sqrt(s)
    else:
        pc = np.asarray(po, dtype=float) - np.asarray(pw, dtype=float)
        s = saturation_of_pc(pc, p_d)
    ds = dsw_dpc(pc, p_d)
    a_s = (params.alpha - phi) * params.inv_ks
    g_w = a_s * s * pc - phi
    g_o = a_s * (1.0 - s) * pc + phi
    c1 = a_s * s**2 + phi * s * params.inv_kw + g_w * ds
    c2 = a_s * s * (1.0 - s) - g_w * ds
    c3 = a_s * (1.0 - s) ** 2 + phi * (1.0 - s) * params.inv_ko - g_o * ds
    c4 = a_s * s * (1.0 - s) + g_o * ds
    return c1, c2, c3, c4
